//! Order-preserving parallel map capped by `ALTISR_THREADS`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

pub const THREADS_ENV: &str = "ALTISR_THREADS";

static OVERRIDE: AtomicUsize = AtomicUsize::new(0);

/// Worker count: an explicit [`set_threads`] value, else `ALTISR_THREADS`,
/// else 1.
pub fn threads() -> usize {
    static FROM_ENV: OnceLock<usize> = OnceLock::new();
    match OVERRIDE.load(Ordering::Relaxed) {
        0 => *FROM_ENV.get_or_init(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .filter(|&n| n > 0)
                .unwrap_or(1)
        }),
        n => n,
    }
}

pub fn set_threads(n: usize) {
    OVERRIDE.store(n, Ordering::Relaxed);
}

/// Maps `f` over `items` on up to [`threads`] scoped workers. Each worker
/// owns a contiguous chunk, so results come back in input order regardless
/// of the thread count.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = threads().min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(k, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, t)| f(k * chunk + i, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..37).collect();
        let serial: Vec<u64> = items.iter().map(|v| v * v + 1).collect();
        for n in [1, 2, 3, 8] {
            set_threads(n);
            assert_eq!(
                map(&items, |i, v| {
                    assert_eq!(i as u64, *v);
                    v * v + 1
                }),
                serial
            );
        }
        set_threads(0);
        assert!(map(&[] as &[u8], |_, v| *v).is_empty());
    }
}
