use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{blur_plane, luma, resize, Image, Interpolation};

/// A matched point pair with a descriptor-correlation score in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub score: f64,
}

impl Correspondence {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Correspondence { a, b, score: 1.0 }
    }
}

const LEVELS: usize = 3;
const MIN_SIDE: usize = 32;
const HARRIS_K: f64 = 0.04;
const TENSOR_SIGMA: f64 = 1.5;
const DESC_SIGMA: f64 = 1.0;
const DESC_GRID: usize = 8;
const DESC_SPACING: f64 = 2.0;
const MARGIN: usize = 8;
const MAX_CORNERS: usize = 600;
const RELATIVE_THRESHOLD: f64 = 0.01;
const RATIO: f64 = 0.8;

struct Level {
    h: usize,
    w: usize,
    /// Blurred intensity the descriptors sample from.
    smooth: Vec<f64>,
    response: Vec<f64>,
    factor: f64,
}

struct Keypoint {
    /// Level coordinates.
    x: f64,
    y: f64,
    desc: [f64; DESC_GRID * DESC_GRID],
}

fn sobel(p: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: isize, x: isize| {
        p[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    (gx, gy)
}

fn harris(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (gx, gy) = sobel(plane, h, w);
    let xx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (xx, yy, xy) = (
        blur_plane(&xx, h, w, TENSOR_SIGMA),
        blur_plane(&yy, h, w, TENSOR_SIGMA),
        blur_plane(&xy, h, w, TENSOR_SIGMA),
    );
    (0..h * w)
        .map(|i| xx[i] * yy[i] - xy[i] * xy[i] - HARRIS_K * (xx[i] + yy[i]).powi(2))
        .collect()
}

fn pyramid(img: &Image) -> Result<Vec<Level>> {
    let mut levels = Vec::new();
    let mut cur = luma(img);
    for l in 0..LEVELS {
        let (h, w) = (cur.height(), cur.width());
        if h < 2 * MARGIN + 3 || w < 2 * MARGIN + 3 {
            break;
        }
        levels.push(Level {
            h,
            w,
            smooth: blur_plane(cur.data(), h, w, DESC_SIGMA),
            response: harris(cur.data(), h, w),
            factor: (1usize << l) as f64,
        });
        if l + 1 < LEVELS {
            cur = resize(&cur, h / 2, w / 2, Interpolation::Bicubic)?;
        }
    }
    Ok(levels)
}

/// Offset of the vertex of the parabola through `(−1, a), (0, b), (1, c)`.
fn parabola_peak(a: f64, b: f64, c: f64) -> f64 {
    let d = a - 2.0 * b + c;
    if d.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (a - c) / d).clamp(-0.5, 0.5)
    }
}

fn descriptor(level: &Level, x: f64, y: f64) -> Option<[f64; DESC_GRID * DESC_GRID]> {
    let sample = |sx: f64, sy: f64| {
        let sx = sx.clamp(0.0, (level.w - 1) as f64);
        let sy = sy.clamp(0.0, (level.h - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(level.w - 1), (y0 + 1).min(level.h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let p = &level.smooth;
        let top = p[y0 * level.w + x0] * (1.0 - fx) + p[y0 * level.w + x1] * fx;
        let bot = p[y1 * level.w + x0] * (1.0 - fx) + p[y1 * level.w + x1] * fx;
        top * (1.0 - fy) + bot * fy
    };
    let half = (DESC_GRID as f64 - 1.0) / 2.0;
    let mut d = [0.0; DESC_GRID * DESC_GRID];
    for i in 0..DESC_GRID {
        for j in 0..DESC_GRID {
            d[i * DESC_GRID + j] = sample(
                x + (j as f64 - half) * DESC_SPACING,
                y + (i as f64 - half) * DESC_SPACING,
            );
        }
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-6 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}

fn keypoints(level: &Level) -> Vec<Keypoint> {
    let (h, w, r) = (level.h, level.w, &level.response);
    let max = r.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let thresh = (RELATIVE_THRESHOLD * max).max(1e-12);
    let mut peaks = Vec::new();
    for y in MARGIN..h - MARGIN {
        for x in MARGIN..w - MARGIN {
            let v = r[y * w + x];
            if v <= thresh {
                continue;
            }
            // strict maximum over earlier neighbors, non-strict over later ones
            let is_max = (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| {
                    let n = r[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                    let later = dy > 0 || (dy == 0 && dx > 0);
                    (dy == 0 && dx == 0) || if later { v >= n } else { v > n }
                })
            });
            if is_max {
                peaks.push((v, x, y));
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then((a.2, a.1).cmp(&(b.2, b.1)))
    });
    peaks.truncate(MAX_CORNERS);
    peaks
        .into_iter()
        .filter_map(|(_, x, y)| {
            let at = |dy: isize, dx: isize| {
                r[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            let sx = x as f64 + parabola_peak(at(0, -1), at(0, 0), at(0, 1));
            let sy = y as f64 + parabola_peak(at(-1, 0), at(0, 0), at(1, 0));
            descriptor(level, sx, sy).map(|desc| Keypoint { x: sx, y: sy, desc })
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best and second-best squared distances from each of `from` into `to`.
fn nearest(from: &[Keypoint], to: &[Keypoint]) -> Vec<(usize, f64, f64)> {
    from.iter()
        .map(|k| {
            let (mut bi, mut b1, mut b2) = (usize::MAX, f64::INFINITY, f64::INFINITY);
            for (j, t) in to.iter().enumerate() {
                let d = dist2(&k.desc, &t.desc);
                if d < b1 {
                    b2 = b1;
                    b1 = d;
                    bi = j;
                } else if d < b2 {
                    b2 = d;
                }
            }
            (bi, b1, b2)
        })
        .collect()
}

/// Multi-scale Harris corners matched by mutual nearest neighbor on 8×8
/// normalized-intensity descriptors with a 0.8 distance-ratio test. Results
/// are sorted by descending score.
pub fn detect_and_match(a: &Image, b: &Image) -> Result<Vec<Correspondence>> {
    for img in [a, b] {
        if img.height() < MIN_SIDE || img.width() < MIN_SIDE {
            return Err(Error::TooSmall {
                op: "detect_and_match",
                height: img.height(),
                width: img.width(),
            });
        }
    }
    let (pa, pb) = (pyramid(a)?, pyramid(b)?);
    let mut out = Vec::new();
    for (la, lb) in pa.iter().zip(&pb) {
        let (ka, kb) = (keypoints(la), keypoints(lb));
        if ka.is_empty() || kb.is_empty() {
            continue;
        }
        let fwd = nearest(&ka, &kb);
        let bwd = nearest(&kb, &ka);
        for (i, &(j, d1, d2)) in fwd.iter().enumerate() {
            if j == usize::MAX || bwd[j].0 != i {
                continue;
            }
            if d2.is_finite() && d1.sqrt() >= RATIO * d2.sqrt() {
                continue;
            }
            let to0 = |x: f64, f: f64| (x + 0.5) * f - 0.5;
            out.push(Correspondence {
                a: (to0(ka[i].x, la.factor), to0(ka[i].y, la.factor)),
                b: (to0(kb[j].x, lb.factor), to0(kb[j].y, lb.factor)),
                score: 1.0 - d1 / 2.0,
            });
        }
    }
    out.sort_by(|p, q| {
        q.score
            .partial_cmp(&p.score)
            .unwrap_or(Ordering::Equal)
            .then(p.a.1.total_cmp(&q.a.1))
            .then(p.a.0.total_cmp(&q.a.0))
    });
    if out.len() < 4 {
        return Err(Error::InsufficientCorrespondences {
            found: out.len(),
            needed: 4,
        });
    }
    Ok(out)
}
