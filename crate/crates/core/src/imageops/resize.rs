//! MATLAB-`imresize`-compatible resampling: center-aligned sampling,
//! symmetric boundary extension, and kernel widening (anti-aliasing) when
//! shrinking with the bilinear or bicubic kernel.

use crate::error::{Error, Result};

use super::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interpolation {
    Nearest,
    Bilinear,
    Bicubic,
}

/// Keys cubic with a = -0.5.
#[inline]
pub(crate) fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

#[inline]
fn triangle(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Maps an out-of-range index onto `[0, n)` by mirror reflection that
/// repeats the edge sample (`.. 1 0 | 0 1 .. n-1 | n-1 n-2 ..`).
#[inline]
pub(crate) fn reflect(j: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = j.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Sparse resampling weights for one axis: `out[i] = Σ w · in[idx]`.
#[derive(Clone, Debug)]
pub(crate) struct Contributions {
    pub taps: Vec<Vec<(usize, f64)>>,
}

pub(crate) fn contributions(in_len: usize, out_len: usize, method: Interpolation) -> Contributions {
    let scale = out_len as f64 / in_len as f64;
    let taps = (0..out_len)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale - 0.5;
            match method {
                Interpolation::Nearest => {
                    let j = (u - 0.5).ceil() as isize;
                    vec![(j.clamp(0, in_len as isize - 1) as usize, 1.0)]
                }
                Interpolation::Bilinear | Interpolation::Bicubic => {
                    let (kernel, base_width): (fn(f64) -> f64, f64) = match method {
                        Interpolation::Bilinear => (triangle, 2.0),
                        _ => (cubic, 4.0),
                    };
                    let shrink = scale < 1.0;
                    let width = if shrink {
                        base_width / scale
                    } else {
                        base_width
                    };
                    let left = (u - width / 2.0).floor() as isize;
                    let count = width.ceil() as isize + 2;
                    let mut raw: Vec<(isize, f64)> = (0..count)
                        .map(|p| {
                            let j = left + p;
                            let d = u - j as f64;
                            let w = if shrink {
                                scale * kernel(scale * d)
                            } else {
                                kernel(d)
                            };
                            (j, w)
                        })
                        .filter(|&(_, w)| w != 0.0)
                        .collect();
                    let total: f64 = raw.iter().map(|&(_, w)| w).sum();
                    raw.iter_mut().for_each(|(_, w)| *w /= total);
                    // Fold reflected indices together so each source index
                    // appears once.
                    let mut folded: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
                    for (j, w) in raw {
                        let r = reflect(j, in_len);
                        match folded.iter_mut().find(|(k, _)| *k == r) {
                            Some(slot) => slot.1 += w,
                            None => folded.push((r, w)),
                        }
                    }
                    folded
                }
            }
        })
        .collect();
    Contributions { taps }
}

fn resize_rows(src: &[f64], w: usize, c: &Contributions) -> Vec<f64> {
    let mut out = vec![0.0; c.taps.len() * w];
    for (i, taps) in c.taps.iter().enumerate() {
        let dst = &mut out[i * w..(i + 1) * w];
        for &(j, wt) in taps {
            for (d, s) in dst.iter_mut().zip(&src[j * w..(j + 1) * w]) {
                *d += wt * s;
            }
        }
    }
    out
}

fn resize_cols(src: &[f64], h: usize, w: usize, c: &Contributions) -> Vec<f64> {
    let ow = c.taps.len();
    let mut out = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, taps) in c.taps.iter().enumerate() {
            out[y * ow + i] = taps.iter().map(|&(j, wt)| wt * row[j]).sum();
        }
    }
    out
}

/// Resizes to exactly `out_h x out_w`. Identity sizes return a copy.
pub fn resize(img: &Image, out_h: usize, out_w: usize, method: Interpolation) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(
            "resize target size must be at least 1x1".into(),
        ));
    }
    let (h, w) = (img.height(), img.width());
    if out_h == h && out_w == w {
        return Ok(img.clone());
    }
    let ch = contributions(h, out_h, method);
    let cw = contributions(w, out_w, method);
    let rows_first = (out_h as f64 / h as f64) <= (out_w as f64 / w as f64);
    let mut data = Vec::with_capacity(out_h * out_w * img.channels());
    for c in 0..img.channels() {
        let plane = img.plane(c);
        let res = if rows_first {
            let t = if out_h != h {
                resize_rows(plane, w, &ch)
            } else {
                plane.to_vec()
            };
            if out_w != w {
                resize_cols(&t, out_h, w, &cw)
            } else {
                t
            }
        } else {
            let t = if out_w != w {
                resize_cols(plane, h, w, &cw)
            } else {
                plane.to_vec()
            };
            if out_h != h {
                resize_rows(&t, out_w, &ch)
            } else {
                t
            }
        };
        data.extend(res);
    }
    Image::new(out_h, out_w, img.space(), data)
}

/// Resizes by a ratio; the output size is `round(len * scale)` per axis.
pub fn resize_by(img: &Image, scale: f64, method: Interpolation) -> Result<Image> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let oh = (img.height() as f64 * scale).round() as usize;
    let ow = (img.width() as f64 * scale).round() as usize;
    resize(img, oh, ow, method)
}
