//! Full-reference quality metrics on the luma plane, radial power spectra,
//! and burst-frame comparison.

mod psd;

pub use psd::{psd_profile, PsdProfile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{luma, ColorSpace, Image};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// GMSD stability constant for unit dynamic range (170 / 255²).
pub const GMSD_C: f64 = 0.0026;

fn require_same(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(
            op,
            format!(
                "{}x{}x{} vs {}x{}x{}",
                a.height(),
                a.width(),
                a.channels(),
                b.height(),
                b.width(),
                b.channels()
            ),
        ));
    }
    Ok(())
}

fn require_y(op: &'static str, a: &Image) -> Result<()> {
    if a.space() != ColorSpace::Y {
        return Err(Error::InvalidArgument(format!("{op} expects a Y image")));
    }
    Ok(())
}

/// Peak signal-to-noise ratio with peak 1. Identical inputs give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    require_same("psnr", a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

/// Valid-mode separable filtering of a plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * plane[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    require_same("ssim", a, b)?;
    require_y("ssim", a)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            op: "ssim",
            height: h,
            width: w,
        });
    }
    let taps = ssim_taps();
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<f64>>();
    let (mx, oh, ow) = filter_valid(x, h, w, &taps);
    let (my, _, _) = filter_valid(y, h, w, &taps);
    let (xx, _, _) = filter_valid(&prod(&|i| x[i] * x[i]), h, w, &taps);
    let (yy, _, _) = filter_valid(&prod(&|i| y[i] * y[i]), h, w, &taps);
    let (xy, _, _) = filter_valid(&prod(&|i| x[i] * y[i]), h, w, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let sx = xx[i] - ux * ux;
            let sy = yy[i] - uy * uy;
            let sxy = xy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * sxy + c2)) / ((ux * ux + uy * uy + c1) * (sx + sy + c2))
        })
        .sum();
    Ok(total / (oh * ow) as f64)
}

fn ssim_taps() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Prewitt gradient magnitude over the valid interior.
fn prewitt_magnitude(img: &Image) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let p = img.data();
    let mut out = Vec::with_capacity((h - 2) * (w - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let at = |dy: isize, dx: isize| {
                p[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            let gx = (at(-1, -1) + at(0, -1) + at(1, -1) - at(-1, 1) - at(0, 1) - at(1, 1)) / 3.0;
            let gy = (at(-1, -1) + at(-1, 0) + at(-1, 1) - at(1, -1) - at(1, 0) - at(1, 1)) / 3.0;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Gradient magnitude similarity deviation: standard deviation of the
/// per-pixel gradient-magnitude similarity map. Higher means more distortion.
pub fn gmsd(a: &Image, b: &Image) -> Result<f64> {
    require_same("gmsd", a, b)?;
    require_y("gmsd", a)?;
    if a.height() < 3 || a.width() < 3 {
        return Err(Error::TooSmall {
            op: "gmsd",
            height: a.height(),
            width: a.width(),
        });
    }
    let (ga, gb) = (prewitt_magnitude(a), prewitt_magnitude(b));
    let gms: Vec<f64> = ga
        .iter()
        .zip(&gb)
        .map(|(x, y)| (2.0 * x * y + GMSD_C) / (x * x + y * y + GMSD_C))
        .collect();
    let n = gms.len() as f64;
    let mean = gms.iter().sum::<f64>() / n;
    Ok((gms.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n).sqrt())
}

/// Zero-mean normalized cross-correlation. One constant input gives 0; two
/// constant inputs are an error.
pub fn ncc(a: &Image, b: &Image) -> Result<f64> {
    require_same("ncc", a, b)?;
    let n = a.data().len() as f64;
    let ma = a.data().iter().sum::<f64>() / n;
    let mb = b.data().iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let const_a = a.data().iter().all(|&v| v == a.data()[0]);
    let const_b = b.data().iter().all(|&v| v == b.data()[0]);
    if const_a && const_b {
        return Err(Error::UndefinedVariance);
    }
    if const_a || const_b {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// PSNR / SSIM / GMSD of `test` against `reference`, both converted to Y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub gmsd: f64,
    pub pixels: usize,
}

impl MetricReport {
    pub fn compute(test: &Image, reference: &Image) -> Result<Self> {
        let (a, b) = (luma(test), luma(reference));
        Ok(MetricReport {
            psnr: psnr(&a, &b)?,
            ssim: ssim(&a, &b)?,
            gmsd: gmsd(&a, &b)?,
            pixels: a.height() * a.width(),
        })
    }

    /// Arithmetic mean of several reports (PSNR averaged in dB).
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(MetricReport {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            gmsd: reports.iter().map(|r| r.gmsd).sum::<f64>() / n,
            pixels: reports.iter().map(|r| r.pixels).sum(),
        })
    }
}

/// Formats a PSNR value; `+inf` is written as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Symmetric pairwise PSNR / SSIM between burst frames (on Y).
#[derive(Clone, Debug, PartialEq)]
pub struct BurstMatrix {
    pub psnr: Vec<Vec<f64>>,
    pub ssim: Vec<Vec<f64>>,
}

pub fn burst_compare(frames: &[Image]) -> Result<BurstMatrix> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(
            "burst_compare needs at least two frames".into(),
        ));
    }
    let ys: Vec<Image> = frames.iter().map(luma).collect();
    for f in &ys[1..] {
        require_same("burst_compare", &ys[0], f)?;
    }
    let n = ys.len();
    let mut p = vec![vec![f64::INFINITY; n]; n];
    let mut s = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            p[i][j] = psnr(&ys[i], &ys[j])?;
            p[j][i] = p[i][j];
            s[i][j] = ssim(&ys[i], &ys[j])?;
            s[j][i] = s[i][j];
        }
    }
    Ok(BurstMatrix { psnr: p, ssim: s })
}
