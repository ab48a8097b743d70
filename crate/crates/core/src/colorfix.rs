//! LR-to-HR color correction: histogram matching and moment-based transfer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::Image;

pub const HISTOGRAM_BINS: usize = 256;
const SIGMA_MIN: f64 = 1e-6;

/// Order in which the two corrections are applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorMode {
    #[serde(rename = "HM")]
    Hm,
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "HM_CT")]
    HmCt,
    #[default]
    #[serde(rename = "CT_HM")]
    CtHm,
}

impl ColorMode {
    pub const ALL: [ColorMode; 4] = [
        ColorMode::Hm,
        ColorMode::Ct,
        ColorMode::HmCt,
        ColorMode::CtHm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColorMode::Hm => "HM",
            ColorMode::Ct => "CT",
            ColorMode::HmCt => "HM_CT",
            ColorMode::CtHm => "CT_HM",
        }
    }
}

impl std::str::FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ColorMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown color mode {s:?}")))
    }
}

fn require_channels(op: &'static str, src: &Image, reference: &Image) -> Result<()> {
    if src.channels() != reference.channels() {
        return Err(Error::shape(
            op,
            format!(
                "{} channels vs {} channels",
                src.channels(),
                reference.channels()
            ),
        ));
    }
    Ok(())
}

fn bin_of(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Cumulative fraction at each of the 257 bin edges.
fn edge_cdf(plane: &[f64]) -> Vec<f64> {
    let mut hist = vec![0usize; HISTOGRAM_BINS];
    for &v in plane {
        hist[bin_of(v)] += 1;
    }
    let n = plane.len() as f64;
    let mut cdf = Vec::with_capacity(HISTOGRAM_BINS + 1);
    let mut acc = 0usize;
    cdf.push(0.0);
    for h in hist {
        acc += h;
        cdf.push(acc as f64 / n);
    }
    cdf
}

/// Piecewise-linear CDF evaluated at `v`.
fn cdf_at(cdf: &[f64], v: f64) -> f64 {
    let b = bin_of(v);
    let t = (v * HISTOGRAM_BINS as f64 - b as f64).clamp(0.0, 1.0);
    cdf[b] + t * (cdf[b + 1] - cdf[b])
}

/// Smallest value whose piecewise-linear CDF reaches `q`.
fn inverse_cdf(cdf: &[f64], q: f64) -> f64 {
    // first edge k+1 with cdf >= q
    let k = cdf[1..].partition_point(|&c| c < q).min(HISTOGRAM_BINS - 1);
    let span = cdf[k + 1] - cdf[k];
    let t = if span > 0.0 {
        ((q - cdf[k]) / span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (k as f64 + t) / HISTOGRAM_BINS as f64
}

/// Maps each channel of `src` through its CDF and the inverse CDF of `reference`.
pub fn histogram_match(src: &Image, reference: &Image) -> Result<Image> {
    require_channels("histogram_match", src, reference)?;
    let mut out = Vec::with_capacity(src.data().len());
    for c in 0..src.channels() {
        let cs = edge_cdf(src.plane(c));
        let cr = edge_cdf(reference.plane(c));
        out.extend(
            src.plane(c)
                .iter()
                .map(|&v| inverse_cdf(&cr, cdf_at(&cs, v))),
        );
    }
    Image::new(src.height(), src.width(), src.space(), out)
}

fn moments(plane: &[f64]) -> (f64, f64) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-channel affine map matching mean and standard deviation of `reference`.
pub fn color_transfer(src: &Image, reference: &Image) -> Result<Image> {
    require_channels("color_transfer", src, reference)?;
    let mut out = Vec::with_capacity(src.data().len());
    for c in 0..src.channels() {
        let (ms, ss) = moments(src.plane(c));
        let (mr, sr) = moments(reference.plane(c));
        if ss < SIGMA_MIN {
            out.extend(std::iter::repeat_n(mr, src.plane(c).len()));
        } else {
            let gain = sr / ss;
            out.extend(src.plane(c).iter().map(|&v| (v - ms) * gain + mr));
        }
    }
    Image::new(src.height(), src.width(), src.space(), out)
}

pub fn correct(src: &Image, reference: &Image, mode: ColorMode) -> Result<Image> {
    match mode {
        ColorMode::Hm => histogram_match(src, reference),
        ColorMode::Ct => color_transfer(src, reference),
        ColorMode::HmCt => color_transfer(&histogram_match(src, reference)?, reference),
        ColorMode::CtHm => histogram_match(&color_transfer(src, reference)?, reference),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::imageops::ColorSpace;
    use crate::quality::psnr;
    use crate::rng::rng_for;

    fn rand_rgb(h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> Image {
        let mut r = rng_for(seed, &[]);
        Image::from_fn(h, w, ColorSpace::Rgb, |_, _, _| r.random_range(lo..hi))
    }

    fn smooth_rgb(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, ColorSpace::Rgb, |c, y, x| {
            0.5 + 0.3 * ((x as f64 * 0.3 + c as f64).sin() * (y as f64 * 0.2).cos())
        })
    }

    fn max_diff(a: &Image, b: &Image) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Empirical CDF of a plane at 256 evenly spaced thresholds.
    fn step_cdf(plane: &[f64], t: f64) -> f64 {
        plane.iter().filter(|&&v| v <= t).count() as f64 / plane.len() as f64
    }

    #[test]
    fn histogram_match_identity() {
        let a = rand_rgb(20, 20, 1, 0.0, 1.0);
        assert!(max_diff(&histogram_match(&a, &a).unwrap(), &a) <= 1.0 / 256.0);
    }

    #[test]
    fn histogram_match_constant_reference() {
        let a = rand_rgb(16, 16, 2, 0.0, 1.0);
        let c = Image::filled(16, 16, ColorSpace::Rgb, 0.37);
        let out = histogram_match(&a, &c).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() <= 1.0 / 256.0));
    }

    #[test]
    fn histogram_match_channel_mismatch() {
        let a = rand_rgb(8, 8, 3, 0.0, 1.0);
        let y = Image::filled(8, 8, ColorSpace::Y, 0.5);
        assert!(histogram_match(&a, &y).is_err());
        assert!(color_transfer(&a, &y).is_err());
    }

    #[test]
    fn color_transfer_identity_and_affine() {
        let r = rand_rgb(12, 12, 4, 0.0, 1.0);
        assert!(max_diff(&color_transfer(&r, &r).unwrap(), &r) < 1e-9);
        let src = r.map(|_, v| v * 0.5 + 0.1);
        let out = color_transfer(&src, &r).unwrap();
        for c in 0..3 {
            let (mo, so) = moments(out.plane(c));
            let (mr, sr) = moments(r.plane(c));
            assert!((mo - mr).abs() < 1e-6 && (so - sr).abs() < 1e-6);
        }
    }

    #[test]
    fn color_transfer_constant_source() {
        let r = rand_rgb(8, 8, 5, 0.0, 1.0);
        let out = color_transfer(&Image::filled(8, 8, ColorSpace::Rgb, 0.2), &r).unwrap();
        for c in 0..3 {
            let (mr, _) = moments(r.plane(c));
            assert!(out.plane(c).iter().all(|&v| (v - mr).abs() < 1e-12));
        }
    }

    #[test]
    fn correct_modes_compose() {
        let r = smooth_rgb(24, 24);
        let src = r.map(|c, v| v * [0.9, 1.05, 0.95][c] + [0.04, -0.03, 0.02][c]);
        assert_eq!(
            correct(&src, &r, ColorMode::Hm).unwrap(),
            histogram_match(&src, &r).unwrap()
        );
        assert_eq!(
            correct(&src, &r, ColorMode::Ct).unwrap(),
            color_transfer(&src, &r).unwrap()
        );
        let ct = correct(&src, &r, ColorMode::Ct).unwrap();
        assert!(psnr(&ct, &r).unwrap() > psnr(&src, &r).unwrap() + 10.0);
        let cthm = correct(&src, &r, ColorMode::CtHm).unwrap();
        assert!(psnr(&cthm, &r).unwrap() > psnr(&src, &r).unwrap());
        assert_eq!(ColorMode::default(), ColorMode::CtHm);
        assert_eq!("ct_hm".parse::<ColorMode>().unwrap(), ColorMode::CtHm);
        assert!("xx".parse::<ColorMode>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn histogram_match_cdf_and_idempotence(seed in 0u64..1000, lo in 0.0f64..0.4, hi in 0.6f64..1.0) {
            // dense enough that every bin inside [lo, hi) is populated
            let src = rand_rgb(96, 96, seed, 0.0, 1.0);
            let reference = rand_rgb(96, 96, seed + 7919, lo, hi);
            let out = histogram_match(&src, &reference).unwrap();
            for c in 0..3 {
                for k in 0..=256 {
                    let t = k as f64 / 256.0;
                    let d = (step_cdf(out.plane(c), t) - step_cdf(reference.plane(c), t)).abs();
                    prop_assert!(d <= 2.0 / 256.0 + 1e-12, "channel {c} t {t} d {d}");
                }
            }
            let twice = histogram_match(&out, &reference).unwrap();
            prop_assert!(max_diff(&twice, &out) <= 1.0 / 256.0);
        }

        #[test]
        fn color_transfer_matches_moments(seed in 0u64..1000, g in 0.3f64..1.2, o in -0.1f64..0.1) {
            let reference = rand_rgb(12, 12, seed, 0.3, 0.7);
            let src = reference.map(|_, v| (v - 0.5) * g + 0.5 + o);
            let out = color_transfer(&src, &reference).unwrap();
            for c in 0..3 {
                let (mo, so) = moments(out.plane(c));
                let (mr, sr) = moments(reference.plane(c));
                prop_assert!((mo - mr).abs() < 1e-6 && (so - sr).abs() < 1e-6);
            }
        }
    }
}
