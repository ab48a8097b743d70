use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{luma, Image};

/// Radially averaged power spectrum of a square power-of-two crop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdProfile {
    /// Side length of the analyzed crop.
    pub size: usize,
    /// Bin `r` averages all frequencies with `floor(radius) == r`, in cycles
    /// per image, for `r < size / 2`.
    pub mean_power: Vec<f64>,
    pub mean_log_power: Vec<f64>,
    /// Energy above `cutoff * Nyquist` over all non-DC energy.
    pub hf_ratio: f64,
    /// Sum of the power spectrum, normalized so it equals the spatial sum of
    /// squares of the windowed, mean-free crop.
    pub total_energy: f64,
}

const LOG_FLOOR: f64 = 1e-20;

/// Power spectrum of the Y plane. Non-square or non-power-of-two inputs are
/// center-cropped to the largest power-of-two square that fits; the crop's
/// mean is removed and a separable Hann window applied so the periodic
/// boundary does not leak energy into high frequencies.
pub fn psd_profile(img: &Image, cutoff: f64) -> Result<PsdProfile> {
    let y = luma(img);
    let side = y.height().min(y.width());
    if side < 2 {
        return Err(Error::TooSmall {
            op: "psd_profile",
            height: y.height(),
            width: y.width(),
        });
    }
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be in [0,1], got {cutoff}"
        )));
    }
    let n = 1usize << (usize::BITS - 1 - side.leading_zeros());
    let (oy, ox) = ((y.height() - n) / 2, (y.width() - n) / 2);

    let crop: Vec<f64> = (0..n * n)
        .map(|i| y.get(0, oy + i / n, ox + i % n))
        .collect();
    let mean = crop.iter().sum::<f64>() / crop.len() as f64;
    let hann: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let mut buf: Vec<Complex<f64>> = crop
        .iter()
        .enumerate()
        .map(|(i, v)| Complex::new((v - mean) * hann[i / n] * hann[i % n], 0.0))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for x in 0..n {
        for yy in 0..n {
            col[yy] = buf[yy * n + x];
        }
        fft.process(&mut col);
        for yy in 0..n {
            buf[yy * n + x] = col[yy];
        }
    }

    let norm = (n * n) as f64;
    let half = n / 2;
    let nyquist = half as f64;
    let mut sum = vec![0.0; half];
    let mut log_sum = vec![0.0; half];
    let mut count = vec![0usize; half];
    let (mut total, mut non_dc, mut high) = (0.0, 0.0, 0.0);
    let signed = |k: usize| {
        if k < half {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    for ky in 0..n {
        for kx in 0..n {
            let p = buf[ky * n + kx].norm_sqr() / norm;
            total += p;
            let r = (signed(kx).powi(2) + signed(ky).powi(2)).sqrt();
            if ky != 0 || kx != 0 {
                non_dc += p;
                if r > cutoff * nyquist {
                    high += p;
                }
            }
            let bin = r.floor() as usize;
            if bin < half {
                sum[bin] += p;
                log_sum[bin] += (p + LOG_FLOOR).log10();
                count[bin] += 1;
            }
        }
    }
    let mean_power = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| s / c.max(1) as f64)
        .collect();
    let mean_log_power = log_sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| s / c.max(1) as f64)
        .collect();
    Ok(PsdProfile {
        size: n,
        mean_power,
        mean_log_power,
        hf_ratio: if non_dc > 1e-24 * norm {
            high / non_dc
        } else {
            0.0
        },
        total_energy: total,
    })
}
