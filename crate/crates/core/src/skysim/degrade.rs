use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CameraModel;
use crate::error::{Error, Result};
use crate::imageops::{gaussian_blur, resize, Image, Interpolation, Scale};
use crate::register::{fit_homography_dlt, Correspondence, Homography};
use crate::rng::{rng_for, stream};

/// Which degradations are active and how strong the random ones are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    pub blur: bool,
    pub noise: bool,
    /// Per-channel gain is drawn from `1 ± color_gain_spread`.
    pub color_gain_spread: f64,
    /// Per-channel offset is drawn from `± color_offset_spread`.
    pub color_offset_spread: f64,
    /// Maximum displacement of each frame corner, LR pixels.
    pub corner_jitter_px: f64,
    /// Maximum per-frame translation, LR pixels.
    pub frame_shift_px: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            blur: true,
            noise: true,
            color_gain_spread: 0.1,
            color_offset_spread: 0.05,
            corner_jitter_px: 1.5,
            frame_shift_px: 0.5,
        }
    }
}

impl DegradeConfig {
    /// Plain bicubic downsampling.
    pub fn identity() -> Self {
        DegradeConfig {
            blur: false,
            noise: false,
            color_gain_spread: 0.0,
            color_offset_spread: 0.0,
            corner_jitter_px: 0.0,
            frame_shift_px: 0.0,
        }
    }
}

/// Parameters shared by every frame of a burst.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    pub blur_sigma: f64,
    pub noise_std: f64,
    pub color_gain: [f64; 3],
    pub color_offset: [f64; 3],
    /// Displacement of the four frame corners (TL, TR, BR, BL), LR pixels.
    pub corner_jitter_px: [[f64; 2]; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Burst {
    pub frames: Vec<Image>,
    pub params: DegradeParams,
    /// Per-frame translation added to the shared corner jitter.
    pub frame_shifts: Vec<[f64; 2]>,
}

fn symmetric(rng: &mut impl Rng, spread: f64) -> f64 {
    if spread > 0.0 {
        rng.random_range(-spread..=spread)
    } else {
        0.0
    }
}

fn sample_params(
    altitude_m: f64,
    cam: &CameraModel,
    cfg: &DegradeConfig,
    seed: u64,
) -> DegradeParams {
    let mut rng = rng_for(seed, &[stream::DEGRADE]);
    let color_gain = [0; 3].map(|_| 1.0 + symmetric(&mut rng, cfg.color_gain_spread));
    let color_offset = [0; 3].map(|_| symmetric(&mut rng, cfg.color_offset_spread));
    let corner_jitter_px =
        [0; 4].map(|_| [0; 2].map(|_| symmetric(&mut rng, cfg.corner_jitter_px)));
    DegradeParams {
        blur_sigma: if cfg.blur {
            cam.blur_sigma(altitude_m)
        } else {
            0.0
        },
        noise_std: if cfg.noise { cam.noise_std } else { 0.0 },
        color_gain,
        color_offset,
        corner_jitter_px,
    }
}

/// Frame homography moving each corner by its jitter plus the frame shift.
fn jitter_homography(
    h: usize,
    w: usize,
    corners: &[[f64; 2]; 4],
    shift: [f64; 2],
) -> Result<Homography> {
    let (r, b) = (w as f64 - 0.5, h as f64 - 0.5);
    let base = [(-0.5, -0.5), (r, -0.5), (r, b), (-0.5, b)];
    let m: Vec<_> = base
        .iter()
        .zip(corners)
        .map(|(&p, d)| Correspondence::new(p, (p.0 + d[0] + shift[0], p.1 + d[1] + shift[1])))
        .collect();
    fit_homography_dlt(&m)
}

/// Resamples `img` so content at `p` moves to `h p`, clamping at the border.
fn warp_clamped(img: &Image, h: &Homography) -> Result<Image> {
    let inv = h.inverse()?;
    let (ht, w) = (img.height(), img.width());
    let coords: Vec<(f64, f64)> = (0..ht * w)
        .map(|i| inv.apply((i % w) as f64, (i / w) as f64))
        .collect();
    Image::new(
        ht,
        w,
        img.space(),
        (0..img.channels())
            .flat_map(|c| {
                coords
                    .iter()
                    .map(move |&(x, y)| img.sample_clamped(c, x, y))
            })
            .collect(),
    )
}

/// Renders `n` LR frames of `hr_ideal`. Blur, color shift and corner jitter
/// are shared; each frame adds its own sub-pixel translation and noise.
/// Pipeline: blur, bicubic downsample, projective jitter, noise, color
/// gain/offset, clamp.
pub fn make_burst(
    hr_ideal: &Image,
    altitude_m: f64,
    cam: &CameraModel,
    scale: Scale,
    cfg: &DegradeConfig,
    n: usize,
    seed: u64,
) -> Result<Burst> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "burst needs at least one frame".into(),
        ));
    }
    cam.validate()?;
    let params = sample_params(altitude_m, cam, cfg, seed);
    let blurred = gaussian_blur(hr_ideal, params.blur_sigma * scale.value());
    let (lh, lw) = (scale.down(hr_ideal.height()), scale.down(hr_ideal.width()));
    let lr = resize(&blurred, lh, lw, Interpolation::Bicubic)?;
    let noise = (params.noise_std > 0.0)
        .then(|| Normal::new(0.0, params.noise_std))
        .transpose()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut frames = Vec::with_capacity(n);
    let mut frame_shifts = Vec::with_capacity(n);
    for f in 0..n {
        let mut rng = rng_for(seed, &[stream::BURST, f as u64]);
        let shift = [0; 2].map(|_| symmetric(&mut rng, cfg.frame_shift_px));
        let moved =
            params.corner_jitter_px.iter().flatten().any(|v| *v != 0.0) || shift != [0.0, 0.0];
        let frame = if moved {
            warp_clamped(
                &lr,
                &jitter_homography(lh, lw, &params.corner_jitter_px, shift)?,
            )?
        } else {
            lr.clone()
        };
        let plane = lh * lw;
        let data = frame
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / plane;
                let noisy = match &noise {
                    Some(d) => v + d.sample(&mut rng),
                    None => v,
                };
                noisy * params.color_gain[c] + params.color_offset[c]
            })
            .collect();
        frames.push(Image::new(lh, lw, frame.space(), data)?);
        frame_shifts.push(shift);
    }
    Ok(Burst {
        frames,
        params,
        frame_shifts,
    })
}

/// A single degraded frame; identical to frame 0 of [`make_burst`] with the
/// same seed.
pub fn degrade(
    hr_ideal: &Image,
    altitude_m: f64,
    cam: &CameraModel,
    scale: Scale,
    cfg: &DegradeConfig,
    seed: u64,
) -> Result<(Image, DegradeParams)> {
    let mut burst = make_burst(hr_ideal, altitude_m, cam, scale, cfg, 1, seed)?;
    Ok((burst.frames.remove(0), burst.params))
}
