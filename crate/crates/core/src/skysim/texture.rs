use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CameraModel;
use crate::error::{Error, Result};
use crate::imageops::{ColorSpace, Image};
use crate::rng::{derive_seed, rng_for, splitmix64};

/// Spectral recipe of the procedural ground.
///
/// The ground is a sum of random-phase plane waves in world coordinates.
/// Energy per octave of wavelength grows as `(λ/knee)^fine` below the knee
/// and as `(λ/knee)^coarse` above it, flattening past `plateau_m`; the steeper
/// coarse regime means a camera flying lower sees relatively more fine
/// detail per pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureRecipe {
    pub knee_m: f64,
    pub coarse_exponent: f64,
    pub fine_exponent: f64,
    pub plateau_m: f64,
    /// Wavelength range of the plane waves, in meters.
    pub largest_m: f64,
    pub smallest_m: f64,
    pub waves_per_octave: usize,
    /// Waves fade in between these periods, in pixels (2 is Nyquist).
    pub wave_fade_px: (f64, f64),
    /// Cell sizes (m) of the rectangle layers.
    pub primitive_cells_m: Vec<f64>,
    /// Rectangle contrast relative to one octave of waves at the same scale.
    pub primitive_contrast: f64,
    /// Rectangles fade in between these cell sizes, in pixels.
    pub primitive_fade_px: (f64, f64),
    /// Global exposure: target mean and standard deviation of the render.
    pub exposure_mean: f64,
    pub exposure_std: f64,
}

impl Default for TextureRecipe {
    fn default() -> Self {
        TextureRecipe {
            knee_m: 0.3,
            coarse_exponent: 1.2,
            fine_exponent: -0.3,
            plateau_m: 8.0,
            largest_m: 32.0,
            smallest_m: 0.002,
            waves_per_octave: 64,
            wave_fade_px: (2.0, 4.0),
            primitive_cells_m: (0..10).map(|i| 16.0 / 2f64.powi(i)).collect(),
            primitive_contrast: 0.5,
            primitive_fade_px: (3.0, 8.0),
            exposure_mean: 0.45,
            exposure_std: 0.16,
        }
    }
}

impl TextureRecipe {
    /// Energy of one octave of wavelengths around `wavelength_m`.
    pub fn octave_energy(&self, wavelength_m: f64) -> f64 {
        let rho = wavelength_m.min(self.plateau_m) / self.knee_m;
        if rho > 1.0 {
            rho.powf(self.coarse_exponent)
        } else {
            rho.powf(self.fine_exponent)
        }
    }
}

/// One procedural scene. The ground is an infinite deterministic function of
/// `seed`; `center_m` picks where the camera looks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub center_m: (f64, f64),
    pub recipe: TextureRecipe,
}

impl SceneSpec {
    pub fn from_seed(seed: u64) -> Self {
        let cx = unit(derive_seed(seed, &[0xC0])) * 2000.0 - 1000.0;
        let cy = unit(derive_seed(seed, &[0xC1])) * 2000.0 - 1000.0;
        SceneSpec {
            seed,
            center_m: (cx, cy),
            recipe: TextureRecipe::default(),
        }
    }
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Wave {
    wavelength: f64,
    /// Wave vector in radians per meter.
    k: (f64, f64),
    phase: f64,
    amplitude: f64,
    tint: [f64; 3],
}

fn waves(spec: &SceneSpec) -> Vec<Wave> {
    let r = &spec.recipe;
    let mut rng = rng_for(spec.seed, &[0xA0]);
    let mut out = Vec::new();
    let mut top = r.largest_m;
    while top > r.smallest_m {
        for _ in 0..r.waves_per_octave {
            let wavelength = top * 0.5f64.powf(rng.random::<f64>());
            let theta = rng.random::<f64>() * TAU;
            let mag = TAU / wavelength;
            out.push(Wave {
                wavelength,
                k: (mag * theta.cos(), mag * theta.sin()),
                phase: rng.random::<f64>() * TAU,
                // a cosine has mean square 1/2
                amplitude: (2.0 * r.octave_energy(wavelength) / r.waves_per_octave as f64).sqrt(),
                tint: [0; 3].map(|_| 0.8 + 0.4 * rng.random::<f64>()),
            });
        }
        top /= 2.0;
    }
    out
}

/// Rectangle layer: one candidate rectangle per rotated lattice cell.
struct Rects {
    id: u64,
    cell: f64,
    cos: f64,
    sin: f64,
    offset: (f64, f64),
    weight: f64,
}

impl Rects {
    fn new(seed: u64, id: u64, cell: f64, weight: f64) -> Self {
        let h = |k: u64| unit(derive_seed(seed, &[0xB0, id, k]));
        let theta = h(1) * TAU;
        Rects {
            id,
            cell,
            cos: theta.cos(),
            sin: theta.sin(),
            offset: (h(2) * 1e3, h(3) * 1e3),
            weight,
        }
    }

    /// Coverage in `[0,1]` (soft over `edge_cells`) and color offset.
    fn sample(&self, seed: u64, x: f64, y: f64, edge_cells: f64) -> Option<(f64, [f64; 3])> {
        let u = (self.cos * x - self.sin * y) / self.cell + self.offset.0;
        let v = (self.sin * x + self.cos * y) / self.cell + self.offset.1;
        let (ix, iy) = (u.floor() as i64, v.floor() as i64);
        let h =
            splitmix64(seed ^ splitmix64(self.id ^ splitmix64(ix as u64 ^ splitmix64(iy as u64))));
        let r = |k: u64| unit(splitmix64(h ^ k));
        if r(1) > 0.6 {
            return None;
        }
        let (cx, cy) = (ix as f64 + 0.45 + 0.1 * r(2), iy as f64 + 0.45 + 0.1 * r(3));
        let (hw, hh) = (0.15 + 0.3 * r(4), 0.15 + 0.3 * r(5));
        let inside = (hw - (u - cx).abs()).min(hh - (v - cy).abs());
        let coverage = (0.5 + inside / edge_cells).clamp(0.0, 1.0);
        if coverage == 0.0 {
            return None;
        }
        let lum = r(6) * 2.0 - 1.0;
        Some((coverage, [7, 8, 9].map(|k| lum + 0.3 * (r(k) - 0.5))))
    }
}

/// Renders the ground seen from `altitude_m`: an `height × width` RGB image
/// whose pixels are `cam.gsd_m(altitude_m)` meters apart, centered on the
/// scene center. Waves near or above the pixel Nyquist rate and rectangles
/// smaller than a few pixels fade out, and the result is
/// exposure-normalized.
pub fn render_scene(
    spec: &SceneSpec,
    altitude_m: f64,
    cam: &CameraModel,
    height: usize,
    width: usize,
) -> Result<Image> {
    cam.validate()?;
    if !(altitude_m.is_finite() && altitude_m > 0.0) || height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "render_scene: altitude {altitude_m}, size {width}x{height}"
        )));
    }
    let recipe = &spec.recipe;
    let gsd = cam.gsd_m(altitude_m);
    let (fade_lo, fade_hi) = recipe.wave_fade_px;
    let visible: Vec<(Wave, f64)> = waves(spec)
        .into_iter()
        .filter_map(|w| {
            let aa = smoothstep(fade_lo, fade_hi, w.wavelength / gsd);
            (aa > 0.0).then_some((w, aa))
        })
        .collect();
    let rects: Vec<Rects> = recipe
        .primitive_cells_m
        .iter()
        .enumerate()
        .filter_map(|(i, &cell)| {
            let aa = smoothstep(
                recipe.primitive_fade_px.0,
                recipe.primitive_fade_px.1,
                cell / gsd,
            );
            (aa > 0.0).then(|| {
                let w = aa * recipe.primitive_contrast * recipe.octave_energy(cell).sqrt();
                Rects::new(spec.seed, i as u64, cell, w)
            })
        })
        .collect();

    let n = height * width;
    let mut data = vec![0.0; 3 * n];
    let x0 = spec.center_m.0 + (0.5 - width as f64 / 2.0) * gsd;
    let mut row = vec![[0.0f64; 3]; width];
    for y in 0..height {
        let wy = spec.center_m.1 + (y as f64 + 0.5 - height as f64 / 2.0) * gsd;
        row.iter_mut().for_each(|p| *p = [0.0; 3]);
        for (w, aa) in &visible {
            // rotate the phasor one pixel at a time along the row
            let start = w.k.0 * x0 + w.k.1 * wy + w.phase;
            let (mut s, mut c) = start.sin_cos();
            let (ds, dc) = (w.k.0 * gsd).sin_cos();
            let amp = aa * w.amplitude;
            let tint = [amp * w.tint[0], amp * w.tint[1], amp * w.tint[2]];
            for p in row.iter_mut() {
                p[0] += tint[0] * c;
                p[1] += tint[1] * c;
                p[2] += tint[2] * c;
                (c, s) = (c * dc - s * ds, s * dc + c * ds);
            }
        }
        for (x, p) in row.iter_mut().enumerate() {
            let wx = x0 + x as f64 * gsd;
            for layer in &rects {
                if let Some((cov, color)) = layer.sample(spec.seed, wx, wy, gsd / layer.cell) {
                    for ch in 0..3 {
                        p[ch] += cov * layer.weight * color[ch];
                    }
                }
            }
            for ch in 0..3 {
                data[ch * n + y * width + x] = p[ch];
            }
        }
    }

    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let std = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / data.len() as f64).sqrt();
    let gain = if std > 1e-12 {
        recipe.exposure_std / std
    } else {
        0.0
    };
    data.iter_mut()
        .for_each(|v| *v = recipe.exposure_mean + (*v - mean) * gain);
    Image::new(height, width, ColorSpace::Rgb, data)
}
