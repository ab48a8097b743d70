use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{
    detect_and_match, ransac_homography, Homography, RANSAC_ITERATIONS, RANSAC_THRESHOLD_PX,
};
use crate::error::{Error, Result};
use crate::imageops::{luma, resize, Image, Interpolation, PatchGrid, Scale};
use crate::par;
use crate::quality::ncc;

pub const DEFAULT_NCC_MIN: f64 = 0.9;

/// Registration geometry and thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub fov_width: usize,
    pub fov_height: usize,
    /// LR patch side; patches are taken with stride equal to their size.
    pub patch: usize,
    pub ncc_min: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold_px: f64,
    pub seed: u64,
}

impl AlignConfig {
    pub fn paper() -> Self {
        AlignConfig {
            fov_width: 720,
            fov_height: 540,
            patch: 180,
            ..Self::desk()
        }
    }

    pub fn desk() -> Self {
        AlignConfig {
            fov_width: 64,
            fov_height: 64,
            patch: 32,
            ncc_min: DEFAULT_NCC_MIN,
            ransac_iterations: RANSAC_ITERATIONS,
            ransac_threshold_px: RANSAC_THRESHOLD_PX,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// The LR region covering the HR field of view, resized to the fixed FOV size.
#[derive(Clone, Debug, PartialEq)]
pub struct FovMatch {
    pub fov: Image,
    pub rect: PixelRect,
    /// Maps downscaled-HR pixel coordinates into the LR frame.
    pub homography: Homography,
    pub inliers: usize,
}

/// Locates `hr` inside `lr` and crops the footprint's bounding rectangle,
/// resized with nearest-neighbor sampling to the configured FOV size.
pub fn match_fov(lr: &Image, hr: &Image, scale: Scale, cfg: &AlignConfig) -> Result<FovMatch> {
    let hr_down = resize(
        hr,
        scale.down(hr.height()),
        scale.down(hr.width()),
        Interpolation::Bicubic,
    )?;
    let matches = detect_and_match(&hr_down, lr)?;
    let fit = ransac_homography(
        &matches,
        cfg.ransac_iterations,
        cfg.ransac_threshold_px,
        cfg.seed,
    )?;
    let h = refine_global(&hr_down, lr, &fit.homography, cfg.ransac_threshold_px)
        .unwrap_or(fit.homography);
    let (w, ht) = (hr_down.width() as f64 - 0.5, hr_down.height() as f64 - 0.5);
    let corners = [(-0.5, -0.5), (w, -0.5), (w, ht), (-0.5, ht)].map(|(x, y)| h.apply(x, y));
    let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let max_x = corners
        .iter()
        .map(|c| c.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max_y = corners
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let edge = |v: f64, n: usize| ((v + 0.5).round().max(0.0) as usize).min(n);
    let (x0, x1) = (edge(min_x, lr.width()), edge(max_x, lr.width()));
    let (y0, y1) = (edge(min_y, lr.height()), edge(max_y, lr.height()));
    if x1 <= x0 + 1 || y1 <= y0 + 1 {
        return Err(Error::RansacFailure);
    }
    let rect = PixelRect {
        x: x0,
        y: y0,
        width: x1 - x0,
        height: y1 - y0,
    };
    let crop = lr.crop(rect.x, rect.y, rect.width, rect.height)?;
    let fov = resize(&crop, cfg.fov_height, cfg.fov_width, Interpolation::Nearest)?;
    Ok(FovMatch {
        fov,
        rect,
        homography: h,
        inliers: fit.inlier_count(),
    })
}

/// Photometric refinement of a feature-based `hr_down -> lr` homography.
/// Rejected when it moves any corner by more than `max_shift` pixels.
fn refine_global(
    hr_down: &Image,
    lr: &Image,
    h: &Homography,
    max_shift: f64,
) -> Option<Homography> {
    let template = luma(hr_down).into_data();
    let target = Field::new(&luma(lr));
    let refined = lk_homography(&template, hr_down.width(), hr_down.height(), h, &target)?;
    let (w, ht) = (hr_down.width() as f64 - 1.0, hr_down.height() as f64 - 1.0);
    let moved = [(0.0, 0.0), (w, 0.0), (w, ht), (0.0, ht)]
        .iter()
        .fold(0.0f64, |m, &(x, y)| {
            let (a, b) = (h.apply(x, y), refined.apply(x, y));
            m.max((a.0 - b.0).hypot(a.1 - b.1))
        });
    (moved <= max_shift).then_some(refined)
}

/// One training atom: an LR patch and the HR patch aligned to it.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub lr: Image,
    pub hr: Image,
    pub altitude_m: f64,
    /// NCC between the LR patch and the downscaled aligned HR patch, on Y.
    pub ncc: f64,
    pub scene: String,
    pub patch_index: usize,
    /// LR patch origin inside the FOV.
    pub origin: (usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalAlignment {
    pub pairs: Vec<AlignedPair>,
    pub total_patches: usize,
    pub registration_failures: usize,
    pub ncc_rejections: usize,
    /// NCC of every patch that registered, kept or not, in patch order.
    pub scores: Vec<(usize, f64)>,
}

const LK_MAX_ITERS: usize = 60;
const LK_STEP_TOL: f64 = 1e-7;
const LK_MAX_OUTSIDE: f64 = 0.25;
const OUTSIDE_MARGIN_LR: f64 = 3.0;

/// Plane with precomputed central-difference gradients.
struct Field {
    h: usize,
    w: usize,
    v: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl Field {
    fn new(img: &Image) -> Self {
        let (h, w) = (img.height(), img.width());
        let v = img.data().to_vec();
        let at = |y: usize, x: usize| v[y * w + x];
        let mut gx = vec![0.0; h * w];
        let mut gy = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                gx[y * w + x] = (at(y, xr) - at(y, xl)) / (xr - xl).max(1) as f64;
                gy[y * w + x] = (at(yd, x) - at(yu, x)) / (yd - yu).max(1) as f64;
            }
        }
        Field { h, w, v, gx, gy }
    }

    /// Bilinear (value, d/dx, d/dy) with clamped coordinates; flag set when
    /// the point lies outside the pixel-center hull.
    fn sample(&self, x: f64, y: f64) -> (f64, f64, f64, bool) {
        let outside = x < 0.0 || y < 0.0 || x > (self.w - 1) as f64 || y > (self.h - 1) as f64;
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let lerp = |p: &[f64]| {
            let top = p[y0 * self.w + x0] * (1.0 - fx) + p[y0 * self.w + x1] * fx;
            let bot = p[y1 * self.w + x0] * (1.0 - fx) + p[y1 * self.w + x1] * fx;
            top * (1.0 - fy) + bot * fy
        };
        (lerp(&self.v), lerp(&self.gx), lerp(&self.gy), outside)
    }
}

/// Direct photometric alignment of a `pw`x`ph` template against `target`:
/// Levenberg-Marquardt over a homography (in template-normalized coordinates)
/// plus gain and bias, composed after `init`. Returns the refined map from
/// template pixels to target pixels.
fn lk_homography(
    template: &[f64],
    pw: usize,
    ph: usize,
    init: &Homography,
    target: &Field,
) -> Option<Homography> {
    let (cx, cy) = ((pw as f64 - 1.0) / 2.0, (ph as f64 - 1.0) / 2.0);
    let s = pw.max(ph) as f64 / 2.0;
    let m = init.matrix();
    // target point and the 2x2 Jacobian of `init` at template point (x, y)
    let through = |x: f64, y: f64| {
        let z = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        let wx = (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / z;
        let wy = (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / z;
        let j = [
            [
                (m[(0, 0)] - wx * m[(2, 0)]) / z,
                (m[(0, 1)] - wx * m[(2, 1)]) / z,
            ],
            [
                (m[(1, 0)] - wy * m[(2, 0)]) / z,
                (m[(1, 1)] - wy * m[(2, 1)]) / z,
            ],
        ];
        (wx, wy, j, z)
    };
    // theta: homography entries h00 h01 h02 h10 h11 h12 h20 h21, gain, bias
    let mut th =
        SVector::<f64, 10>::from_column_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let mut lambda = 1e-4;
    let n = pw * ph;
    let cost = |th: &SVector<f64, 10>| -> Option<f64> {
        let mut e = 0.0;
        let mut outside = 0usize;
        for yy in 0..ph {
            for xx in 0..pw {
                let (u, v) = ((xx as f64 - cx) / s, (yy as f64 - cy) / s);
                let den = th[6] * u + th[7] * v + 1.0;
                if den.abs() < 1e-3 {
                    return None;
                }
                let tx = (th[0] * u + th[1] * v + th[2]) / den * s + cx;
                let ty = (th[3] * u + th[4] * v + th[5]) / den * s + cy;
                let (wx, wy, _, z) = through(tx, ty);
                if z.abs() < 1e-9 {
                    return None;
                }
                let (d, _, _, out) = target.sample(wx, wy);
                outside += out as usize;
                e += (th[8] * d + th[9] - template[yy * pw + xx]).powi(2);
            }
        }
        (outside as f64 <= LK_MAX_OUTSIDE * n as f64).then_some(e)
    };
    let mut current = cost(&th)?;
    for _ in 0..LK_MAX_ITERS {
        let mut jtj = SMatrix::<f64, 10, 10>::zeros();
        let mut jtr = SVector::<f64, 10>::zeros();
        for yy in 0..ph {
            for xx in 0..pw {
                let (u, v) = ((xx as f64 - cx) / s, (yy as f64 - cy) / s);
                let den = th[6] * u + th[7] * v + 1.0;
                let nx = (th[0] * u + th[1] * v + th[2]) / den;
                let ny = (th[3] * u + th[4] * v + th[5]) / den;
                let (wx, wy, j, _) = through(nx * s + cx, ny * s + cy);
                let (d, dx, dy, _) = target.sample(wx, wy);
                let r = th[8] * d + th[9] - template[yy * pw + xx];
                // image gradient pulled back through `init`
                let (tx, ty) = (dx * j[0][0] + dy * j[1][0], dx * j[0][1] + dy * j[1][1]);
                let (gx, gy) = (th[8] * tx * s / den, th[8] * ty * s / den);
                let jac = SVector::<f64, 10>::from_column_slice(&[
                    gx * u,
                    gx * v,
                    gx,
                    gy * u,
                    gy * v,
                    gy,
                    -(gx * nx + gy * ny) * u,
                    -(gx * nx + gy * ny) * v,
                    d,
                    1.0,
                ]);
                jtj += jac * jac.transpose();
                jtr += jac * r;
            }
        }
        let mut accepted = false;
        for _ in 0..8 {
            let mut a = jtj;
            for i in 0..10 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = a.cholesky()?.solve(&(-jtr));
            let trial = th + step;
            if let Some(e) = cost(&trial) {
                if e <= current {
                    let done =
                        step.iter().take(8).fold(0.0f64, |m, v| m.max(v.abs())) < LK_STEP_TOL;
                    th = trial;
                    current = e;
                    lambda = (lambda * 0.3).max(1e-9);
                    accepted = true;
                    if done {
                        return finish(&th, cx, cy, s, init);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    finish(&th, cx, cy, s, init)
}

fn finish(
    th: &SVector<f64, 10>,
    cx: f64,
    cy: f64,
    s: f64,
    init: &Homography,
) -> Option<Homography> {
    if !th.iter().all(|v| v.is_finite()) || !(0.2..=5.0).contains(&th[8]) {
        return None;
    }
    let norm = Homography::from_rows([
        [1.0 / s, 0.0, -cx / s],
        [0.0, 1.0 / s, -cy / s],
        [0.0, 0.0, 1.0],
    ])
    .ok()?;
    let h = Homography::from_rows([
        [th[0], th[1], th[2]],
        [th[3], th[4], th[5]],
        [th[6], th[7], 1.0],
    ])
    .ok()?;
    let back = Homography::from_rows([[s, 0.0, cx], [0.0, s, cy], [0.0, 0.0, 1.0]]).ok()?;
    init.after(&back).ok()?.after(&h).ok()?.after(&norm).ok()
}

enum PatchOutcome {
    Failed,
    Scored(f64, Option<AlignedPair>),
}

/// Splits `lr_fov` into stride-equals-size patches, aligns each to `hr` with
/// a locally estimated homography and keeps pairs whose post-alignment NCC
/// reaches `cfg.ncc_min`. Patches whose alignment fails are counted, not
/// fatal.
pub fn local_align_and_filter(
    lr_fov: &Image,
    hr: &Image,
    scale: Scale,
    cfg: &AlignConfig,
    scene: &str,
    altitude_m: f64,
) -> Result<LocalAlignment> {
    if !(cfg.ncc_min > 0.0 && cfg.ncc_min <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ncc_min must be in (0,1], got {}",
            cfg.ncc_min
        )));
    }
    if scale.up(lr_fov.height()) != hr.height() || scale.up(lr_fov.width()) != hr.width() {
        return Err(Error::shape(
            "local_align_and_filter",
            format!(
                "FOV {}x{} at scale {scale} does not match HR {}x{}",
                lr_fov.width(),
                lr_fov.height(),
                hr.width(),
                hr.height()
            ),
        ));
    }
    let p = cfg.patch;
    let ps = scale.up(p);
    let grid = PatchGrid::new(lr_fov.height(), lr_fov.width(), p, p)?;
    let hr_down = resize(hr, lr_fov.height(), lr_fov.width(), Interpolation::Bicubic)?;
    let target = Field::new(&luma(&hr_down));
    let lr_y = luma(lr_fov);
    let to_hr = Homography::center_scaling(scale.value());
    let from_hr = to_hr.inverse()?;
    // HR samples may fall this far outside the frame (edge-clamped) before
    // the patch counts as unregistrable
    let margin = OUTSIDE_MARGIN_LR * scale.value();

    let outcomes = par::map(&grid.origins, |index, &(ox, oy)| -> Result<PatchOutcome> {
        let lr_patch = lr_fov.crop(ox, oy, p, p)?;
        let template = lr_y.crop(ox, oy, p, p)?.into_data();
        let init = Homography::translation(ox as f64, oy as f64);
        let Some(w) = lk_homography(&template, p, p, &init, &target) else {
            return Ok(PatchOutcome::Failed);
        };
        // HR patch pixel -> LR patch pixel -> FOV pixel -> HR pixel
        let g = to_hr.after(&w)?.after(&from_hr)?;
        let mut out_of_bounds = false;
        let hr_patch = Image::from_fn(ps, ps, hr.space(), |ch, y, x| {
            let (sx, sy) = g.apply(x as f64, y as f64);
            let (lo, hi_x, hi_y) = (
                -margin,
                hr.width() as f64 - 1.0 + margin,
                hr.height() as f64 - 1.0 + margin,
            );
            if sx < lo || sy < lo || sx > hi_x || sy > hi_y {
                out_of_bounds = true;
            }
            hr.sample_clamped(ch, sx, sy)
        });
        if out_of_bounds {
            return Ok(PatchOutcome::Failed);
        }
        let down = resize(&hr_patch, p, p, Interpolation::Bicubic)?;
        let score = match ncc(&luma(&lr_patch), &luma(&down)) {
            Ok(v) => v,
            Err(Error::UndefinedVariance) => return Ok(PatchOutcome::Failed),
            Err(e) => return Err(e),
        };
        let pair = (score >= cfg.ncc_min).then(|| AlignedPair {
            lr: lr_patch,
            hr: hr_patch,
            altitude_m,
            ncc: score,
            scene: scene.to_string(),
            patch_index: index,
            origin: (ox, oy),
        });
        Ok(PatchOutcome::Scored(score, pair))
    });

    let mut result = LocalAlignment {
        total_patches: grid.len(),
        ..Default::default()
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            PatchOutcome::Failed => result.registration_failures += 1,
            PatchOutcome::Scored(score, pair) => {
                result.scores.push((index, score));
                match pair {
                    Some(pair) => result.pairs.push(pair),
                    None => result.ncc_rejections += 1,
                }
            }
        }
    }
    Ok(result)
}

/// Shears the content of `rect` non-rigidly: the upper half is resampled
/// from `shift_px` to the right, the lower half from `shift_px` to the left.
/// No single homography can undo it.
pub fn inject_misalignment(img: &Image, rect: PixelRect, shift_px: f64) -> Result<Image> {
    if rect.x + rect.width > img.width() || rect.y + rect.height > img.height() {
        return Err(Error::InvalidArgument(
            "misalignment rect outside image".into(),
        ));
    }
    let mid = rect.y + rect.height / 2;
    Ok(Image::from_fn(
        img.height(),
        img.width(),
        img.space(),
        |c, y, x| {
            let inside = (rect.x..rect.x + rect.width).contains(&x)
                && (rect.y..rect.y + rect.height).contains(&y);
            if !inside {
                return img.get(c, y, x);
            }
            let dx = if y < mid { shift_px } else { -shift_px };
            img.sample_clamped(c, x as f64 + dx, y as f64)
        },
    ))
}
