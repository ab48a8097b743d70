//! Feature matching, homography estimation, warping, FOV matching and
//! per-patch alignment with an NCC gate.

mod align;
mod features;
mod fit;

pub use align::{
    inject_misalignment, local_align_and_filter, match_fov, AlignConfig, AlignedPair, FovMatch,
    LocalAlignment, PixelRect, DEFAULT_NCC_MIN,
};
pub use features::{detect_and_match, Correspondence};
pub use fit::{
    fit_homography_dlt, ransac_homography, RansacResult, RANSAC_ITERATIONS, RANSAC_THRESHOLD_PX,
};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::Image;

/// Projective map on pixel-center coordinates `(x, y)`, normalized so the
/// bottom-right entry is 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

const SINGULAR_EPS: f64 = 1e-12;

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let s = m[(2, 2)];
        if !m.iter().all(|v| v.is_finite()) || s.abs() < SINGULAR_EPS {
            return Err(Error::SingularHomography);
        }
        let m = m / s;
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m.determinant().abs() < SINGULAR_EPS * scale.powi(3) {
            return Err(Error::SingularHomography);
        }
        Ok(Homography {
            m: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
        })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    /// Maps pixel centers of a grid to the grid magnified by `s` with the
    /// image edges kept aligned: `x' = (x + 0.5) s - 0.5`.
    pub fn center_scaling(s: f64) -> Self {
        let t = 0.5 * s - 0.5;
        Homography {
            m: [[s, 0.0, t], [0.0, s, t], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or(Error::SingularHomography)?;
        Self::from_matrix(inv)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &Homography) -> Result<Self> {
        Self::from_matrix(self.matrix() * first.matrix())
    }

    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        let (a, b) = (self.matrix(), other.matrix());
        (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
/// Output of [`warp`]: the resampled image and which pixels had a source.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub image: Image,
    pub valid: Vec<bool>,
}

impl Warped {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len().max(1) as f64
    }
}

/// Inverse-mapping warp: output pixel `p` samples `img` at `h⁻¹ p` bilinearly;
/// pixels mapping outside `img` are 0 and marked invalid.
pub fn warp(img: &Image, h: &Homography, out_h: usize, out_w: usize) -> Result<Warped> {
    let inv = h.inverse()?;
    let n = out_h * out_w;
    let mut valid = vec![false; n];
    let mut src = Vec::with_capacity(n);
    for y in 0..out_h {
        for x in 0..out_w {
            src.push(inv.apply(x as f64, y as f64));
        }
    }
    let mut data = vec![0.0; n * img.channels()];
    for (i, &(sx, sy)) in src.iter().enumerate() {
        if img.sample_bilinear(0, sx, sy).is_none() {
            continue;
        }
        valid[i] = true;
        for c in 0..img.channels() {
            data[c * n + i] = img.sample_bilinear(c, sx, sy).unwrap_or(0.0);
        }
    }
    Ok(Warped {
        image: Image::new(out_h, out_w, img.space(), data)?,
        valid,
    })
}
