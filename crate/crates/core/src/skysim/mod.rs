//! Procedural multi-altitude scenes and the LR degradation model: ground
//! texture rendered through a pinhole camera, altitude-dependent blur,
//! bicubic downsampling, projective jitter, sensor noise and color shift.

mod dataset;
mod degrade;
#[cfg(test)]
mod tests;
mod texture;

pub use dataset::{
    generate_dataset, generate_pretrain, load_pretrain, load_sample, scan_dataset, scene_name,
    DatasetConfig, DatasetManifest, ManifestEntry, PretrainPair, SampleMeta, SampleRecord, Split,
    SplitCounts,
};
pub use degrade::{degrade, make_burst, Burst, DegradeConfig, DegradeParams};
pub use texture::{render_scene, SceneSpec, TextureRecipe};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Altitudes flown for every scene, in meters.
pub const PAPER_ALTITUDES: [f64; 10] = [
    10.0, 20.0, 30.0, 40.0, 50.0, 70.0, 80.0, 100.0, 120.0, 140.0,
];

/// Pinhole camera with a thin-lens depth-of-field blur heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_mm: f64,
    /// Entrance-pupil diameter.
    pub aperture_mm: f64,
    /// Circle of confusion.
    pub coc_mm: f64,
    /// Pitch of one HR pixel on the sensor.
    pub pixel_pitch_mm: f64,
    /// Standard deviation of additive sensor noise on `[0,1]` values.
    pub noise_std: f64,
    /// Converts `c f² / (2 h² F)` (mm, mm, m) into LR pixels of blur sigma.
    pub blur_gain: f64,
}

pub const BLUR_SIGMA_MIN: f64 = 0.4;
pub const BLUR_SIGMA_MAX: f64 = 2.5;

impl CameraModel {
    pub fn desk() -> Self {
        CameraModel {
            focal_mm: 24.0,
            aperture_mm: 24.0 / 2.8,
            coc_mm: 0.03,
            pixel_pitch_mm: 0.012,
            noise_std: 0.01,
            blur_gain: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.focal_mm,
            self.aperture_mm,
            self.coc_mm,
            self.pixel_pitch_mm,
            self.blur_gain,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid camera model {self:?}"
            )));
        }
        Ok(())
    }

    pub fn f_number(&self) -> f64 {
        self.focal_mm / self.aperture_mm
    }

    /// Ground sample distance of one HR pixel, in meters.
    pub fn gsd_m(&self, altitude_m: f64) -> f64 {
        altitude_m * self.pixel_pitch_mm / self.focal_mm
    }

    /// Blur sigma in LR pixels: inversely proportional to the depth of field
    /// `2 h² F c / f²`, capped to `[0.4, 2.5]`.
    pub fn blur_sigma(&self, altitude_m: f64) -> f64 {
        let raw = self.blur_gain * self.coc_mm * self.focal_mm.powi(2)
            / (2.0 * altitude_m.powi(2) * self.f_number());
        raw.clamp(BLUR_SIGMA_MIN, BLUR_SIGMA_MAX)
    }
}

/// Altitudes (meters) visited per scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltitudeProfile {
    altitudes: Vec<f64>,
}

impl Default for AltitudeProfile {
    fn default() -> Self {
        AltitudeProfile {
            altitudes: PAPER_ALTITUDES.to_vec(),
        }
    }
}

impl AltitudeProfile {
    pub fn new(mut altitudes: Vec<f64>) -> Result<Self> {
        if altitudes.is_empty() || altitudes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "altitudes must be positive: {altitudes:?}"
            )));
        }
        altitudes.sort_by(f64::total_cmp);
        altitudes.dedup();
        Ok(AltitudeProfile { altitudes })
    }

    pub fn altitudes(&self) -> &[f64] {
        &self.altitudes
    }
}

/// Directory name for an altitude, e.g. `alt_010`.
pub fn altitude_dir(altitude_m: f64) -> String {
    format!("alt_{:03}", altitude_m.round() as u64)
}
