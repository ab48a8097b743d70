use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::colorfix::ColorMode;
use crate::error::{Error, Result};
use crate::imageops::Scale;
use crate::metalearn::MetaConfig;
use crate::register::AlignConfig;
use crate::skysim::{AltitudeProfile, CameraModel, DatasetConfig, DegradeConfig, SplitCounts};
use crate::srnet::{SrNetConfig, TrainConfig, TrainMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!(
                "unknown profile `{s}` (expected desk or paper)"
            ))),
        }
    }
}

/// Every tunable of a run as one flat key/value table. Profile defaults are
/// materialized first, then a config file, then command-line overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,

    pub data_root: PathBuf,
    pub pairs_root: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,

    pub n_scenes: usize,
    pub split_train: usize,
    pub split_val: usize,
    pub split_test: usize,
    pub altitudes: Vec<f64>,
    pub scale: Scale,
    pub lr_width: usize,
    pub lr_height: usize,
    pub fov_width: usize,
    pub fov_height: usize,
    pub frames: usize,
    pub pretrain_images: usize,
    pub pretrain_hr_size: usize,

    pub focal_mm: f64,
    pub aperture_mm: f64,
    pub coc_mm: f64,
    pub pixel_pitch_mm: f64,
    pub noise_std: f64,
    pub blur_gain: f64,
    pub blur: bool,
    pub noise: bool,
    pub color_gain_spread: f64,
    pub color_offset_spread: f64,
    pub corner_jitter_px: f64,
    pub frame_shift_px: f64,

    pub patch: usize,
    pub ncc_min: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold_px: f64,
    pub color_mode: ColorMode,

    pub depth: usize,
    pub channels: usize,

    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub pretrain_halve_every: usize,
    pub finetune_all_lr: f64,
    pub finetune_all_epochs: usize,
    pub finetune_all_halve_every: usize,
    pub finetune_alt_lr: f64,
    pub finetune_alt_epochs: usize,
    pub finetune_alt_halve_every: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub augment: bool,

    pub meta_alpha: f64,
    pub meta_beta: f64,
    pub meta_inner_steps: usize,
    pub meta_shots: usize,
    pub meta_outer_iterations: usize,
    pub meta_patience: usize,
    pub meta_val_samples: usize,
    pub meta_validation_alt: f64,
    pub meta_test_alts: Vec<f64>,
}

/// Integers written where the default is a float (`altitudes = [10, 20]`)
/// are promoted.
fn coerce(like: &toml::Value, value: toml::Value) -> toml::Value {
    use toml::Value;
    match (like, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (Value::Array(a), Value::Array(b)) if a.iter().all(Value::is_float) => Value::Array(
            b.into_iter()
                .map(|v| match v {
                    Value::Integer(i) => Value::Float(i as f64),
                    other => other,
                })
                .collect(),
        ),
        (_, v) => v,
    }
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let (data, net, meta, align) = match profile {
            Profile::Desk => (
                DatasetConfig::desk(0),
                SrNetConfig::desk(),
                MetaConfig::desk(),
                AlignConfig::desk(),
            ),
            Profile::Paper => (
                DatasetConfig::paper(0),
                SrNetConfig::paper(),
                MetaConfig::paper(),
                AlignConfig::paper(),
            ),
        };
        let train = |m| match profile {
            Profile::Desk => TrainConfig::desk(m),
            Profile::Paper => TrainConfig::paper(m),
        };
        let (pre, all, alt) = (
            train(TrainMode::Pretrain),
            train(TrainMode::FinetuneAll),
            train(TrainMode::FinetuneAlt),
        );
        RunConfig {
            profile,
            seed: 0,
            data_root: "data".into(),
            pairs_root: "pairs".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
            n_scenes: data.n_scenes,
            split_train: data.split.train,
            split_val: data.split.val,
            split_test: data.split.test,
            altitudes: data.altitudes.altitudes().to_vec(),
            scale: data.scale,
            lr_width: data.lr_width,
            lr_height: data.lr_height,
            fov_width: data.fov_width,
            fov_height: data.fov_height,
            frames: data.frames,
            pretrain_images: data.pretrain_images,
            pretrain_hr_size: data.pretrain_hr_size,
            focal_mm: data.camera.focal_mm,
            aperture_mm: data.camera.aperture_mm,
            coc_mm: data.camera.coc_mm,
            pixel_pitch_mm: data.camera.pixel_pitch_mm,
            noise_std: data.camera.noise_std,
            blur_gain: data.camera.blur_gain,
            blur: data.degrade.blur,
            noise: data.degrade.noise,
            color_gain_spread: data.degrade.color_gain_spread,
            color_offset_spread: data.degrade.color_offset_spread,
            corner_jitter_px: data.degrade.corner_jitter_px,
            frame_shift_px: data.degrade.frame_shift_px,
            patch: align.patch,
            ncc_min: align.ncc_min,
            ransac_iterations: align.ransac_iterations,
            ransac_threshold_px: align.ransac_threshold_px,
            color_mode: ColorMode::default(),
            depth: net.depth,
            channels: net.channels,
            pretrain_lr: pre.lr,
            pretrain_epochs: pre.epochs,
            pretrain_halve_every: pre.halve_every,
            finetune_all_lr: all.lr,
            finetune_all_epochs: all.epochs,
            finetune_all_halve_every: all.halve_every,
            finetune_alt_lr: alt.lr,
            finetune_alt_epochs: alt.epochs,
            finetune_alt_halve_every: alt.halve_every,
            batch_size: pre.batch_size,
            crop: pre.crop,
            augment: pre.augment,
            meta_alpha: meta.alpha,
            meta_beta: meta.beta,
            meta_inner_steps: meta.inner_steps,
            meta_shots: meta.shots,
            meta_outer_iterations: meta.outer_iterations,
            meta_patience: meta.patience,
            meta_val_samples: meta.val_samples,
            meta_validation_alt: 120.0,
            meta_test_alts: vec![140.0],
        }
    }

    /// Profile defaults, overlaid with `file` (if any), overlaid with
    /// `overrides` given as `key=value` strings. Values use TOML syntax; a
    /// value that does not parse as TOML is taken as a string.
    pub fn resolve(
        profile: Option<Profile>,
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self> {
        let file_table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Some(
                    text.parse::<toml::Table>()
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                )
            }
            None => None,
        };
        let profile = match (profile, file_table.as_ref().and_then(|t| t.get("profile"))) {
            (Some(p), _) => p,
            (None, Some(v)) => v
                .as_str()
                .ok_or_else(|| Error::Config("`profile` must be a string".into()))?
                .parse()?,
            (None, None) => Profile::Desk,
        };
        let mut table = toml::Table::try_from(Self::profile(profile))
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut apply = |key: &str, value: toml::Value| -> Result<()> {
            if key == "profile" {
                return Ok(());
            }
            match table.get_mut(key) {
                Some(slot) => {
                    *slot = coerce(slot, value);
                    Ok(())
                }
                None => Err(Error::Config(format!("unknown config key `{key}`"))),
            }
        };
        for (k, v) in file_table.into_iter().flatten() {
            apply(&k, v)?;
        }
        for o in overrides {
            let (k, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let (k, raw) = (k.trim(), raw.trim());
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            apply(k, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset()?.validate()?;
        self.net().validate()?;
        for m in [
            TrainMode::Pretrain,
            TrainMode::FinetuneAll,
            TrainMode::FinetuneAlt,
        ] {
            self.train(m).validate()?;
        }
        self.meta().validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel {
            focal_mm: self.focal_mm,
            aperture_mm: self.aperture_mm,
            coc_mm: self.coc_mm,
            pixel_pitch_mm: self.pixel_pitch_mm,
            noise_std: self.noise_std,
            blur_gain: self.blur_gain,
        }
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            n_scenes: self.n_scenes,
            split: SplitCounts {
                train: self.split_train,
                val: self.split_val,
                test: self.split_test,
            },
            altitudes: AltitudeProfile::new(self.altitudes.clone())?,
            camera: self.camera(),
            scale: self.scale,
            lr_width: self.lr_width,
            lr_height: self.lr_height,
            fov_width: self.fov_width,
            fov_height: self.fov_height,
            frames: self.frames,
            seed: self.seed,
            degrade: DegradeConfig {
                blur: self.blur,
                noise: self.noise,
                color_gain_spread: self.color_gain_spread,
                color_offset_spread: self.color_offset_spread,
                corner_jitter_px: self.corner_jitter_px,
                frame_shift_px: self.frame_shift_px,
            },
            pretrain_images: self.pretrain_images,
            pretrain_hr_size: self.pretrain_hr_size,
        })
    }

    pub fn align(&self) -> AlignConfig {
        AlignConfig {
            fov_width: self.fov_width,
            fov_height: self.fov_height,
            patch: self.patch,
            ncc_min: self.ncc_min,
            ransac_iterations: self.ransac_iterations,
            ransac_threshold_px: self.ransac_threshold_px,
            seed: self.seed,
        }
    }

    pub fn net(&self) -> SrNetConfig {
        SrNetConfig {
            depth: self.depth,
            channels: self.channels,
            scale: self.scale,
        }
    }

    pub fn train(&self, mode: TrainMode) -> TrainConfig {
        let (lr, epochs, halve_every) = match mode {
            TrainMode::Pretrain => (
                self.pretrain_lr,
                self.pretrain_epochs,
                self.pretrain_halve_every,
            ),
            TrainMode::FinetuneAll => (
                self.finetune_all_lr,
                self.finetune_all_epochs,
                self.finetune_all_halve_every,
            ),
            TrainMode::FinetuneAlt => (
                self.finetune_alt_lr,
                self.finetune_alt_epochs,
                self.finetune_alt_halve_every,
            ),
        };
        TrainConfig {
            mode,
            lr,
            epochs,
            halve_every,
            batch_size: self.batch_size,
            crop: self.crop,
            augment: self.augment,
            seed: self.seed,
        }
    }

    pub fn meta(&self) -> MetaConfig {
        MetaConfig {
            alpha: self.meta_alpha,
            beta: self.meta_beta,
            inner_steps: self.meta_inner_steps,
            shots: self.meta_shots,
            outer_iterations: self.meta_outer_iterations,
            patience: self.meta_patience,
            val_samples: self.meta_val_samples,
            seed: self.seed,
        }
    }
}
