use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    altitude_dir, make_burst, render_scene, AltitudeProfile, CameraModel, DegradeConfig, SceneSpec,
};
use crate::error::{Error, Result};
use crate::imageops::io::{load_png, write_atomic};
use crate::imageops::{resize, Image, Interpolation, Scale};
use crate::par;
use crate::rng::{derive_seed, rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn split_of(&self, scene: usize) -> Split {
        if scene < self.train {
            Split::Train
        } else if scene < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub split: SplitCounts,
    pub altitudes: AltitudeProfile,
    pub camera: CameraModel,
    pub scale: Scale,
    /// Size of one LR burst frame.
    pub lr_width: usize,
    pub lr_height: usize,
    /// Size of the HR camera's footprint measured in LR pixels.
    pub fov_width: usize,
    pub fov_height: usize,
    pub frames: usize,
    pub seed: u64,
    pub degrade: DegradeConfig,
    /// Bicubic-only pairs for pretraining (altitude-free corpus).
    pub pretrain_images: usize,
    pub pretrain_hr_size: usize,
}

impl DatasetConfig {
    pub fn desk(seed: u64) -> Self {
        DatasetConfig {
            n_scenes: 16,
            split: SplitCounts {
                train: 12,
                val: 2,
                test: 2,
            },
            altitudes: AltitudeProfile::default(),
            camera: CameraModel::desk(),
            scale: Scale::X2,
            lr_width: 96,
            lr_height: 96,
            fov_width: 64,
            fov_height: 64,
            frames: 7,
            seed,
            degrade: DegradeConfig::default(),
            pretrain_images: 96,
            pretrain_hr_size: 64,
        }
    }

    pub fn paper(seed: u64) -> Self {
        DatasetConfig {
            n_scenes: 200,
            split: SplitCounts {
                train: 160,
                val: 20,
                test: 20,
            },
            scale: Scale::PAPER,
            lr_width: 900,
            lr_height: 675,
            fov_width: 720,
            fov_height: 540,
            pretrain_images: 800,
            pretrain_hr_size: 1000,
            ..Self::desk(seed)
        }
    }

    pub fn hr_width(&self) -> usize {
        self.scale.up(self.fov_width)
    }

    pub fn hr_height(&self) -> usize {
        self.scale.up(self.fov_height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.split.total() != self.n_scenes {
            return bad(format!(
                "split {:?} does not sum to {} scenes",
                self.split, self.n_scenes
            ));
        }
        if self.frames == 0 {
            return bad("at least one frame per burst".into());
        }
        if self.fov_width > self.lr_width || self.fov_height > self.lr_height {
            return bad("FOV larger than the LR frame".into());
        }
        for len in [
            self.lr_width,
            self.lr_height,
            self.fov_width,
            self.fov_height,
        ] {
            if !self.scale.divides(len) {
                return bad(format!(
                    "{len} px is not a multiple of {} at scale {}",
                    self.scale.den(),
                    self.scale
                ));
            }
        }
        if !self.scale.divides(self.scale.down(self.pretrain_hr_size))
            || self.scale.up(self.scale.down(self.pretrain_hr_size)) != self.pretrain_hr_size
        {
            return bad(format!(
                "pretrain HR size {} is not a whole multiple of scale {}",
                self.pretrain_hr_size, self.scale
            ));
        }
        self.camera.validate()
    }

    pub fn scene_spec(&self, scene: usize) -> SceneSpec {
        SceneSpec::from_seed(derive_seed(self.seed, &[stream::SCENE, scene as u64]))
    }
}

/// Sidecar written beside every sample. The first seven keys are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub altitude_m: f64,
    pub seed: u64,
    pub blur_sigma: f64,
    pub noise_std: f64,
    pub color_gain: [f64; 3],
    pub color_offset: [f64; 3],
    /// Per-frame translation, LR pixels.
    pub jitter_px: Vec<[f64; 2]>,
    pub corner_jitter_px: [[f64; 2]; 4],
    /// Top-left of the HR footprint in the LR frame (before jitter).
    pub fov_origin_lr: [usize; 2],
    pub fov_size_lr: [usize; 2],
    pub scale: Scale,
    pub gsd_m: f64,
    pub scene: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub dir: PathBuf,
    pub meta: SampleMeta,
    pub hr: Image,
    pub frames: Vec<Image>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub files: Vec<ManifestEntry>,
}

pub fn scene_name(scene: usize) -> String {
    format!("scene_{scene:04}")
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(bytes)
}

fn write_png(root: &Path, path: &Path, img: &Image) -> Result<ManifestEntry> {
    let bytes = crate::imageops::io::encode_png(img)?;
    write_atomic(path, &bytes)?;
    Ok(ManifestEntry {
        path: relative(root, path),
        sha256: sha256_hex(&bytes),
    })
}

fn generate_sample(
    cfg: &DatasetConfig,
    root: &Path,
    scene: usize,
    alt_index: usize,
) -> Result<Vec<ManifestEntry>> {
    let altitude = cfg.altitudes.altitudes()[alt_index];
    let split = cfg.split.split_of(scene);
    let scale = cfg.scale;
    let wide = render_scene(
        &cfg.scene_spec(scene),
        altitude,
        &cfg.camera,
        scale.up(cfg.lr_height),
        scale.up(cfg.lr_width),
    )?;
    // HR footprint: centered, displaced by up to an eighth of the slack
    let mut rng = rng_for(cfg.seed, &[stream::SCENE, scene as u64, alt_index as u64]);
    let den = scale.den() as usize;
    let mut origin = |slack: usize| {
        let center = slack / 2;
        let reach = slack / 8;
        let o = rng.random_range(center - reach..=center + reach);
        o - o % den
    };
    let ox = origin(cfg.lr_width - cfg.fov_width);
    let oy = origin(cfg.lr_height - cfg.fov_height);
    let hr = wide.crop(scale.up(ox), scale.up(oy), cfg.hr_width(), cfg.hr_height())?;
    let seed = derive_seed(cfg.seed, &[stream::DEGRADE, scene as u64, alt_index as u64]);
    let burst = make_burst(
        &wide,
        altitude,
        &cfg.camera,
        scale,
        &cfg.degrade,
        cfg.frames,
        seed,
    )?;

    let dir = root
        .join(split.name())
        .join(scene_name(scene))
        .join(altitude_dir(altitude));
    let mut files = vec![write_png(root, &dir.join("hr.png"), &hr)?];
    for (f, frame) in burst.frames.iter().enumerate() {
        files.push(write_png(root, &dir.join(format!("lr_{f:02}.png")), frame)?);
    }
    let meta = SampleMeta {
        altitude_m: altitude,
        seed,
        blur_sigma: burst.params.blur_sigma,
        noise_std: burst.params.noise_std,
        color_gain: burst.params.color_gain,
        color_offset: burst.params.color_offset,
        jitter_px: burst.frame_shifts.clone(),
        corner_jitter_px: burst.params.corner_jitter_px,
        fov_origin_lr: [ox, oy],
        fov_size_lr: [cfg.fov_width, cfg.fov_height],
        scale,
        gsd_m: cfg.camera.gsd_m(altitude),
        scene: scene_name(scene),
        split,
    };
    let path = dir.join("meta.json");
    let bytes = write_json(&path, &meta)?;
    files.push(ManifestEntry {
        path: relative(root, &path),
        sha256: sha256_hex(&bytes),
    });
    Ok(files)
}

/// Writes `root/{train,val,test}/scene_NNNN/alt_AAA/{hr.png, lr_XX.png,
/// meta.json}`, the pretraining corpus under `root/pretrain`, and
/// `root/manifest.json` listing every file with its SHA-256.
pub fn generate_dataset(root: &Path, cfg: &DatasetConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.n_scenes)
        .flat_map(|s| (0..cfg.altitudes.altitudes().len()).map(move |a| (s, a)))
        .collect();
    let mut files = Vec::new();
    for r in par::map(&tasks, |_, &(s, a)| generate_sample(cfg, root, s, a)) {
        files.extend(r?);
    }
    files.extend(generate_pretrain(root, cfg)?);
    let manifest = DatasetManifest {
        config: cfg.clone(),
        files,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Altitude-free bicubic pairs: scenes viewed from random heights, HR
/// rendered directly and LR obtained by bicubic downsampling only.
pub fn generate_pretrain(root: &Path, cfg: &DatasetConfig) -> Result<Vec<ManifestEntry>> {
    let (lo, hi) = {
        let a = cfg.altitudes.altitudes();
        (a[0].ln(), a[a.len() - 1].ln())
    };
    let indices: Vec<usize> = (0..cfg.pretrain_images).collect();
    let results = par::map(&indices, |_, &i| -> Result<Vec<ManifestEntry>> {
        let mut rng = rng_for(cfg.seed, &[stream::PRETRAIN, i as u64]);
        let altitude = rng.random_range(lo..=hi).exp();
        let spec = SceneSpec::from_seed(derive_seed(cfg.seed, &[stream::PRETRAIN, i as u64, 1]));
        let n = cfg.pretrain_hr_size;
        let hr = render_scene(&spec, altitude, &cfg.camera, n, n)?;
        let lr = resize(
            &hr,
            cfg.scale.down(n),
            cfg.scale.down(n),
            Interpolation::Bicubic,
        )?;
        let dir = root.join("pretrain").join(format!("img_{i:04}"));
        Ok(vec![
            write_png(root, &dir.join("hr.png"), &hr)?,
            write_png(root, &dir.join("lr.png"), &lr)?,
        ])
    });
    let mut files = Vec::new();
    for r in results {
        files.extend(r?);
    }
    Ok(files)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainPair {
    pub lr: Image,
    pub hr: Image,
}

pub fn load_pretrain(root: &Path) -> Result<Vec<PretrainPair>> {
    let dir = root.join("pretrain");
    let mut out = Vec::new();
    for entry in sorted_dirs(&dir)? {
        out.push(PretrainPair {
            lr: load_png(&entry.join("lr.png"))?,
            hr: load_png(&entry.join("hr.png"))?,
        });
    }
    if out.is_empty() {
        return Err(Error::MissingPrerequisite(format!(
            "no pretraining pairs under {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_sample(dir: &Path) -> Result<SampleRecord> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SampleMeta = serde_json::from_slice(&text)?;
    let hr = load_png(&dir.join("hr.png"))?;
    let mut frames = Vec::with_capacity(meta.jitter_px.len());
    for f in 0..meta.jitter_px.len() {
        frames.push(load_png(&dir.join(format!("lr_{f:02}.png")))?);
    }
    Ok(SampleRecord {
        dir: dir.to_path_buf(),
        meta,
        hr,
        frames,
    })
}

/// Sample directories of one split, ordered by scene then altitude.
pub fn scan_dataset(root: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for scene in sorted_dirs(&root.join(split.name()))? {
        out.extend(
            sorted_dirs(&scene)?
                .into_iter()
                .filter(|d| d.join("meta.json").is_file()),
        );
    }
    Ok(out)
}
