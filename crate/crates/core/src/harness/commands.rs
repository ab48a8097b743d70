use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{
    write_results, ResultRow, METHOD_BICUBIC, METHOD_FINETUNE_ALL, METHOD_META_ADAPTED,
    METHOD_META_UNADAPTED, METHOD_PRETRAIN, METHOD_WITH_ALTITUDE,
};
use super::RunConfig;
use crate::colorfix::correct;
use crate::error::{Error, Result};
use crate::imageops::io::{load_png, save_png, write_atomic};
use crate::imageops::{resize, Interpolation, PatchGrid};
use crate::metalearn::{
    adapt_one_shot, meta_train, support_index, AltitudeTask, AltitudeTaskSet, SrLearner,
};
use crate::numcore::{checkpoint, ParamSet};
use crate::par;
use crate::quality::MetricReport;
use crate::register::{local_align_and_filter, match_fov, AlignedPair};
use crate::skysim::{
    altitude_dir, generate_dataset, load_pretrain, load_sample, scan_dataset, Split,
};
use crate::srnet::{self, init_params, upsample, NetKind, SrPair, TrainMode};

/// Name of the resolved configuration written beside every output.
pub const CONFIG_FILE: &str = "config.toml";

fn write_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    write_atomic(path, cfg.to_toml()?.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub samples: usize,
    pub files: usize,
    pub manifest: PathBuf,
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let data = cfg.dataset()?;
    let manifest = generate_dataset(&cfg.data_root, &data)?;
    write_config(&cfg.data_root.join(CONFIG_FILE), cfg)?;
    Ok(GenerateSummary {
        samples: data.n_scenes * data.altitudes.altitudes().len(),
        files: manifest.files.len(),
        manifest: cfg.data_root.join("manifest.json"),
    })
}

/// One stored pair in `pairs_root/index.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub split: Split,
    pub scene: String,
    pub altitude_m: f64,
    pub patch_index: usize,
    pub origin: [usize; 2],
    pub ncc: f64,
    /// Directory holding `lr.png` and `hr.png`, relative to the pairs root.
    pub dir: String,
}

/// Per-altitude outcome of preprocessing, over all splits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AltitudeStats {
    pub altitude_m: f64,
    pub patches: usize,
    pub kept: usize,
    /// Patches whose aligned NCC fell below the threshold.
    pub dropped_ncc: usize,
    pub registration_failures: usize,
    /// Mean NCC of the kept pairs.
    pub mean_ncc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessSummary {
    pub altitudes: Vec<AltitudeStats>,
    pub pairs: usize,
    pub stats_csv: PathBuf,
}

impl PreprocessSummary {
    pub fn dropped_ncc(&self) -> usize {
        self.altitudes.iter().map(|a| a.dropped_ncc).sum()
    }

    pub fn patches(&self) -> usize {
        self.altitudes.iter().map(|a| a.patches).sum()
    }
}

struct SampleOutcome {
    altitude_m: f64,
    patches: usize,
    failures: usize,
    dropped: usize,
    pairs: Vec<AlignedPair>,
}

fn preprocess_sample(cfg: &RunConfig, dir: &Path) -> Result<SampleOutcome> {
    let rec = load_sample(dir)?;
    let align = cfg.align();
    let scale = rec.meta.scale;
    let lr = rec
        .frames
        .first()
        .ok_or_else(|| Error::MissingPrerequisite(format!("no LR frames in {}", dir.display())))?;
    let patches = PatchGrid::new(cfg.fov_height, cfg.fov_width, align.patch, align.patch)?.len();
    let failed = |altitude_m| SampleOutcome {
        altitude_m,
        patches,
        failures: patches,
        dropped: 0,
        pairs: Vec::new(),
    };
    let fov = match match_fov(lr, &rec.hr, scale, &align) {
        Ok(f) => f,
        Err(
            Error::InsufficientCorrespondences { .. } | Error::RansacFailure | Error::RankDeficient,
        ) => return Ok(failed(rec.meta.altitude_m)),
        Err(e) => return Err(e),
    };
    let hr_down = resize(
        &rec.hr,
        fov.fov.height(),
        fov.fov.width(),
        Interpolation::Bicubic,
    )?;
    let lr_fov = correct(&fov.fov, &hr_down, cfg.color_mode)?;
    let la = local_align_and_filter(
        &lr_fov,
        &rec.hr,
        scale,
        &align,
        &rec.meta.scene,
        rec.meta.altitude_m,
    )?;
    Ok(SampleOutcome {
        altitude_m: rec.meta.altitude_m,
        patches: la.total_patches,
        failures: la.registration_failures,
        dropped: la.ncc_rejections,
        pairs: la.pairs,
    })
}

/// Registers every sample of every split: FOV matching on the first burst
/// frame, color correction towards the downscaled HR, then per-patch
/// alignment with the NCC filter.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let mut samples: Vec<(Split, PathBuf)> = Vec::new();
    for split in Split::ALL {
        samples.extend(
            scan_dataset(&cfg.data_root, split)?
                .into_iter()
                .map(|d| (split, d)),
        );
    }
    if samples.is_empty() {
        return Err(Error::MissingPrerequisite(format!(
            "no dataset under {}",
            cfg.data_root.display()
        )));
    }
    let outcomes = par::map(&samples, |_, (_, d)| preprocess_sample(cfg, d));
    let mut index = Vec::new();
    let mut stats: BTreeMap<u64, AltitudeStats> = BTreeMap::new();
    for ((split, _), outcome) in samples.iter().zip(outcomes) {
        let o = outcome?;
        let s = stats
            .entry(o.altitude_m.to_bits())
            .or_insert_with(|| AltitudeStats {
                altitude_m: o.altitude_m,
                ..Default::default()
            });
        s.patches += o.patches;
        s.registration_failures += o.failures;
        s.dropped_ncc += o.dropped;
        s.kept += o.pairs.len();
        s.mean_ncc += o.pairs.iter().map(|p| p.ncc).sum::<f64>();
        for p in o.pairs {
            let dir = format!(
                "{}/{}/{}/patch_{:02}",
                split.name(),
                p.scene,
                altitude_dir(p.altitude_m),
                p.patch_index
            );
            save_png(&cfg.pairs_root.join(&dir).join("lr.png"), &p.lr)?;
            save_png(&cfg.pairs_root.join(&dir).join("hr.png"), &p.hr)?;
            index.push(PairEntry {
                split: *split,
                scene: p.scene,
                altitude_m: p.altitude_m,
                patch_index: p.patch_index,
                origin: [p.origin.0, p.origin.1],
                ncc: p.ncc,
                dir,
            });
        }
    }
    let mut altitudes: Vec<AltitudeStats> = stats.into_values().collect();
    altitudes.sort_by(|a, b| a.altitude_m.total_cmp(&b.altitude_m));
    let mut csv =
        String::from("altitude_m,patches,kept,dropped_ncc,registration_failures,mean_ncc\n");
    for a in altitudes.iter_mut() {
        a.mean_ncc = if a.kept > 0 {
            a.mean_ncc / a.kept as f64
        } else {
            0.0
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            a.altitude_m, a.patches, a.kept, a.dropped_ncc, a.registration_failures, a.mean_ncc
        ));
    }
    let stats_csv = cfg.pairs_root.join("stats.csv");
    write_atomic(&stats_csv, csv.as_bytes())?;
    write_json(&cfg.pairs_root.join("index.json"), &index)?;
    write_config(&cfg.pairs_root.join(CONFIG_FILE), cfg)?;
    Ok(PreprocessSummary {
        altitudes,
        pairs: index.len(),
        stats_csv,
    })
}

/// Aligned pairs of one split, in index order.
pub fn load_pairs(pairs_root: &Path, split: Split) -> Result<Vec<AlignedPair>> {
    let path = pairs_root.join("index.json");
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingPrerequisite(format!(
                "{} not found; run `altisr preprocess` first",
                path.display()
            )))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let index: Vec<PairEntry> = serde_json::from_slice(&bytes)?;
    let wanted: Vec<&PairEntry> = index.iter().filter(|e| e.split == split).collect();
    par::map(&wanted, |_, e| -> Result<AlignedPair> {
        let dir = pairs_root.join(&e.dir);
        Ok(AlignedPair {
            lr: load_png(&dir.join("lr.png"))?,
            hr: load_png(&dir.join("hr.png"))?,
            altitude_m: e.altitude_m,
            ncc: e.ncc,
            scene: e.scene.clone(),
            patch_index: e.patch_index,
            origin: (e.origin[0], e.origin[1]),
        })
    })
    .into_iter()
    .collect()
}

fn require_pairs(cfg: &RunConfig, split: Split) -> Result<Vec<AlignedPair>> {
    let pairs = load_pairs(&cfg.pairs_root, split)?;
    if pairs.is_empty() {
        return Err(Error::MissingPrerequisite(format!(
            "no {split} pairs under {}",
            cfg.pairs_root.display()
        )));
    }
    Ok(pairs)
}

/// Means per (scene, altitude), ordered by altitude then scene.
fn group_rows(pairs: &[AlignedPair], reports: &[MetricReport], method: &str) -> Vec<ResultRow> {
    let mut groups: BTreeMap<(u64, String), Vec<MetricReport>> = BTreeMap::new();
    for (p, r) in pairs.iter().zip(reports) {
        groups
            .entry((p.altitude_m.to_bits(), p.scene.clone()))
            .or_default()
            .push(*r);
    }
    let mut rows: Vec<ResultRow> = groups
        .into_iter()
        .map(|((a, scene), rs)| {
            let m = MetricReport::mean(&rs).expect("non-empty group");
            ResultRow {
                scene,
                altitude_m: f64::from_bits(a),
                method: method.to_string(),
                psnr_db: m.psnr,
                ssim: m.ssim,
                gmsd: m.gmsd,
            }
        })
        .collect();
    rows.sort_by(|x, y| {
        x.altitude_m
            .total_cmp(&y.altitude_m)
            .then_with(|| x.scene.cmp(&y.scene))
    });
    rows
}

fn score_model(
    cfg: &RunConfig,
    pairs: &[AlignedPair],
    params: &ParamSet,
    kind: NetKind,
    method: &str,
) -> Result<Vec<ResultRow>> {
    let sr: Vec<SrPair> = pairs.iter().map(SrPair::from).collect();
    let scores = srnet::score_pairs(&sr, params, kind, &cfg.net())?;
    let reports: Vec<MetricReport> = scores.iter().map(|s| s.model).collect();
    Ok(group_rows(pairs, &reports, method))
}

fn results_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.report_dir.join("results").join(format!("{name}.csv"))
}

fn finish_results(cfg: &RunConfig, name: &str, rows: &[ResultRow]) -> Result<PathBuf> {
    let path = results_path(cfg, name);
    write_results(&path, rows)?;
    write_config(&cfg.report_dir.join(CONFIG_FILE), cfg)?;
    Ok(path)
}

/// Bicubic upsampling scored on the test split.
pub fn cmd_eval_baseline(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let pairs = require_pairs(cfg, Split::Test)?;
    let reports = par::map(&pairs, |_, p| {
        MetricReport::compute(&upsample(&p.lr, cfg.scale)?, &p.hr)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows = group_rows(&pairs, &reports, METHOD_BICUBIC);
    finish_results(cfg, "bicubic", &rows)?;
    Ok(rows)
}

fn checkpoint_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.checkpoint_dir.join(format!("{name}.ckpt"))
}

fn load_checkpoint(cfg: &RunConfig, name: &str, hint: &str) -> Result<ParamSet> {
    let path = checkpoint_path(cfg, name);
    if !path.is_file() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `{hint}` first",
            path.display()
        )));
    }
    checkpoint::load(&path)
}

fn save_run(cfg: &RunConfig, name: &str, params: &ParamSet, log: &str) -> Result<()> {
    checkpoint::save(&checkpoint_path(cfg, name), params)?;
    write_atomic(
        &cfg.checkpoint_dir.join(format!("{name}.log.csv")),
        log.as_bytes(),
    )?;
    write_config(&cfg.checkpoint_dir.join(format!("{name}.config.toml")), cfg)
}

fn train_log(history: &[srnet::EpochLog]) -> String {
    let mut s = String::from("epoch,lr,mean_l1\n");
    for h in history {
        s.push_str(&format!("{},{:e},{:.8}\n", h.epoch, h.lr, h.mean_l1));
    }
    s
}

fn alt_label(a: f64) -> String {
    format!("{a}")
}

fn pretrain(cfg: &RunConfig, kind: NetKind, name: &str) -> Result<ParamSet> {
    let pairs: Vec<SrPair> = load_pretrain(&cfg.data_root)?
        .into_iter()
        .map(SrPair::from)
        .collect();
    let init = init_params(&cfg.net(), kind, cfg.seed)?;
    let out = srnet::train(
        &pairs,
        &init,
        kind,
        &cfg.net(),
        &cfg.train(TrainMode::Pretrain),
    )?;
    save_run(cfg, name, &out.params, &train_log(&out.history))?;
    Ok(out.params)
}

/// Trains the plain network. `pretrain` starts from scratch on the bicubic
/// corpus; the fine-tuning modes start from the pretrained checkpoint and use
/// the train split (all altitudes, or only `altitude_m`). The result is
/// scored on the test split.
pub fn cmd_train(
    cfg: &RunConfig,
    mode: TrainMode,
    altitude_m: Option<f64>,
) -> Result<Vec<ResultRow>> {
    let test = require_pairs(cfg, Split::Test)?;
    let (params, name, method) = match mode {
        TrainMode::Pretrain => (
            pretrain(cfg, NetKind::Simple, "pretrain")?,
            "pretrain".to_string(),
            METHOD_PRETRAIN.to_string(),
        ),
        TrainMode::FinetuneAll | TrainMode::FinetuneAlt => {
            let start = load_checkpoint(cfg, "pretrain", "altisr train --mode pretrain")?;
            let mut train = require_pairs(cfg, Split::Train)?;
            let (name, method) = match (mode, altitude_m) {
                (TrainMode::FinetuneAlt, Some(a)) => {
                    train.retain(|p| p.altitude_m == a);
                    if train.is_empty() {
                        return Err(Error::MissingPrerequisite(format!(
                            "no training pairs at {a} m"
                        )));
                    }
                    (
                        format!("finetune_alt_{}", alt_label(a)),
                        format!("Fine-tune-{}m", alt_label(a)),
                    )
                }
                (TrainMode::FinetuneAlt, None) => {
                    return Err(Error::InvalidArgument(
                        "finetune-alt needs an altitude".into(),
                    ))
                }
                _ => ("finetune_all".to_string(), METHOD_FINETUNE_ALL.to_string()),
            };
            let sr: Vec<SrPair> = train.iter().map(SrPair::from).collect();
            let out = srnet::train(&sr, &start, NetKind::Simple, &cfg.net(), &cfg.train(mode))?;
            save_run(cfg, &name, &out.params, &train_log(&out.history))?;
            (out.params, name, method)
        }
    };
    let rows = score_model(cfg, &test, &params, NetKind::Simple, &method)?;
    finish_results(cfg, &name, &rows)?;
    Ok(rows)
}

/// Altitude-aware network: pretrained on the bicubic corpus at the
/// normalized altitude 1 (reusing an existing checkpoint), then fine-tuned
/// on all altitudes of the train split.
pub fn cmd_train_aal(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let test = require_pairs(cfg, Split::Test)?;
    let train = require_pairs(cfg, Split::Train)?;
    let start = match load_checkpoint(cfg, "pretrain_altitude", "") {
        Ok(p) => p,
        Err(Error::MissingPrerequisite(_)) => {
            pretrain(cfg, NetKind::Altitude, "pretrain_altitude")?
        }
        Err(e) => return Err(e),
    };
    let sr: Vec<SrPair> = train.iter().map(SrPair::from).collect();
    let out = srnet::train(
        &sr,
        &start,
        NetKind::Altitude,
        &cfg.net(),
        &cfg.train(TrainMode::FinetuneAll),
    )?;
    save_run(cfg, "with_altitude", &out.params, &train_log(&out.history))?;
    let rows = score_model(
        cfg,
        &test,
        &out.params,
        NetKind::Altitude,
        METHOD_WITH_ALTITUDE,
    )?;
    finish_results(cfg, "with_altitude", &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSummary {
    pub train_altitudes: Vec<f64>,
    pub validation_altitude: Option<f64>,
    pub test_altitudes: Vec<f64>,
    pub iterations: usize,
    pub best_iteration: Option<usize>,
    pub config: crate::metalearn::MetaConfig,
    pub seed: u64,
}

fn learner(cfg: &RunConfig) -> SrLearner {
    SrLearner {
        net: cfg.net(),
        kind: NetKind::Simple,
    }
}

/// First-order MAML from the pretrained checkpoint over the train-split
/// altitudes, holding out `exclude` (test) and the validation altitude.
pub fn cmd_meta_train(cfg: &RunConfig, exclude: &[f64]) -> Result<MetaSummary> {
    let start = load_checkpoint(cfg, "pretrain", "altisr train --mode pretrain")?;
    let pairs: Vec<SrPair> = require_pairs(cfg, Split::Train)?
        .iter()
        .map(SrPair::from)
        .collect();
    let validation =
        (!exclude.contains(&cfg.meta_validation_alt)).then_some(cfg.meta_validation_alt);
    let mut tasks = AltitudeTaskSet::from_pairs(pairs, validation, exclude)?;
    // Test altitudes are only held out here; they are scored by `adapt`.
    tasks.test.clear();
    let meta = cfg.meta();
    let out = meta_train(&learner(cfg), &start, &tasks, &meta)?;
    let mut log = String::from("iteration,query_loss,val_loss\n");
    for h in &out.history {
        let v = h.val_loss.map(|v| format!("{v:.8}")).unwrap_or_default();
        log.push_str(&format!("{},{:.8},{v}\n", h.iteration, h.query_loss));
    }
    save_run(cfg, "meta", &out.params, &log)?;
    let summary = MetaSummary {
        train_altitudes: tasks.train.iter().map(|t| t.altitude_m).collect(),
        validation_altitude: tasks.validation.as_ref().map(|t| t.altitude_m),
        test_altitudes: exclude.to_vec(),
        iterations: out.history.len(),
        best_iteration: out.best_iteration,
        config: meta,
        seed: cfg.seed,
    };
    write_json(&cfg.checkpoint_dir.join("meta.json"), &summary)?;
    Ok(summary)
}

/// One-shot adaptation of the meta-trained checkpoint at `altitude_m`: one
/// seeded support pair from the test split, `steps` SGD updates (default from
/// the config), scored on the remaining test pairs at that altitude next to
/// the unadapted parameters.
pub fn cmd_adapt(cfg: &RunConfig, altitude_m: f64, steps: Option<usize>) -> Result<Vec<ResultRow>> {
    let params = load_checkpoint(cfg, "meta", "altisr meta-train")?;
    let pairs: Vec<AlignedPair> = require_pairs(cfg, Split::Test)?
        .into_iter()
        .filter(|p| p.altitude_m == altitude_m)
        .collect();
    if pairs.len() < 2 {
        return Err(Error::MissingPrerequisite(format!(
            "adaptation at {altitude_m} m needs at least 2 test pairs, found {}",
            pairs.len()
        )));
    }
    let mut meta = cfg.meta();
    if let Some(s) = steps {
        meta.inner_steps = s;
    }
    let task = AltitudeTask {
        altitude_m,
        samples: pairs.iter().map(SrPair::from).collect::<Vec<_>>(),
    };
    let support = support_index(task.samples.len(), meta.seed, altitude_m);
    let adapted = adapt_one_shot(&learner(cfg), &params, &task.samples[support], &meta)?;
    let rest: Vec<AlignedPair> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != support)
        .map(|(_, p)| p.clone())
        .collect();
    let mut rows = score_model(cfg, &rest, &params, NetKind::Simple, METHOD_META_UNADAPTED)?;
    rows.extend(score_model(
        cfg,
        &rest,
        &adapted,
        NetKind::Simple,
        METHOD_META_ADAPTED,
    )?);
    finish_results(cfg, &format!("meta_{}", alt_label(altitude_m)), &rows)?;
    Ok(rows)
}
