//! End-to-end acceptance gate. Runs every criterion in order on the seeded
//! desk profile, prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails.
//!
//! Filter with `cargo test --test acceptance -- 3 10 11` to run a subset.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use altisr_core::colorfix::{correct, ColorMode};
use altisr_core::harness::{self, Profile, RunConfig};
use altisr_core::imageops::{resize, ColorSpace, Interpolation, Scale};
use altisr_core::metalearn::{
    adapt_one_shot, meta_train, support_index, AltitudeTask, AltitudeTaskSet, Learner, MetaConfig,
    SrLearner,
};
use altisr_core::numcore::checkpoint;
use altisr_core::quality::{gmsd, ncc, psd_profile, psnr, ssim, MetricReport};
use altisr_core::register::{
    inject_misalignment, local_align_and_filter, match_fov, ransac_homography, AlignedPair,
    Correspondence, Homography, PixelRect,
};
use altisr_core::skysim::{
    degrade, render_scene, CameraModel, DegradeConfig, SceneSpec, Split, PAPER_ALTITUDES,
};
use altisr_core::srnet::{
    self, forward, init_params, pair_loss, pair_loss_and_grads, upsample, AltitudeScore, NetKind,
    Prepared, SrNetConfig, SrPair, TrainMode,
};
use altisr_core::{par, Error, Image, ParamSet, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- fixtures

/// Desk-profile run directory with every intermediate the training criteria
/// share, produced through the harness commands.
struct Desk {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    test: Vec<AlignedPair>,
}

fn desk_config(root: &Path, extra: &[String]) -> Result<RunConfig> {
    let mut set: Vec<String> = [
        ("data_root", "data"),
        ("pairs_root", "pairs"),
        ("checkpoint_dir", "ckpt"),
        ("report_dir", "reports"),
    ]
    .iter()
    .map(|(k, d)| format!("{k}={:?}", root.join(d).display().to_string()))
    .collect();
    set.extend(extra.iter().cloned());
    RunConfig::resolve(Some(Profile::Desk), None, &set)
}

impl Desk {
    fn build() -> Result<Self> {
        let dir = tempfile::tempdir().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let cfg = desk_config(dir.path(), &[])?;
        harness::cmd_generate(&cfg)?;
        harness::cmd_preprocess(&cfg)?;
        let test = harness::load_pairs(&cfg.pairs_root, Split::Test)?;
        Ok(Desk {
            _dir: dir,
            cfg,
            test,
        })
    }

    fn checkpoint(&self, name: &str) -> Result<ParamSet> {
        checkpoint::load(&self.cfg.checkpoint_dir.join(format!("{name}.ckpt")))
    }

    fn evaluate(&self, params: &ParamSet, kind: NetKind) -> Result<Vec<AltitudeScore>> {
        let pairs: Vec<SrPair> = self.test.iter().map(SrPair::from).collect();
        srnet::evaluate(&pairs, params, kind, &self.cfg.net())
    }
}

fn mean_psnr(rows: &[AltitudeScore], model: bool) -> f64 {
    let n: usize = rows.iter().map(|r| r.pairs).sum();
    rows.iter()
        .map(|r| r.pairs as f64 * if model { r.model.psnr } else { r.bicubic.psnr })
        .sum::<f64>()
        / n as f64
}

fn per_altitude(rows: &[AltitudeScore]) -> String {
    rows.iter()
        .map(|r| format!("{}:{:.3}", r.altitude_m, r.model.psnr))
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------- criteria

/// Five-point central difference of `f` around 0.
fn five_point(h: f64, f: impl Fn(f64) -> f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn c1_gradients() -> Result<Verdict> {
    let net = SrNetConfig::desk();
    let hr = render_scene(&SceneSpec::from_seed(41), 30.0, &CameraModel::desk(), 8, 8)?;
    let lr = resize(&hr, 4, 4, Interpolation::Bicubic)?;
    let pair = Prepared::new(
        &SrPair {
            lr,
            hr,
            altitude_m: Some(55.0),
        },
        Scale::X2,
    )?;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut r = rng(1);
    for kind in [NetKind::Simple, NetKind::Altitude] {
        // move off the zero-initialized layers so every weight carries gradient
        let mut p = init_params(&net, kind, 7)?;
        for (_, t) in p.iter_mut() {
            let scale = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(0.2);
            for v in t.data_mut() {
                *v += 0.25 * scale * r.random_range(-1.0..1.0);
            }
        }
        let (_, grads) = pair_loss_and_grads(&p, &net, kind, &pair)?;
        let names: Vec<String> = p.names().map(String::from).collect();
        for name in &names {
            let n = p.get(name)?.numel();
            for i in 0..n {
                let fd = five_point(1e-5, |d| {
                    let mut q = p.clone();
                    q.get_mut(name).expect("param").data_mut()[i] += d;
                    pair_loss(&q, &net, kind, &pair).expect("loss")
                });
                let a = grads.get(name)?.data()[i];
                worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    verdict(
        worst < 1e-4,
        format!("{checked} parameters, max relative error {worst:.2e}"),
    )
}

fn c2_bicubic_anchor(desk: &Desk) -> Result<Verdict> {
    let mut identical = true;
    for kind in [NetKind::Simple, NetKind::Altitude] {
        let p = init_params(&desk.cfg.net(), kind, 3)?;
        for pair in desk.test.iter().take(20) {
            let out = forward(&pair.lr, Some(pair.altitude_m), kind, &p, &desk.cfg.net())?;
            identical &= out.data() == upsample(&pair.lr, desk.cfg.scale)?.data();
        }
        for row in desk.evaluate(&p, kind)? {
            identical &= row.model == row.bicubic;
        }
    }
    verdict(
        identical,
        "zero-final-layer output and evaluation rows vs bicubic",
    )
}

fn random_homography(r: &mut impl Rng) -> Homography {
    loop {
        let rows = [
            [
                1.0 + r.random_range(-0.15..0.15),
                r.random_range(-0.15..0.15),
                r.random_range(-20.0..20.0),
            ],
            [
                r.random_range(-0.15..0.15),
                1.0 + r.random_range(-0.15..0.15),
                r.random_range(-20.0..20.0),
            ],
            [
                r.random_range(-2e-4..2e-4),
                r.random_range(-2e-4..2e-4),
                1.0,
            ],
        ];
        if let Ok(h) = Homography::from_rows(rows) {
            return h;
        }
    }
}

fn c3_ransac() -> Result<Verdict> {
    let noise = Normal::new(0.0, 0.3).expect("normal");
    let mut good = 0;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut r = rng(1000 + trial);
        let truth = random_homography(&mut r);
        let mut matches = Vec::new();
        let mut inliers = Vec::new();
        for i in 0..120 {
            let p = (r.random_range(0.0..400.0), r.random_range(0.0..300.0));
            if i % 10 < 3 {
                matches.push(Correspondence::new(
                    p,
                    (r.random_range(0.0..400.0), r.random_range(0.0..300.0)),
                ));
            } else {
                let q = truth.apply(p.0, p.1);
                matches.push(Correspondence::new(
                    p,
                    (q.0 + noise.sample(&mut r), q.1 + noise.sample(&mut r)),
                ));
                inliers.push(p);
            }
        }
        let fit = ransac_homography(&matches, 2000, 3.0, trial)?;
        let err = inliers
            .iter()
            .map(|&(x, y)| {
                let (a, b) = (fit.homography.apply(x, y), truth.apply(x, y));
                (a.0 - b.0).hypot(a.1 - b.1)
            })
            .sum::<f64>()
            / inliers.len() as f64;
        worst = worst.max(err);
        good += (err < 0.5) as usize;
    }
    verdict(
        good >= 49,
        format!("{good}/50 trials under 0.5 px (worst {worst:.3} px)"),
    )
}

fn c4_registration() -> Result<Verdict> {
    let dir = tempfile::tempdir().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let identity = [
        "blur=false",
        "noise=false",
        "color_gain_spread=0.0",
        "color_offset_spread=0.0",
        "corner_jitter_px=0.0",
        "frame_shift_px=0.0",
        "frames=1",
    ]
    .map(String::from);
    let cfg = desk_config(dir.path(), &identity)?;
    harness::cmd_generate(&cfg)?;
    let summary = harness::cmd_preprocess(&cfg)?;
    let mut all: Vec<AlignedPair> = Vec::new();
    for split in Split::ALL {
        all.extend(harness::load_pairs(&cfg.pairs_root, split)?);
    }
    let min_ncc = all.iter().map(|p| p.ncc).fold(f64::INFINITY, f64::min);
    let retained = all.len() == summary.patches() && min_ncc > 0.999;

    // non-rigid shear of 10 px on the first patch of each test sample
    let align = cfg.align();
    let rect = PixelRect {
        x: 0,
        y: 0,
        width: align.patch,
        height: align.patch,
    };
    let (mut dropped, mut samples) = (0, 0);
    for dir in altisr_core::skysim::scan_dataset(&cfg.data_root, Split::Test)? {
        let rec = altisr_core::skysim::load_sample(&dir)?;
        let fov = match_fov(&rec.frames[0], &rec.hr, rec.meta.scale, &align)?;
        let bad = inject_misalignment(&fov.fov, rect, 10.0)?;
        let out = local_align_and_filter(
            &bad,
            &rec.hr,
            rec.meta.scale,
            &align,
            &rec.meta.scene,
            rec.meta.altitude_m,
        )?;
        let kept = out.pairs.iter().any(|p| p.patch_index == 0);
        let score_ok = out
            .scores
            .iter()
            .find(|(i, _)| *i == 0)
            .is_none_or(|&(_, s)| s < 0.9);
        dropped += (!kept && score_ok) as usize;
        samples += 1;
    }
    verdict(
        retained && dropped == samples,
        format!(
            "kept {}/{} identity patches, min NCC {min_ncc:.5}; misaligned patches dropped {dropped}/{samples}",
            all.len(),
            summary.patches()
        ),
    )
}

fn c5_color() -> Result<Verdict> {
    let cam = CameraModel::desk();
    let cfg = DegradeConfig {
        blur: false,
        corner_jitter_px: 0.0,
        frame_shift_px: 0.0,
        ..DegradeConfig::default()
    };
    let n = 24;
    let mut before = 0.0;
    let mut after = [0.0; 4];
    for s in 0..n {
        let alt = PAPER_ALTITUDES[s as usize % PAPER_ALTITUDES.len()];
        let hr = render_scene(&SceneSpec::from_seed(5000 + s), alt, &cam, 128, 128)?;
        let reference = resize(&hr, 64, 64, Interpolation::Bicubic)?;
        let (shifted, _) = degrade(&hr, alt, &cam, Scale::X2, &cfg, 6000 + s)?;
        before += MetricReport::compute(&shifted, &reference)?.psnr;
        for (k, mode) in ColorMode::ALL.iter().enumerate() {
            after[k] +=
                MetricReport::compute(&correct(&shifted, &reference, *mode)?, &reference)?.psnr;
        }
    }
    let before = before / n as f64;
    let m = after.map(|v| v / n as f64);
    let (hm, ct, hm_ct, ct_hm) = (m[0], m[1], m[2], m[3]);
    let best_single = hm.max(ct);
    let pass = ct_hm - before >= 2.0 && hm_ct >= best_single - 0.1 && ct_hm >= best_single - 0.1;
    verdict(
        pass,
        format!("uncorrected {before:.2} dB; HM {hm:.2}, CT {ct:.2}, HM_CT {hm_ct:.2}, CT_HM {ct_hm:.2}"),
    )
}

/// Spearman rank correlation (no ties expected).
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn c6_psd() -> Result<Verdict> {
    let cam = CameraModel::desk();
    let scenes: Vec<u64> = (0..40).collect();
    let ratios: Vec<f64> = PAPER_ALTITUDES
        .iter()
        .map(|&alt| -> Result<f64> {
            let per = par::map(&scenes, |_, &s| -> Result<f64> {
                let hr = render_scene(&SceneSpec::from_seed(777_000 + s), alt, &cam, 128, 128)?;
                Ok(psd_profile(&hr, 0.5)?.hf_ratio)
            });
            Ok(per
                .into_iter()
                .collect::<Result<Vec<_>>>()?
                .iter()
                .sum::<f64>()
                / scenes.len() as f64)
        })
        .collect::<Result<_>>()?;
    let rho = spearman(&PAPER_ALTITUDES, &ratios);
    let strictly = ratios.windows(2).all(|w| w[1] < w[0]);
    verdict(
        strictly && rho == -1.0,
        format!(
            "40 scenes, rho {rho}, HF ratio {:.4} at 10 m .. {:.4} at 140 m",
            ratios[0], ratios[9]
        ),
    )
}

fn c7_training(desk: &Desk) -> Result<Verdict> {
    harness::cmd_train(&desk.cfg, TrainMode::Pretrain, None)?;
    harness::cmd_train(&desk.cfg, TrainMode::FinetuneAll, None)?;
    let rows = desk.evaluate(&desk.checkpoint("finetune_all")?, NetKind::Simple)?;
    let (model, bicubic) = (mean_psnr(&rows, true), mean_psnr(&rows, false));
    verdict(
        model >= bicubic + 0.1,
        format!(
            "{} epochs: fine-tune-all {model:.3} dB vs bicubic {bicubic:.3} dB ({:+.3})",
            desk.cfg.finetune_all_epochs,
            model - bicubic
        ),
    )
}

fn c8_altitude(desk: &Desk) -> Result<Verdict> {
    harness::cmd_train_aal(&desk.cfg)?;
    let aal = desk.evaluate(&desk.checkpoint("with_altitude")?, NetKind::Altitude)?;
    let plain = desk.evaluate(&desk.checkpoint("finetune_all")?, NetKind::Simple)?;
    let wins = aal
        .iter()
        .zip(&plain)
        .filter(|(a, p)| a.model.psnr > p.model.psnr)
        .count();
    let (a, p) = (mean_psnr(&aal, true), mean_psnr(&plain, true));
    verdict(
        a >= p && wins >= 7 && aal.len() == 10,
        format!(
            "with-altitude {a:.3} dB vs all-altitudes {p:.3} dB, wins {wins}/{}; {}",
            aal.len(),
            per_altitude(&aal)
        ),
    )
}

fn c9_meta(desk: &Desk) -> Result<Verdict> {
    let cfg = &desk.cfg;
    let summary = harness::cmd_meta_train(cfg, &[140.0])?;
    let meta = desk.checkpoint("meta")?;
    let pretrained = desk.checkpoint("pretrain")?;
    let task = AltitudeTask {
        altitude_m: 140.0,
        samples: desk
            .test
            .iter()
            .filter(|p| p.altitude_m == 140.0)
            .map(SrPair::from)
            .collect::<Vec<_>>(),
    };
    let mc = MetaConfig {
        inner_steps: 5,
        ..cfg.meta()
    };
    let support = support_index(task.samples.len(), mc.seed, 140.0);
    let learner = SrLearner {
        net: cfg.net(),
        kind: NetKind::Simple,
    };
    let adapted = adapt_one_shot(&learner, &meta, &task.samples[support], &mc)?;
    let rest: Vec<SrPair> = task
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != support)
        .map(|(_, p)| p.clone())
        .collect();
    let score = |p: &ParamSet| -> Result<f64> {
        let rows = srnet::evaluate(&rest, p, NetKind::Simple, &cfg.net())?;
        Ok(mean_psnr(&rows, true))
    };
    let (a, base) = (score(&adapted)?, score(&pretrained)?);

    let rows = harness::cmd_adapt(cfg, 140.0, Some(0))?;
    let (ad, un): (Vec<_>, Vec<_>) = rows
        .iter()
        .partition(|r| r.method == harness::METHOD_META_ADAPTED);
    let zero_identical = !ad.is_empty()
        && ad.len() == un.len()
        && ad
            .iter()
            .zip(&un)
            .all(|(x, y)| (x.psnr_db, x.ssim, x.gmsd) == (y.psnr_db, y.ssim, y.gmsd));
    verdict(
        a >= base + 0.05 && zero_identical,
        format!(
            "meta-trained on {:?} m, val 120 m; 140 m adapted {a:.3} dB vs pretrained {base:.3} dB ({:+.3}); zero-step rows identical: {zero_identical}",
            summary.train_altitudes,
            a - base
        ),
    )
}

/// `L(θ) = (θ - a)²`.
struct Quadratic;

impl Learner for Quadratic {
    type Sample = f64;

    fn loss_and_grads(&self, params: &ParamSet, a: &f64) -> Result<(f64, ParamSet)> {
        let t = params.get("theta")?.data()[0];
        let mut g = ParamSet::new();
        g.insert("theta", Tensor::scalar(2.0 * (t - a)))?;
        Ok(((t - a).powi(2), g))
    }
}

fn c10_fomaml() -> Result<Verdict> {
    let theta = |v: f64| -> Result<ParamSet> {
        let mut p = ParamSet::new();
        p.insert("theta", Tensor::scalar(v))?;
        Ok(p)
    };
    let value = |p: &ParamSet| p.get("theta").map(|t| t.data()[0]);
    let (alpha, beta, t0, a1, a2) = (0.05, 0.1, 0.3, 1.7, -0.9);
    let tasks = AltitudeTaskSet::new(
        vec![
            AltitudeTask {
                altitude_m: 10.0,
                samples: vec![a1; 4],
            },
            AltitudeTask {
                altitude_m: 20.0,
                samples: vec![a2; 4],
            },
        ],
        None,
        vec![],
    )?;
    let cfg = MetaConfig {
        alpha,
        beta,
        inner_steps: 5,
        shots: 1,
        outer_iterations: 1,
        ..MetaConfig::paper()
    };
    let out = meta_train(&Quadratic, &theta(t0)?, &tasks, &cfg)?;
    // θ_h = a + (1-2α)^5 (θ - a); first-order outer gradient 2(θ_h - a) per task
    let k = (1.0 - 2.0 * alpha).powi(5);
    let expected = t0 - beta * (2.0 * k * (t0 - a1) + 2.0 * k * (t0 - a2));
    let outer_err = (value(&out.params)? - expected).abs();

    let adapted = adapt_one_shot(&Quadratic, &theta(t0)?, &a1, &cfg)?;
    let mut t = t0;
    for _ in 0..5 {
        t -= alpha * 2.0 * (t - a1);
    }
    let adapt_err = (value(&adapted)? - t).abs();
    verdict(
        outer_err <= 1e-10 && adapt_err <= 1e-12,
        format!("outer update error {outer_err:.1e}, unrolled adaptation error {adapt_err:.1e}"),
    )
}

fn y_image(h: usize, w: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(h, w, ColorSpace::Y, |_, _, _| r.random::<f64>())
}

fn psnr_oracle(a: &Image, b: &Image) -> f64 {
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    10.0 * (1.0 / mse).log10()
}

fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let g = |d: f64| (-d * d / (2.0 * 1.5 * 1.5)).exp();
    let total: f64 = (0..11)
        .flat_map(|i| (0..11).map(move |j| g(i as f64 - 5.0) * g(j as f64 - 5.0)))
        .sum();
    let wt = |i: usize, j: usize| g(i as f64 - 5.0) * g(j as f64 - 5.0) / total;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = Vec::new();
    for y0 in 0..=a.height() - 11 {
        for x0 in 0..=a.width() - 11 {
            let px = |img: &Image, i: usize, j: usize| img.get(0, y0 + i, x0 + j);
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    mx += wt(i, j) * px(a, i, j);
                    my += wt(i, j) * px(b, i, j);
                }
            }
            let (mut vx, mut vy, mut cv) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let (dx, dy) = (px(a, i, j) - mx, px(b, i, j) - my);
                    vx += wt(i, j) * dx * dx;
                    vy += wt(i, j) * dy * dy;
                    cv += wt(i, j) * dx * dy;
                }
            }
            acc.push(
                (2.0 * mx * my + c1) * (2.0 * cv + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2)),
            );
        }
    }
    acc.iter().sum::<f64>() / acc.len() as f64
}

fn gmsd_oracle(a: &Image, b: &Image) -> f64 {
    // Prewitt magnitude on the interior
    let mag = |img: &Image, y: usize, x: usize| {
        let p = |dy: isize, dx: isize| {
            img.get(0, (y as isize + dy) as usize, (x as isize + dx) as usize)
        };
        let gx = (p(-1, -1) + p(0, -1) + p(1, -1) - p(-1, 1) - p(0, 1) - p(1, 1)) / 3.0;
        let gy = (p(-1, -1) + p(-1, 0) + p(-1, 1) - p(1, -1) - p(1, 0) - p(1, 1)) / 3.0;
        gx.hypot(gy)
    };
    let mut q = Vec::new();
    for y in 1..a.height() - 1 {
        for x in 1..a.width() - 1 {
            let (m1, m2) = (mag(a, y, x), mag(b, y, x));
            q.push((2.0 * m1 * m2 + 0.0026) / (m1 * m1 + m2 * m2 + 0.0026));
        }
    }
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    (q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / q.len() as f64).sqrt()
}

fn ncc_oracle(a: &Image, b: &Image) -> f64 {
    let n = a.data().len() as f64;
    let (ma, mb) = (
        a.data().iter().sum::<f64>() / n,
        b.data().iter().sum::<f64>() / n,
    );
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

fn c11_metrics() -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut anchors = true;
    for (k, (h, w)) in [(8, 8), (11, 13), (12, 16), (16, 16)]
        .into_iter()
        .enumerate()
    {
        let a = y_image(h, w, 70 + k as u64);
        let b = y_image(h, w, 80 + k as u64).map(|i, v| 0.6 * v + 0.4 * a.data()[i]);
        worst = worst.max((psnr(&a, &b)? - psnr_oracle(&a, &b)).abs());
        worst = worst.max((gmsd(&a, &b)? - gmsd_oracle(&a, &b)).abs());
        worst = worst.max((ncc(&a, &b)? - ncc_oracle(&a, &b)).abs());
        if h >= 11 && w >= 11 {
            worst = worst.max((ssim(&a, &b)? - ssim_oracle(&a, &b)).abs());
            anchors &= ssim(&a, &a)? == 1.0;
        }
        anchors &= psnr(&a, &a)? == f64::INFINITY && gmsd(&a, &a)? == 0.0 && ncc(&a, &a)? == 1.0;
    }
    verdict(
        worst <= 1e-9 && anchors,
        format!("max oracle deviation {worst:.1e}; identity anchors exact: {anchors}"),
    )
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((
                    p.strip_prefix(root).expect("prefix").to_path_buf(),
                    std::fs::read(&p).unwrap_or_default(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn c12_determinism() -> Result<Verdict> {
    par::set_threads(1);
    let tiny = [
        "n_scenes=3",
        "split_train=1",
        "split_val=1",
        "split_test=1",
        "altitudes=[20, 80]",
        "lr_width=64",
        "lr_height=64",
        "fov_width=48",
        "fov_height=48",
        "patch=16",
        "frames=3",
        "pretrain_images=4",
        "pretrain_hr_size=32",
        "pretrain_epochs=2",
        "finetune_all_epochs=2",
        "crop=16",
        "batch_size=4",
    ]
    .map(String::from);
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let cfg = desk_config(dir.path(), &tiny)?;
        harness::cmd_generate(&cfg)?;
        harness::cmd_preprocess(&cfg)?;
        harness::cmd_eval_baseline(&cfg)?;
        harness::cmd_train(&cfg, TrainMode::Pretrain, None)?;
        harness::cmd_train(&cfg, TrainMode::FinetuneAll, None)?;
        harness::cmd_report(&cfg)?;
        runs.push(tree(&cfg.report_dir));
    }
    let files = runs[0].len();
    verdict(
        files >= 4 && runs[0] == runs[1],
        format!("{files} report CSVs compared byte-for-byte"),
    )
}

// ---------------------------------------------------------------- driver

type Check<'a> = Box<dyn FnOnce() -> Result<Verdict> + 'a>;

fn main() {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let needs_desk = [2, 7, 8, 9].iter().any(|&n| wanted(n));
    let started = Instant::now();
    let desk = if needs_desk {
        Some(Desk::build())
    } else {
        None
    };
    if needs_desk {
        println!("desk fixture ready in {:.1?}", started.elapsed());
    }
    let with_desk = |f: fn(&Desk) -> Result<Verdict>| -> Check<'_> {
        let desk = desk.as_ref();
        Box::new(move || match desk {
            Some(Ok(d)) => f(d),
            Some(Err(e)) => Err(Error::InvalidArgument(format!("desk fixture failed: {e}"))),
            None => unreachable!(),
        })
    };
    let criteria: Vec<(usize, &str, Duration, Check)> = vec![
        (
            1,
            "gradient correctness",
            Duration::from_secs(120),
            Box::new(c1_gradients),
        ),
        (
            2,
            "bicubic identity anchor",
            Duration::from_secs(60),
            with_desk(c2_bicubic_anchor),
        ),
        (
            3,
            "homography/RANSAC recovery",
            Duration::from_secs(60),
            Box::new(c3_ransac),
        ),
        (
            4,
            "registration soundness",
            Duration::from_secs(120),
            Box::new(c4_registration),
        ),
        (
            5,
            "color-correction direction",
            Duration::from_secs(120),
            Box::new(c5_color),
        ),
        (
            6,
            "PSD altitude trend",
            Duration::from_secs(120),
            Box::new(c6_psd),
        ),
        (
            7,
            "training beats bicubic",
            Duration::from_secs(900),
            with_desk(c7_training),
        ),
        (
            8,
            "altitude conditioning helps",
            Duration::from_secs(1800),
            with_desk(c8_altitude),
        ),
        (
            9,
            "one-shot adaptation helps",
            Duration::from_secs(1800),
            with_desk(c9_meta),
        ),
        (
            10,
            "FOMAML algebra",
            Duration::from_secs(1),
            Box::new(c10_fomaml),
        ),
        (
            11,
            "metric oracles",
            Duration::from_secs(60),
            Box::new(c11_metrics),
        ),
        (
            12,
            "determinism",
            Duration::from_secs(600),
            Box::new(c12_determinism),
        ),
    ];
    let mut failed = Vec::new();
    for (n, name, budget, check) in criteria {
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let (pass, detail) = match result {
            Ok(v) => (v.pass && took <= budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let slow = if took > budget {
            format!(", over the {budget:?} budget")
        } else {
            String::new()
        };
        println!(
            "criterion {n:>2} {}: {name}: {detail} [{took:.1?}{slow}]",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
