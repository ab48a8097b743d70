use super::*;
use crate::colorfix::{correct, ColorMode};
use crate::imageops::{resize, to_y, ColorSpace, Image, Interpolation, Scale};
use crate::quality::{burst_compare, psnr};

fn scene(seed: u64, altitude: f64, n: usize) -> Image {
    render_scene(
        &SceneSpec::from_seed(seed),
        altitude,
        &CameraModel::desk(),
        n,
        n,
    )
    .unwrap()
}

#[test]
fn render_is_deterministic_per_seed() {
    assert_eq!(scene(3, 40.0, 48), scene(3, 40.0, 48));
    assert_ne!(scene(3, 40.0, 48), scene(4, 40.0, 48));
    assert_ne!(scene(3, 40.0, 48), scene(3, 50.0, 48));
}

#[test]
fn footprint_scales_with_altitude() {
    let cam = CameraModel::desk();
    let side = |a: f64| cam.gsd_m(a) * 96.0;
    assert!((side(140.0) / side(10.0) - 14.0).abs() < 1e-12);
    assert!((cam.f_number() - cam.focal_mm / cam.aperture_mm).abs() < 1e-9);
}

#[test]
fn blur_sigma_is_capped_and_decreasing() {
    let cam = CameraModel::desk();
    let s: Vec<f64> = PAPER_ALTITUDES.iter().map(|&a| cam.blur_sigma(a)).collect();
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert!(s
        .iter()
        .all(|&v| (BLUR_SIGMA_MIN..=BLUR_SIGMA_MAX).contains(&v)));
}

#[test]
fn altitude_profile_is_sorted_and_positive() {
    let p = AltitudeProfile::new(vec![50.0, 10.0, 50.0, 20.0]).unwrap();
    assert_eq!(p.altitudes(), &[10.0, 20.0, 50.0]);
    assert!(AltitudeProfile::new(vec![10.0, -1.0]).is_err());
    assert!(AltitudeProfile::new(vec![]).is_err());
    assert_eq!(AltitudeProfile::default().altitudes(), &PAPER_ALTITUDES);
    assert_eq!(altitude_dir(10.0), "alt_010");
    assert_eq!(altitude_dir(140.0), "alt_140");
}

#[test]
fn identity_degradation_is_bicubic() {
    let hr = scene(11, 30.0, 64);
    let (lr, params) = degrade(
        &hr,
        30.0,
        &CameraModel::desk(),
        Scale::X2,
        &DegradeConfig::identity(),
        5,
    )
    .unwrap();
    assert_eq!(lr, resize(&hr, 32, 32, Interpolation::Bicubic).unwrap());
    assert_eq!(params.blur_sigma, 0.0);
    assert_eq!(params.color_gain, [1.0; 3]);
}

#[test]
fn noise_level_matches_camera() {
    let hr = Image::filled(128, 128, ColorSpace::Rgb, 0.5);
    let cam = CameraModel {
        noise_std: 0.02,
        ..CameraModel::desk()
    };
    let cfg = DegradeConfig {
        noise: true,
        ..DegradeConfig::identity()
    };
    let (lr, _) = degrade(&hr, 50.0, &cam, Scale::X2, &cfg, 9).unwrap();
    let r: Vec<f64> = lr.data().iter().map(|v| v - 0.5).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let std = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    assert!((0.018..=0.022).contains(&std), "std {std}");
}

#[test]
fn single_frame_burst_matches_degrade() {
    let hr = scene(2, 70.0, 64);
    let cam = CameraModel::desk();
    let cfg = DegradeConfig::default();
    let burst = make_burst(&hr, 70.0, &cam, Scale::X2, &cfg, 1, 17).unwrap();
    let (lr, params) = degrade(&hr, 70.0, &cam, Scale::X2, &cfg, 17).unwrap();
    assert_eq!(burst.frames, vec![lr]);
    assert_eq!(burst.params, params);
    assert!(make_burst(&hr, 70.0, &cam, Scale::X2, &cfg, 0, 17).is_err());
}

#[test]
fn burst_frames_share_params_but_differ() {
    let hr = scene(2, 20.0, 64);
    let burst = make_burst(
        &hr,
        20.0,
        &CameraModel::desk(),
        Scale::X2,
        &DegradeConfig::default(),
        7,
        4,
    )
    .unwrap();
    assert_eq!(burst.frames.len(), 7);
    assert_eq!(burst.frame_shifts.len(), 7);
    assert!(burst.frame_shifts.iter().flatten().all(|v| v.abs() <= 0.5));
    let m = burst_compare(&burst.frames).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            if i != j {
                assert!(m.psnr[i][j].is_finite());
            }
        }
    }
}

#[test]
fn color_shift_is_corrected() {
    let hr = scene(8, 30.0, 96);
    let cfg = DegradeConfig {
        color_gain_spread: 0.1,
        color_offset_spread: 0.05,
        ..DegradeConfig::identity()
    };
    let clean = resize(&hr, 48, 48, Interpolation::Bicubic).unwrap();
    let mut wins = 0;
    for seed in 0..6 {
        let (lr, _) = degrade(&hr, 30.0, &CameraModel::desk(), Scale::X2, &cfg, seed).unwrap();
        let fixed = correct(&lr, &clean, ColorMode::CtHm).unwrap();
        let before = psnr(&to_y(&lr).unwrap(), &to_y(&clean).unwrap()).unwrap();
        let after = psnr(&to_y(&fixed).unwrap(), &to_y(&clean).unwrap()).unwrap();
        wins += usize::from(after > before);
    }
    assert_eq!(wins, 6);
}

fn tiny_config(seed: u64) -> DatasetConfig {
    DatasetConfig {
        n_scenes: 3,
        split: SplitCounts {
            train: 1,
            val: 1,
            test: 1,
        },
        altitudes: AltitudeProfile::new(vec![10.0, 80.0]).unwrap(),
        lr_width: 32,
        lr_height: 32,
        fov_width: 24,
        fov_height: 24,
        frames: 3,
        pretrain_images: 2,
        pretrain_hr_size: 32,
        ..DatasetConfig::desk(seed)
    }
}

fn tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn dataset_layout_and_regeneration() {
    let cfg = tiny_config(42);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = generate_dataset(a.path(), &cfg).unwrap();
    generate_dataset(b.path(), &cfg).unwrap();
    let ta = tree(a.path());
    assert_eq!(ta, tree(b.path()));

    let count = |suffix: &str| {
        ta.iter()
            .filter(|(p, _)| p.ends_with(suffix) && !p.starts_with("pretrain"))
            .count()
    };
    assert_eq!(count("hr.png"), 3 * 2);
    assert_eq!(
        ta.iter().filter(|(p, _)| p.contains("/lr_")).count(),
        3 * 2 * 3
    );
    assert_eq!(count("meta.json"), 6);
    assert_eq!(manifest.files.len(), 6 * 5 + 2 * 2);
    assert!(!ta.iter().any(|(p, _)| p.ends_with(".tmp")));

    let dirs = scan_dataset(a.path(), Split::Val).unwrap();
    assert_eq!(dirs.len(), 2);
    let rec = load_sample(&dirs[1]).unwrap();
    assert_eq!(rec.meta.altitude_m, 80.0);
    assert_eq!(rec.meta.split, Split::Val);
    assert_eq!(rec.frames.len(), 3);
    assert_eq!((rec.hr.height(), rec.hr.width()), (48, 48));

    let meta = std::fs::read_to_string(dirs[0].join("meta.json")).unwrap();
    let keys = [
        "altitude_m",
        "seed",
        "blur_sigma",
        "noise_std",
        "color_gain",
        "color_offset",
        "jitter_px",
    ];
    let pos: Vec<usize> = keys
        .iter()
        .map(|k| meta.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));

    assert_eq!(load_pretrain(a.path()).unwrap().len(), 2);
}

#[test]
fn invalid_split_is_rejected() {
    let cfg = DatasetConfig {
        split: SplitCounts {
            train: 1,
            val: 1,
            test: 2,
        },
        ..tiny_config(1)
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset(dir.path(), &cfg).is_err());
    assert!(matches!(
        load_pretrain(dir.path()),
        Err(crate::error::Error::MissingPrerequisite(_))
    ));
}

#[test]
fn profiles_have_expected_shape() {
    let p = DatasetConfig::paper(0);
    assert_eq!(
        (p.n_scenes, p.split.train, p.split.val, p.split.test),
        (200, 160, 20, 20)
    );
    assert_eq!(p.altitudes.altitudes().len(), 10);
    assert_eq!(p.frames, 7);
    let d = DatasetConfig::desk(0);
    assert_eq!(
        (d.n_scenes, d.split.train, d.split.val, d.split.test),
        (16, 12, 2, 2)
    );
    assert_eq!(d.split.split_of(12), Split::Val);
    assert_eq!(d.split.split_of(15), Split::Test);
}
