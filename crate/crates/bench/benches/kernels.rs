use altisr_bench::scene;
use altisr_core::imageops::{resize, Interpolation, Scale};
use altisr_core::quality::{psd_profile, MetricReport};
use altisr_core::register::{fit_homography_dlt, ransac_homography, Correspondence, Homography};
use altisr_core::srnet::{
    init_params, pair_loss_and_grads, NetKind, Prepared, SrNetConfig, SrPair,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_resize(c: &mut Criterion) {
    let img = scene(1, 256);
    c.bench_function("bicubic_down_256_to_128", |b| {
        b.iter(|| resize(&img, 128, 128, Interpolation::Bicubic).unwrap())
    });
    let small = resize(&img, 128, 128, Interpolation::Bicubic).unwrap();
    c.bench_function("bicubic_up_128_to_256", |b| {
        b.iter(|| resize(&small, 256, 256, Interpolation::Bicubic).unwrap())
    });
}

fn bench_network(c: &mut Criterion) {
    let net = SrNetConfig::desk();
    let hr = scene(2, 64);
    let lr = resize(&hr, 32, 32, Interpolation::Bicubic).unwrap();
    let pair = Prepared::new(
        &SrPair {
            lr,
            hr,
            altitude_m: Some(40.0),
        },
        Scale::X2,
    )
    .unwrap();
    for kind in [NetKind::Simple, NetKind::Altitude] {
        let params = init_params(&net, kind, 0).unwrap();
        c.bench_function(
            &format!("forward_backward_{kind:?}_64").to_lowercase(),
            |b| b.iter(|| pair_loss_and_grads(&params, &net, kind, &pair).unwrap()),
        );
    }
}

fn bench_ransac(c: &mut Criterion) {
    let h = Homography::from_rows([[1.02, 0.03, 4.0], [-0.02, 0.98, -3.0], [1e-4, -2e-4, 1.0]])
        .unwrap();
    let matches: Vec<Correspondence> = (0..200)
        .map(|i| {
            let (x, y) = ((i * 37 % 200) as f64, (i * 91 % 150) as f64);
            let (u, v) = h.apply(x, y);
            // every third match is an outlier
            let (u, v) = if i % 3 == 0 {
                (u + 40.0 + i as f64 % 17.0, v - 25.0)
            } else {
                (u, v)
            };
            Correspondence::new((x, y), (u, v))
        })
        .collect();
    c.bench_function("ransac_2000_iterations_200_matches", |b| {
        b.iter(|| ransac_homography(&matches, 2000, 3.0, 0).unwrap())
    });
    let inliers: Vec<Correspondence> = matches
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 3 != 0)
        .map(|(_, m)| *m)
        .collect();
    c.bench_function("dlt_133_inliers", |b| {
        b.iter(|| fit_homography_dlt(&inliers).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let a = scene(3, 128);
    let b = scene(4, 128);
    c.bench_function("metric_report_128", |bn| {
        bn.iter(|| MetricReport::compute(&a, &b).unwrap())
    });
    c.bench_function("psd_profile_128", |bn| {
        bn.iter(|| psd_profile(&a, 0.5).unwrap())
    });
}

criterion_group!(
    benches,
    bench_resize,
    bench_network,
    bench_ransac,
    bench_metrics
);
criterion_main!(benches);
