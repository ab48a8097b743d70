use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng::rng_for;

fn rand_rgb(h: usize, w: usize, seed: u64) -> Image {
    let mut r = rng_for(seed, &[]);
    Image::from_fn(h, w, ColorSpace::Rgb, |_, _, _| r.random::<f64>())
}

#[test]
fn to_y_reference_points() {
    let y = |v: f64| {
        to_y(&Image::filled(1, 1, ColorSpace::Rgb, v))
            .unwrap()
            .data()[0]
    };
    assert!((y(1.0) - 235.0 / 255.0).abs() < 1e-12);
    assert!((y(0.0) - 16.0 / 255.0).abs() < 1e-12);
    // The weights sum to 219, so mid-gray lands on (16 + 109.5) / 255.
    assert!((y(0.5) - (16.0 + 109.5) / 255.0).abs() < 1e-12);
    assert!(to_y(&Image::filled(2, 2, ColorSpace::Y, 0.5)).is_err());
    let full = to_y_with(&Image::filled(1, 1, ColorSpace::Rgb, 1.0), LumaRange::Full).unwrap();
    assert!((full.data()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn new_clamps_values() {
    let img = Image::new(1, 2, ColorSpace::Y, vec![-0.5, 1.5]).unwrap();
    assert_eq!(img.data(), &[0.0, 1.0]);
    assert!(Image::new(1, 2, ColorSpace::Rgb, vec![0.0; 2]).is_err());
}

#[test]
fn resize_identity_and_constant() {
    let img = rand_rgb(7, 5, 1);
    for m in [
        Interpolation::Nearest,
        Interpolation::Bilinear,
        Interpolation::Bicubic,
    ] {
        assert_eq!(resize(&img, 7, 5, m).unwrap(), img);
        let c = Image::filled(9, 6, ColorSpace::Rgb, 0.37);
        for (h, w) in [(3, 2), (20, 13), (9, 4), (1, 1)] {
            let r = resize(&c, h, w, m).unwrap();
            assert!(
                r.data().iter().all(|v| (v - 0.37).abs() < 1e-12),
                "{m:?} {h}x{w}"
            );
        }
    }
    assert!(resize(&img, 0, 3, Interpolation::Bicubic).is_err());
}

#[test]
fn nearest_upscale_replicates_blocks() {
    let img = Image::new(2, 2, ColorSpace::Y, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let up = resize(&img, 4, 4, Interpolation::Nearest).unwrap();
    let expect = [
        0.1, 0.1, 0.2, 0.2, 0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4, 0.3, 0.3, 0.4, 0.4,
    ];
    assert_eq!(up.data(), &expect);
}

/// Independent dense-matrix implementation of MATLAB's bicubic imresize
/// along one axis.
fn dense_bicubic_matrix(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    let k = |x: f64| {
        let a = x.abs();
        if a <= 1.0 {
            1.5 * a.powi(3) - 2.5 * a * a + 1.0
        } else if a <= 2.0 {
            -0.5 * a.powi(3) + 2.5 * a * a - 4.0 * a + 2.0
        } else {
            0.0
        }
    };
    let s = n_out as f64 / n_in as f64;
    let mirror: Vec<usize> = (0..n_in).chain((0..n_in).rev()).collect();
    let mut m = vec![vec![0.0; n_in]; n_out];
    for (i, row) in m.iter_mut().enumerate() {
        // MATLAB 1-based formulation.
        let u = (i + 1) as f64 / s + 0.5 * (1.0 - 1.0 / s);
        let (width, kern): (f64, Box<dyn Fn(f64) -> f64>) = if s < 1.0 {
            (4.0 / s, Box::new(move |x| s * k(s * x)))
        } else {
            (4.0, Box::new(k))
        };
        let left = (u - width / 2.0).floor() as i64;
        let p = width.ceil() as i64 + 2;
        let mut ws = Vec::new();
        for j in 0..p {
            let idx = left + j;
            ws.push((idx, kern(u - idx as f64)));
        }
        let total: f64 = ws.iter().map(|w| w.1).sum();
        for (idx, w) in ws {
            let m_idx = mirror[((idx - 1).rem_euclid(2 * n_in as i64)) as usize];
            row[m_idx] += w / total;
        }
    }
    m
}

#[test]
fn bicubic_downscale_matches_dense_matrix_oracle() {
    let img = Image::from_fn(8, 8, ColorSpace::Y, |_, y, x| {
        (x as f64 + 2.0 * y as f64) / 24.0
    });
    let out = resize(&img, 4, 4, Interpolation::Bicubic).unwrap();
    let r = dense_bicubic_matrix(8, 4);
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for a in 0..8 {
                for b in 0..8 {
                    acc += r[i][a] * img.get(0, a, b) * r[j][b];
                }
            }
            assert!(
                (out.get(0, i, j) - acc.clamp(0.0, 1.0)).abs() < 1e-9,
                "({i},{j})"
            );
        }
    }
}

#[test]
fn bicubic_non_integer_scales_match_oracle() {
    let img = rand_rgb(9, 18, 3);
    for (oh, ow) in [(50, 100), (5, 7), (12, 11)] {
        let out = resize(&img, oh, ow, Interpolation::Bicubic).unwrap();
        let (rh, rw) = (dense_bicubic_matrix(9, oh), dense_bicubic_matrix(18, ow));
        for c in 0..3 {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..9 {
                        for b in 0..18 {
                            acc += rh[i][a] * img.get(c, a, b) * rw[j][b];
                        }
                    }
                    assert!((out.get(c, i, j) - acc.clamp(0.0, 1.0)).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn resize_by_scale() {
    let img = rand_rgb(18, 9, 4);
    let up = resize_by(&img, 50.0 / 9.0, Interpolation::Bicubic).unwrap();
    assert_eq!((up.height(), up.width()), (100, 50));
}

#[test]
fn patch_counts() {
    let img = Image::filled(540, 720, ColorSpace::Y, 0.5);
    let (grid, patches) = extract_patches(&img, 180, 180).unwrap();
    assert_eq!(grid.len(), 12);
    assert_eq!(patches.len(), 12);
    let one = Image::filled(180, 180, ColorSpace::Y, 0.5);
    assert_eq!(
        extract_patches(&one, 180, 180).unwrap().0.origins,
        vec![(0, 0)]
    );
    let small = Image::filled(100, 100, ColorSpace::Y, 0.5);
    assert!(extract_patches(&small, 180, 180).unwrap().0.is_empty());
    assert!(extract_patches(&small, 0, 1).is_err());
}

#[test]
fn augment_group_laws() {
    let img = rand_rgb(4, 4, 5);
    assert_eq!(augment(&img, 0, false).unwrap(), img);
    let r180 = augment(&augment(&img, 180, false).unwrap(), 180, false).unwrap();
    assert_eq!(r180, img);
    let mut r = img.clone();
    for _ in 0..4 {
        r = augment(&r, 90, false).unwrap();
    }
    assert_eq!(r, img);
    assert!(augment(&img, 45, false).is_err());
    // Non-square rotation swaps the shape.
    let rect = rand_rgb(3, 5, 6);
    let rot = augment(&rect, 90, false).unwrap();
    assert_eq!((rot.height(), rot.width()), (5, 3));
    // CCW: the top-right corner moves to the top-left.
    assert_eq!(rot.get(0, 0, 0), rect.get(0, 0, 4));
}

#[test]
fn augment_planar_matches_image_path() {
    let img = rand_rgb(3, 5, 7);
    for a in Augment::all() {
        let out = a.apply(&img);
        assert_eq!(out.data(), a.apply_planar(img.data(), 3, 3, 5).as_slice());
    }
}

#[test]
fn png_roundtrip_is_bit_exact_for_quantized() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng_for(8, &[]);
    let q = Image::from_fn(6, 5, ColorSpace::Rgb, |_, _, _| {
        f64::from(r.random::<u8>()) / 255.0
    });
    let path = dir.path().join("a.png");
    io::save_png(&path, &q).unwrap();
    assert_eq!(io::load_png(&path).unwrap(), q);
    let g = Image::from_fn(3, 4, ColorSpace::Y, |_, y, x| (y * 4 + x) as f64 / 255.0);
    io::save_png(&path, &g).unwrap();
    assert_eq!(io::load_png(&path).unwrap(), g);
    assert_eq!(io::quantize(0.5 / 255.0), 1);
}

proptest! {
    #[test]
    fn to_y_within_studio_range(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let img = Image::new(1, 1, ColorSpace::Rgb, vec![r, g, b]).unwrap();
        let y = to_y(&img).unwrap().data()[0];
        prop_assert!(y >= 16.0 / 255.0 - 1e-12 && y <= 235.0 / 255.0 + 1e-12);
    }

    #[test]
    fn augment_inverse_restores(seed in 0u64..1000, h in 1usize..6, w in 1usize..6) {
        let img = rand_rgb(h, w, seed);
        for a in Augment::all() {
            prop_assert_eq!(&a.inverse().apply(&a.apply(&img)), &img);
        }
    }

    #[test]
    fn disjoint_patches_cover_floor_region(h in 1usize..40, w in 1usize..40, size in 1usize..12) {
        let grid = PatchGrid::new(h, w, size, size).unwrap();
        let mut hits = vec![0u8; h * w];
        for &(x, y) in &grid.origins {
            for yy in y..y + size {
                for xx in x..x + size {
                    hits[yy * w + xx] += 1;
                }
            }
        }
        let (ch, cw) = ((h / size) * size, (w / size) * size);
        for y in 0..h {
            for x in 0..w {
                let expect = u8::from(y < ch && x < cw);
                prop_assert_eq!(hits[y * w + x], expect);
            }
        }
    }
}

#[test]
fn scale_arithmetic() {
    let s = Scale::PAPER;
    assert_eq!(s.up(180), 1000);
    assert_eq!(s.up(720), 4000);
    assert_eq!(s.up(540), 3000);
    assert_eq!(s.down(1000), 180);
    assert_eq!("100/18".parse::<Scale>().unwrap(), s);
    assert_eq!("2".parse::<Scale>().unwrap(), Scale::X2);
    assert_eq!(Scale::X2.to_string(), "2");
    assert_eq!(s.to_string(), "50/9");
    assert!(Scale::new(1, 1).is_err());
    assert!(Scale::new(3, 0).is_err());
    assert!(s.divides(180) && !s.divides(100));
}
