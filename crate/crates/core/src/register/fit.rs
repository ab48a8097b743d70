use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;

use super::{Correspondence, Homography};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

pub const RANSAC_ITERATIONS: usize = 2000;
pub const RANSAC_THRESHOLD_PX: f64 = 3.0;

const RANK_TOL: f64 = 1e-9;

/// Similarity taking the points to zero centroid and mean distance √2.
fn normalizer(pts: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return Err(Error::RankDeficient);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)])
}

fn has_collinear_triple(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross.abs() < 1e-9 {
                    return true;
                }
            }
        }
    }
    false
}

/// Hartley-normalized direct linear transform mapping each `a` to its `b`.
pub fn fit_homography_dlt(matches: &[Correspondence]) -> Result<Homography> {
    if matches.len() < 4 {
        return Err(Error::InsufficientCorrespondences {
            found: matches.len(),
            needed: 4,
        });
    }
    let pa: Vec<_> = matches.iter().map(|m| m.a).collect();
    let pb: Vec<_> = matches.iter().map(|m| m.b).collect();
    let (ta, tb) = (normalizer(&pa)?, normalizer(&pb)?);
    let na: Vec<_> = pa.iter().map(|&p| transform(&ta, p)).collect();
    let nb: Vec<_> = pb.iter().map(|&p| transform(&tb, p)).collect();
    if matches.len() == 4 && (has_collinear_triple(&na) || has_collinear_triple(&nb)) {
        return Err(Error::RankDeficient);
    }

    let rows = (2 * matches.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&(x, y), &(u, v))) in na.iter().zip(&nb).enumerate() {
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(Error::RankDeficient)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[second] < RANK_TOL * largest {
        return Err(Error::RankDeficient);
    }
    let h = vt.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tb_inv = tb.try_inverse().ok_or(Error::RankDeficient)?;
    Homography::from_matrix(tb_inv * hn * ta)
}

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

/// Mean of forward (`H a` vs `b`) and backward (`H⁻¹ b` vs `a`) reprojection
/// distances.
pub(crate) fn symmetric_error(h: &Homography, h_inv: &Homography, m: &Correspondence) -> f64 {
    0.5 * (dist(h.apply(m.a.0, m.a.1), m.b) + dist(h_inv.apply(m.b.0, m.b.1), m.a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn consensus(
    h: &Homography,
    matches: &[Correspondence],
    threshold: f64,
) -> Option<(Vec<bool>, f64)> {
    let inv = h.inverse().ok()?;
    let mut total = 0.0;
    let mask = matches
        .iter()
        .map(|m| {
            let e = symmetric_error(h, &inv, m);
            let inlier = e.is_finite() && e < threshold;
            if inlier {
                total += e;
            }
            inlier
        })
        .collect();
    Some((mask, total))
}

/// Random-sample consensus over minimal 4-point DLT fits; the winning
/// consensus set is refit by DLT. Sampling draws from a ChaCha stream seeded
/// by `seed`.
pub fn ransac_homography(
    matches: &[Correspondence],
    iterations: usize,
    threshold_px: f64,
    seed: u64,
) -> Result<RansacResult> {
    if matches.len() < 4 {
        return Err(Error::RansacFailure);
    }
    let mut rng = rng_for(seed, &[stream::RANSAC]);
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    let mut subset = [matches[0]; 4];
    for _ in 0..iterations {
        for (slot, i) in subset.iter_mut().zip(sample(&mut rng, matches.len(), 4)) {
            *slot = matches[i];
        }
        let Ok(h) = fit_homography_dlt(&subset) else {
            continue;
        };
        let Some((mask, err)) = consensus(&h, matches, threshold_px) else {
            continue;
        };
        let count = mask.iter().filter(|&&b| b).count();
        let better = match &best {
            None => true,
            Some((c, e, _)) => count > *c || (count == *c && err < *e),
        };
        if better {
            best = Some((count, err, mask));
        }
    }
    let (count, _, mask) = best.ok_or(Error::RansacFailure)?;
    if count < 4 {
        return Err(Error::RansacFailure);
    }
    let inlier_set: Vec<_> = matches
        .iter()
        .zip(&mask)
        .filter(|(_, &k)| k)
        .map(|(m, _)| *m)
        .collect();
    let homography = fit_homography_dlt(&inlier_set).map_err(|_| Error::RansacFailure)?;
    let (inliers, _) = consensus(&homography, matches, threshold_px).ok_or(Error::RansacFailure)?;
    if inliers.iter().filter(|&&b| b).count() < 4 {
        return Err(Error::RansacFailure);
    }
    Ok(RansacResult {
        homography,
        inliers,
    })
}
