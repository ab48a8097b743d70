use serde::{Deserialize, Serialize};

use super::{forward_raw, NetKind, SrNetConfig, SrPair};
use crate::error::{Error, Result};
use crate::numcore::ParamSet;
use crate::par;
use crate::quality::MetricReport;

/// Metrics of the network output and of the plain bicubic upsample for one
/// pair, both against the HR ground truth on Y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub model: MetricReport,
    pub bicubic: MetricReport,
}

/// Scores every pair; runs in parallel, results in input order.
pub fn score_pairs(
    pairs: &[SrPair],
    params: &ParamSet,
    kind: NetKind,
    cfg: &SrNetConfig,
) -> Result<Vec<PairScore>> {
    par::map(pairs, |_, p| {
        let raw = forward_raw(&p.lr, p.altitude_m, kind, params, cfg)?;
        Ok(PairScore {
            model: MetricReport::compute(&raw.to_image()?, &p.hr)?,
            bicubic: MetricReport::compute(&raw.upsampled, &p.hr)?,
        })
    })
    .into_iter()
    .collect()
}

/// Mean metrics per altitude, ascending.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltitudeScore {
    pub altitude_m: f64,
    pub pairs: usize,
    pub model: MetricReport,
    pub bicubic: MetricReport,
}

pub fn evaluate(
    pairs: &[SrPair],
    params: &ParamSet,
    kind: NetKind,
    cfg: &SrNetConfig,
) -> Result<Vec<AltitudeScore>> {
    let alts: Vec<f64> = pairs
        .iter()
        .map(|p| {
            p.altitude_m
                .ok_or_else(|| Error::InvalidArgument("evaluation pairs need an altitude".into()))
        })
        .collect::<Result<_>>()?;
    let scores = score_pairs(pairs, params, kind, cfg)?;
    let mut keys = alts.clone();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|a| {
            let group: Vec<&PairScore> = alts
                .iter()
                .zip(&scores)
                .filter(|(x, _)| **x == a)
                .map(|(_, s)| s)
                .collect();
            let model: Vec<MetricReport> = group.iter().map(|s| s.model).collect();
            let bicubic: Vec<MetricReport> = group.iter().map(|s| s.bicubic).collect();
            AltitudeScore {
                altitude_m: a,
                pairs: group.len(),
                model: MetricReport::mean(&model).expect("non-empty group"),
                bicubic: MetricReport::mean(&bicubic).expect("non-empty group"),
            }
        })
        .collect())
}
