use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{altitudes_for, batch_loss_and_grads, NetKind, Prepared, SrNetConfig, SrPair};
use crate::error::{Error, Result};
use crate::imageops::{Augment, Image, Scale};
use crate::numcore::{AdamState, ParamSet, Tensor};
use crate::rng::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pretrain,
    FinetuneAll,
    FinetuneAlt,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Pretrain => "pretrain",
            TrainMode::FinetuneAll => "finetune_all",
            TrainMode::FinetuneAlt => "finetune_alt",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pretrain" => Ok(TrainMode::Pretrain),
            "finetune_all" => Ok(TrainMode::FinetuneAll),
            "finetune_alt" => Ok(TrainMode::FinetuneAlt),
            _ => Err(Error::InvalidArgument(format!(
                "unknown training mode `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub epochs: usize,
    /// The learning rate halves every this many epochs.
    pub halve_every: usize,
    pub batch_size: usize,
    /// HR crop side, pixels.
    pub crop: usize,
    pub augment: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn paper(mode: TrainMode) -> Self {
        let (lr, epochs, halve_every) = match mode {
            TrainMode::Pretrain => (1e-4, 1000, 200),
            TrainMode::FinetuneAll => (1e-5, 100, 20),
            TrainMode::FinetuneAlt => (1e-5, 500, 100),
        };
        TrainConfig {
            mode,
            lr,
            epochs,
            halve_every,
            batch_size: 16,
            crop: 300,
            augment: true,
            seed: 0,
        }
    }

    pub fn desk(mode: TrainMode) -> Self {
        let (lr, epochs, halve_every) = match mode {
            TrainMode::Pretrain => (1e-3, 30, 10),
            TrainMode::FinetuneAll => (2e-4, 50, 20),
            TrainMode::FinetuneAlt => (2e-4, 50, 25),
        };
        TrainConfig {
            mode,
            lr,
            epochs,
            halve_every,
            batch_size: 8,
            crop: 32,
            augment: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite())
            || self.halve_every == 0
            || self.batch_size == 0
            || self.crop == 0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid training config {self:?}"
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * 0.5f64.powi((epoch / self.halve_every) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_l1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub history: Vec<EpochLog>,
}

/// LR-grid-aligned crop size: the largest HR side `<= crop` that is an exact
/// multiple of the scale and fits every pair.
fn crop_side(prepared: &[Prepared], crop: usize, scale: Scale) -> Result<usize> {
    let fit = prepared
        .iter()
        .map(|p| p.hr.height().min(p.hr.width()))
        .min()
        .unwrap_or(0)
        .min(crop);
    let (num, den) = (scale.num() as usize, scale.den() as usize);
    let lr_side = fit * den / num / den * den;
    if lr_side == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} is smaller than one LR block at scale {scale}"
        )));
    }
    Ok(scale.up(lr_side))
}

fn crop_planar(img: &Image, x: usize, y: usize, side: usize, aug: Augment) -> Vec<f64> {
    let w = img.width();
    let mut out = Vec::with_capacity(3 * side * side);
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for row in y..y + side {
            out.extend_from_slice(&plane[row * w + x..row * w + x + side]);
        }
    }
    aug.apply_planar(&out, img.channels(), side, side)
}

/// Adam on mean L1 over seeded shuffles, LR-aligned random crops and
/// random dihedral augmentation. The learning rate halves every
/// `halve_every` epochs.
pub fn train(
    pairs: &[SrPair],
    params: &ParamSet,
    kind: NetKind,
    net: &SrNetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    net.validate()?;
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prepared = pairs
        .iter()
        .map(|p| Prepared::new(p, net.scale))
        .collect::<Result<Vec<_>>>()?;
    altitudes_for(kind, &prepared.iter().collect::<Vec<_>>())?;
    let side = crop_side(&prepared, cfg.crop, net.scale)?;
    let den = net.scale.den() as usize;
    let augments: Vec<Augment> = Augment::all().collect();

    let mut params = params.clone();
    let mut adam = AdamState::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng_for(cfg.seed, &[stream::SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut up = Vec::with_capacity(batch.len() * 3 * side * side);
            let mut hr = Vec::with_capacity(up.capacity());
            for (k, &i) in batch.iter().enumerate() {
                let p = &prepared[i];
                let mut rng = rng_for(
                    cfg.seed,
                    &[
                        stream::CROP,
                        epoch as u64,
                        (step * cfg.batch_size + k) as u64,
                    ],
                );
                let lr_pos = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                    let slots = (net.scale.down(len).saturating_sub(net.scale.down(side))) / den;
                    net.scale.up(rng.random_range(0..=slots) * den)
                };
                let x = lr_pos(p.hr.width(), &mut rng).min(p.hr.width() - side);
                let y = lr_pos(p.hr.height(), &mut rng).min(p.hr.height() - side);
                let aug = if cfg.augment {
                    augments[rng.random_range(0..augments.len())]
                } else {
                    Augment::IDENTITY
                };
                up.extend(crop_planar(&p.upsampled, x, y, side, aug));
                hr.extend(crop_planar(&p.hr, x, y, side, aug));
            }
            let items: Vec<&Prepared> = batch.iter().map(|&i| &prepared[i]).collect();
            let alts = altitudes_for(kind, &items)?;
            let shape = vec![batch.len(), 3, side, side];
            let nan = |e: Error| match e {
                Error::NonFinite { .. } => Error::NanLoss { epoch, step },
                other => other,
            };
            let (loss, grads) = batch_loss_and_grads(
                &params,
                net,
                kind,
                Tensor::new(shape.clone(), up)?,
                Tensor::new(shape, hr)?,
                &alts,
            )
            .map_err(nan)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, step });
            }
            params.zero_grads();
            for (name, g) in grads.iter() {
                params.get_mut(name)?.accumulate_grad(g.data())?;
            }
            adam.step(&mut params, lr).map_err(nan)?;
            total += loss * batch.len() as f64;
        }
        history.push(EpochLog {
            epoch,
            lr,
            mean_l1: total / prepared.len() as f64,
        });
    }
    params.zero_grads();
    Ok(TrainOutcome { params, history })
}
