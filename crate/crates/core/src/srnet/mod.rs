//! Residual CNN super-resolver and its altitude-aware variant.
//!
//! The LR input is bicubic-upsampled to the target size and a stack of 3x3
//! conv+ReLU layers predicts the residual. The altitude-aware network inserts
//! an AAL after every hidden layer: an encoded altitude generates a per-sample
//! depthwise kernel (followed by a static 1x1 mix) and channel-attention
//! weights, and the two branches are summed.

mod eval;
mod train;

pub use eval::{evaluate, score_pairs, AltitudeScore, PairScore};
pub use train::{train, EpochLog, TrainConfig, TrainMode, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{resize, ColorSpace, Image, Interpolation, Scale};
use crate::numcore::{ParamSet, Tape, Tensor, Var};
use crate::register::AlignedPair;
use crate::rng::{rng_for, stream};
use crate::skysim::PretrainPair;

/// Altitudes are divided by this before entering the encoder.
pub const ALTITUDE_NORM_M: f64 = 80.0;

/// Altitude assigned to altitude-free pretraining pairs (normalized input 1).
pub const PRETRAIN_ALTITUDE_M: f64 = ALTITUDE_NORM_M;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Simple,
    Altitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrNetConfig {
    /// Number of 3x3 conv layers, including the input and output layers.
    pub depth: usize,
    pub channels: usize,
    pub scale: Scale,
}

impl SrNetConfig {
    pub fn desk() -> Self {
        SrNetConfig {
            depth: 4,
            channels: 16,
            scale: Scale::X2,
        }
    }

    pub fn paper() -> Self {
        SrNetConfig {
            depth: 8,
            channels: 128,
            scale: Scale::PAPER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "network needs depth >= 1 and channels >= 1, got {} x {}",
                self.depth, self.channels
            )));
        }
        Ok(())
    }

    /// Input and output channels of conv layer `i`.
    pub fn conv_io(&self, i: usize) -> (usize, usize) {
        let cin = if i == 0 { 3 } else { self.channels };
        let cout = if i + 1 == self.depth {
            3
        } else {
            self.channels
        };
        (cin, cout)
    }

    /// Number of AALs in the altitude-aware variant (one per hidden layer).
    pub fn aal_count(&self) -> usize {
        self.depth - 1
    }
}

/// An LR/HR training or evaluation pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SrPair {
    pub lr: Image,
    pub hr: Image,
    pub altitude_m: Option<f64>,
}

impl From<AlignedPair> for SrPair {
    fn from(p: AlignedPair) -> Self {
        SrPair {
            lr: p.lr,
            hr: p.hr,
            altitude_m: Some(p.altitude_m),
        }
    }
}

impl From<&AlignedPair> for SrPair {
    fn from(p: &AlignedPair) -> Self {
        SrPair {
            lr: p.lr.clone(),
            hr: p.hr.clone(),
            altitude_m: Some(p.altitude_m),
        }
    }
}

impl From<PretrainPair> for SrPair {
    fn from(p: PretrainPair) -> Self {
        SrPair {
            lr: p.lr,
            hr: p.hr,
            altitude_m: Some(PRETRAIN_ALTITUDE_M),
        }
    }
}

fn conv_name(i: usize, part: &str) -> String {
    format!("conv{i:02}.{part}")
}

fn aal_name(i: usize, part: &str) -> String {
    format!("aal{i:02}.{part}")
}

fn uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn insert_dense(
    p: &mut ParamSet,
    rng: &mut impl Rng,
    name: &str,
    din: usize,
    dout: usize,
) -> Result<()> {
    p.insert(
        format!("{name}.weight"),
        Tensor::new(vec![dout, din], uniform(rng, dout * din, din))?,
    )?;
    p.insert(format!("{name}.bias"), Tensor::zeros(&[dout]))
}

/// Kaiming-uniform (fan-in) weights, zero biases, and a zero output layer so
/// the untrained network reproduces the bicubic upsample. The AAL kernel
/// generators' output layers also start at zero.
pub fn init_params(cfg: &SrNetConfig, kind: NetKind, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = rng_for(seed, &[stream::INIT]);
    let mut p = ParamSet::new();
    for i in 0..cfg.depth {
        let (cin, cout) = cfg.conv_io(i);
        let n = cout * cin * 9;
        let w = if i + 1 == cfg.depth {
            vec![0.0; n]
        } else {
            uniform(&mut rng, n, cin * 9)
        };
        p.insert(
            conv_name(i, "weight"),
            Tensor::new(vec![cout, cin, 3, 3], w)?,
        )?;
        p.insert(conv_name(i, "bias"), Tensor::zeros(&[cout]))?;
    }
    if kind == NetKind::Altitude {
        let c = cfg.channels;
        insert_dense(&mut p, &mut rng, "enc0", 1, c)?;
        insert_dense(&mut p, &mut rng, "enc1", c, c)?;
        for i in 0..cfg.aal_count() {
            insert_dense(&mut p, &mut rng, &aal_name(i, "kernel0"), c, c)?;
            insert_dense(&mut p, &mut rng, &aal_name(i, "kernel1"), c, c * 9)?;
            // generated kernels start at zero; random ones blow up the stack
            p.get_mut(&aal_name(i, "kernel1.weight"))?
                .data_mut()
                .fill(0.0);
            p.insert(
                aal_name(i, "mix.weight"),
                Tensor::new(vec![c, c, 1, 1], uniform(&mut rng, c * c, c))?,
            )?;
            insert_dense(&mut p, &mut rng, &aal_name(i, "att0"), c, c)?;
            insert_dense(&mut p, &mut rng, &aal_name(i, "att1"), c, c)?;
        }
    }
    Ok(p)
}

/// Sets the output conv layer to zero.
pub fn zero_output_layer(params: &mut ParamSet, cfg: &SrNetConfig) -> Result<()> {
    let last = cfg.depth - 1;
    for part in ["weight", "bias"] {
        params.get_mut(&conv_name(last, part))?.data_mut().fill(0.0);
    }
    Ok(())
}

fn dense(tape: &mut Tape, params: &ParamSet, name: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{name}.weight"))?;
    let b = tape.param(params, &format!("{name}.bias"))?;
    tape.dense(x, w, b)
}

/// Encodes one altitude per sample: `[N,1]` of `altitude / 80` through two
/// dense+ReLU layers to `[N, channels]`.
pub fn altitude_encode(tape: &mut Tape, params: &ParamSet, altitudes_m: &[f64]) -> Result<Var> {
    if let Some(a) = altitudes_m.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "altitude must be positive, got {a}"
        )));
    }
    let x: Vec<f64> = altitudes_m.iter().map(|a| a / ALTITUDE_NORM_M).collect();
    let x = tape.constant(Tensor::new(vec![altitudes_m.len(), 1], x)?)?;
    let h = dense(tape, params, "enc0", x)?;
    let h = tape.relu(h)?;
    let h = dense(tape, params, "enc1", h)?;
    tape.relu(h)
}

/// AAL number `index`: `feat: [N,C,H,W]`, `alt_feature: [N,C]`.
pub fn aal_forward(
    tape: &mut Tape,
    params: &ParamSet,
    index: usize,
    feat: Var,
    alt_feature: Var,
) -> Result<Var> {
    let fs = tape.value(feat).shape().to_vec();
    let c = params.get(&aal_name(index, "mix.weight"))?.shape()[0];
    if fs.len() != 4 || fs[1] != c || tape.value(alt_feature).shape() != [fs[0], c] {
        return Err(Error::shape(
            "aal_forward",
            format!(
                "feature {fs:?}, altitude feature {:?}, layer width {c}",
                tape.value(alt_feature).shape()
            ),
        ));
    }
    let k = dense(tape, params, &aal_name(index, "kernel0"), alt_feature)?;
    let k = tape.relu(k)?;
    let k = dense(tape, params, &aal_name(index, "kernel1"), k)?;
    let k = tape.reshape(k, vec![fs[0], c, 1, 3, 3])?;
    let d = tape.depthwise_conv2d(feat, k)?;
    let mix = tape.param(params, &aal_name(index, "mix.weight"))?;
    let branch1 = tape.conv2d(d, mix, None, 0)?;

    let a = dense(tape, params, &aal_name(index, "att0"), alt_feature)?;
    let a = tape.relu(a)?;
    let a = dense(tape, params, &aal_name(index, "att1"), a)?;
    let a = tape.sigmoid(a)?;
    let branch2 = tape.scale_channels(feat, a)?;
    tape.add(branch1, branch2)
}

/// Residual predicted by the conv stack for an upsampled batch `[N,3,H,W]`.
pub fn residual_stack(
    tape: &mut Tape,
    params: &ParamSet,
    cfg: &SrNetConfig,
    upsampled: Var,
    alt_feature: Option<Var>,
) -> Result<Var> {
    let mut x = upsampled;
    for i in 0..cfg.depth {
        let w = tape.param(params, &conv_name(i, "weight"))?;
        let b = tape.param(params, &conv_name(i, "bias"))?;
        x = tape.conv2d(x, w, Some(b), 1)?;
        if i + 1 < cfg.depth {
            x = tape.relu(x)?;
            if let Some(f) = alt_feature {
                x = aal_forward(tape, params, i, x, f)?;
            }
        }
    }
    Ok(x)
}

/// Network output before clamping: `upsampled + residual_stack(upsampled)`.
pub fn forward_graph(
    tape: &mut Tape,
    params: &ParamSet,
    cfg: &SrNetConfig,
    kind: NetKind,
    upsampled: Var,
    altitudes_m: &[f64],
) -> Result<Var> {
    let alt_feature = match kind {
        NetKind::Simple => None,
        NetKind::Altitude => {
            if altitudes_m.len() != tape.value(upsampled).shape()[0] {
                return Err(Error::InvalidArgument(format!(
                    "{} altitudes for a batch of {}",
                    altitudes_m.len(),
                    tape.value(upsampled).shape()[0]
                )));
            }
            Some(altitude_encode(tape, params, altitudes_m)?)
        }
    };
    let r = residual_stack(tape, params, cfg, upsampled, alt_feature)?;
    tape.add(upsampled, r)
}

/// Bicubic upsample of `lr` to the network's output size.
pub fn upsample(lr: &Image, scale: Scale) -> Result<Image> {
    resize(
        lr,
        scale.up(lr.height()),
        scale.up(lr.width()),
        Interpolation::Bicubic,
    )
}

/// Stacks equally sized RGB images into `[N,3,H,W]`.
pub fn batch_tensor(images: &[&Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.space() != ColorSpace::Rgb || img.height() != h || img.width() != w {
            return Err(Error::shape(
                "batch_tensor",
                format!("expected {h}x{w} RGB images"),
            ));
        }
        data.extend_from_slice(img.data());
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

/// Unclamped network output for one image, plus its upsampled input.
#[derive(Clone, Debug, PartialEq)]
pub struct RawOutput {
    pub upsampled: Image,
    /// `[1,3,H,W]`, values not clamped.
    pub output: Tensor,
}

impl RawOutput {
    pub fn to_image(&self) -> Result<Image> {
        let s = self.output.shape();
        Image::new(s[2], s[3], ColorSpace::Rgb, self.output.data().to_vec())
    }
}

pub fn forward_raw(
    lr: &Image,
    altitude_m: Option<f64>,
    kind: NetKind,
    params: &ParamSet,
    cfg: &SrNetConfig,
) -> Result<RawOutput> {
    cfg.validate()?;
    let upsampled = upsample(lr, cfg.scale)?;
    let mut tape = Tape::new();
    let x = tape.constant(batch_tensor(&[&upsampled])?)?;
    let alts: Vec<f64> = match (kind, altitude_m) {
        (NetKind::Altitude, None) => {
            return Err(Error::InvalidArgument(
                "the altitude-aware network needs an altitude".into(),
            ))
        }
        (_, a) => a.into_iter().collect(),
    };
    let y = forward_graph(&mut tape, params, cfg, kind, x, &alts)?;
    Ok(RawOutput {
        upsampled,
        output: tape.value(y).clone(),
    })
}

pub fn forward_simple(lr: &Image, params: &ParamSet, cfg: &SrNetConfig) -> Result<Image> {
    forward_raw(lr, None, NetKind::Simple, params, cfg)?.to_image()
}

pub fn forward_altitude(
    lr: &Image,
    altitude_m: f64,
    params: &ParamSet,
    cfg: &SrNetConfig,
) -> Result<Image> {
    forward_raw(lr, Some(altitude_m), NetKind::Altitude, params, cfg)?.to_image()
}

pub fn forward(
    lr: &Image,
    altitude_m: Option<f64>,
    kind: NetKind,
    params: &ParamSet,
    cfg: &SrNetConfig,
) -> Result<Image> {
    forward_raw(lr, altitude_m, kind, params, cfg)?.to_image()
}

/// Precomputed network input and target for one pair.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub upsampled: Image,
    pub hr: Image,
    pub altitude_m: Option<f64>,
}

impl Prepared {
    pub fn new(pair: &SrPair, scale: Scale) -> Result<Self> {
        let upsampled = upsample(&pair.lr, scale)?;
        if !upsampled.same_shape(&pair.hr) {
            return Err(Error::shape(
                "srnet pair",
                format!(
                    "LR {}x{} upsamples to {}x{}, HR is {}x{}",
                    pair.lr.height(),
                    pair.lr.width(),
                    upsampled.height(),
                    upsampled.width(),
                    pair.hr.height(),
                    pair.hr.width()
                ),
            ));
        }
        Ok(Prepared {
            upsampled,
            hr: pair.hr.clone(),
            altitude_m: pair.altitude_m,
        })
    }
}

/// Mean L1 loss over a batch and its gradient for every parameter.
pub fn batch_loss_and_grads(
    params: &ParamSet,
    cfg: &SrNetConfig,
    kind: NetKind,
    upsampled: Tensor,
    target: Tensor,
    altitudes_m: &[f64],
) -> Result<(f64, ParamSet)> {
    let mut tape = Tape::new();
    let x = tape.constant(upsampled)?;
    let t = tape.constant(target)?;
    let y = forward_graph(&mut tape, params, cfg, kind, x, altitudes_m)?;
    let loss = tape.l1_loss(y, t)?;
    tape.backward(loss)?;
    let value = tape.value(loss).data()[0];
    Ok((value, tape.param_grads(params)?))
}

fn altitudes_for(kind: NetKind, items: &[&Prepared]) -> Result<Vec<f64>> {
    match kind {
        NetKind::Simple => Ok(Vec::new()),
        NetKind::Altitude => items
            .iter()
            .map(|p| {
                p.altitude_m.ok_or_else(|| {
                    Error::InvalidArgument(
                        "the altitude-aware network needs an altitude per pair".into(),
                    )
                })
            })
            .collect(),
    }
}

/// Full-image L1 loss and gradients for one pair.
pub fn pair_loss_and_grads(
    params: &ParamSet,
    cfg: &SrNetConfig,
    kind: NetKind,
    pair: &Prepared,
) -> Result<(f64, ParamSet)> {
    let alts = altitudes_for(kind, &[pair])?;
    batch_loss_and_grads(
        params,
        cfg,
        kind,
        batch_tensor(&[&pair.upsampled])?,
        batch_tensor(&[&pair.hr])?,
        &alts,
    )
}

/// Full-image L1 loss for one pair, without gradients.
pub fn pair_loss(
    params: &ParamSet,
    cfg: &SrNetConfig,
    kind: NetKind,
    pair: &Prepared,
) -> Result<f64> {
    let alts = altitudes_for(kind, &[pair])?;
    let mut tape = Tape::new();
    let x = tape.constant(batch_tensor(&[&pair.upsampled])?)?;
    let t = tape.constant(batch_tensor(&[&pair.hr])?)?;
    let y = forward_graph(&mut tape, params, cfg, kind, x, &alts)?;
    let loss = tape.l1_loss(y, t)?;
    Ok(tape.value(loss).data()[0])
}
