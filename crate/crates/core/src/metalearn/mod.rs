//! One-shot first-order MAML over altitude tasks.
//!
//! Each outer iteration adapts a copy of the parameters to every training
//! altitude with a few plain SGD steps on a support sample, evaluates the
//! query-loss gradient at the adapted point, and applies the sum of those
//! gradients to the shared parameters (first-order approximation).


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::ParamSet;
use crate::par;
use crate::quality::MetricReport;
use crate::rng::{rng_for, stream};
use crate::srnet::{self, NetKind, Prepared, SrNetConfig, SrPair};

/// A model whose loss on one sample can be differentiated.
pub trait Learner {
    type Sample;

    fn loss_and_grads(&self, params: &ParamSet, sample: &Self::Sample) -> Result<(f64, ParamSet)>;

    fn loss(&self, params: &ParamSet, sample: &Self::Sample) -> Result<f64> {
        Ok(self.loss_and_grads(params, sample)?.0)
    }
}

/// The super-resolution network as a [`Learner`] over LR/HR pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SrLearner {
    pub net: SrNetConfig,
    pub kind: NetKind,
}

impl Learner for SrLearner {
    type Sample = SrPair;

    fn loss_and_grads(&self, params: &ParamSet, sample: &SrPair) -> Result<(f64, ParamSet)> {
        srnet::pair_loss_and_grads(
            params,
            &self.net,
            self.kind,
            &Prepared::new(sample, self.net.scale)?,
        )
    }

    fn loss(&self, params: &ParamSet, sample: &SrPair) -> Result<f64> {
        srnet::pair_loss(
            params,
            &self.net,
            self.kind,
            &Prepared::new(sample, self.net.scale)?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Inner-loop SGD step size.
    pub alpha: f64,
    /// Outer-loop SGD step size.
    pub beta: f64,
    pub inner_steps: usize,
    /// Support samples per task.
    pub shots: usize,
    pub outer_iterations: usize,
    /// Stop when the validation loss has not improved for this many
    /// iterations.
    pub patience: usize,
    /// Validation samples scored after adaptation, at most.
    pub val_samples: usize,
    pub seed: u64,
}

impl MetaConfig {
    pub fn paper() -> Self {
        MetaConfig {
            alpha: 1e-5,
            beta: 1e-4,
            inner_steps: 5,
            shots: 1,
            outer_iterations: 200,
            patience: 20,
            val_samples: 16,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        MetaConfig {
            alpha: 1e-3,
            beta: 2e-4,
            outer_iterations: 200,
            val_samples: 8,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite())
            || self.shots == 0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid meta config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AltitudeTask<S> {
    pub altitude_m: f64,
    pub samples: Vec<S>,
}

/// Training, validation and test altitudes with their samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AltitudeTaskSet<S> {
    pub train: Vec<AltitudeTask<S>>,
    pub validation: Option<AltitudeTask<S>>,
    pub test: Vec<AltitudeTask<S>>,
}

impl<S> AltitudeTaskSet<S> {
    /// Checks that the three altitude groups are pairwise disjoint and
    /// sorts each group by altitude.
    pub fn new(
        mut train: Vec<AltitudeTask<S>>,
        validation: Option<AltitudeTask<S>>,
        mut test: Vec<AltitudeTask<S>>,
    ) -> Result<Self> {
        train.sort_by(|a, b| a.altitude_m.total_cmp(&b.altitude_m));
        test.sort_by(|a, b| a.altitude_m.total_cmp(&b.altitude_m));
        let mut all: Vec<f64> = train
            .iter()
            .chain(&validation)
            .chain(&test)
            .map(|t| t.altitude_m)
            .collect();
        let n = all.len();
        all.sort_by(f64::total_cmp);
        all.dedup();
        if all.len() != n {
            return Err(Error::InvalidArgument(
                "training, validation and test altitudes must be pairwise disjoint".into(),
            ));
        }
        Ok(AltitudeTaskSet {
            train,
            validation,
            test,
        })
    }
}

impl AltitudeTaskSet<SrPair> {
    /// Groups pairs by altitude: `validation_m` and `test_m` become their own
    /// tasks and every other altitude present is a training task. Pairs
    /// without an altitude are rejected.
    pub fn from_pairs(
        pairs: Vec<SrPair>,
        validation_m: Option<f64>,
        test_m: &[f64],
    ) -> Result<Self> {
        let mut groups: Vec<AltitudeTask<SrPair>> = Vec::new();
        for p in pairs {
            let a = p.altitude_m.ok_or_else(|| {
                Error::InvalidArgument("meta-learning pairs need an altitude".into())
            })?;
            match groups.iter_mut().find(|g| g.altitude_m == a) {
                Some(g) => g.samples.push(p),
                None => groups.push(AltitudeTask {
                    altitude_m: a,
                    samples: vec![p],
                }),
            }
        }
        let (mut train, mut validation, mut test) = (Vec::new(), None, Vec::new());
        for g in groups {
            if Some(g.altitude_m) == validation_m {
                validation = Some(g);
            } else if test_m.contains(&g.altitude_m) {
                test.push(g);
            } else {
                train.push(g);
            }
        }
        Self::new(train, validation, test)
    }
}

fn mean_grads<L: Learner>(
    learner: &L,
    params: &ParamSet,
    samples: &[&L::Sample],
) -> Result<(f64, ParamSet)> {
    let mut loss = 0.0;
    let mut total: Option<ParamSet> = None;
    for s in samples {
        let (l, g) = learner.loss_and_grads(params, s)?;
        loss += l;
        match &mut total {
            Some(t) => t.axpy(1.0, &g)?,
            None => total = Some(g),
        }
    }
    let mut total =
        total.ok_or_else(|| Error::InvalidArgument("no samples to differentiate".into()))?;
    let k = samples.len() as f64;
    if k != 1.0 {
        let sum = total.clone();
        total.axpy(1.0 / k - 1.0, &sum)?;
    }
    Ok((loss / k, total))
}

/// `steps` plain SGD updates at rate `alpha` on the mean support loss.
/// The input is left untouched.
pub fn sgd_adapt<L: Learner>(
    learner: &L,
    params: &ParamSet,
    support: &[&L::Sample],
    alpha: f64,
    steps: usize,
) -> Result<ParamSet> {
    let mut p = params.clone();
    for _ in 0..steps {
        let (loss, g) = mean_grads(learner, &p, support)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "sgd_adapt" });
        }
        p.axpy(-alpha, &g)?;
    }
    Ok(p)
}

pub fn adapt_one_shot<L: Learner>(
    learner: &L,
    params: &ParamSet,
    support: &L::Sample,
    cfg: &MetaConfig,
) -> Result<ParamSet> {
    sgd_adapt(learner, params, &[support], cfg.alpha, cfg.inner_steps)
}

/// Indices of the support and query samples drawn for one task.
fn draw(n: usize, shots: usize, seed: u64, path: &[u64]) -> (Vec<usize>, Vec<usize>) {
    let idx = rand::seq::index::sample(&mut rng_for(seed, path), n, 2 * shots).into_vec();
    (idx[..shots].to_vec(), idx[shots..].to_vec())
}

/// Index of the one-shot support pair drawn at `altitude_m` from `n` pairs.
pub fn support_index(n: usize, seed: u64, altitude_m: f64) -> usize {
    draw(n, 1, seed, &[stream::META, altitude_m.to_bits()]).0[0]
}

/// One FOMAML outer step. Returns the updated parameters and the mean query
/// loss at the adapted points.
pub fn meta_step<L>(
    learner: &L,
    params: &ParamSet,
    tasks: &[AltitudeTask<L::Sample>],
    cfg: &MetaConfig,
    iteration: usize,
) -> Result<(ParamSet, f64)>
where
    L: Learner + Sync,
    L::Sample: Sync,
{
    let results = par::map(tasks, |t, task| -> Result<(f64, ParamSet)> {
        let (support, query) = draw(
            task.samples.len(),
            cfg.shots,
            cfg.seed,
            &[stream::META, iteration as u64, t as u64],
        );
        let support: Vec<&L::Sample> = support.iter().map(|&i| &task.samples[i]).collect();
        let query: Vec<&L::Sample> = query.iter().map(|&i| &task.samples[i]).collect();
        let adapted = sgd_adapt(learner, params, &support, cfg.alpha, cfg.inner_steps)?;
        mean_grads(learner, &adapted, &query)
    });
    let mut next = params.clone();
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        if !l.is_finite() {
            return Err(Error::NonFinite { op: "meta_step" });
        }
        loss += l;
        next.axpy(-cfg.beta, &g)?;
    }
    Ok((next, loss / tasks.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaLog {
    pub iteration: usize,
    pub query_loss: f64,
    /// Adapted loss on the validation altitude, when one is configured.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaOutcome {
    /// Parameters with the lowest validation loss (the last ones when no
    /// validation altitude exists).
    pub params: ParamSet,
    pub history: Vec<MetaLog>,
    pub best_iteration: Option<usize>,
}

/// Adapted loss on the validation task: adapt on a fixed support draw, then
/// average the loss over up to `val_samples` of the remaining samples.
fn validation_loss<L: Learner>(
    learner: &L,
    params: &ParamSet,
    task: &AltitudeTask<L::Sample>,
    cfg: &MetaConfig,
) -> Result<f64> {
    let n = task.samples.len();
    let (support, _) = draw(n, cfg.shots, cfg.seed, &[stream::META, u64::MAX]);
    let rest: Vec<usize> = (0..n)
        .filter(|i| !support.contains(i))
        .take(cfg.val_samples.max(1))
        .collect();
    let support: Vec<&L::Sample> = support.iter().map(|&i| &task.samples[i]).collect();
    let adapted = sgd_adapt(learner, params, &support, cfg.alpha, cfg.inner_steps)?;
    let mut total = 0.0;
    for &i in &rest {
        total += learner.loss(&adapted, &task.samples[i])?;
    }
    Ok(total / rest.len() as f64)
}

pub fn meta_train<L>(
    learner: &L,
    params: &ParamSet,
    tasks: &AltitudeTaskSet<L::Sample>,
    cfg: &MetaConfig,
) -> Result<MetaOutcome>
where
    L: Learner + Sync,
    L::Sample: Sync,
{
    cfg.validate()?;
    if tasks.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let need = 2 * cfg.shots;
    for t in tasks.train.iter().chain(&tasks.validation) {
        if t.samples.len() < need {
            return Err(Error::InvalidArgument(format!(
                "altitude {} m has {} pairs, meta-learning needs at least {need}",
                t.altitude_m,
                t.samples.len()
            )));
        }
    }
    let mut current = params.clone();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut history = Vec::with_capacity(cfg.outer_iterations);
    for it in 0..cfg.outer_iterations {
        let nan = |e: Error| match e {
            Error::NonFinite { .. } => Error::NanLoss { epoch: it, step: 0 },
            other => other,
        };
        let (next, query_loss) =
            meta_step(learner, &current, &tasks.train, cfg, it).map_err(nan)?;
        current = next;
        let val_loss = match &tasks.validation {
            Some(v) => Some(validation_loss(learner, &current, v, cfg).map_err(nan)?),
            None => None,
        };
        history.push(MetaLog {
            iteration: it,
            query_loss,
            val_loss,
        });
        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, it, current.clone()));
            } else if it - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, it, p)) => MetaOutcome {
            params: p,
            history,
            best_iteration: Some(it),
        },
        None => MetaOutcome {
            params: current,
            history,
            best_iteration: None,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaEvalRow {
    pub altitude_m: f64,
    /// `adapted` or `unadapted`.
    pub method: String,
    pub pairs: usize,
    pub report: MetricReport,
}

/// For each test altitude: draw one support pair, adapt, and score both the
/// adapted and the unadapted parameters on the remaining pairs.
pub fn meta_evaluate(
    learner: &SrLearner,
    params: &ParamSet,
    tasks: &AltitudeTaskSet<SrPair>,
    cfg: &MetaConfig,
) -> Result<Vec<MetaEvalRow>> {
    if tasks.test.is_empty() {
        return Err(Error::InvalidArgument(
            "meta evaluation needs at least one test altitude".into(),
        ));
    }
    let mut rows = Vec::new();
    for task in &tasks.test {
        let n = task.samples.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "test altitude {} m has {n} pairs, needs at least 2",
                task.altitude_m
            )));
        }
        let support = support_index(n, cfg.seed, task.altitude_m);
        let rest: Vec<SrPair> = (0..n)
            .filter(|i| *i != support)
            .map(|i| task.samples[i].clone())
            .collect();
        let adapted = adapt_one_shot(learner, params, &task.samples[support], cfg)?;
        for (method, p) in [("adapted", &adapted), ("unadapted", params)] {
            let scores = srnet::evaluate(&rest, p, learner.kind, &learner.net)?;
            let reports: Vec<MetricReport> = scores.iter().map(|s| s.model).collect();
            rows.push(MetaEvalRow {
                altitude_m: task.altitude_m,
                method: method.to_string(),
                pairs: rest.len(),
                report: MetricReport::mean(&reports).expect("non-empty"),
            });
        }
    }
    Ok(rows)
}
