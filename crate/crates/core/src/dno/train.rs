use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::dataset::Dataset;
use super::model::{CombineMode, DnoModel, Grads};
use crate::rng::{self, derive_seed};
use crate::{Error, Result};

/// What one optimization step consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// `batch_size` whole sequences per step.
    #[default]
    Sequence,
    /// `point_batch` individual `(sequence, time) -> value` samples per step (dot mode only).
    Pointwise,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequence" => Ok(TrainMode::Sequence),
            "point" | "pointwise" => Ok(TrainMode::Pointwise),
            other => Err(Error::invalid(format!("unknown training mode `{other}`"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Sequence => "sequence",
            TrainMode::Pointwise => "pointwise",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Stop once the full training loss is at or below this value; 0 disables.
    pub loss_threshold: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Iterations between full-training-loss evaluations (history and threshold checks).
    pub log_interval: usize,
    /// Points per step in point-wise mode; defaults to `batch_size * N`.
    pub point_batch: Option<usize>,
    /// Optional cap on optimization wall time, seconds.
    pub time_limit_secs: Option<f64>,
    /// Fraction of the rows held out (seeded) for early stopping; 0 disables.
    /// With a hold-out, the parameters with the lowest validation loss are returned.
    pub validation_fraction: f64,
    /// Stop after this many log intervals without a new validation minimum.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 64,
            max_iterations: 10_000,
            loss_threshold: 0.0,
            seed: 0,
            mode: TrainMode::Sequence,
            log_interval: 100,
            point_batch: None,
            time_limit_secs: None,
            validation_fraction: 0.0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.learning_rate) || !pos(self.epsilon) {
            return Err(Error::invalid("learning rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.log_interval == 0 || self.point_batch == Some(0) {
            return Err(Error::invalid("batch sizes and log interval must be positive"));
        }
        if !(self.loss_threshold >= 0.0) {
            return Err(Error::invalid("loss threshold must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be positive"));
        }
        if let Some(t) = self.time_limit_secs {
            if !pos(t) {
                return Err(Error::invalid("time limit must be positive"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    fn threshold_met(&self, loss: f64) -> bool {
        self.loss_threshold > 0.0 && loss <= self.loss_threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    /// Full training-set loss in normalized units.
    pub loss: f64,
    /// Running minimum of `loss`.
    pub best: f64,
    /// Loss on the held-out rows, when training with a hold-out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub history: Vec<LossRecord>,
    /// Optimization steps taken.
    pub iterations: usize,
    pub initial_loss: f64,
    /// Training loss of the returned parameters.
    pub final_loss: f64,
    /// Iteration whose parameters were returned, when training with a hold-out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restored_iteration: Option<usize>,
    /// Validation loss of the returned parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
    /// Patience ran out before the budget.
    #[serde(default)]
    pub stopped_early: bool,
    pub reached_threshold: bool,
    pub timed_out: bool,
    /// Monotonic time spent in optimization steps only.
    pub wall_time_secs: f64,
    /// Output entries consumed by all steps together.
    pub entries_seen: u64,
}

/// Trains a copy of `model` on physical-unit `data`, normalized with `model.norm`.
pub fn train(model: &DnoModel, data: &Dataset, cfg: &TrainConfig) -> Result<(DnoModel, TrainReport)> {
    match cfg.mode {
        TrainMode::Sequence => train_sequence(model, data, cfg),
        TrainMode::Pointwise => train_pointwise(model, data, cfg),
    }
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    adam: AdamConfig,
    state: AdamState,
    history: Vec<LossRecord>,
    best: f64,
    elapsed: f64,
    entries: u64,
}

impl<'a> Loop<'a> {
    fn new(model: &DnoModel, cfg: &'a TrainConfig) -> Self {
        Loop {
            cfg,
            adam: cfg.adam(),
            state: AdamState::new(model.param_slices().iter().map(|s| s.len())),
            history: Vec::new(),
            best: f64::INFINITY,
            elapsed: 0.0,
            entries: 0,
        }
    }

    fn record(&mut self, iteration: usize, loss: f64, validation: Option<f64>) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration, loss });
        }
        self.best = self.best.min(loss);
        self.history.push(LossRecord {
            iteration,
            loss,
            best: self.best,
            validation,
        });
        Ok(())
    }

    fn apply(&mut self, model: &mut DnoModel, grads: &Grads) {
        self.state.step(model.param_slices_mut(), grads.slices(), &self.adam);
    }

    fn out_of_time(&self) -> bool {
        self.cfg.time_limit_secs.is_some_and(|cap| self.elapsed >= cap)
    }

    /// Runs `step` until the threshold, the iteration budget, the time cap or
    /// the patience is hit. `step` returns the mini-batch loss and the number
    /// of output entries used.
    fn run(
        mut self,
        model: &mut DnoModel,
        full_loss: impl Fn(&DnoModel) -> Result<f64>,
        val_loss: Option<&dyn Fn(&DnoModel) -> Result<f64>>,
        mut step: impl FnMut(&mut DnoModel, &mut Self) -> Result<(f64, u64)>,
    ) -> Result<TrainReport> {
        let mut keeper = val_loss.map(|f| Keeper::new(f, self.cfg.patience));
        let initial = full_loss(model)?;
        let v = keeper.as_mut().map(|k| k.observe(model, 0, initial)).transpose()?;
        self.record(0, initial, v)?;
        let mut reached = self.cfg.threshold_met(initial);
        let mut last = initial;
        let mut it = 0;
        let patience_out = |k: &Option<Keeper>| k.as_ref().is_some_and(|k| k.exhausted());
        while !reached && it < self.cfg.max_iterations && !self.out_of_time() && !patience_out(&keeper) {
            let start = Instant::now();
            let (batch_loss, used) = step(model, &mut self)?;
            self.elapsed += start.elapsed().as_secs_f64();
            it += 1;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    loss: batch_loss,
                });
            }
            self.entries += used;
            if it % self.cfg.log_interval == 0 || it == self.cfg.max_iterations {
                last = full_loss(model)?;
                let v = keeper.as_mut().map(|k| k.observe(model, it, last)).transpose()?;
                self.record(it, last, v)?;
                reached = self.cfg.threshold_met(last);
            }
        }
        if self.history.last().map(|r| r.iteration) != Some(it) {
            last = full_loss(model)?;
            let v = keeper.as_mut().map(|k| k.observe(model, it, last)).transpose()?;
            self.record(it, last, v)?;
            reached = self.cfg.threshold_met(last);
        }
        let stopped_early = patience_out(&keeper) && !reached && it < self.cfg.max_iterations;
        let mut restored = None;
        let mut validation_loss = None;
        if let Some(k) = keeper {
            let b = k.best.expect("observed at least once");
            *model = b.model;
            last = b.train_loss;
            restored = Some(b.iteration);
            validation_loss = Some(b.val_loss);
        }
        Ok(TrainReport {
            mode: self.cfg.mode,
            history: self.history,
            iterations: it,
            initial_loss: initial,
            final_loss: last,
            restored_iteration: restored,
            validation_loss,
            stopped_early,
            reached_threshold: reached,
            timed_out: !reached && !stopped_early && it < self.cfg.max_iterations,
            wall_time_secs: self.elapsed,
            entries_seen: self.entries,
        })
    }
}

struct Snapshot {
    model: DnoModel,
    iteration: usize,
    train_loss: f64,
    val_loss: f64,
}

/// Tracks the validation minimum and the parameters that reached it.
struct Keeper<'f> {
    loss: &'f dyn Fn(&DnoModel) -> Result<f64>,
    patience: Option<usize>,
    best: Option<Snapshot>,
    since_best: usize,
}

impl<'f> Keeper<'f> {
    fn new(loss: &'f dyn Fn(&DnoModel) -> Result<f64>, patience: Option<usize>) -> Self {
        Keeper {
            loss,
            patience,
            best: None,
            since_best: 0,
        }
    }

    fn observe(&mut self, model: &DnoModel, iteration: usize, train_loss: f64) -> Result<f64> {
        let v = (self.loss)(model)?;
        if !v.is_finite() {
            return Err(Error::Divergence { iteration, loss: v });
        }
        if self.best.as_ref().is_none_or(|b| v < b.val_loss) {
            self.best = Some(Snapshot {
                model: model.clone(),
                iteration,
                train_loss,
                val_loss: v,
            });
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Ok(v)
    }

    fn exhausted(&self) -> bool {
        self.patience.is_some_and(|p| self.since_best >= p)
    }
}

/// Splits off the seeded validation rows, if any.
fn holdout<'d>(data: &'d Dataset, cfg: &TrainConfig) -> Result<(Cow<'d, Dataset>, Option<Dataset>)> {
    if cfg.validation_fraction == 0.0 {
        return Ok((Cow::Borrowed(data), None));
    }
    let (fit, val) = Dataset::split_indices(data.len(), 1.0 - cfg.validation_fraction, derive_seed(cfg.seed, 3))?;
    if fit.is_empty() || val.is_empty() {
        return Err(Error::invalid(format!(
            "validation fraction {} leaves an empty side of {} rows",
            cfg.validation_fraction,
            data.len()
        )));
    }
    Ok((Cow::Owned(data.subset(&fit)), Some(data.subset(&val))))
}

fn check_data(model: &DnoModel, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    model.validate()?;
    if data.grid.n_points != model.grid.n_points {
        return Err(Error::shape(format!(
            "dataset sequences have {} samples, model expects {}",
            data.grid.n_points, model.grid.n_points
        )));
    }
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    Ok(())
}

/// Sequence-to-sequence training: every step consumes whole sequences,
/// drawn from a seeded reshuffle of the rows at each epoch.
pub fn train_sequence(model: &DnoModel, data: &Dataset, cfg: &TrainConfig) -> Result<(DnoModel, TrainReport)> {
    check_data(model, data, cfg)?;
    let (data, val) = holdout(data, cfg)?;
    let val = val.map(|v| {
        (
            model.norm.normalize_inputs(v.inputs.view()),
            model.norm.normalize_outputs(v.outputs.view()),
        )
    });
    let val_loss = val.as_ref().map(|(vx, vy)| move |mdl: &DnoModel| mdl.loss(vx.view(), vy.view()));
    let x = model.norm.normalize_inputs(data.inputs.view());
    let y = model.norm.normalize_outputs(data.outputs.view());
    let m = x.nrows();
    let n = x.ncols() as u64;
    let batch = cfg.batch_size.min(m);
    let mut rng = rng::seeded(derive_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..m).collect();
    let mut cursor = m;

    let mut out = model.clone();
    let lp = Loop::new(&out, cfg);
    let report = lp.run(
        &mut out,
        |mdl| mdl.loss(x.view(), y.view()),
        val_loss.as_ref().map(|f| f as &dyn Fn(&DnoModel) -> Result<f64>),
        |mdl, lp| {
            if cursor + batch > m {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let rows = &order[cursor..cursor + batch];
            cursor += batch;
            let xb = x.select(Axis(0), rows);
            let yb = y.select(Axis(0), rows);
            let (loss, grads) = mdl.loss_and_grad(xb.view(), yb.view())?;
            lp.apply(mdl, &grads);
            Ok((loss, batch as u64 * n))
        },
    )?;
    out.trained_with = Some(cfg.clone());
    Ok((out, report))
}

/// Point-wise training of a dot-mode model: each step draws `point_batch`
/// `(sequence, time)` pairs from a seeded reshuffle of all `m * N` pairs.
pub fn train_pointwise(model: &DnoModel, data: &Dataset, cfg: &TrainConfig) -> Result<(DnoModel, TrainReport)> {
    if model.mode != CombineMode::Dot {
        return Err(Error::InvalidMode { expected: "dot" });
    }
    check_data(model, data, cfg)?;
    let (data, val) = holdout(data, cfg)?;
    let val = val.map(|v| {
        (
            model.norm.normalize_inputs(v.inputs.view()),
            model.norm.normalize_outputs(v.outputs.view()),
        )
    });
    let val_loss = val.as_ref().map(|(vx, vy)| move |mdl: &DnoModel| mdl.loss(vx.view(), vy.view()));
    let x = model.norm.normalize_inputs(data.inputs.view());
    let y = model.norm.normalize_outputs(data.outputs.view());
    let (m, n) = x.dim();
    let total = m * n;
    let batch = cfg.point_batch.unwrap_or(cfg.batch_size * n).min(total);
    let times = Array1::from(model.grid.times());
    let mut rng = rng::seeded(derive_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..total).collect();
    let mut cursor = total;

    let mut out = model.clone();
    let lp = Loop::new(&out, cfg);
    let report = lp.run(
        &mut out,
        |mdl| mdl.loss(x.view(), y.view()),
        val_loss.as_ref().map(|f| f as &dyn Fn(&DnoModel) -> Result<f64>),
        |mdl, lp| {
            if cursor + batch > total {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let picks = &order[cursor..cursor + batch];
            cursor += batch;
            let mut xb = Array2::zeros((batch, n));
            let mut tb = Array1::zeros(batch);
            let mut yb = Array1::zeros(batch);
            for (k, &p) in picks.iter().enumerate() {
                let (i, j) = (p / n, p % n);
                xb.row_mut(k).assign(&x.row(i));
                tb[k] = times[j];
                yb[k] = y[[i, j]];
            }
            let (loss, grads) = mdl.point_loss_and_grad(xb.view(), tb.view(), yb.view())?;
            lp.apply(mdl, &grads);
            Ok((loss, batch as u64))
        },
    )?;
    out.trained_with = Some(cfg.clone());
    Ok((out, report))
}
