//! ADADELTA training with generalization-loss early stopping.
//!
//! After every epoch the validation joint loss is compared with the best
//! seen so far. A regression rolls the parameters back to the best
//! checkpoint and multiplies the update scale by `decay`; training stops
//! once `GL = 100 * (E_va / E_opt - 1)` exceeds the threshold.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::haus::{joint_loss, HausModel, Targets};
use crate::metrics::c_primary;
use crate::objective::{batch_weights, PriorMode, WeightTable};

#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub acc_grad_sq: Vec<f64>,
    pub acc_update_sq: Vec<f64>,
    pub rho: f64,
    pub epsilon: f64,
    /// Multiplier on every update; shrinks by `decay` on each regression.
    pub scale: f64,
}

impl AdadeltaState {
    pub fn new(n_params: usize, rho: f64, epsilon: f64) -> Self {
        Self {
            acc_grad_sq: vec![0.0; n_params],
            acc_update_sq: vec![0.0; n_params],
            rho,
            epsilon,
            scale: 1.0,
        }
    }
}

/// One ADADELTA update, in place.
pub fn adadelta_step(params: &mut [f64], grads: &[f64], state: &mut AdadeltaState) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.acc_grad_sq.len() != n || state.acc_update_sq.len() != n {
        return Err(Error::DimensionMismatch {
            context: "adadelta state",
            expected: n,
            got: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    let (rho, eps) = (state.rho, state.epsilon);
    for i in 0..n {
        let g = grads[i];
        let ag = rho * state.acc_grad_sq[i] + (1.0 - rho) * g * g;
        let delta = -(libm::sqrt(state.acc_update_sq[i] + eps) / libm::sqrt(ag + eps)) * g;
        state.acc_grad_sq[i] = ag;
        state.acc_update_sq[i] = rho * state.acc_update_sq[i] + (1.0 - rho) * delta * delta;
        params[i] += state.scale * delta;
    }
    Ok(())
}

/// Parameter snapshot tagged with the model's layer shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    shape: Vec<Vec<usize>>,
    params: Vec<f64>,
}

pub fn checkpoint(model: &HausModel) -> Snapshot {
    Snapshot {
        shape: model.shape(),
        params: model.parameters(),
    }
}

pub fn rollback(model: &mut HausModel, snap: &Snapshot) -> Result<()> {
    if model.shape() != snap.shape {
        return Err(Error::SnapshotMismatch);
    }
    model.set_parameters(&snap.params)
}

/// Example weighting used by the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Every example weight 1 (plain cross-entropy).
    Uniform,
    /// Prior-derived weights.
    Prior(PriorMode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Overrides the model's eta when set.
    pub eta: Option<f64>,
    pub weighting: Weighting,
    pub decay: f64,
    pub gl_threshold: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 100,
            eta: None,
            weighting: Weighting::Prior(PriorMode::Global),
            decay: 0.96,
            gl_threshold: 5.0,
            rho: 0.95,
            epsilon: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay {} outside (0, 1]", self.decay)));
        }
        if !(self.gl_threshold > 0.0) {
            return Err(Error::InvalidArgument("gl_threshold must be > 0".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("invalid ADADELTA constants".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation C_primary, when the validator reports one.
    pub val_cost: Option<f64>,
    pub gl: f64,
    pub scale: f64,
    pub rollback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 means the initial model was never beaten.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn rollbacks(&self) -> usize {
        self.epochs.iter().filter(|e| e.rollback).count()
    }
}

/// What the monitor decided for one validation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// New best: checkpoint it.
    Improved,
    /// Equal to the best: keep going, no rollback.
    Unchanged,
    /// Worse than the best: roll back and decay. `stop` when GL exceeds the
    /// threshold.
    Regressed { stop: bool },
}

/// Generalization-loss bookkeeping, separated from the loop so the policy
/// can be driven by scripted loss sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    best: f64,
    decay: f64,
    threshold: f64,
    scale: f64,
    regressions: usize,
}

impl EarlyStopping {
    pub fn new(initial_loss: f64, decay: f64, threshold: f64) -> Self {
        Self {
            best: initial_loss,
            decay,
            threshold,
            scale: 1.0,
            regressions: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn regressions(&self) -> usize {
        self.regressions
    }

    /// `100 * (loss / best - 1)`, clamped at 0 for improvements.
    pub fn generalization_loss(&self, loss: f64) -> f64 {
        if loss.is_nan() {
            return f64::INFINITY;
        }
        (100.0 * (loss / self.best - 1.0)).max(0.0)
    }

    pub fn observe(&mut self, loss: f64) -> (Verdict, f64) {
        let gl = self.generalization_loss(loss);
        if loss < self.best {
            self.best = loss;
            (Verdict::Improved, 0.0)
        } else if loss == self.best {
            (Verdict::Unchanged, 0.0)
        } else {
            self.regressions += 1;
            self.scale *= self.decay;
            (
                Verdict::Regressed {
                    stop: gl > self.threshold,
                },
                gl,
            )
        }
    }
}

struct Prepared {
    x: DMatrix<f64>,
    lang: Vec<usize>,
    fam: Vec<usize>,
    w_fam: Vec<f64>,
    w_lang: Vec<f64>,
}

impl Prepared {
    fn targets(&self) -> Targets<'_> {
        Targets {
            language: &self.lang,
            family: &self.fam,
            w_family: &self.w_fam,
            w_language: &self.w_lang,
        }
    }
}

fn prepare(
    samples: &[Sample],
    ds: &Dataset,
    weighting: Weighting,
    table: &WeightTable,
) -> Result<Prepared> {
    let t = ds.taxonomy();
    let map = t.family_map();
    let x = DMatrix::from_fn(samples.len(), ds.dim(), |i, j| samples[i].features[j]);
    let lang: Vec<usize> = samples.iter().map(|s| s.language).collect();
    let fam = lang.iter().map(|&l| map[l]).collect();
    let (w_fam, w_lang) = match weighting {
        Weighting::Uniform => (vec![1.0; samples.len()], vec![1.0; samples.len()]),
        Weighting::Prior(mode) => batch_weights(mode, table, t, samples)?,
    };
    Ok(Prepared {
        x,
        lang,
        fam,
        w_fam,
        w_lang,
    })
}

/// Mean joint loss of a model on a whole dataset under a weighting scheme
/// (mini-batch priors are taken over the full set).
pub fn dataset_loss(
    model: &HausModel,
    ds: &Dataset,
    weighting: Weighting,
    table: &WeightTable,
) -> Result<f64> {
    let p = prepare(ds.samples(), ds, weighting, table)?;
    model.joint_loss(&p.x, &p.targets())
}

fn check_compatible(model: &HausModel, ds: &Dataset, what: &'static str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty(what));
    }
    if ds.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: model.input_dim(),
            got: ds.dim(),
        });
    }
    if !ds.taxonomy().same_labels(model.taxonomy()) {
        return Err(Error::InvalidArgument(format!(
            "{what} taxonomy differs from the model's"
        )));
    }
    Ok(())
}

/// One validation pass: the loss that drives early stopping and an
/// optional detection cost that is only recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub loss: f64,
    pub cost: Option<f64>,
}

impl From<f64> for Validation {
    fn from(loss: f64) -> Self {
        Self { loss, cost: None }
    }
}

/// Trains a copy of `model` and returns the best-validation checkpoint.
/// `on_epoch` sees every epoch record as it is produced.
pub fn train(
    model: &HausModel,
    train_set: &Dataset,
    val_set: &Dataset,
    table: &WeightTable,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HausModel, TrainHistory)> {
    cfg.validate()?;
    check_compatible(model, val_set, "validation set")?;
    let val = prepare(val_set.samples(), val_set, cfg.weighting, table)?;
    train_with_validator(
        model,
        train_set,
        table,
        cfg,
        |m| {
            let out = m.forward(&val.x)?;
            let loss = joint_loss(&out, m.taxonomy(), &val.targets(), m.eta())?;
            let scores: Vec<Vec<f64>> = out
                .language_post
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            Ok(Validation {
                loss,
                cost: Some(c_primary(&scores, &val.lang)?),
            })
        },
        on_epoch,
    )
}

/// The training loop with the validation loss supplied by `validate`. It is
/// called once before the first epoch (with η already applied) and once
/// after every epoch.
pub fn train_with_validator(
    model: &HausModel,
    train_set: &Dataset,
    table: &WeightTable,
    cfg: &TrainConfig,
    mut validate: impl FnMut(&HausModel) -> Result<Validation>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HausModel, TrainHistory)> {
    cfg.validate()?;
    check_compatible(model, train_set, "training set")?;
    let mut model = model.clone();
    if let Some(eta) = cfg.eta {
        model.set_eta(eta)?;
    }

    let initial = validate(&model)?.loss;
    let mut monitor = EarlyStopping::new(initial, cfg.decay, cfg.gl_threshold);
    let mut best = checkpoint(&model);
    let mut history = TrainHistory {
        initial_val_loss: initial,
        best_val_loss: initial,
        ..TrainHistory::default()
    };
    let mut state = AdadeltaState::new(model.n_params(), cfg.rho, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut params = model.parameters();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let samples: Vec<Sample> = chunk.iter().map(|&i| train_set.samples()[i].clone()).collect();
            let batch = prepare(&samples, train_set, cfg.weighting, table)?;
            let (loss, grads) = model.backward(&batch.x, &batch.targets())?;
            loss_sum += loss * chunk.len() as f64;
            adadelta_step(&mut params, &grads.flatten(), &mut state)?;
            model.set_parameters(&params)?;
        }
        let Validation {
            loss: val_loss,
            cost: val_cost,
        } = validate(&model)?;
        let (verdict, gl) = monitor.observe(val_loss);
        let mut rolled_back = false;
        let mut stop = false;
        match verdict {
            Verdict::Improved => {
                best = checkpoint(&model);
                history.best_epoch = epoch;
                history.best_val_loss = val_loss;
            }
            Verdict::Unchanged => {}
            Verdict::Regressed { stop: s } => {
                rollback(&mut model, &best)?;
                params = model.parameters();
                state.scale = monitor.scale();
                rolled_back = true;
                stop = s;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_cost,
            gl,
            scale: state.scale,
            rollback: rolled_back,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    rollback(&mut model, &best)?;
    Ok((model, history))
}
