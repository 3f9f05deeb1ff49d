//! Seeded minibatch training with epoch-level early stopping.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::constraints::{BoundConstraint, CompositeObjective, LossBreakdown, LossWeights, PesConstraint};
use crate::data::DataMatrix;
use crate::error::{bail, Error, Result};
use crate::loss::{bce_with_logits, mse};
use crate::matrix::Matrix;
use crate::metrics::{r2, roc_auc, MetricName, MetricRecord};
use crate::nn::{adam_step, forward, forward_pass, AdamConfig, AdamState, MlpParams};
use crate::rng::{derive_seed, seeded};
use crate::standardize::Standardizer;
use crate::Task;

const STREAM_INIT: u64 = 11;
const STREAM_SHUFFLE: u64 = 12;

/// Validation quantity driving early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Monitor {
    /// The model's full objective.
    #[default]
    Composite,
    /// The prediction loss alone.
    PredOnly,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 64,
            max_epochs: 1000,
            patience: 10,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            hidden: 32,
            seed: 0,
            monitor: Monitor::Composite,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 || self.hidden == 0 {
            bail!(InvalidInput, "batch_size, patience, max_epochs and hidden must all be >= 1");
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            bail!(InvalidInput, "invalid Adam hyperparameters");
        }
        Ok(())
    }
}

/// Training and validation splits standardized with training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: DataMatrix,
    pub val: DataMatrix,
    pub standardizer: Standardizer,
}

impl PreparedData {
    /// Fits the standardizer on `train` and applies it to both splits.
    pub fn fit(train: &DataMatrix, val: &DataMatrix) -> Result<Self> {
        if train.column_names() != val.column_names() {
            bail!(InvalidInput, "training and validation columns differ");
        }
        let standardizer = Standardizer::fit_data(train)?;
        Ok(PreparedData {
            train: standardizer.apply_data(train)?,
            val: standardizer.apply_data(val)?,
            standardizer,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Batch-size weighted mean of the minibatch losses seen in the epoch.
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub monitored: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    /// Snapshot from the epoch with the lowest monitored validation loss.
    pub params: MlpParams,
    pub standardizer: Standardizer,
    pub feature_names: Vec<String>,
    pub task: Task,
    pub constraints: Vec<PesConstraint>,
    pub weights: LossWeights,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainedModel {
    /// Predictions for inputs already in standardized units.
    pub fn predict_standardized(&self, x: &Matrix) -> Result<Vec<f64>> {
        forward(&self.params, x)
    }

    /// Predictions for raw inputs.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        forward(&self.params, &self.standardizer.apply(x)?)
    }
}

/// Patience counter over a stream of validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the loss of `epoch`; only a strict decrease counts as an
    /// improvement.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

fn diverged(err: Error, epoch: usize, batch: usize, objective: &CompositeObjective<'_>, names: &[String]) -> Error {
    let term = match &err {
        Error::Term { index, .. } => objective.term_label(*index, names),
        Error::NonFinite(_) => String::from("composite loss"),
        _ => return err,
    };
    Error::Diverged { epoch, batch, term }
}

fn monitored(b: &LossBreakdown, monitor: Monitor) -> f64 {
    match monitor {
        Monitor::Composite => b.total,
        Monitor::PredOnly => b.pred,
    }
}

/// Trains a fresh network on `data` with the composite objective. An empty
/// constraint list with [`LossWeights::agnostic`] is plain supervised
/// training.
pub fn train(
    data: &PreparedData,
    task: Task,
    constraints: &[PesConstraint],
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    let names = data.train.column_names();
    let bound: Vec<BoundConstraint> = constraints.iter().map(|c| c.bind(names)).collect::<Result<_>>()?;
    let objective = CompositeObjective::new(task, &bound, weights)?;
    let adam = config.adam();

    let mut params = MlpParams::init(
        data.train.ncols(),
        config.hidden,
        task.head(),
        &mut seeded(derive_seed(config.seed, STREAM_INIT)),
    )?;
    let mut state = AdamState::new(params.as_flat().len());
    let mut shuffle_rng = seeded(derive_seed(config.seed, STREAM_SHUFFLE));

    let x = data.train.values();
    let y = data.train.target();
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut acc = LossBreakdown {
            terms: alloc::vec![0.0; bound.len()],
            ..LossBreakdown::default()
        };
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select_rows(rows);
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let (loss, grad) = objective
                .evaluate(&params, &xb, &yb)
                .map_err(|e| diverged(e, epoch, batch, &objective, names))?;
            let share = rows.len() as f64 / n as f64;
            acc.total += share * loss.total;
            acc.pred += share * loss.pred;
            for (a, t) in acc.terms.iter_mut().zip(&loss.terms) {
                *a += share * t;
            }
            adam_step(&mut params, &grad, &mut state, &adam)?;
        }
        let val = objective
            .value(&params, data.val.values(), data.val.target())
            .map_err(|e| diverged(e, epoch, usize::MAX, &objective, names))?;
        let score = monitored(&val, config.monitor);
        history.push(EpochRecord {
            epoch,
            train: acc,
            val,
            monitored: score,
        });
        match stopper.observe(epoch, score) {
            StopDecision::Improved => best.clone_from(&params),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    let stopped_epoch = history.len();
    Ok(TrainedModel {
        params: best,
        standardizer: data.standardizer.clone(),
        feature_names: names.to_vec(),
        task,
        constraints: constraints.to_vec(),
        weights: weights.clone(),
        history,
        best_epoch: stopper.best_epoch(),
        stopped_epoch,
    })
}

/// Task metric and prediction loss on held-out data.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub metric: MetricRecord,
    pub loss: f64,
}

/// Scores `model` on raw (unstandardized) data: R² for regression, ROC AUC
/// for classification with labels `target >= 0.5`.
pub fn evaluate(model: &TrainedModel, data: &DataMatrix) -> Result<Evaluation> {
    if data.column_names() != model.feature_names.as_slice() {
        bail!(InvalidInput, "evaluation columns do not match the model inputs");
    }
    let x = model.standardizer.apply(data.values())?;
    let pass = forward_pass(&model.params, &x)?;
    let y = data.target();
    let (name, value, loss) = match model.task {
        Task::Regression => (MetricName::R2, r2(y, &pass.outputs)?, mse(&pass.outputs, y)?.0),
        Task::Classification => {
            let labels: Vec<f64> = y.iter().map(|&t| if t >= 0.5 { 1.0 } else { 0.0 }).collect();
            (
                MetricName::RocAuc,
                roc_auc(&labels, &pass.outputs)?,
                bce_with_logits(&pass.logits, y)?.0,
            )
        }
    };
    Ok(Evaluation {
        metric: MetricRecord { name, value, n: y.len() },
        loss,
    })
}
