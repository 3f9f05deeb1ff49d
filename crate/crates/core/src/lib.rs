//! Training of small feed-forward networks whose loss carries soft penalty
//! terms for pooled effect sizes (standardized regression coefficients, odds
//! ratios and risk ratios).
//!
//! The crate is `no_std` + `alloc`. Everything here is a pure function of its
//! inputs and an explicit seed; file formats, the CLI and the experiment
//! harness live in the `seann-harness` companion crate.
//!
//! Module map:
//! - [`nn`]: single-hidden-layer perceptron, reverse-mode gradients, Adam
//! - [`standardize`]: column standardization with population statistics
//! - [`constraints`]: perturbations, penalty terms, weighting, composite loss
//! - [`synth`]: correlated Gaussian scenarios, targets, corruption, splits
//! - [`trainer`]: minibatch training with early stopping
//! - [`explain`]: exact interventional Shapley values and the ΔShap score
//! - [`metrics`]: R² and ROC AUC

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod constraints;
pub mod data;
pub mod error;
pub mod explain;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod standardize;
pub mod synth;
pub mod trainer;

pub use constraints::{
    composite_loss, default_perturbation, lambda_weights, lmeta_or, lmeta_rr, lmeta_src, perturb,
    BoundConstraint, CompositeObjective, ConstraintKind, LossBreakdown, LossWeights,
    PesConstraint,
};
pub use data::DataMatrix;
pub use error::{Error, Result};
pub use explain::{delta_shap, exact_shapley, reference_shapley, shapley_matrix, ShapReport};
pub use matrix::Matrix;
pub use metrics::{r2, roc_auc, MetricName, MetricRecord};
pub use nn::{adam_step, forward, loss_and_grad, AdamConfig, AdamState, Head, MlpParams};
pub use standardize::Standardizer;
pub use synth::{
    CorruptionMode, CorruptionSpec, GenerativeFunction, LabelRule, ScenarioConfig, Splits,
};
pub use trainer::{evaluate, train, EpochRecord, Monitor, PreparedData, TrainConfig, TrainedModel};

/// Prediction task; selects the output head and the prediction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Task {
    /// Continuous target, identity head, mean squared error.
    Regression,
    /// Binary target, logistic head, binary cross-entropy.
    Classification,
}

impl Task {
    pub fn head(self) -> Head {
        match self {
            Task::Regression => Head::Identity,
            Task::Classification => Head::Logistic,
        }
    }
}
