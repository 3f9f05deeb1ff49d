//! Pooled-effect-size constraints as soft penalty terms.
//!
//! Each constraint compares the model's response to a perturbation of one
//! input column with the response implied by a literature effect size:
//!
//! - SRC: `f(x + h e_i) - v h - f(x)` should vanish;
//! - OR (log-odds `v`): applying the odds shift `e^{vh}` to `p(x - h e_i)`
//!   should give back `p(x)`;
//! - RR (log-risk `v`): `e^{-vh} f(x + h e_i) - f(x)` should vanish.
//!
//! The composite objective weighs the prediction loss and the penalties,
//! `λ0 L_pred + Σ λi L_meta,i`, all evaluated on the same minibatch.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{bail, Error, Result};
use crate::loss::{bce_with_logits, mse};
use crate::matrix::Matrix;
use crate::nn::{loss_and_grad, MlpParams, PassOutputs};
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ConstraintKind {
    /// Standardized regression coefficient.
    #[cfg_attr(feature = "serde", serde(rename = "SRC"))]
    Src,
    /// Odds ratio, stored as its logarithm.
    #[cfg_attr(feature = "serde", serde(rename = "OR"))]
    Or,
    /// Risk ratio, stored as its logarithm.
    #[cfg_attr(feature = "serde", serde(rename = "RR"))]
    Rr,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Src => "SRC",
            ConstraintKind::Or => "OR",
            ConstraintKind::Rr => "RR",
        })
    }
}

/// One literature effect on one feature.
///
/// `value` is in standardized feature units; for OR and RR it is on the log
/// scale (a published odds ratio enters as `ln OR`). `confidence` is the
/// meta-analysis sample size and must exceed 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PesConstraint {
    pub kind: ConstraintKind,
    pub feature: String,
    pub value: f64,
    pub confidence: f64,
    /// Explicit perturbation; `None` selects [`default_perturbation`].
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub perturbation: Option<f64>,
}

impl PesConstraint {
    pub fn new(kind: ConstraintKind, feature: impl Into<String>, value: f64, confidence: f64) -> Self {
        PesConstraint {
            kind,
            feature: feature.into(),
            value,
            confidence,
            perturbation: None,
        }
    }

    pub fn with_perturbation(mut self, h: f64) -> Self {
        self.perturbation = Some(h);
        self
    }

    pub fn perturbation(&self) -> f64 {
        self.perturbation
            .unwrap_or_else(|| default_perturbation(self.kind, self.value))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            bail!(InvalidInput, "constraint on `{}` has non-finite value", self.feature);
        }
        if !(self.confidence > 1.0) || !self.confidence.is_finite() {
            bail!(
                InvalidInput,
                "constraint on `{}` has confidence {}, must be finite and > 1",
                self.feature,
                self.confidence
            );
        }
        let h = self.perturbation();
        if h == 0.0 || !h.is_finite() {
            bail!(InvalidInput, "constraint on `{}` has perturbation {}", self.feature, h);
        }
        Ok(())
    }

    /// Resolves the feature name against the model's input columns.
    pub fn bind(&self, column_names: &[String]) -> Result<BoundConstraint> {
        self.validate()?;
        let mut hits = column_names.iter().enumerate().filter(|(_, c)| **c == self.feature);
        let column = match (hits.next(), hits.next()) {
            (Some((j, _)), None) => j,
            (None, _) => bail!(InvalidInput, "constraint feature `{}` is not an input column", self.feature),
            _ => bail!(InvalidInput, "constraint feature `{}` matches several columns", self.feature),
        };
        Ok(BoundConstraint {
            kind: self.kind,
            column,
            value: self.value,
            h: self.perturbation(),
        })
    }
}

/// A constraint resolved to a column index, ready for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstraint {
    pub kind: ConstraintKind,
    pub column: usize,
    pub value: f64,
    pub h: f64,
}

impl BoundConstraint {
    /// Signed shift applied to the column. The OR penalty probes `x - h`.
    pub fn shift(&self) -> f64 {
        match self.kind {
            ConstraintKind::Or => -self.h,
            ConstraintKind::Src | ConstraintKind::Rr => self.h,
        }
    }
}

/// `1` for SRC; for OR and RR `1/v`, or `1` when `v = 0`, which keeps
/// `v h` (the exponent in the penalty) at magnitude one.
pub fn default_perturbation(kind: ConstraintKind, value: f64) -> f64 {
    match kind {
        ConstraintKind::Src => 1.0,
        ConstraintKind::Or | ConstraintKind::Rr => {
            if value == 0.0 {
                1.0
            } else {
                1.0 / value
            }
        }
    }
}

/// Copy of `x` with `h` added to column `column`.
pub fn perturb(x: &Matrix, column: usize, h: f64) -> Result<Matrix> {
    if column >= x.ncols() {
        bail!(Dimension, "column {} out of range for {} columns", column, x.ncols());
    }
    if h == 0.0 || !h.is_finite() {
        bail!(InvalidInput, "perturbation must be finite and non-zero, got {}", h);
    }
    let mut out = x.clone();
    for i in 0..out.nrows() {
        out.row_mut(i)[column] += h;
    }
    Ok(out)
}

/// Penalty value with its gradient with respect to the unperturbed and
/// perturbed predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGrad {
    pub value: f64,
    pub d_base: Vec<f64>,
    pub d_shifted: Vec<f64>,
}

fn check_pair(base: &[f64], shifted: &[f64]) -> Result<()> {
    if base.len() != shifted.len() {
        bail!(Dimension, "{} base predictions, {} perturbed", base.len(), shifted.len());
    }
    if base.is_empty() {
        bail!(InvalidInput, "penalty over an empty batch");
    }
    if base.iter().chain(shifted).any(|v| !v.is_finite()) {
        bail!(NonFinite, "prediction in penalty term");
    }
    Ok(())
}

/// Residuals `r_k` with `∂r/∂shifted` folded into the returned gradients.
fn squared_mean(residuals: impl Iterator<Item = (f64, f64)>, n: usize) -> Result<TermGrad> {
    let nf = n as f64;
    let mut value = 0.0;
    let mut d_base = Vec::with_capacity(n);
    let mut d_shifted = Vec::with_capacity(n);
    for (r, dr_dshifted) in residuals {
        value += r * r;
        d_shifted.push(2.0 * r * dr_dshifted / nf);
        d_base.push(-2.0 * r / nf);
    }
    let value = value / nf;
    if !value.is_finite() {
        bail!(NonFinite, "penalty value {}", value);
    }
    Ok(TermGrad { value, d_base, d_shifted })
}

/// SRC penalty from predictions on `x` and on `x + h e_i`.
pub fn src_term(base: &[f64], shifted: &[f64], v: f64, h: f64) -> Result<TermGrad> {
    check_pair(base, shifted)?;
    let vh = v * h;
    squared_mean(base.iter().zip(shifted).map(|(&f, &fs)| (fs - vh - f, 1.0)), base.len())
}

/// OR penalty from probabilities on `x` and on `x - h e_i`.
pub fn or_term(base: &[f64], shifted: &[f64], v: f64, h: f64) -> Result<TermGrad> {
    check_pair(base, shifted)?;
    if base.iter().chain(shifted).any(|&p| !(p > 0.0 && p < 1.0)) {
        bail!(InvalidInput, "odds-ratio penalty needs probabilities strictly inside (0, 1)");
    }
    let q = libm::exp(v * h);
    squared_mean(
        base.iter().zip(shifted).map(|(&p, &ps)| {
            let denom = (q - 1.0) * ps + 1.0;
            let transformed = q * ps / denom;
            (transformed - p, q / (denom * denom))
        }),
        base.len(),
    )
}

/// RR penalty from rates on `x` and on `x + h e_i`.
pub fn rr_term(base: &[f64], shifted: &[f64], v: f64, h: f64) -> Result<TermGrad> {
    check_pair(base, shifted)?;
    if base.iter().chain(shifted).any(|&f| !(f > 0.0)) {
        bail!(InvalidInput, "risk-ratio penalty needs strictly positive predictions");
    }
    let scale = libm::exp(-v * h);
    squared_mean(base.iter().zip(shifted).map(|(&f, &fs)| (scale * fs - f, scale)), base.len())
}

fn term(c: &BoundConstraint, base: &[f64], shifted: &[f64]) -> Result<TermGrad> {
    match c.kind {
        ConstraintKind::Src => src_term(base, shifted, c.value, c.h),
        ConstraintKind::Or => or_term(base, shifted, c.value, c.h),
        ConstraintKind::Rr => rr_term(base, shifted, c.value, c.h),
    }
}

fn lmeta_with<F>(kind: ConstraintKind, predict: F, x: &Matrix, column: usize, v: f64, h: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let c = BoundConstraint { kind, column, value: v, h };
    let shifted = perturb(x, column, c.shift())?;
    Ok(term(&c, &predict(x)?, &predict(&shifted)?)?.value)
}

/// SRC penalty: `mean_k (f(X_k + h e_i) - v h - f(X_k))²`.
pub fn lmeta_src<F>(predict: F, x: &Matrix, column: usize, v: f64, h: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    lmeta_with(ConstraintKind::Src, predict, x, column, v, h)
}

/// OR penalty on probabilities; `v` is a log-odds coefficient and the
/// perturbed copy is `X - h e_i`.
pub fn lmeta_or<F>(predict: F, x: &Matrix, column: usize, v: f64, h: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    lmeta_with(ConstraintKind::Or, predict, x, column, v, h)
}

/// RR penalty: `mean_k (e^{-vh} f(X_k + h e_i) - f(X_k))²`.
pub fn lmeta_rr<F>(predict: F, x: &Matrix, column: usize, v: f64, h: f64) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    lmeta_with(ConstraintKind::Rr, predict, x, column, v, h)
}

/// Weights of the prediction loss (`lambda0`) and of each penalty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub lambda0: f64,
    pub lambdas: Vec<f64>,
}

impl LossWeights {
    /// Explicit weights. Each must lie in `(0, 1]` and together sum to one.
    pub fn new(lambda0: f64, lambdas: Vec<f64>) -> Result<Self> {
        let all = core::iter::once(lambda0).chain(lambdas.iter().copied());
        if all.clone().any(|l| !(l > 0.0 && l <= 1.0)) {
            bail!(InvalidInput, "loss weights must lie in (0, 1]");
        }
        let sum: f64 = all.sum();
        if (sum - 1.0).abs() > 1e-12 {
            bail!(InvalidInput, "loss weights sum to {}, expected 1", sum);
        }
        Ok(LossWeights { lambda0, lambdas })
    }

    /// Prediction loss only.
    pub fn agnostic() -> Self {
        LossWeights {
            lambda0: 1.0,
            lambdas: Vec::new(),
        }
    }
}

/// Log-scale relative normalization of confidence scores:
/// `λj = ln cj / Σk ln ck` over the data confidence `c0` and each
/// constraint's confidence.
pub fn lambda_weights(c0: f64, confidences: &[f64]) -> Result<LossWeights> {
    if core::iter::once(&c0).chain(confidences).any(|&c| !(c > 1.0) || !c.is_finite()) {
        bail!(InvalidInput, "confidence scores must be finite and > 1");
    }
    let l0 = libm::log(c0);
    let logs: Vec<f64> = confidences.iter().map(|&c| libm::log(c)).collect();
    let total = l0 + logs.iter().sum::<f64>();
    Ok(LossWeights {
        lambda0: l0 / total,
        lambdas: logs.into_iter().map(|l| l / total).collect(),
    })
}

/// Prediction loss and unweighted penalty values of one evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub total: f64,
    pub pred: f64,
    pub terms: Vec<f64>,
}

impl LossBreakdown {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda0 * self.pred + w.lambdas.iter().zip(&self.terms).map(|(l, t)| l * t).sum::<f64>()
    }
}

fn prediction_loss_from_probabilities(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        bail!(Dimension, "{} predictions for {} targets", p.len(), y.len());
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p)))
        .sum();
    Ok(total / p.len() as f64)
}

/// `λ0 L_pred + Σ λi L_meta,i` for an arbitrary predictor. `L_pred` is mean
/// squared error for regression and binary cross-entropy (on probabilities)
/// for classification. Errors from penalty `i` carry index `i`.
pub fn composite_loss<F>(
    predict: F,
    x: &Matrix,
    y: &[f64],
    constraints: &[BoundConstraint],
    weights: &LossWeights,
    task: Task,
) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    check_alignment(constraints, weights)?;
    let base = predict(x)?;
    let pred = match task {
        Task::Regression => mse(&base, y)?.0,
        Task::Classification => prediction_loss_from_probabilities(&base, y)?,
    };
    let mut total = weights.lambda0 * pred;
    for (i, (c, lambda)) in constraints.iter().zip(&weights.lambdas).enumerate() {
        let value = (|| {
            let shifted = predict(&perturb(x, c.column, c.shift())?)?;
            Ok::<_, Error>(term(c, &base, &shifted)?.value)
        })()
        .map_err(|e| e.in_term(i))?;
        total += lambda * value;
    }
    if !total.is_finite() {
        bail!(NonFinite, "composite loss {}", total);
    }
    Ok(total)
}

fn check_alignment(constraints: &[BoundConstraint], weights: &LossWeights) -> Result<()> {
    if constraints.len() != weights.lambdas.len() {
        bail!(
            Dimension,
            "{} constraints but {} penalty weights",
            constraints.len(),
            weights.lambdas.len()
        );
    }
    Ok(())
}

/// The composite objective as a differentiable function of network
/// parameters on one batch.
#[derive(Debug, Clone, Copy)]
pub struct CompositeObjective<'a> {
    task: Task,
    constraints: &'a [BoundConstraint],
    weights: &'a LossWeights,
}

impl<'a> CompositeObjective<'a> {
    pub fn new(task: Task, constraints: &'a [BoundConstraint], weights: &'a LossWeights) -> Result<Self> {
        check_alignment(constraints, weights)?;
        Ok(CompositeObjective {
            task,
            constraints,
            weights,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn weights(&self) -> &LossWeights {
        self.weights
    }

    fn perturbed_inputs(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, c)| perturb(x, c.column, c.shift()).map_err(|e| e.in_term(i)))
            .collect()
    }

    /// Loss breakdown and parameter gradient on batch `(x, y)`.
    pub fn evaluate(&self, params: &MlpParams, x: &Matrix, y: &[f64]) -> Result<(LossBreakdown, MlpParams)> {
        let perturbed = self.perturbed_inputs(x)?;
        let mut inputs: Vec<&Matrix> = Vec::with_capacity(perturbed.len() + 1);
        inputs.push(x);
        inputs.extend(perturbed.iter());
        let mut breakdown = LossBreakdown::default();
        let head = params.head();
        let (total, grad) = loss_and_grad(params, &inputs, |passes| {
            let base = &passes[0];
            let (pred, mut d_base) = match self.task {
                Task::Regression => mse(base.outputs, y)?,
                Task::Classification => bce_with_logits(base.logits, y)?,
            };
            d_base.iter_mut().for_each(|g| *g *= self.weights.lambda0);
            let mut total = self.weights.lambda0 * pred;
            let mut grads = Vec::with_capacity(passes.len());
            grads.push(Vec::new());
            breakdown.pred = pred;
            for (i, (c, lambda)) in self.constraints.iter().zip(&self.weights.lambdas).enumerate() {
                let shifted: &PassOutputs<'_> = &passes[i + 1];
                let t = term(c, base.outputs, shifted.outputs).map_err(|e| e.in_term(i))?;
                total += lambda * t.value;
                breakdown.terms.push(t.value);
                for (k, g) in d_base.iter_mut().enumerate() {
                    *g += lambda * t.d_base[k] * head.derivative_from_output(base.outputs[k]);
                }
                grads.push(
                    t.d_shifted
                        .iter()
                        .zip(shifted.outputs)
                        .map(|(d, &o)| lambda * d * head.derivative_from_output(o))
                        .collect(),
                );
            }
            grads[0] = d_base;
            Ok((total, grads))
        })?;
        breakdown.total = total;
        Ok((breakdown, grad))
    }

    /// Loss breakdown without the backward pass.
    pub fn value(&self, params: &MlpParams, x: &Matrix, y: &[f64]) -> Result<LossBreakdown> {
        let base = crate::nn::forward_pass(params, x)?;
        let pred = match self.task {
            Task::Regression => mse(&base.outputs, y)?.0,
            Task::Classification => bce_with_logits(&base.logits, y)?.0,
        };
        let mut out = LossBreakdown {
            total: self.weights.lambda0 * pred,
            pred,
            terms: Vec::with_capacity(self.constraints.len()),
        };
        for (i, (c, lambda)) in self.constraints.iter().zip(&self.weights.lambdas).enumerate() {
            let value = (|| {
                let shifted = crate::nn::forward(params, &perturb(x, c.column, c.shift())?)?;
                Ok::<_, Error>(term(c, &base.outputs, &shifted)?.value)
            })()
            .map_err(|e| e.in_term(i))?;
            out.total += lambda * value;
            out.terms.push(value);
        }
        if !out.total.is_finite() {
            bail!(NonFinite, "composite loss {}", out.total);
        }
        Ok(out)
    }

    /// Human-readable label of penalty `i`, e.g. `SRC(mercury)`.
    pub fn term_label(&self, i: usize, column_names: &[String]) -> String {
        let c = &self.constraints[i];
        let name = column_names.get(c.column).map_or_else(|| c.column.to_string(), Clone::clone);
        alloc::format!("{}({})", c.kind, name)
    }
}
