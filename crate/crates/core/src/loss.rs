//! Prediction losses. Gradients are taken with respect to the network's
//! pre-head output (the logit for classification).

use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        bail!(Dimension, "{} predictions for {} targets", a, b);
    }
    if a == 0 {
        bail!(InvalidInput, "loss over an empty batch");
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred.len(), target.len())?;
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&f, &y)| {
            let r = f - y;
            total += r * r;
            2.0 * r / n
        })
        .collect();
    Ok((total / n, grad))
}

/// Binary cross-entropy evaluated from logits, with gradient with respect to
/// the logits. Targets may be soft labels in `[0, 1]`.
pub fn bce_with_logits(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(logits.len(), target.len())?;
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(target)
        .map(|(&z, &y)| {
            total += softplus(z) - y * z;
            (sigmoid(z) - y) / n
        })
        .collect();
    Ok((total / n, grad))
}
