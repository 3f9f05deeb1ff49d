use alloc::vec::Vec;

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricName {
    R2,
    RocAuc,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::R2 => "r2",
            MetricName::RocAuc => "roc_auc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRecord {
    pub name: MetricName,
    pub value: f64,
    pub n: usize,
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        bail!(Dimension, "{} targets for {} predictions", y_true.len(), y_pred.len());
    }
    if y_true.len() < 2 {
        return Err(Error::UndefinedMetric("r2 needs at least two observations"));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 of a constant target"));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Area under the ROC curve in its Mann-Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// Computed from mid-ranks in `O(n log n)`. Labels are positive when `> 0.5`.
pub fn roc_auc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        bail!(Dimension, "{} labels for {} scores", labels.len(), scores.len());
    }
    if scores.iter().any(|s| s.is_nan()) {
        bail!(NonFinite, "NaN score");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut n_pos = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based mid-rank of the tie block i..=j
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] > 0.5 {
                rank_sum_pos += mid;
                n_pos += 1;
            }
        }
        i = j + 1;
    }
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both classes"));
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}
