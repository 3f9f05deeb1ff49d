//! Exact interventional Shapley values by coalition enumeration.
//!
//! The value of a coalition `S` at point `x` is the mean prediction over
//! background rows `b` of the hybrid point taking `x` on `S` and `b`
//! elsewhere. All `2^p` coalition values are computed once per point, so the
//! cost is `2^p * B` predictions for `p` features and `B` background rows.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::synth::GenerativeFunction;

/// Largest feature count accepted by the enumeration.
pub const MAX_FEATURES: usize = 12;

/// `|S|! (p - |S| - 1)! / p!` indexed by `|S|`.
fn coalition_weights(p: usize) -> Vec<f64> {
    let mut fact = vec![1.0f64; p + 1];
    for k in 1..=p {
        fact[k] = fact[k - 1] * k as f64;
    }
    (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect()
}

/// Coalition values `v(S)` for every bitmask `S` over the features.
fn coalition_values<F>(predict: &F, x: &[f64], background: &Matrix) -> Result<Vec<f64>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let p = x.len();
    let b = background.nrows();
    let mut values = Vec::with_capacity(1 << p);
    let mut hybrid = background.clone();
    for mask in 0usize..(1 << p) {
        for i in 0..b {
            let src = background.row(i);
            let row = hybrid.row_mut(i);
            for j in 0..p {
                row[j] = if mask & (1 << j) != 0 { x[j] } else { src[j] };
            }
        }
        let preds = predict(&hybrid)?;
        if preds.len() != b {
            bail!(Dimension, "predictor returned {} values for {} rows", preds.len(), b);
        }
        let v = preds.iter().sum::<f64>() / b as f64;
        if !v.is_finite() {
            bail!(NonFinite, "prediction while evaluating coalition {:#b}", mask);
        }
        values.push(v);
    }
    Ok(values)
}

/// Shapley values of `predict` at `x` against `background`, plus the base
/// value `v(∅)` (the mean background prediction).
pub fn exact_shapley_with_base<F>(predict: F, x: &[f64], background: &Matrix) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let p = x.len();
    if p == 0 || p > MAX_FEATURES {
        bail!(InvalidInput, "exact Shapley enumeration supports 1..={} features, got {}", MAX_FEATURES, p);
    }
    if background.nrows() == 0 {
        bail!(InvalidInput, "background set is empty");
    }
    if background.ncols() != p {
        bail!(Dimension, "background has {} columns, point has {}", background.ncols(), p);
    }
    let values = coalition_values(&predict, x, background)?;
    let weights = coalition_weights(p);
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut acc = 0.0;
        for mask in 0..(1usize << p) {
            if mask & bit == 0 {
                acc += weights[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
            }
        }
        *phi_j = acc;
    }
    Ok((phi, values[0]))
}

/// Shapley values of `predict` at `x` under the interventional value
/// function over `background`.
pub fn exact_shapley<F>(predict: F, x: &[f64], background: &Matrix) -> Result<Vec<f64>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    exact_shapley_with_base(predict, x, background).map(|(phi, _)| phi)
}

/// Shapley values for every row of `points`, one output row per point.
pub fn shapley_matrix<F>(predict: F, points: &Matrix, background: &Matrix) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let mut out = Matrix::zeros(points.nrows(), points.ncols());
    for (i, x) in points.rows().enumerate() {
        let phi = exact_shapley(&predict, x, background)?;
        out.row_mut(i).copy_from_slice(&phi);
    }
    Ok(out)
}

/// Shapley values of the true generating function, with the same background
/// as the model being judged.
pub fn reference_shapley(function: &GenerativeFunction, x: &[f64], background: &Matrix) -> Result<Vec<f64>> {
    exact_shapley(|m: &Matrix| function.predict(m), x, background)
}

/// Per-feature mean absolute difference between two Shapley matrices, and
/// its sum over features.
pub fn delta_shap(phi_model: &Matrix, phi_reference: &Matrix) -> Result<(Vec<f64>, f64)> {
    if phi_model.nrows() != phi_reference.nrows() || phi_model.ncols() != phi_reference.ncols() {
        bail!(
            Dimension,
            "Shapley matrices differ in shape: {}x{} vs {}x{}",
            phi_model.nrows(),
            phi_model.ncols(),
            phi_reference.nrows(),
            phi_reference.ncols()
        );
    }
    if phi_model.nrows() == 0 {
        bail!(InvalidInput, "no rows to compare");
    }
    let n = phi_model.nrows() as f64;
    let per_feature: Vec<f64> = (0..phi_model.ncols())
        .map(|j| {
            phi_model
                .rows()
                .zip(phi_reference.rows())
                .map(|(a, b)| (a[j] - b[j]).abs())
                .sum::<f64>()
                / n
        })
        .collect();
    let sum = per_feature.iter().sum();
    Ok((per_feature, sum))
}

/// Model and reference Shapley values over a set of explained points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapReport {
    pub feature_names: Vec<String>,
    /// Explained points in model input units, one row per point.
    pub points: Matrix,
    pub phi_model: Matrix,
    pub phi_reference: Matrix,
    /// Free-form identifier of the background set.
    pub background_id: String,
    pub background_size: usize,
    /// Always `"interventional"`.
    pub value_function: String,
    pub delta_shap: Vec<f64>,
    pub sum_delta_shap: f64,
}

impl ShapReport {
    pub fn new(
        feature_names: Vec<String>,
        points: Matrix,
        phi_model: Matrix,
        phi_reference: Matrix,
        background_id: String,
        background_size: usize,
    ) -> Result<Self> {
        if feature_names.len() != phi_model.ncols() || points.ncols() != phi_model.ncols() || points.nrows() != phi_model.nrows() {
            bail!(Dimension, "Shapley report columns do not line up");
        }
        let (delta_shap, sum_delta_shap) = delta_shap(&phi_model, &phi_reference)?;
        Ok(ShapReport {
            feature_names,
            points,
            phi_model,
            phi_reference,
            background_id,
            background_size,
            value_function: String::from("interventional"),
            delta_shap,
            sum_delta_shap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn background() -> Matrix {
        Matrix::from_rows(&[
            vec![0.2, -1.0, 0.5],
            vec![1.1, 0.3, -0.4],
            vec![-0.6, 0.9, 0.0],
            vec![0.0, -0.2, 1.3],
        ])
        .unwrap()
    }

    #[test]
    fn weights_sum_over_coalitions_to_one() {
        for p in 1..8usize {
            let w = coalition_weights(p);
            // Σ_s C(p-1, s) w[s] = 1
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += binom * ws;
                binom = binom * (p - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_closed_form() {
        let beta = [2.0, -3.0, 0.5];
        let f = |m: &Matrix| Ok(m.rows().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect());
        let bg = background();
        let x = [1.0, 2.0, -1.0];
        let phi = exact_shapley(f, &x, &bg).unwrap();
        for j in 0..3 {
            let mean = bg.column(j).iter().sum::<f64>() / 4.0;
            assert!((phi[j] - beta[j] * (x[j] - mean)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_predictor_gives_zero() {
        let phi = exact_shapley(|m: &Matrix| Ok(vec![4.2; m.nrows()]), &[1.0, 2.0, 3.0], &background()).unwrap();
        assert!(phi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_oversized_and_empty() {
        let big = Matrix::zeros(1, 13);
        assert!(exact_shapley(|m: &Matrix| Ok(vec![0.0; m.nrows()]), &[0.0; 13], &big).is_err());
        let empty = Matrix::zeros(0, 2);
        assert!(exact_shapley(|m: &Matrix| Ok(vec![0.0; m.nrows()]), &[0.0; 2], &empty).is_err());
        let nan = |m: &Matrix| Ok(vec![f64::NAN; m.nrows()]);
        assert!(exact_shapley(nan, &[0.0; 3], &background()).is_err());
    }

    #[test]
    fn delta_shap_hand_cases() {
        let a = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.4, 1.0]]).unwrap();
        assert_eq!(delta_shap(&a, &a).unwrap(), (vec![0.0, 0.0], 0.0));
        let mut b = a.clone();
        b.as_mut_slice().iter_mut().for_each(|v| *v += 0.5);
        let (d, s) = delta_shap(&b, &a).unwrap();
        assert!(d.iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert!((s - 1.0).abs() < 1e-12);
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let minus = Matrix::from_rows(&[vec![-1.0]]).unwrap();
        assert_eq!(delta_shap(&one, &minus).unwrap().1, 2.0);
        assert!(delta_shap(&a, &one).is_err());
    }

    #[test]
    fn reference_at_origin() {
        let f = GenerativeFunction::AdditiveCosine { betas: vec![1.0, 1.0, -2.0, 5.0, 10.0] };
        let bg = Matrix::from_rows(&[
            vec![0.5, -0.5, 1.0, 0.3],
            vec![-0.5, 0.5, -1.0, -0.3],
        ])
        .unwrap();
        let phi = reference_shapley(&f, &[0.0; 4], &bg).unwrap();
        assert!(phi[..3].iter().all(|v| v.abs() < 1e-12));
        let expect = 10.0 * (1.0 - libm::cos(0.3));
        assert!((phi[3] - expect).abs() < 1e-12);
    }
}
