//! Column standardization. Standard deviations use the population
//! convention (divide by n).

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::DataMatrix;
use crate::error::{bail, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            bail!(Dimension, "{} means for {} standard deviations", means.len(), stds.len());
        }
        if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            bail!(InvalidInput, "standard deviations must be finite and strictly positive");
        }
        Ok(Standardizer { means, stds })
    }

    /// Fits per-column means and population standard deviations. `names` is
    /// only used to label the error for a constant column.
    pub fn fit(x: &Matrix, names: &[String]) -> Result<Self> {
        if x.nrows() == 0 {
            bail!(InvalidInput, "cannot standardize an empty matrix");
        }
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let mean = x.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = x.rows().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            let std = libm::sqrt(var);
            if !(std > 1e-12 * mean.abs().max(1.0)) {
                let name = names.get(j).cloned().unwrap_or_else(|| alloc::format!("#{j}"));
                return Err(Error::ConstantColumn(name));
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Standardizer { means, stds })
    }

    pub fn fit_data(data: &DataMatrix) -> Result<Self> {
        Self::fit(data.values(), data.column_names())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.means.len() {
            bail!(Dimension, "standardizer fitted on {} columns, got {}", self.means.len(), x.ncols());
        }
        let mut out = x.clone();
        for i in 0..out.nrows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }

    pub fn apply_data(&self, data: &DataMatrix) -> Result<DataMatrix> {
        data.with_values(self.apply(data.values())?)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Keeps the statistics of the listed columns, in order.
    pub fn select(&self, columns: &[usize]) -> Standardizer {
        Standardizer {
            means: columns.iter().map(|&j| self.means[j]).collect(),
            stds: columns.iter().map(|&j| self.stds[j]).collect(),
        }
    }
}

/// Fits a standardizer on training data.
pub fn fit_standardizer(x: &Matrix, names: &[String]) -> Result<Standardizer> {
    Standardizer::fit(x, names)
}

pub fn apply_standardizer(s: &Standardizer, x: &Matrix) -> Result<Matrix> {
    s.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn one_two_three() {
        let x = col(&[1.0, 2.0, 3.0]);
        let s = Standardizer::fit(&x, &[]).unwrap();
        assert_eq!(s.means(), &[2.0]);
        assert!((s.stds()[0] - 0.816496580927726).abs() < 1e-12);
        let z = s.apply(&x).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_column_is_fixed_point() {
        let z = col(&[-1.224744871391589, 0.0, 1.224744871391589]);
        let s = Standardizer::fit(&z, &[]).unwrap();
        let again = s.apply(&z).unwrap();
        for (a, b) in again.as_slice().iter().zip(z.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_named_in_error() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let names = vec!["a".to_string(), "dose".to_string()];
        assert_eq!(Standardizer::fit(&x, &names), Err(Error::ConstantColumn("dose".to_string())));
    }

    #[test]
    fn apply_to_fit_data_centres_and_scales() {
        let x = Matrix::from_rows(&[
            vec![1.0, 10.0],
            vec![4.0, -3.0],
            vec![2.5, 7.0],
            vec![-8.0, 0.5],
        ])
        .unwrap();
        let s = Standardizer::fit(&x, &[]).unwrap();
        let z = s.apply(&x).unwrap();
        for j in 0..2 {
            let c = z.column(j);
            let mean = c.iter().sum::<f64>() / 4.0;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((libm::sqrt(var) - 1.0).abs() < 1e-9);
        }
    }
}
