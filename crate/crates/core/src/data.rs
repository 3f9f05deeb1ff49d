use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::matrix::Matrix;

/// Feature matrix with named columns and a target vector.
///
/// The target is continuous for regression and a label in `[0, 1]` for
/// classification (hard labels are `0.0`/`1.0`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataMatrix {
    values: Matrix,
    column_names: Vec<String>,
    target: Vec<f64>,
}

impl DataMatrix {
    pub fn new(values: Matrix, column_names: Vec<String>, target: Vec<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            bail!(InvalidInput, "data matrix must have at least one row and one column");
        }
        if column_names.len() != values.ncols() {
            bail!(
                Dimension,
                "{} column names for {} columns",
                column_names.len(),
                values.ncols()
            );
        }
        if target.len() != values.nrows() {
            bail!(Dimension, "{} targets for {} rows", target.len(), values.nrows());
        }
        for (j, name) in column_names.iter().enumerate() {
            if column_names[..j].contains(name) {
                bail!(InvalidInput, "duplicate column name `{}`", name);
            }
        }
        if !values.is_finite() {
            bail!(NonFinite, "feature matrix contains non-finite entries");
        }
        if target.iter().any(|t| !t.is_finite()) {
            bail!(NonFinite, "target contains non-finite entries");
        }
        Ok(DataMatrix {
            values,
            column_names,
            target,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        match self.column_names.iter().position(|c| c == name) {
            Some(j) => Ok(j),
            None => bail!(InvalidInput, "unknown column `{}`", name),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select_rows(indices),
            column_names: self.column_names.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Replaces the feature values, keeping names and target.
    pub fn with_values(&self, values: Matrix) -> Result<DataMatrix> {
        DataMatrix::new(values, self.column_names.clone(), self.target.clone())
    }

    pub fn into_parts(self) -> (Matrix, Vec<String>, Vec<f64>) {
        (self.values, self.column_names, self.target)
    }
}
