//! Dataset, training-history and model files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seann_core::{DataMatrix, GenerativeFunction, Matrix, Standardizer, TrainedModel};

use crate::error::{HarnessError, Result};
use crate::pipeline::ViewMap;

/// Name of the target column in dataset files.
pub const TARGET_COLUMN: &str = "target";

pub(crate) fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::format(path, e)
}

/// Writes `data` as CSV: the column names, then `target`.
pub fn write_dataset(path: &Path, data: &DataMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = data.column_names().iter().map(String::as_str).collect();
    header.push(TARGET_COLUMN);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, y) in data.values().rows().zip(data.target()) {
        let record: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| v.to_string()).collect();
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a dataset CSV. The target column is optional; without it the
/// target is all zeros.
pub fn read_dataset(path: &Path) -> Result<DataMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let target_at = header.iter().position(|h| h == TARGET_COLUMN);
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != target_at)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut values = Vec::new();
    let mut target = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| HarnessError::format(path, format!("row {}: `{field}` is not a number", i + 1)))?;
            if Some(j) == target_at {
                target.push(v);
            } else {
                values.push(v);
            }
        }
        if target_at.is_none() {
            target.push(0.0);
        }
    }
    let rows = target.len();
    let matrix = Matrix::new(rows, names.len(), values).map_err(|e| HarnessError::format(path, e))?;
    DataMatrix::new(matrix, names, target).map_err(|e| HarnessError::format(path, e))
}

/// Writes one row per epoch: totals, the prediction loss and each penalty,
/// for both splits.
pub fn write_history(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut w = csv_writer(path)?;
    let labels: Vec<String> = model.constraints.iter().map(|c| format!("{}({})", c.kind, c.feature)).collect();
    let mut header = vec!["epoch".to_string(), "train_total".into(), "val_total".into(), "monitored".into()];
    header.push("train_pred".into());
    header.extend(labels.iter().map(|l| format!("train_{l}")));
    header.push("val_pred".into());
    header.extend(labels.iter().map(|l| format!("val_{l}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for rec in &model.history {
        let mut row = vec![
            rec.epoch.to_string(),
            rec.train.total.to_string(),
            rec.val.total.to_string(),
            rec.monitored.to_string(),
            rec.train.pred.to_string(),
        ];
        row.extend(rec.train.terms.iter().map(f64::to_string));
        row.push(rec.val.pred.to_string());
        row.extend(rec.val.terms.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// A trained model with what `pes-nn shap` needs to explain it: the
/// background it was explained against and, when the data-generating
/// function is known, how to compute reference attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: TrainedModel,
    /// Standardized model inputs.
    pub background: Matrix,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub function: GenerativeFunction,
    pub view: ViewMap,
    /// Standardizer of the scenario columns.
    pub standardizer: Standardizer,
    /// Standardized scenario columns, same rows as the model background.
    pub background: Matrix,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = create(path)?;
        serde_json::to_writer(&mut f, self).map_err(|e| HarnessError::format(path, e))?;
        f.write_all(b"\n").map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| HarnessError::format(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = DataMatrix::new(
            Matrix::from_rows(&[vec![0.1, -2.5], vec![1e-7, 3.0]]).unwrap(),
            vec!["a".into(), "b".into()],
            vec![1.0, 0.0],
        )
        .unwrap();
        write_dataset(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("a,b,target\n"));
        assert_eq!(read_dataset(&path).unwrap(), data);
    }

    #[test]
    fn dataset_without_target_reads_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y\n1,2\n3,4\n").unwrap();
        let data = read_dataset(&path).unwrap();
        assert_eq!(data.target(), &[0.0, 0.0]);
        assert_eq!(data.values().row(1), &[3.0, 4.0]);
    }

    #[test]
    fn bad_number_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,target\n1,0\nfoo,1\n").unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }
}
