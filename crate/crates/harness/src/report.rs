//! Report files written after a grid finishes.
//!
//! - `results.csv`: one row per trained model.
//! - `summary.json`: medians and interquartile ranges per level and model.
//! - `shap_<experiment>_<model>.csv`: model and reference attributions for
//!   every test point, feature and run.
//! - `config.lock.json`: the resolved configuration; running it again
//!   reproduces `results.csv` byte for byte.
//! - `histories/` and `models/`: per-run training curves and model files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seann_core::{MetricName, MetricRecord};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiments::ExperimentOutcome;
use crate::io::{create, csv_error, csv_writer, write_history};
use crate::pipeline::{ModelTag, RunResult, ViewMap};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOCK_FILE: &str = "config.lock.json";

const FIXED_COLUMNS: [&str; 12] = [
    "experiment",
    "model_tag",
    "level",
    "seed",
    "metric",
    "metric_value",
    "n_test",
    "test_loss",
    "sum_delta_shap",
    "stopped_epoch",
    "best_epoch",
    "lambda0",
];

pub fn shap_file_name(experiment: ExperimentKind, tag: ModelTag) -> String {
    format!("shap_{}_{}.csv", experiment.as_str(), tag.as_str())
}

fn run_stem(tag: ModelTag, level_index: usize, seed: u64) -> String {
    format!("{}_level{level_index}_seed{seed}", tag.as_str())
}

/// Writes every report into `dir` and returns the paths written.
pub fn emit_reports(outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    if outcome.pairs.is_empty() {
        return Err(HarnessError::Config("no results to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let config = &outcome.config;
    let features = config.model_columns();
    let mut written = Vec::new();

    let results = outcome.results();
    let path = dir.join(RESULTS_FILE);
    write_results(&path, config.experiment, &features, &results)?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    write_json(&path, &Summary::new(config, &results)?)?;
    written.push(path);

    for tag in [ModelTag::Agnostic, ModelTag::Seann] {
        let path = dir.join(shap_file_name(config.experiment, tag));
        let mut w = csv_writer(&path)?;
        w.write_record(["level", "seed", "test_row", "feature", "x", "phi_model", "phi_reference"])
            .map_err(|e| csv_error(&path, e))?;
        for pair in &outcome.pairs {
            let run = pair.get(tag);
            let (level, seed) = (pair.level.to_string(), pair.seed.to_string());
            for i in 0..run.shap.points.nrows() {
                for (j, name) in features.iter().enumerate() {
                    let record = [
                        level.as_str(),
                        seed.as_str(),
                        &i.to_string(),
                        name,
                        &run.test_raw.get(i, j).to_string(),
                        &run.shap.phi_model.get(i, j).to_string(),
                        &run.shap.phi_reference.get(i, j).to_string(),
                    ];
                    w.write_record(record).map_err(|e| csv_error(&path, e))?;
                }
            }
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }

    let path = dir.join(LOCK_FILE);
    write_json(&path, config)?;
    written.push(path);

    for pair in &outcome.pairs {
        for tag in [ModelTag::Agnostic, ModelTag::Seann] {
            let stem = run_stem(tag, pair.level_index, pair.seed);
            let run = pair.get(tag);
            let path = dir.join("histories").join(format!("{stem}.csv"));
            write_history(&path, &run.file.model)?;
            written.push(path);
            let path = dir.join("models").join(format!("{stem}.json"));
            run.file.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| HarnessError::format(path, e))?;
    f.write_all(b"\n").map_err(|e| HarnessError::io(path, e))
}

pub fn write_results(path: &Path, experiment: ExperimentKind, features: &[String], results: &[RunResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(features.iter().map(|f| format!("delta_shap_{f}")));
    header.extend(features.iter().map(|f| format!("shap_slope_{f}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in results {
        let mut row = vec![
            experiment.as_str().to_string(),
            r.model_tag.as_str().to_string(),
            r.level.to_string(),
            r.seed.to_string(),
            r.metric.name.as_str().to_string(),
            r.metric.value.to_string(),
            r.metric.n.to_string(),
            r.test_loss.to_string(),
            r.sum_delta_shap.to_string(),
            r.stopped_epoch.to_string(),
            r.best_epoch.to_string(),
            r.lambda0.to_string(),
        ];
        row.extend(r.delta_shap.iter().map(f64::to_string));
        row.extend(r.shap_slope.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Parses a `results.csv`, returning the feature names and the rows.
pub fn read_results(path: &Path) -> Result<(Vec<String>, Vec<RunResult>)> {
    let bad = |m: String| HarnessError::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let extra = header.len().checked_sub(FIXED_COLUMNS.len()).filter(|n| n % 2 == 0);
    let p = extra.ok_or_else(|| bad("unexpected number of columns".into()))? / 2;
    if header.iter().take(FIXED_COLUMNS.len()).ne(FIXED_COLUMNS) {
        return Err(bad("unexpected header".into()));
    }
    let features: Vec<String> = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .take(p)
        .map(|h| h.trim_start_matches("delta_shap_").to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = |j: usize| record.get(j).unwrap_or_default();
        let num = |j: usize| -> Result<f64> {
            field(j).parse().map_err(|_| bad(format!("row {}: `{}` is not a number", i + 1, field(j))))
        };
        let int = |j: usize| -> Result<u64> {
            field(j).parse().map_err(|_| bad(format!("row {}: `{}` is not an integer", i + 1, field(j))))
        };
        let model_tag = match field(1) {
            "agnostic" => ModelTag::Agnostic,
            "seann" => ModelTag::Seann,
            other => return Err(bad(format!("row {}: unknown model tag `{other}`", i + 1))),
        };
        let name = match field(4) {
            "r2" => MetricName::R2,
            "roc_auc" => MetricName::RocAuc,
            other => return Err(bad(format!("row {}: unknown metric `{other}`", i + 1))),
        };
        let k = FIXED_COLUMNS.len();
        rows.push(RunResult {
            model_tag,
            level: num(2)?,
            seed: int(3)?,
            metric: MetricRecord { name, value: num(5)?, n: int(6)? as usize },
            test_loss: num(7)?,
            sum_delta_shap: num(8)?,
            stopped_epoch: int(9)? as usize,
            best_epoch: int(10)? as usize,
            lambda0: num(11)?,
            delta_shap: (k..k + p).map(num).collect::<Result<_>>()?,
            shap_slope: (k + p..k + 2 * p).map(num).collect::<Result<_>>()?,
        });
    }
    Ok((features, rows))
}

/// Median and quartiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        Stat { median, q1, q3, iqr: q3 - q1 }
    }
}

/// Quantile of sorted data; NaN for an empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// How a model input relates to the constrained inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    /// Carries a constraint.
    Informed,
    /// Unconstrained, but correlated with a constrained input.
    CorrelatedUninformed,
    Uncorrelated,
}

/// Roles of the model inputs, judged on the scenario covariance.
pub fn feature_roles(config: &ExperimentConfig) -> Result<Vec<FeatureRole>> {
    let map = ViewMap::new(&config.scenario.column_names, &config.inputs)?;
    let informed: Vec<usize> = config
        .constraints
        .iter()
        .filter_map(|c| map.model_columns.iter().position(|m| *m == c.feature))
        .collect();
    let cov = &config.scenario.covariance;
    Ok((0..map.model_columns.len())
        .map(|j| {
            if informed.contains(&j) {
                FeatureRole::Informed
            } else if informed.iter().any(|&k| cov[map.source_index[j]][map.source_index[k]] != 0.0) {
                FeatureRole::CorrelatedUninformed
            } else {
                FeatureRole::Uncorrelated
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub metric: MetricName,
    pub levels: Vec<LevelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub agnostic: ModelSummary,
    pub seann: ModelSummary,
}

impl LevelSummary {
    pub fn get(&self, tag: ModelTag) -> &ModelSummary {
        match tag {
            ModelTag::Agnostic => &self.agnostic,
            ModelTag::Seann => &self.seann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub runs: usize,
    pub metric: Stat,
    pub test_loss: Stat,
    pub sum_delta_shap: Stat,
    pub stopped_epoch: Stat,
    pub features: Vec<FeatureSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub role: FeatureRole,
    pub delta_shap: Stat,
    pub shap_slope: Stat,
}

impl Summary {
    /// Summarizes `results` level by level in the order the levels appear
    /// in the configuration.
    pub fn new(config: &ExperimentConfig, results: &[RunResult]) -> Result<Summary> {
        let first = results.first().ok_or_else(|| HarnessError::Config("no results to summarize".into()))?;
        let features = config.model_columns();
        let roles = feature_roles(config)?;
        let model = |level: f64, tag: ModelTag| {
            let runs: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.model_tag == tag && r.level.to_bits() == level.to_bits())
                .collect();
            let stat = |f: &dyn Fn(&RunResult) -> f64| Stat::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
            ModelSummary {
                runs: runs.len(),
                metric: stat(&|r| r.metric.value),
                test_loss: stat(&|r| r.test_loss),
                sum_delta_shap: stat(&|r| r.sum_delta_shap),
                stopped_epoch: stat(&|r| r.stopped_epoch as f64),
                features: features
                    .iter()
                    .enumerate()
                    .map(|(j, name)| FeatureSummary {
                        feature: name.clone(),
                        role: roles[j],
                        delta_shap: stat(&|r| r.delta_shap[j]),
                        shap_slope: stat(&|r| r.shap_slope[j]),
                    })
                    .collect(),
            }
        };
        Ok(Summary {
            experiment: config.experiment,
            metric: first.metric.name,
            levels: config
                .corruption
                .levels
                .iter()
                .map(|&level| LevelSummary {
                    level,
                    agnostic: model(level, ModelTag::Agnostic),
                    seann: model(level, ModelTag::Seann),
                })
                .collect(),
        })
    }

    pub fn level(&self, level: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| l.level == level)
    }
}
