//! One paired run: both models trained on byte-identical splits for a given
//! corruption level and seed, then scored on the clean test split.

use serde::{Deserialize, Serialize};

use seann_core::explain::shapley_matrix;
use seann_core::rng::{derive_seed, seeded};
use seann_core::synth::{gen_classification_targets, split, threshold_labels};
use seann_core::trainer::evaluate;
use seann_core::{
    lambda_weights, CorruptionSpec, DataMatrix, GenerativeFunction, LabelRule, Task, LossWeights, Matrix, MetricRecord, PreparedData,
    ScenarioConfig, ShapReport, Standardizer,
};

use crate::config::{ExperimentConfig, InputView, WeightScheme};
use crate::error::{HarnessError, Result};
use crate::io::{ModelFile, ReferenceSpec};

const TAG_DATA: u64 = 101;
const TAG_SPLIT: u64 = 102;
const TAG_CORRUPT_TRAIN: u64 = 103;
const TAG_CORRUPT_VAL: u64 = 104;
const TAG_TRAIN: u64 = 105;
const TAG_BACKGROUND: u64 = 106;
const TAG_TEST_LABELS: u64 = 107;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Agnostic,
    Seann,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Agnostic => "agnostic",
            ModelTag::Seann => "seann",
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_tag: ModelTag,
    pub level: f64,
    pub seed: u64,
    pub metric: MetricRecord,
    pub test_loss: f64,
    pub delta_shap: Vec<f64>,
    pub sum_delta_shap: f64,
    /// Least-squares slope of each feature's model Shapley values against
    /// the feature value, over the test points.
    pub shap_slope: Vec<f64>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub lambda0: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub shap: ShapReport,
    /// Raw (unstandardized) test inputs of the model.
    pub test_raw: Matrix,
    pub file: ModelFile,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub level_index: usize,
    pub level: f64,
    pub seed: u64,
    pub agnostic: RunArtifacts,
    pub seann: RunArtifacts,
}

impl PairOutcome {
    pub fn get(&self, tag: ModelTag) -> &RunArtifacts {
        match tag {
            ModelTag::Agnostic => &self.agnostic,
            ModelTag::Seann => &self.seann,
        }
    }
}

/// Column bookkeeping from scenario columns to model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMap {
    pub source_columns: Vec<String>,
    pub model_columns: Vec<String>,
    /// Scenario column feeding each model input.
    pub source_index: Vec<usize>,
    /// Scenario column whose reference Shapley values each model input is
    /// compared against.
    pub reference_index: Vec<usize>,
}

impl ViewMap {
    pub fn new(source_columns: &[String], view: &InputView) -> Result<Self> {
        let find = |name: &str| {
            source_columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| HarnessError::Config(format!("unknown column `{name}`")))
        };
        let mut model_columns = Vec::new();
        let mut source_index = Vec::new();
        let mut reference_index = Vec::new();
        for (j, c) in source_columns.iter().enumerate() {
            if !view.drop.contains(c) {
                model_columns.push(c.clone());
                source_index.push(j);
                reference_index.push(j);
            }
        }
        for d in &view.duplicate {
            model_columns.push(d.name.clone());
            source_index.push(find(&d.source)?);
            reference_index.push(find(&d.reference)?);
        }
        Ok(ViewMap {
            source_columns: source_columns.to_vec(),
            model_columns,
            source_index,
            reference_index,
        })
    }

    pub fn apply(&self, data: &DataMatrix) -> Result<DataMatrix> {
        if data.column_names() != self.source_columns.as_slice() {
            return Err(HarnessError::Config("dataset columns do not match the scenario".into()));
        }
        Ok(DataMatrix::new(
            data.values().select_columns(&self.source_index),
            self.model_columns.clone(),
            data.target().to_vec(),
        )?)
    }
}

/// Shapley values of the generating function on standardized scenario
/// columns, mapped onto the model inputs.
pub fn reference_phi(
    function: &GenerativeFunction,
    map: &ViewMap,
    points: &Matrix,
    background: &Matrix,
) -> Result<Matrix> {
    let phi = shapley_matrix(|m: &Matrix| function.predict(m), points, background)?;
    Ok(phi.select_columns(&map.reference_index))
}

/// Slope of the least-squares line through `(x, phi)`.
pub fn ls_slope(x: &[f64], phi: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = phi.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(phi).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Everything the two models of one grid point share.
pub struct PairData {
    pub map: ViewMap,
    pub prepared: PreparedData,
    pub test_raw: DataMatrix,
    /// Standardized test inputs and background of the model.
    pub test_points: Matrix,
    pub background: Matrix,
    pub phi_reference: Matrix,
    pub background_id: String,
    /// Standardizer of the scenario columns and the background rows in
    /// those coordinates, used for the reference attributions.
    pub reference_standardizer: Standardizer,
    pub reference_background: Matrix,
    pub function: GenerativeFunction,
}

fn level_seed(base: u64, tag: u64, level: f64) -> u64 {
    derive_seed(derive_seed(base, tag), level.to_bits())
}

/// Scenario splits of one grid point: train and validation corrupted at
/// `level`, test clean.
#[derive(Debug, Clone)]
pub struct GridSplits {
    pub scenario: ScenarioConfig,
    pub train: DataMatrix,
    pub val: DataMatrix,
    pub test: DataMatrix,
    base: u64,
}

pub fn grid_splits(config: &ExperimentConfig, level: f64, seed: u64) -> Result<GridSplits> {
    let base = derive_seed(config.scenario.seed, seed);
    let scenario = ScenarioConfig {
        seed: derive_seed(base, TAG_DATA),
        ..config.scenario.clone()
    };
    let full = scenario.generate()?;
    let parts = split(&full, config.split, derive_seed(base, TAG_SPLIT))?;
    let corrupt = |data: &DataMatrix, tag: u64| -> Result<DataMatrix> {
        let spec = CorruptionSpec {
            mode: config.corruption.mode,
            level,
            columns: config.corruption.columns.clone(),
            seed: level_seed(base, tag, level),
        };
        Ok(spec.apply(data)?)
    };
    let test = match config.test_labels {
        Some(rule) if scenario.task == Task::Classification && rule != scenario.labels => {
            let probs = scenario.generative_function().predict(parts.test.values())?;
            let target = match rule {
                LabelRule::Threshold => threshold_labels(&probs),
                LabelRule::Probability => probs,
                LabelRule::Bernoulli => {
                    let seed = derive_seed(base, TAG_TEST_LABELS);
                    gen_classification_targets(parts.test.values(), &scenario.betas, seed)?.1
                }
            };
            let (values, names, _) = parts.test.into_parts();
            DataMatrix::new(values, names, target)?
        }
        _ => parts.test,
    };
    Ok(GridSplits {
        train: corrupt(&parts.train, TAG_CORRUPT_TRAIN)?,
        val: corrupt(&parts.val, TAG_CORRUPT_VAL)?,
        test,
        scenario,
        base,
    })
}

/// Splits, corrupts and standardizes the data of one grid point and
/// computes the reference Shapley values.
pub fn prepare_pair(config: &ExperimentConfig, level: f64, seed: u64) -> Result<PairData> {
    let GridSplits { scenario, train, val, test, base } = grid_splits(config, level, seed)?;
    let map = ViewMap::new(&scenario.column_names, &config.inputs)?;
    let prepared = PreparedData::fit(&map.apply(&train)?, &map.apply(&val)?)?;
    let test_raw = map.apply(&test)?;

    let mut rows: Vec<usize> = (0..train.nrows()).collect();
    {
        use rand::seq::SliceRandom;
        rows.shuffle(&mut seeded(derive_seed(base, TAG_BACKGROUND)));
    }
    rows.truncate(config.background_size.min(train.nrows()));

    let reference_std = Standardizer::fit_data(&train)?;
    let reference_bg = reference_std.apply(train.values())?.select_rows(&rows);
    let reference_points = reference_std.apply(test.values())?;
    let function = scenario.generative_function();
    let phi_reference = reference_phi(&function, &map, &reference_points, &reference_bg)?;

    Ok(PairData {
        test_points: prepared.standardizer.apply(test_raw.values())?,
        background: prepared.train.values().select_rows(&rows),
        background_id: format!("train-subsample(seed={seed}, level={level})"),
        map,
        prepared,
        test_raw,
        phi_reference,
        reference_standardizer: reference_std,
        reference_background: reference_bg,
        function,
    })
}

pub fn loss_weights(config: &ExperimentConfig, n_train: usize, p: usize) -> seann_core::Result<LossWeights> {
    match &config.weights {
        WeightScheme::Confidence { data_confidence } => {
            let c0 = data_confidence.unwrap_or((n_train * p) as f64);
            let cs: Vec<f64> = config.constraints.iter().map(|c| c.confidence).collect();
            lambda_weights(c0, &cs)
        }
        WeightScheme::Explicit { lambda0, lambdas } => LossWeights::new(*lambda0, lambdas.clone()),
    }
}

fn run_model(config: &ExperimentConfig, data: &PairData, tag: ModelTag, level: f64, seed: u64) -> Result<RunArtifacts> {
    let wrap = |source| HarnessError::Run { level, seed, model: tag.as_str(), source };
    let (constraints, weights) = match tag {
        ModelTag::Agnostic => (Vec::new(), LossWeights::agnostic()),
        ModelTag::Seann => (
            config.constraints.clone(),
            loss_weights(config, data.prepared.train.nrows(), data.prepared.train.ncols()).map_err(wrap)?,
        ),
    };
    let train_cfg = seann_core::TrainConfig {
        seed: derive_seed(derive_seed(config.scenario.seed, seed), TAG_TRAIN),
        ..config.train.clone()
    };
    let model = seann_core::train(&data.prepared, config.scenario.task, &constraints, &weights, &train_cfg)
        .map_err(wrap)?;
    let eval = evaluate(&model, &data.test_raw).map_err(wrap)?;
    let phi_model =
        shapley_matrix(|m: &Matrix| model.predict_standardized(m), &data.test_points, &data.background).map_err(wrap)?;
    let shap = ShapReport::new(
        data.map.model_columns.clone(),
        data.test_points.clone(),
        phi_model,
        data.phi_reference.clone(),
        data.background_id.clone(),
        data.background.nrows(),
    )
    .map_err(wrap)?;
    let shap_slope = (0..shap.feature_names.len())
        .map(|j| ls_slope(&shap.points.column(j), &shap.phi_model.column(j)))
        .collect();
    Ok(RunArtifacts {
        result: RunResult {
            model_tag: tag,
            level,
            seed,
            metric: eval.metric,
            test_loss: eval.loss,
            delta_shap: shap.delta_shap.clone(),
            sum_delta_shap: shap.sum_delta_shap,
            shap_slope,
            stopped_epoch: model.stopped_epoch,
            best_epoch: model.best_epoch,
            lambda0: weights.lambda0,
        },
        file: ModelFile {
            model,
            background: data.background.clone(),
            reference: Some(ReferenceSpec {
                function: data.function.clone(),
                view: data.map.clone(),
                standardizer: data.reference_standardizer.clone(),
                background: data.reference_background.clone(),
            }),
        },
        shap,
        test_raw: data.test_raw.values().clone(),
    })
}

/// Trains and scores the agnostic and the informed model for one grid
/// point.
pub fn run_pair(config: &ExperimentConfig, level_index: usize, seed: u64) -> Result<PairOutcome> {
    let level = config.corruption.levels[level_index];
    let data = prepare_pair(config, level, seed)?;
    Ok(PairOutcome {
        level_index,
        level,
        seed,
        agnostic: run_model(config, &data, ModelTag::Agnostic, level, seed)?,
        seann: run_model(config, &data, ModelTag::Seann, level, seed)?,
    })
}

/// Explains a saved model on `data`, whose columns are either the model
/// inputs or the scenario columns of the model's reference. Reference
/// attributions are computed only in the second case.
pub fn explain_dataset(file: &ModelFile, data: &DataMatrix) -> Result<(ShapReport, Matrix)> {
    let model = &file.model;
    let (raw, reference) = match &file.reference {
        Some(r) if data.column_names() == r.view.source_columns.as_slice() => {
            let points = r.standardizer.apply(data.values())?;
            let phi = reference_phi(&r.function, &r.view, &points, &r.background)?;
            (r.view.apply(data)?.values().clone(), Some(phi))
        }
        _ if data.column_names() == model.feature_names.as_slice() => (data.values().clone(), None),
        _ => {
            return Err(HarnessError::Config(format!(
                "data columns {:?} match neither the model inputs {:?} nor its scenario",
                data.column_names(),
                model.feature_names
            )))
        }
    };
    let points = model.standardizer.apply(&raw)?;
    let phi_model = shapley_matrix(|m: &Matrix| model.predict_standardized(m), &points, &file.background)?;
    let has_reference = reference.is_some();
    let phi_reference = reference.unwrap_or_else(|| Matrix::zeros(points.nrows(), points.ncols()));
    let mut report = ShapReport::new(
        model.feature_names.clone(),
        points,
        phi_model,
        phi_reference,
        "model-file".into(),
        file.background.nrows(),
    )?;
    if !has_reference {
        report.delta_shap.iter_mut().for_each(|d| *d = f64::NAN);
        report.sum_delta_shap = f64::NAN;
    }
    Ok((report, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, ExperimentKind};

    #[test]
    fn view_drops_and_duplicates() {
        let c = ExperimentConfig::preset(ExperimentKind::Exp3Src);
        let map = ViewMap::new(&c.scenario.column_names, &c.inputs).unwrap();
        assert_eq!(map.model_columns, vec!["mercury", "perceived_stress", "bmi", "mercury_copy"]);
        assert_eq!(map.source_index, vec![0, 2, 3, 0]);
        assert_eq!(map.reference_index, vec![0, 2, 3, 1]);
    }

    #[test]
    fn slope_of_line() {
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(ls_slope(&[1.0, 1.0], &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn test_split_is_clean_and_shared() {
        let mut c = ExperimentConfig::preset(ExperimentKind::Exp1Or);
        c.corruption.levels = vec![0.0, 0.5];
        let clean = prepare_pair(&c, 0.0, 3).unwrap();
        let noisy = prepare_pair(&c, 0.5, 3).unwrap();
        assert_eq!(clean.test_raw, noisy.test_raw);
        assert_ne!(clean.prepared.train, noisy.prepared.train);
        assert_eq!(clean.phi_reference.nrows(), 200);
    }
}
