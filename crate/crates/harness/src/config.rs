//! Experiment configuration: presets for the six experiments, partial
//! TOML/JSON files layered over a preset, and per-experiment validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use seann_core::synth::{BMI, FISH_INTAKE, MERCURY, PERCEIVED_STRESS};
use seann_core::{ConstraintKind, CorruptionMode, LabelRule, PesConstraint, ScenarioConfig, Task, TrainConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exp1Src,
    Exp1Or,
    Exp2Src,
    Exp2Or,
    Exp3Src,
    Exp3Or,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Exp1Src,
        ExperimentKind::Exp1Or,
        ExperimentKind::Exp2Src,
        ExperimentKind::Exp2Or,
        ExperimentKind::Exp3Src,
        ExperimentKind::Exp3Or,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Exp1Src => "exp1_src",
            ExperimentKind::Exp1Or => "exp1_or",
            ExperimentKind::Exp2Src => "exp2_src",
            ExperimentKind::Exp2Or => "exp2_or",
            ExperimentKind::Exp3Src => "exp3_src",
            ExperimentKind::Exp3Or => "exp3_or",
        }
    }

    pub fn number(self) -> u8 {
        match self {
            ExperimentKind::Exp1Src | ExperimentKind::Exp1Or => 1,
            ExperimentKind::Exp2Src | ExperimentKind::Exp2Or => 2,
            ExperimentKind::Exp3Src | ExperimentKind::Exp3Or => 3,
        }
    }

    pub fn task(self) -> Task {
        match self {
            ExperimentKind::Exp1Src | ExperimentKind::Exp2Src | ExperimentKind::Exp3Src => Task::Regression,
            _ => Task::Classification,
        }
    }

    fn constraint_kind(self) -> ConstraintKind {
        match self.task() {
            Task::Regression => ConstraintKind::Src,
            Task::Classification => ConstraintKind::Or,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Corruption applied to the training and validation splits, one run per
/// level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionGrid {
    pub mode: CorruptionMode,
    pub levels: Vec<f64>,
    /// `None` corrupts every column.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
}

/// How the informed model weighs its loss terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightScheme {
    /// Log-scale normalization of confidences; `data_confidence` defaults
    /// to `n_train x p`.
    Confidence {
        #[serde(default)]
        data_confidence: Option<f64>,
    },
    /// Fixed hyperparameters.
    Explicit { lambda0: f64, lambdas: Vec<f64> },
}

impl WeightScheme {
    pub fn label(&self) -> &'static str {
        match self {
            WeightScheme::Confidence { .. } => "confidence",
            WeightScheme::Explicit { .. } => "explicit",
        }
    }
}

/// An extra input column copying `source`. Its reference Shapley values are
/// those of `reference` in the generating function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duplicate {
    pub source: String,
    pub name: String,
    pub reference: String,
}

/// Model inputs derived from the scenario columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InputView {
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default)]
    pub duplicate: Vec<Duplicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub corruption: CorruptionGrid,
    pub constraints: Vec<PesConstraint>,
    pub train: TrainConfig,
    pub weights: WeightScheme,
    pub seeds: Vec<u64>,
    /// Train, validation and test sizes.
    pub split: [usize; 3],
    pub background_size: usize,
    #[serde(default)]
    pub inputs: InputView,
    /// Label rule of the test split for classification; `None` keeps the
    /// scenario's rule.
    #[serde(default)]
    pub test_labels: Option<LabelRule>,
    pub output_dir: PathBuf,
}

/// Default constraint confidence (meta-analysis sample size).
pub const DEFAULT_CONFIDENCE: f64 = 10_000.0;

/// Noise levels swept by `exp1_src` unless configured.
pub const DEFAULT_NOISE_SWEEP: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5];

impl ExperimentConfig {
    /// The experiment's default configuration.
    pub fn preset(kind: ExperimentKind) -> Self {
        let scenario = match kind.task() {
            Task::Regression => ScenarioConfig::exposure_regression(0),
            Task::Classification => ScenarioConfig::exposure_classification(0),
        };
        let ck = kind.constraint_kind();
        let true_effect = |feature: &str| {
            let j = scenario.column_names.iter().position(|c| c == feature).unwrap();
            PesConstraint::new(ck, feature, scenario.betas[j + 1], DEFAULT_CONFIDENCE)
        };
        let noise = |levels: Vec<f64>, columns: Option<Vec<String>>| CorruptionGrid {
            mode: CorruptionMode::GaussianNoise,
            levels,
            columns,
        };
        let (corruption, constraints, inputs) = match kind {
            ExperimentKind::Exp1Src => (
                noise(DEFAULT_NOISE_SWEEP.to_vec(), None),
                vec![true_effect(MERCURY), true_effect(FISH_INTAKE), true_effect(PERCEIVED_STRESS)],
                InputView::default(),
            ),
            ExperimentKind::Exp1Or => (
                CorruptionGrid { mode: CorruptionMode::McarImpute, levels: vec![0.0, 0.25, 0.5], columns: None },
                vec![true_effect(MERCURY), true_effect(FISH_INTAKE), true_effect(PERCEIVED_STRESS)],
                InputView::default(),
            ),
            ExperimentKind::Exp2Src | ExperimentKind::Exp2Or => {
                let sd = if kind == ExperimentKind::Exp2Src { 0.75 } else { 1.5 };
                (
                    noise(vec![sd], Some(vec![FISH_INTAKE.into()])),
                    vec![true_effect(FISH_INTAKE)],
                    InputView::default(),
                )
            }
            ExperimentKind::Exp3Src | ExperimentKind::Exp3Or => (
                noise(vec![0.0], None),
                vec![true_effect(MERCURY)],
                InputView {
                    drop: vec![FISH_INTAKE.into()],
                    duplicate: vec![Duplicate {
                        source: MERCURY.into(),
                        name: format!("{MERCURY}_copy"),
                        reference: FISH_INTAKE.into(),
                    }],
                },
            ),
        };
        ExperimentConfig {
            experiment: kind,
            scenario,
            corruption,
            constraints,
            train: TrainConfig::default(),
            weights: WeightScheme::Confidence { data_confidence: None },
            seeds: (0..10).collect(),
            split: [600, 200, 200],
            background_size: 100,
            inputs,
            test_labels: None,
            output_dir: PathBuf::from("out").join(kind.as_str()),
        }
    }

    /// Parses a TOML (or, for `.json` files, JSON) document and layers it
    /// over the preset named by its `experiment` key. Tables merge key by
    /// key; arrays and scalars replace the preset value.
    pub fn from_str_with_format(text: &str, json: bool) -> std::result::Result<Self, String> {
        let user: Value = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())?
        } else {
            toml::from_str(text).map_err(|e| e.to_string())?
        };
        let kind: ExperimentKind = user
            .get("experiment")
            .ok_or("missing `experiment` key")
            .and_then(|v| serde_json::from_value(v.clone()).map_err(|_| "unknown `experiment` value"))?;
        let mut merged = serde_json::to_value(Self::preset(kind)).map_err(|e| e.to_string())?;
        merge(&mut merged, user);
        serde_json::from_value(merged).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let config = Self::from_str_with_format(&text, json).map_err(|m| HarnessError::format(path, m))?;
        config.validate()?;
        Ok(config)
    }

    /// Fills every defaulted value (constraint perturbations, the data
    /// confidence) so the configuration is fully explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        for k in &mut c.constraints {
            k.perturbation = Some(k.perturbation());
        }
        if let WeightScheme::Confidence { data_confidence: None } = c.weights {
            c.weights = WeightScheme::Confidence {
                data_confidence: Some((c.split[0] * c.model_columns().len()) as f64),
            };
        }
        c
    }

    /// Input column names seen by the model, in order.
    pub fn model_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .scenario
            .column_names
            .iter()
            .filter(|c| !self.inputs.drop.contains(c))
            .cloned()
            .collect();
        cols.extend(self.inputs.duplicate.iter().map(|d| d.name.clone()));
        cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.scenario.validate()?;
        self.train.validate()?;
        if self.scenario.task != self.experiment.task() {
            return bad(format!("{} needs a {:?} scenario", self.experiment, self.experiment.task()));
        }
        if self.corruption.levels.is_empty() {
            return bad("corruption grid has no levels".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.split.iter().sum::<usize>() != self.scenario.m {
            return bad(format!("split {:?} does not add up to m = {}", self.split, self.scenario.m));
        }
        if self.background_size == 0 {
            return bad("background_size must be >= 1".into());
        }
        let names = &self.scenario.column_names;
        for level in &self.corruption.levels {
            seann_core::CorruptionSpec {
                mode: self.corruption.mode,
                level: *level,
                columns: self.corruption.columns.clone(),
                seed: 0,
            }
            .validate()?;
        }
        for c in self.corruption.columns.iter().flatten().chain(&self.inputs.drop) {
            if !names.contains(c) {
                return bad(format!("unknown scenario column `{c}`"));
            }
        }
        for d in &self.inputs.duplicate {
            if !names.contains(&d.source) || !names.contains(&d.reference) {
                return bad(format!("duplicate `{}` refers to an unknown column", d.name));
            }
        }
        let columns = self.model_columns();
        for (j, c) in columns.iter().enumerate() {
            if columns[..j].contains(c) {
                return bad(format!("model input `{c}` appears twice"));
            }
        }
        if columns.len() > seann_core::explain::MAX_FEATURES {
            return bad("too many model inputs for exact Shapley enumeration".into());
        }
        for k in &self.constraints {
            k.bind(&columns)?;
        }
        if let WeightScheme::Explicit { lambda0, lambdas } = &self.weights {
            if lambdas.len() != self.constraints.len() {
                return bad("explicit weights need one lambda per constraint".into());
            }
            seann_core::LossWeights::new(*lambda0, lambdas.clone())?;
        }
        self.validate_protocol()
    }

    fn validate_protocol(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(format!("{}: {m}", self.experiment)));
        let task = self.experiment.task();
        let expected = self.experiment.constraint_kind();
        if self.constraints.iter().any(|c| c.kind != expected) {
            return bad(format!("{task:?} experiments take {expected} constraints"));
        }
        match self.experiment.number() {
            1 => {
                if self.corruption.levels.windows(2).any(|w| w[1] < w[0]) {
                    return bad("corruption levels must be non-decreasing".into());
                }
                if task == Task::Regression && self.constraints.iter().any(|c| c.feature == BMI) {
                    return bad("bmi enters through a cosine and has no linear effect to constrain".into());
                }
            }
            2 => {
                let target = match self.corruption.columns.as_deref() {
                    Some([one]) => one,
                    _ => return bad("noise must target exactly one column".into()),
                };
                if self.constraints.len() != 1 || &self.constraints[0].feature != target {
                    return bad("exactly one constraint, on the noised column, is required".into());
                }
            }
            _ => {
                if self.inputs.drop.is_empty() || self.inputs.duplicate.is_empty() {
                    return bad("a dropped column and a duplicated column must be declared".into());
                }
                let sources: Vec<&String> = self.inputs.duplicate.iter().map(|d| &d.source).collect();
                if self.constraints.len() != 1 || !sources.contains(&&self.constraints[0].feature) {
                    return bad("exactly one constraint, on the duplicated column's source, is required".into());
                }
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for kind in ExperimentKind::ALL {
            ExperimentConfig::preset(kind).validate().unwrap();
        }
    }

    #[test]
    fn partial_toml_overrides_preset() {
        let c = ExperimentConfig::from_str_with_format(
            r#"
            experiment = "exp2_src"
            seeds = [4, 5]
            [train]
            hidden = 8
            "#,
            false,
        )
        .unwrap();
        assert_eq!(c.seeds, vec![4, 5]);
        assert_eq!(c.train.hidden, 8);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.corruption.levels, vec![0.75]);
        assert_eq!(c.constraints[0].feature, FISH_INTAKE);
    }

    #[test]
    fn unknown_experiment_rejected() {
        assert!(ExperimentConfig::from_str_with_format("experiment = \"exp9\"", false).is_err());
        assert!(ExperimentConfig::from_str_with_format("seeds = [1]", false).is_err());
    }

    #[test]
    fn protocol_violations_rejected() {
        let mut c = ExperimentConfig::preset(ExperimentKind::Exp1Src);
        c.corruption.levels = vec![0.5, 0.25];
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::preset(ExperimentKind::Exp2Src);
        c.corruption.columns = None;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::preset(ExperimentKind::Exp3Or);
        c.inputs.duplicate.clear();
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::preset(ExperimentKind::Exp3Src);
        c.constraints[0].feature = FISH_INTAKE.into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn resolved_fills_defaults() {
        let c = ExperimentConfig::preset(ExperimentKind::Exp1Or).resolved();
        assert_eq!(c.constraints[1].perturbation, Some(-0.5));
        assert_eq!(c.weights, WeightScheme::Confidence { data_confidence: Some(1800.0) });
        let c = ExperimentConfig::preset(ExperimentKind::Exp3Src);
        assert_eq!(c.model_columns(), vec!["mercury", "perceived_stress", "bmi", "mercury_copy"]);
    }

    #[test]
    fn json_round_trip_preserves_config() {
        let c = ExperimentConfig::preset(ExperimentKind::Exp3Or).resolved();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_str_with_format(&text, true).unwrap(), c);
    }
}
