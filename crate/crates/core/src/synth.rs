//! Synthetic scenarios: correlated Gaussian exposures, additive regression
//! and logistic classification targets, measurement corruption, and seeded
//! train/validation/test splits.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{bail, Error, Result};
use crate::loss::sigmoid;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::Task;

/// Column names of the fictional exposure scenario.
pub const MERCURY: &str = "mercury";
pub const FISH_INTAKE: &str = "fish_intake";
pub const PERCEIVED_STRESS: &str = "perceived_stress";
pub const BMI: &str = "bmi";

const STREAM_FEATURES: u64 = 1;
const STREAM_LABELS: u64 = 2;

/// How binary labels are obtained from the generating probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LabelRule {
    /// `y ~ Bernoulli(p(x))`.
    Bernoulli,
    /// `y = 1[p(x) >= 0.5]`.
    #[default]
    Threshold,
    /// The probability itself is the (soft) training target; metrics
    /// threshold it at 0.5.
    Probability,
}

/// The true target function of a scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum GenerativeFunction {
    /// `β0 + Σ_{j<last} βj xj + β_last cos(x_last)`.
    AdditiveCosine { betas: Vec<f64> },
    /// `σ(β0 + Σ βj xj)`.
    Logistic { betas: Vec<f64> },
}

impl GenerativeFunction {
    pub fn inputs(&self) -> usize {
        match self {
            GenerativeFunction::AdditiveCosine { betas } | GenerativeFunction::Logistic { betas } => {
                betas.len().saturating_sub(1)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            GenerativeFunction::AdditiveCosine { betas } => {
                let p = betas.len() - 1;
                let mut y = betas[0];
                for j in 0..p - 1 {
                    y += betas[j + 1] * x[j];
                }
                y + betas[p] * libm::cos(x[p - 1])
            }
            GenerativeFunction::Logistic { betas } => {
                let z = betas[0] + betas[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
                sigmoid(z)
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.inputs() {
            bail!(Dimension, "generative function takes {} inputs, got {}", self.inputs(), x.ncols());
        }
        Ok(x.rows().map(|r| self.eval(r)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub task: Task,
    /// Sample count.
    pub m: usize,
    pub mean: Vec<f64>,
    /// Row-major `p x p` covariance.
    pub covariance: Vec<Vec<f64>>,
    /// Intercept first, then one coefficient per feature.
    pub betas: Vec<f64>,
    pub column_names: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub labels: LabelRule,
    pub seed: u64,
}

fn block_covariance(p: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; p]; p];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    c[0][1] = 0.8;
    c[1][0] = 0.8;
    c
}

impl ScenarioConfig {
    /// Four standard-normal exposures (mercury and fish intake correlated at
    /// 0.8) with `y = 1 + x1 - 2 x2 + 5 x3 + 10 cos(x4)`, m = 1000.
    pub fn exposure_regression(seed: u64) -> Self {
        ScenarioConfig {
            task: Task::Regression,
            m: 1000,
            mean: vec![0.0; 4],
            covariance: block_covariance(4),
            betas: vec![1.0, 1.0, -2.0, 5.0, 10.0],
            column_names: [MERCURY, FISH_INTAKE, PERCEIVED_STRESS, BMI].map(String::from).to_vec(),
            labels: LabelRule::default(),
            seed,
        }
    }

    /// Three exposures with `p = σ(x1 - 2 x2 + 5 x3)`, m = 1000.
    pub fn exposure_classification(seed: u64) -> Self {
        ScenarioConfig {
            task: Task::Classification,
            m: 1000,
            mean: vec![0.0; 3],
            covariance: block_covariance(3),
            betas: vec![0.0, 1.0, -2.0, 5.0],
            column_names: [MERCURY, FISH_INTAKE, PERCEIVED_STRESS].map(String::from).to_vec(),
            labels: LabelRule::default(),
            seed,
        }
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 || self.m == 0 {
            bail!(InvalidInput, "scenario needs at least one feature and one sample");
        }
        if self.covariance.len() != p || self.covariance.iter().any(|r| r.len() != p) {
            bail!(Dimension, "covariance must be {}x{}", p, p);
        }
        for i in 0..p {
            for j in 0..i {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > 1e-12 {
                    bail!(InvalidInput, "covariance is not symmetric at ({}, {})", i, j);
                }
            }
        }
        if self.betas.len() != p + 1 {
            bail!(Dimension, "{} betas for {} features (intercept included)", self.betas.len(), p);
        }
        if self.column_names.len() != p {
            bail!(Dimension, "{} column names for {} features", self.column_names.len(), p);
        }
        Ok(())
    }

    pub fn generative_function(&self) -> GenerativeFunction {
        match self.task {
            Task::Regression => GenerativeFunction::AdditiveCosine { betas: self.betas.clone() },
            Task::Classification => GenerativeFunction::Logistic { betas: self.betas.clone() },
        }
    }

    /// Features and targets for the whole scenario.
    pub fn generate(&self) -> Result<DataMatrix> {
        let x = sample_mvn(self)?;
        let target = match self.task {
            Task::Regression => gen_regression_targets(&x, &self.betas)?,
            Task::Classification => {
                let label_seed = derive_seed(self.seed, STREAM_LABELS);
                let (probs, labels) = gen_classification_targets(&x, &self.betas, label_seed)?;
                match self.labels {
                    LabelRule::Bernoulli => labels,
                    LabelRule::Threshold => threshold_labels(&probs),
                    LabelRule::Probability => probs,
                }
            }
        };
        DataMatrix::new(x, self.column_names.clone(), target)
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Matrix> {
    let p = a.len();
    let mut l = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                l.set(i, i, libm::sqrt(s));
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// `m` independent draws `mean + L z`, `z ~ N(0, I)`.
pub fn sample_mvn(config: &ScenarioConfig) -> Result<Matrix> {
    config.validate()?;
    let l = cholesky(&config.covariance)?;
    let p = config.p();
    let mut rng = seeded(derive_seed(config.seed, STREAM_FEATURES));
    let mut out = Matrix::zeros(config.m, p);
    let mut z = vec![0.0; p];
    for i in 0..config.m {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = out.row_mut(i);
        for a in 0..p {
            let mut s = config.mean[a];
            for b in 0..=a {
                s += l.get(a, b) * z[b];
            }
            row[a] = s;
        }
    }
    Ok(out)
}

/// `y = β0 + Σ βj xj + β_last cos(x_last)` row-wise.
pub fn gen_regression_targets(x: &Matrix, betas: &[f64]) -> Result<Vec<f64>> {
    if betas.len() != x.ncols() + 1 || x.ncols() == 0 {
        bail!(Dimension, "{} betas for {} columns", betas.len(), x.ncols());
    }
    GenerativeFunction::AdditiveCosine { betas: betas.to_vec() }.predict(x)
}

/// Logistic probabilities and Bernoulli labels drawn from them.
pub fn gen_classification_targets(x: &Matrix, betas: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if betas.len() != x.ncols() + 1 {
        bail!(Dimension, "{} betas for {} columns", betas.len(), x.ncols());
    }
    let probs = GenerativeFunction::Logistic { betas: betas.to_vec() }.predict(x)?;
    let mut rng = seeded(seed);
    let labels = probs
        .iter()
        .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect();
    Ok((probs, labels))
}

pub fn threshold_labels(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|&p| if p >= 0.5 { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorruptionMode {
    GaussianNoise,
    McarImpute,
}

/// Measurement corruption of a dataset. `level` is the noise standard
/// deviation or the missing fraction; `columns = None` selects all columns.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub level: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub columns: Option<Vec<String>>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            CorruptionMode::GaussianNoise if !(self.level >= 0.0 && self.level.is_finite()) => {
                bail!(InvalidInput, "noise level must be >= 0, got {}", self.level)
            }
            CorruptionMode::McarImpute if !(0.0..1.0).contains(&self.level) => {
                bail!(InvalidInput, "missing fraction must be in [0, 1), got {}", self.level)
            }
            _ => Ok(()),
        }
    }

    fn selected(&self, data: &DataMatrix) -> Result<Vec<usize>> {
        match &self.columns {
            None => Ok((0..data.ncols()).collect()),
            Some(names) => names.iter().map(|n| data.column_index(n)).collect(),
        }
    }

    pub fn apply(&self, data: &DataMatrix) -> Result<DataMatrix> {
        match self.mode {
            CorruptionMode::GaussianNoise => add_gaussian_noise(data, self),
            CorruptionMode::McarImpute => mcar_impute(data, self),
        }
    }
}

/// Adds i.i.d. `N(0, level²)` noise to the selected columns.
pub fn add_gaussian_noise(data: &DataMatrix, spec: &CorruptionSpec) -> Result<DataMatrix> {
    if spec.mode != CorruptionMode::GaussianNoise {
        bail!(InvalidInput, "expected a gaussian_noise corruption");
    }
    spec.validate()?;
    let cols = spec.selected(data)?;
    let mut x = data.values().clone();
    let mut rng = seeded(spec.seed);
    for i in 0..x.nrows() {
        let row = x.row_mut(i);
        for &j in &cols {
            let z: f64 = StandardNormal.sample(&mut rng);
            row[j] += spec.level * z;
        }
    }
    data.with_values(x)
}

/// Masks each selected cell with probability `level`, then replaces masked
/// cells with the mean of the observed cells of their column.
pub fn mcar_impute(data: &DataMatrix, spec: &CorruptionSpec) -> Result<DataMatrix> {
    if spec.mode != CorruptionMode::McarImpute {
        bail!(InvalidInput, "expected an mcar_impute corruption");
    }
    spec.validate()?;
    let cols = spec.selected(data)?;
    let x = data.values();
    let n = x.nrows();
    let mut rng = seeded(spec.seed);
    let mut mask = vec![false; n * cols.len()];
    for i in 0..n {
        for c in 0..cols.len() {
            mask[i * cols.len() + c] = rng.random::<f64>() < spec.level;
        }
    }
    impute_masked(data, &cols, &mask)
}

/// Mean-imputes the cells flagged in `mask` (`n x cols.len()`, row-major).
pub fn impute_masked(data: &DataMatrix, cols: &[usize], mask: &[bool]) -> Result<DataMatrix> {
    let mut x = data.values().clone();
    let n = x.nrows();
    for (c, &j) in cols.iter().enumerate() {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            if !mask[i * cols.len() + c] {
                sum += x.get(i, j);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::FullyMasked(data.column_names()[j].to_string()));
        }
        let mean = sum / count as f64;
        for i in 0..n {
            if mask[i * cols.len() + c] {
                x.set(i, j, mean);
            }
        }
    }
    data.with_values(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DataMatrix,
    pub val: DataMatrix,
    pub test: DataMatrix,
}

/// Seeded permutation of the rows cut into contiguous train/val/test parts.
pub fn split(data: &DataMatrix, sizes: [usize; 3], seed: u64) -> Result<Splits> {
    if sizes.iter().sum::<usize>() != data.nrows() {
        bail!(InvalidInput, "split sizes {:?} do not sum to {} rows", sizes, data.nrows());
    }
    if sizes.contains(&0) {
        bail!(InvalidInput, "every split needs at least one row, got {:?}", sizes);
    }
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    order.shuffle(&mut seeded(seed));
    let (train, rest) = order.split_at(sizes[0]);
    let (val, test) = rest.split_at(sizes[1]);
    Ok(Splits {
        train: data.select_rows(train),
        val: data.select_rows(val),
        test: data.select_rows(test),
    })
}
