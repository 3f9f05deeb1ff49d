//! Grid execution: every (level, seed) pair of an experiment, optionally in
//! parallel, collected in grid order.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{run_pair, PairOutcome, RunResult};

/// Outcome of a whole experiment, in grid order (level major, then seeds as
/// listed in the configuration).
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Fully resolved configuration the grid ran with.
    pub config: ExperimentConfig,
    pub pairs: Vec<PairOutcome>,
}

impl ExperimentOutcome {
    /// Result rows, agnostic before informed within each grid point.
    pub fn results(&self) -> Vec<RunResult> {
        self.pairs
            .iter()
            .flat_map(|p| [p.agnostic.result.clone(), p.seann.result.clone()])
            .collect()
    }
}

/// Runs the grid on `jobs` worker threads (`0` uses rayon's default).
/// Results do not depend on `jobs`.
pub fn run_grid(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let config = config.resolved();
    let grid: Vec<(usize, u64)> = (0..config.corruption.levels.len())
        .flat_map(|l| config.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let pairs = pool.install(|| {
        grid.par_iter()
            .map(|&(level, seed)| run_pair(&config, level, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentOutcome { config, pairs })
}

fn run_numbered(config: &ExperimentConfig, number: u8, jobs: usize) -> Result<ExperimentOutcome> {
    if config.experiment.number() != number {
        return Err(HarnessError::Config(format!(
            "{} is not an experiment-{number} configuration",
            config.experiment
        )));
    }
    run_grid(config, jobs)
}

/// Corruption sweep with every eligible predictor constrained.
pub fn run_experiment1(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    run_numbered(config, 1, jobs)
}

/// Noise on a single constrained column.
pub fn run_experiment2(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    run_numbered(config, 2, jobs)
}

/// Confounder dropped, constrained column duplicated.
pub fn run_experiment3(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    run_numbered(config, 3, jobs)
}

/// Dispatches on the configured experiment.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    match config.experiment.number() {
        1 => run_experiment1(config, jobs),
        2 => run_experiment2(config, jobs),
        _ => run_experiment3(config, jobs),
    }
}
