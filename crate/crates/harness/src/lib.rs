//! Experiment harness around `seann-core`: configuration files, paired
//! informed-vs-agnostic runs over corruption grids, and CSV/JSON reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, run_grid, ExperimentOutcome};
pub use pipeline::{ModelTag, RunResult};
pub use report::{emit_reports, Summary};
