//! Experiment driver: dataset generation, dictionary learning, operator
//! training, evaluation sweeps and reports.

pub mod ablation;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
