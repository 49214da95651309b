//! Experiment harness for crowd-simulation training: configuration files,
//! presets, training runs, evaluation, sweeps, random search and the
//! reward-model analysis, all writing CSV/JSON results.

pub mod analyze;
pub mod config;
pub mod experiment;
pub mod output;
pub mod presets;
pub mod stats;

pub use config::{ExperimentConfig, SweepSpec};
pub use stats::MeanSem;
