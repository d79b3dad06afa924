//! Experiment harness for the spectral three-grid Darcy solver.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run, Command, RunError, RunSummary};
