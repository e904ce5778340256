//! Experiment runner: configuration, execution, and artifact output for the
//! parallel marginalization path sampler.

pub mod config;
pub mod runner;

pub use config::{validate_config, ConfigError, Experiment, ExperimentConfig, Overrides};
pub use runner::{run_experiment, write_artifacts, RunArtifacts, RunError, Summary};
