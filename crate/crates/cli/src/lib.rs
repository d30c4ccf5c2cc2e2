//! Experiment orchestration for training restricted Boltzmann machines and
//! measuring the accuracy-versus-sampling tradeoff.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod target;

pub use config::{ExperimentConfig, TargetSpec};
pub use error::{CliError, Result};
pub use run::{run_experiment, threads_from_env};
