//! Experiment driver: configuration, artifact layout and the pipeline stages.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Stage};
pub use config::{preset, ExperimentConfig};
pub use error::{CliError, CliResult};
