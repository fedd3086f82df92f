//! Configuration, training, evaluation and sweep drivers behind the `rismec` binary.

pub mod config;
pub mod error;
pub mod ops;
pub mod run;

pub use config::{AgentKind, ExperimentConfig};
pub use error::CliError;
