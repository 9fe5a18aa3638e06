//! Experiment front end: configuration, training pipelines, sweeps and the
//! `csifb` command implementations.

pub mod commands;
pub mod config;
pub mod experiments;

pub use commands::{run, Cli};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or incompatible inputs; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Failures while doing the work; exit code 2.
    #[error(transparent)]
    Runtime(#[from] csifb_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}
