//! Command implementations behind the `stagewise` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::RunConfig;

/// A command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Filesystem, lock, journal or endpoint trouble; exit code 2.
    #[error("{0}")]
    Environment(String),
    /// The command ran but produced no usable result; exit code 3.
    #[error("{0}")]
    Execution(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Environment(_) => 2,
            CliError::Execution(_) => 3,
        }
    }
}
