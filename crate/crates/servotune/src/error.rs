use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("simulation diverged at t = {at} s")]
    Diverged { at: f64 },

    #[error(transparent)]
    Core(#[from] servotune_core::Error),
}

impl CliError {
    /// 1 for divergence and tuning failures, 2 for usage and configuration
    /// problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged { .. } => 1,
            CliError::Core(servotune_core::Error::InvalidParameter { .. }) => 2,
            CliError::Core(_) => 1,
            CliError::Config(_) | CliError::Read { .. } | CliError::Write { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
