use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spikerace::Error),

    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for a broken invariant;
    /// failures writing output use 1.
    pub fn exit_code(&self) -> i32 {
        use spikerace::Error as E;
        match self {
            CliError::Core(E::Numerical(_) | E::Infeasible { .. }) => 3,
            CliError::Core(E::Invariant(_)) => 4,
            CliError::Core(_) | CliError::Input { .. } | CliError::Usage(_) => 2,
            CliError::Output { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
