use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} lies outside the basis window [{lo}, {hi}]")]
    OutsideWindow { t: f64, lo: f64, hi: f64 },

    #[error("interspike interval must be positive, got {0}")]
    NonPositiveIsi(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no feasible label at spike {spike} of train {train}; delay inconsistent with the data")]
    Infeasible { train: usize, spike: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
