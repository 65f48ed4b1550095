//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("trajectory error at line {line}: {msg}")]
    Trajectory { line: usize, msg: String },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unit error: {0}")]
    Unit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
