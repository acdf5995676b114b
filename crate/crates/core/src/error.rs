//! Error type shared across the crate.

use thiserror::Error;

/// Anything that can go wrong while building or solving a lifted system.
#[derive(Debug, Error)]
pub enum CarlemanError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An assembly step would allocate more matrix entries than the
    /// configured budget allows. See [`crate::capacity`].
    #[error("entry budget exceeded: need {needed} entries, limit is {limit} (set CARLEMAN_MAX_ENTRIES to raise it)")]
    CapacityExceeded { needed: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (last estimate {last_estimate:.6e})")]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for CarlemanError {
    fn from(e: serde_json::Error) -> Self {
        CarlemanError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CarlemanError>;
