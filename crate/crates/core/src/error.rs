//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into configuration/input problems (bad files, bad
/// parameters) and numeric failures (domain violations, solver breakdown,
/// non-finite values). The CLI maps the former to exit code 2 and the
/// latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("direction-number table has {available} dimensions, {requested} requested")]
    Capacity { requested: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (must be < 2^32)")]
    IndexRange { index: u64 },

    #[error("solver failed to converge: relative residual {residual:.3e} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },

    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for input/configuration errors, false for numeric failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Capacity { .. } | Error::Config(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
