//! Shared error type for the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension disagreement between two operands; shapes are reported verbatim.
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Operation attempted in an invalid state (cold history buffer, consumed tape, ...).
    #[error("invalid state: {0}")]
    State(String),

    /// A configuration value is outside its allowed range; the offending field is named.
    #[error("config: field '{field}': {message}")]
    Config { field: String, message: String },

    /// Coefficient normalization hit a near-zero denominator.
    #[error(
        "degenerate normalization: |sum| = {sum_abs:.3e} < {threshold:.0e}; \
         re-initialize the temporal parameters and restart training"
    )]
    DegenerateNormalization { sum_abs: f64, threshold: f64 },

    /// An iterative numerical procedure failed to converge.
    #[error("numerical: {message}")]
    Numerical { message: String },

    /// Non-finite gradient or loss encountered during optimization.
    #[error("divergence in parameter '{param}'{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Divergence { param: String, epoch: Option<usize> },

    /// Checkpoint stream malformed (bad magic/version, truncation, shape disagreement).
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Dataset file violated its schema; file and line are named.
    #[error("{file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
        }
    }

    pub fn data(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            file: file.into(),
            line,
            message: msg.into(),
        }
    }
}
