use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: label {label} out of range (expected < {num_labels})")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        num_labels: usize,
    },

    #[error("line {line}: non-finite feature value")]
    NonFinite { line: usize },

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("class fractions sum to {sum}, expected 1")]
    PhiSum { sum: f64 },

    #[error("label counts sum to {got}, expected {expected}")]
    CountMismatch { got: usize, expected: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("instance too large for exhaustive search: {0} feasible assignments")]
    InstanceTooLarge(f64),

    #[error("invalid model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error comes from a numerical solver rather than from
    /// malformed input or configuration.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Diverged(_) | Error::InstanceTooLarge(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
