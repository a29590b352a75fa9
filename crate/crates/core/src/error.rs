use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical layers (projectors, tasks, dynamics, sampler).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is rank deficient (smallest singular value {sigma_min:e} <= tolerance {tol:e})")]
    RankDeficient { sigma_min: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("task `{0}` is inactive")]
    Inactive(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("degenerate importance weights: effective sample size {ess:.3} below {min_ess}")]
    DegenerateWeights { ess: f64, min_ess: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("at step {step} (t = {t}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_step(self, step: usize, t: f64) -> Self {
        Error::AtStep {
            step,
            t,
            source: Box::new(self),
        }
    }

    /// Strips any step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Errors raised while loading scenarios or reading/writing result files.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),

    #[error("batch failed: {failed} of {total} runs errored (first: {first})")]
    BatchFailed {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl HarnessError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
