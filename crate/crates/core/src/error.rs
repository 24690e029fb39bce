use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trace drift {drift:.3e} at step {step} (t = {t}); reduce the step size (dt = {dt})")]
    TraceDrift {
        step: usize,
        t: f64,
        drift: f64,
        dt: f64,
    },

    #[error("state norm {norm:.4} before renormalization at step {step}; dt or Fock truncation is inadequate")]
    NormOutOfRange { step: usize, norm: f64 },

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("trajectory (class {class}, index {index}) failed: {source}")]
    Trajectory {
        class: u8,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("learner: {0}")]
    Learner(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    /// Process exit code: 1 usage, 2 numerical failure, 3 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_) | Error::DimensionMismatch { .. } | Error::Learner(_) => 1,
            Error::TraceDrift { .. }
            | Error::NormOutOfRange { .. }
            | Error::NonConvergence { .. } => 2,
            Error::Trajectory { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Format { .. } => 3,
        }
    }
}
