use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stimulus design spans {needed:.3} s but the horizon is only {available:.3} s")]
    HorizonOverflow { needed: f64, available: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("dimension mismatch: {0}")]
    Contract(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn at_sweep(self, sweep: usize) -> Self {
        Error::Sweep {
            sweep,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 validation, 3 numeric degeneracy, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Sweep { source, .. } => source.exit_code(),
            Error::NumericDegeneracy(_) | Error::DegeneratePosterior(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
            _ => 2,
        }
    }
}
