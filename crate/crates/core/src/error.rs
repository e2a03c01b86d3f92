use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: timestamp {t} precedes previous timestamp {prev}")]
    Ordering {
        path: PathBuf,
        line: usize,
        t: f64,
        prev: f64,
    },

    /// Input is well-formed but violates a value constraint.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("optimisation failed: {0}")]
    Optimisation(String),
}

impl Error {
    /// Stable machine-readable category, used by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Ordering { .. } => "ordering",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::InsufficientData(_) => "insufficient-data",
            Error::DegenerateGeometry(_) => "degenerate-geometry",
            Error::DegenerateInput(_) => "degenerate-input",
            Error::Optimisation(_) => "optimisation",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
