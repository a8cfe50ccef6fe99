use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate key {0}")]
    Duplicate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("template kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: Vec<u64>, right: Vec<u64> },

    #[error("missing score for trial {trial_id} on comparator {comparator}")]
    MissingScore { trial_id: String, comparator: String },

    #[error("missing image index {index} for {eye_key}")]
    MissingImage { eye_key: String, index: u32 },

    #[error("zero variance for comparator {0}")]
    ZeroVariance(String),

    #[error("both target and non-target trials are required")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Stable machine-readable code for this error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Format { .. } => "E_FORMAT",
            Error::Parse { .. } => "E_PARSE",
            Error::Duplicate(_) => "E_DUPLICATE",
            Error::InvalidInput(_) => "E_INVALID",
            Error::KindMismatch { .. } => "E_KIND",
            Error::DimensionMismatch { .. } => "E_DIMS",
            Error::MissingScore { .. } => "E_MISSING_SCORE",
            Error::MissingImage { .. } => "E_MISSING_IMAGE",
            Error::ZeroVariance(_) => "E_ZERO_VARIANCE",
            Error::SingleClass => "E_SINGLE_CLASS",
            Error::NonFinite(_) => "E_NON_FINITE",
            Error::Degenerate(_) => "E_DEGENERATE",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
