use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum NbpError {
    /// A distribution or model parameter is outside its support.
    #[error("domain error: {0}")]
    Domain(String),

    /// A lookup past the end of a precomputed table.
    #[error("index error: {0}")]
    Index(String),

    /// Malformed input file, with the 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Inconsistent sizes between inputs (header vs. body, vocab vs. matrix, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A posterior update produced an invalid parameter. `snapshot` is a JSON
    /// summary of the chain at the point of failure.
    #[error("numerical failure in {step}: {message}; state: {snapshot}")]
    Numerical {
        step: String,
        message: String,
        snapshot: String,
    },

    /// Bad run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// An operation that needs collected posterior samples was called too early.
    #[error("no posterior samples collected: {0}")]
    NoSamples(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Coarse error categories, used for exit codes and structured error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl NbpError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            NbpError::Config(_) => ErrorKind::Usage,
            NbpError::Domain(_) | NbpError::Numerical { .. } => ErrorKind::Numerical,
            NbpError::Index(_)
            | NbpError::Parse { .. }
            | NbpError::Dimension(_)
            | NbpError::NoSamples(_)
            | NbpError::Io(_)
            | NbpError::Serde(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NbpError::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        NbpError::Parse {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NbpError>;
