use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One row of the training log, attached to divergence errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss_ema: f64,
    pub active_fraction: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("malformed record: {0}")]
    Parse(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at iteration {iteration}")]
    Divergence { iteration: usize, trace: Vec<TraceRow> },

    #[error("singular normal equations: {0}")]
    Singular(String),

    #[error("template `{0}` is missing")]
    MissingTemplate(String),

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("id ordering mismatch: {0}")]
    OrderMismatch(String),

    #[error("frame {frame} presented after frame {last}")]
    OutOfOrderFrame { frame: u64, last: u64 },

    #[error("ambiguous scenario script: {0}")]
    AmbiguousScript(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 for input/config problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::Singular(_) | Error::Degenerate(_) => 3,
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
