use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point outside the ball: c*|x|^2 = {value} (must be < 1)")]
    OutOfBall { value: f64 },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("negative sampling exhausted for user {user}: {msg}")]
    SamplingExhausted { user: usize, msg: String },

    #[error("{field}: {msg}")]
    Config { field: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category label used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Empty(_) => "data",
            Error::SamplingExhausted { .. } => "sampling",
            Error::OutOfBall { .. } | Error::Degenerate(_) | Error::NonFinite(_) => "numerical",
            Error::InvalidInput(_) | Error::IndexOutOfRange { .. } | Error::DimensionMismatch { .. } => {
                "input"
            }
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "data" | "sampling" => 4,
            "numerical" => 5,
            _ => 1,
        }
    }
}
