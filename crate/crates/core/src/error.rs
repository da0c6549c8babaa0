use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    /// A cell that could not be read as a finite number.
    #[error("data error at row {row}, column `{column}`: cannot parse {value:?} as a finite number")]
    Data {
        row: u64,
        column: String,
        value: String,
    },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported checkpoint format_version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
