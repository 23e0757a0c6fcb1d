use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code classes:
/// argument/usage, data (files and their contents), and numeric.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("ordering error at row {row}: {detail}")]
    Ordering { row: usize, detail: String },
    #[error("value error at row {row}, column {column}: {detail}")]
    Value {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate levels: {0}")]
    DegenerateLevels(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
