use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("header does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("non-numeric cell `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label `{0}` is not binary")]
    NonBinaryLabel(String),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{0} requires both classes to be present")]
    SingleClass(&'static str),
    #[error("training rows contain {0} positive-class rows")]
    ContaminatedTraining(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("model format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn csv(path: impl Into<PathBuf>, e: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            message: e.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
