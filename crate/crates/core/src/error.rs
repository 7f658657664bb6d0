use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("range error: lesion {lesion_id}: {column}={value} outside [0, 1]")]
    Range {
        lesion_id: String,
        column: String,
        value: f64,
    },

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("member seed={seed} fold={fold} growth={growth}: {source}")]
    Member {
        seed: u64,
        fold: usize,
        growth: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config {name}: {source}")]
    Config {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Integrity(_) => "integrity",
            Error::Input(_) => "input",
            Error::Range { .. } => "range",
            Error::Catalog(_) => "catalog",
            Error::Parameter(_) => "parameter",
            Error::Sampling(_) => "sampling",
            Error::Training(_) => "training",
            Error::Data(_) => "data",
            Error::Shape(_) => "shape",
            Error::Metric(_) => "metric",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Member { source, .. } | Error::Config { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
