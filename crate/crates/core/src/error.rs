use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
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
    #[error("row width mismatch at line {line}: expected {expected} cells, found {found}")]
    RowWidthMismatch { line: u64, expected: usize, found: usize },
    #[error("no usable rows in {0}")]
    NoUsableRows(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("target column `{0}` is not numeric")]
    CategoricalTarget(String),
    #[error("target column `{0}` is constant")]
    ConstantTarget(String),
    #[error("too many features after encoding: {0} > 100")]
    TooManyFeatures(usize),
    #[error("too few features after encoding: {0} < 2")]
    TooFewFeatures(usize),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerically degenerate spec: {0}")]
    DegenerateSpec(String),
    #[error("task {index}: {source}")]
    Task {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
