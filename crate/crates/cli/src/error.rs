use std::path::PathBuf;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source} (completed: [{}])", .completed.join(", "))]
    Stage {
        stage: String,
        completed: Vec<String>,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] tabcurate_core::Error),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("no artifact: {0}")]
    MissingArtifact(String),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(tabcurate_core::Error::InvalidConfig(_)) => 2,
            CliError::Stage { source, .. } => match source.as_ref() {
                CliError::Config(_) => 2,
                _ => 3,
            },
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
