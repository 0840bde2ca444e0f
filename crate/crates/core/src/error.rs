use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DressError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid utf-8 in {0}")]
    Decode(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing artifact from stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: PathBuf },
    #[error("config error: {0}")]
    Config(String),
}

impl DressError {
    /// Short machine-readable category used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            DressError::Io { .. } => "io",
            DressError::Decode(_) => "decode",
            DressError::Alignment(_) => "alignment",
            DressError::Empty(_) => "empty",
            DressError::Shape(_) => "shape",
            DressError::InvalidArgument(_) => "invalid-argument",
            DressError::Checkpoint(_) => "checkpoint",
            DressError::MissingArtifact { .. } => "missing-artifact",
            DressError::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DressError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DressError>;
