use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("flag space: {0}")]
    FlagSpace(String),

    /// A configuration or index that does not fit the space it is used with.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("benchmark suite: {0}")]
    Suite(String),

    #[error("synthetic model: {0}")]
    Model(String),

    #[error("evaluation cache: {0}")]
    Cache(String),

    #[error("campaign failed: {0}")]
    Campaign(String),

    /// The campaign was stopped before completion; a checkpoint describes the
    /// progress made so far.
    #[error("campaign interrupted after {events} measurements")]
    Interrupted { events: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub fn io(path: &Path, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            cause,
        }
    }
}
