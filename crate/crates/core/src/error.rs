use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rank K = {rank} must satisfy 1 <= K <= N = {neurons}")]
    InvalidRank { rank: usize, neurons: usize },

    #[error("shape mismatch in block `{block}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        block: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("operation requires a {expected} readout")]
    ReadoutMismatch { expected: &'static str },

    #[error("latent circuit analysis requires a rank-one network, got K = {0}")]
    RankPrecondition(usize),

    #[error("record has {found} epochs, need at least {needed}")]
    RecordTooShort { needed: usize, found: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
