use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid map: {0}")]
    InvalidMap(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("episode already finished; call reset() before stepping")]
    EpisodeFinished,

    #[error("cell ({x}, {y}) is a wall or outside the grid")]
    WallCell { x: usize, y: usize },

    #[error("state id {id} out of range (state count {count})")]
    StateOutOfRange { id: usize, count: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("linear system is singular")]
    Singular,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("replay buffer is empty")]
    EmptyReplay,

    #[error("operation `{0}` is not supported by this scheduler")]
    SchedulerMismatch(&'static str),

    #[error("operation requires tabular mode")]
    NotTabular,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mismatched environments across runs: `{0}` vs `{1}`")]
    MismatchedEnv(String, String),

    #[error("no runs to aggregate")]
    NoRuns,

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("malformed metrics file {path}: {reason}")]
    Metrics { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
