use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level generation failed for {task} seed {level_id} after {attempts} attempts")]
    GenerationFailed {
        task: String,
        level_id: u64,
        attempts: usize,
    },
    #[error("invalid task parameters: {0}")]
    InvalidTask(String),
    #[error("episode already finished; reset before stepping")]
    EpisodeDone,
    #[error("action {0} outside the 7-action set")]
    InvalidAction(usize),
    #[error("goal unreachable in level {0} (malformed level)")]
    Unreachable(u64),
    #[error("observation has zero lifelong count; record visits before scoring")]
    ZeroCount,
    #[error("episode of {len} transitions exceeds buffer capacity {capacity}")]
    EpisodeTooLong { len: usize, capacity: usize },
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} already exists; pass the force flag to overwrite")]
    AlreadyExists(String),
    #[error("{path}: {msg}")]
    Data { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
