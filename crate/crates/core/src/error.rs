//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("no MaxProcs header and no cluster-size override given")]
    MissingMaxProcs,
    #[error("trace contains no valid jobs")]
    EmptyTrace,
    #[error("requested {requested} jobs but only {available} available")]
    InsufficientJobs { requested: usize, available: usize },
    #[error("bad generator config: {0}")]
    ConfigError(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("action {slot} is not a legal observation slot")]
    IllegalAction { slot: usize },
    #[error("scheduler asked to select from an empty queue")]
    EmptyQueue,
    #[error("queue index {index} out of bounds (queue length {len})")]
    BadQueueIndex { index: usize, len: usize },
    #[error("episode is already finished")]
    EpisodeDone,
    #[error("sequence contains no jobs")]
    EmptySequence,
}

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("every observation slot is masked illegal")]
    NoLegalAction,
    #[error("model file is not in the expected format: {0}")]
    BadModelFile(String),
    #[error("model shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("goal needs per-user info but the trace has jobs without a user id")]
    MissingUserInfo,
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("bad training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
