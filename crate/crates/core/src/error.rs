use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label:?} is not on scale {scale:?}")]
    UnknownLabel { scale: String, label: String },

    #[error("score {score} is not on scale {scale:?}")]
    OffScale { scale: String, score: f64 },

    #[error("invalid scale {name:?}: {reason}")]
    InvalidScale { name: String, reason: String },

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("annotations reference unknown participants: {0:?}")]
    UnknownParticipants(Vec<String>),

    #[error("target {target:?} has no prediction for instances {instances:?}")]
    MissingPredictions {
        target: String,
        instances: Vec<String>,
    },

    #[error("filter matched no instances")]
    EmptyPopulation,

    #[error("requested {requested} instances but only {available} pass the filter")]
    InsufficientPopulation { requested: usize, available: usize },

    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),

    #[error("unknown study {0:?}")]
    UnknownStudy(String),

    #[error("unknown instance {0:?}")]
    UnknownInstance(String),

    #[error("unknown target {0:?}")]
    UnknownTarget(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
