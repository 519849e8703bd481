//! Sources of target values to audit: dataset gold labels, score files,
//! remote scoring endpoints, and zero-shot prompting.

pub mod prompt;
pub mod source;

pub use prompt::{build_prompt, parse_model_answer, ModelAnswer, TaskKind};
pub use source::{fetch_predictions, FetchFailure, FetchOutcome, ScoreRescale, SourceKind, TargetSource};

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("unknown task kind {0:?}")]
    UnknownTaskKind(String),
    #[error("instance text is empty")]
    EmptyText,
    #[error("invalid source config: {0}")]
    Config(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error(transparent)]
    Core(#[from] positionality_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Http(#[from] reqwest::Error),
}
