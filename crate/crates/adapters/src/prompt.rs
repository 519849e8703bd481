//! Zero-shot prompt templates and answer parsing.

use std::fmt;
use std::str::FromStr;

use positionality_core::scale::LabelScale;
use serde::{Deserialize, Serialize};

use crate::AdapterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SocialAcceptability,
    HateSpeech,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SocialAcceptability => "social_acceptability",
            TaskKind::HateSpeech => "hate_speech",
        }
    }

    pub fn scale(self) -> LabelScale {
        match self {
            TaskKind::SocialAcceptability => LabelScale::social_acceptability(),
            TaskKind::HateSpeech => LabelScale::hate_speech(),
        }
    }

    fn question(self) -> &'static str {
        match self {
            TaskKind::SocialAcceptability => "How socially acceptable is the above situation: good, okay, or bad?",
            TaskKind::HateSpeech => {
                "Does the above text contain rude, hateful, aggressive, disrespectful, or unreasonable language?"
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "social_acceptability" => Ok(TaskKind::SocialAcceptability),
            "hate_speech" => Ok(TaskKind::HateSpeech),
            other => Err(AdapterError::UnknownTaskKind(other.to_string())),
        }
    }
}

pub fn build_prompt(kind: TaskKind, text: &str) -> Result<String, AdapterError> {
    if text.trim().is_empty() {
        return Err(AdapterError::EmptyText);
    }
    Ok(format!("Text: {text}\nQuestion: {}\nAnswer:", kind.question()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelAnswer {
    Score(i64),
    Unparseable,
}

/// Reads the first word of a model's answer, ignoring case and surrounding
/// punctuation.
pub fn parse_model_answer(kind: TaskKind, answer: &str) -> ModelAnswer {
    let first = answer
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .unwrap_or_default();
    let score = match (kind, first.as_str()) {
        (TaskKind::SocialAcceptability, "good") => 1,
        (TaskKind::SocialAcceptability, "okay") => 0,
        (TaskKind::SocialAcceptability, "bad") => -1,
        (TaskKind::HateSpeech, "yes") => 1,
        (TaskKind::HateSpeech, "no") => -1,
        _ => return ModelAnswer::Unparseable,
    };
    ModelAnswer::Score(score)
}
