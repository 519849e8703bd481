//! Target sources and prediction fetching.

use std::collections::BTreeMap;
use std::fs::File;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use positionality_core::domain::{read_predictions, Instance, PredictionKind, PredictionRecord};
use positionality_core::scale::LabelScale;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::prompt::{build_prompt, parse_model_answer, ModelAnswer, TaskKind};
use crate::AdapterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// The instances' own gold scores.
    Gold,
    /// A predictions CSV on disk.
    File,
    /// A remote endpoint returning a numeric score per instance.
    HttpScore,
    /// A remote text-generation endpoint answering the zero-shot prompt.
    LlmPrompt,
}

/// Linear map from `from` onto `to`; `to` defaults to the task scale's range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRescale {
    #[serde(default = "unit_interval")]
    pub from: [f64; 2],
    #[serde(default)]
    pub to: Option<[f64; 2]>,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

impl ScoreRescale {
    pub fn apply(&self, value: f64, scale: &LabelScale) -> f64 {
        let [a, b] = self.from;
        let [c, d] = self
            .to
            .unwrap_or([scale.min_score() as f64, scale.max_score() as f64]);
        c + (value - a) * (d - c) / (b - a)
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSource {
    pub target_id: String,
    pub kind: SourceKind,
    /// File path, or URL where `{instance_id}` is substituted.
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub score_rescale: Option<ScoreRescale>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    /// Retries after the first attempt.
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// JSON pointer into the response body; defaults to `/score` or `/text`.
    #[serde(default)]
    pub response_pointer: Option<String>,
    /// Required for `llm_prompt`.
    #[serde(default)]
    pub task: Option<TaskKind>,
}

impl TargetSource {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let bad = |msg: &str| Err(AdapterError::Config(format!("source {:?}: {msg}", self.target_id)));
        if self.target_id.is_empty() {
            return bad("target_id must be nonempty");
        }
        match self.kind {
            SourceKind::Gold => {}
            SourceKind::File if self.location.is_none() => return bad("file sources need a location"),
            SourceKind::File => {}
            SourceKind::HttpScore | SourceKind::LlmPrompt => {
                if self.location.is_none() {
                    return bad("remote sources need a location");
                }
                if self.timeout_ms.is_none() || self.max_retries.is_none() {
                    return bad("remote sources need timeout_ms and max_retries");
                }
                if self.concurrency == 0 {
                    return bad("concurrency must be positive");
                }
            }
        }
        if self.kind == SourceKind::LlmPrompt && self.task.is_none() {
            return bad("llm_prompt sources need a task");
        }
        if let Some(r) = &self.score_rescale {
            if r.from[0] == r.from[1] {
                return bad("score_rescale.from must span a nonzero interval");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub instance_id: String,
    pub reason: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchOutcome {
    /// Sorted by instance id, at most one per instance.
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<FetchFailure>,
    /// Retries across all requests.
    pub retries: u32,
}

/// Collects one prediction per instance from `source`.
///
/// Instances that cannot be scored end up in `failures`, never silently
/// missing.
pub async fn fetch_predictions(
    source: &TargetSource,
    instances: &[Instance],
    scale: &LabelScale,
) -> Result<FetchOutcome, AdapterError> {
    source.validate()?;
    let mut outcome = match source.kind {
        SourceKind::Gold => FetchOutcome {
            records: instances
                .iter()
                .map(|i| record(source, &i.id, PredictionKind::Scalar, i.gold))
                .collect(),
            ..FetchOutcome::default()
        },
        SourceKind::File => from_file(source, instances, scale)?,
        SourceKind::HttpScore | SourceKind::LlmPrompt => from_remote(source, instances, scale).await?,
    };
    outcome.records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    outcome.failures.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(outcome)
}

fn record(source: &TargetSource, instance_id: &str, kind: PredictionKind, value: f64) -> PredictionRecord {
    PredictionRecord {
        instance_id: instance_id.to_string(),
        target_id: source.target_id.clone(),
        kind,
        value,
    }
}

fn from_file(source: &TargetSource, instances: &[Instance], scale: &LabelScale) -> Result<FetchOutcome, AdapterError> {
    let path = source.location.as_deref().expect("validated");
    let rows = read_predictions(File::open(path)?)?;
    let mut by_instance: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.target_id == source.target_id) {
        if by_instance.insert(row.instance_id.as_str(), row).is_some() {
            return Err(AdapterError::Config(format!(
                "{path}: duplicate row for instance {:?}",
                row.instance_id
            )));
        }
    }
    let mut outcome = FetchOutcome::default();
    for inst in instances {
        match by_instance.get(inst.id.as_str()) {
            Some(row) => {
                let (kind, value) = match (&source.score_rescale, row.kind) {
                    (Some(r), _) => (PredictionKind::Scalar, r.apply(row.value, scale)),
                    (None, k) => (k, row.value),
                };
                outcome.records.push(record(source, &inst.id, kind, value));
            }
            None => outcome.failures.push(FetchFailure {
                instance_id: inst.id.clone(),
                reason: "missing from predictions file".into(),
                attempts: 0,
            }),
        }
    }
    Ok(outcome)
}

async fn from_remote(
    source: &TargetSource,
    instances: &[Instance],
    scale: &LabelScale,
) -> Result<FetchOutcome, AdapterError> {
    let token = match &source.auth_env {
        Some(var) => Some(std::env::var(var).map_err(|_| AdapterError::MissingCredential(var.clone()))?),
        None => None,
    };
    let client = reqwest::Client::builder()
        .timeout(Duration::from_millis(source.timeout_ms.expect("validated")))
        .build()?;
    let retries = AtomicU32::new(0);

    let results: Vec<Result<PredictionRecord, FetchFailure>> = stream::iter(instances)
        .map(|inst| fetch_one(source, &client, token.as_deref(), inst, scale, &retries))
        .buffer_unordered(source.concurrency)
        .collect()
        .await;

    let mut outcome = FetchOutcome {
        retries: retries.load(Ordering::Relaxed),
        ..FetchOutcome::default()
    };
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => {
                tracing::warn!(instance = %f.instance_id, reason = %f.reason, "prediction failed");
                outcome.failures.push(f);
            }
        }
    }
    Ok(outcome)
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(String),
}

async fn fetch_one(
    source: &TargetSource,
    client: &reqwest::Client,
    token: Option<&str>,
    inst: &Instance,
    scale: &LabelScale,
    retries: &AtomicU32,
) -> Result<PredictionRecord, FetchFailure> {
    let url = source
        .location
        .as_deref()
        .expect("validated")
        .replace("{instance_id}", &inst.id);
    let body = match source.kind {
        SourceKind::LlmPrompt => {
            let task = source.task.expect("validated");
            let prompt = build_prompt(task, &inst.text).map_err(|e| FetchFailure {
                instance_id: inst.id.clone(),
                reason: e.to_string(),
                attempts: 0,
            })?;
            json!({ "instance_id": inst.id, "prompt": prompt })
        }
        _ => json!({ "instance_id": inst.id, "text": inst.text }),
    };
    let budget = source.max_retries.expect("validated");
    let fail = |reason: String, attempts: u32| FetchFailure {
        instance_id: inst.id.clone(),
        reason,
        attempts,
    };

    let mut attempt = 0u32;
    let response = loop {
        attempt += 1;
        let mut req = client.post(&url).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let result = match req.send().await {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    match resp.json::<Value>().await {
                        Ok(v) => Attempt::Done(v),
                        Err(e) => Attempt::Fatal(format!("invalid response body: {e}")),
                    }
                } else if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                    Attempt::Retry(format!("HTTP {status}"))
                } else {
                    Attempt::Fatal(format!("HTTP {status}"))
                }
            }
            Err(e) => Attempt::Retry(e.to_string()),
        };
        match result {
            Attempt::Done(v) => break v,
            Attempt::Fatal(reason) => return Err(fail(reason, attempt)),
            Attempt::Retry(reason) if attempt > budget => {
                return Err(fail(format!("retries exhausted: {reason}"), attempt));
            }
            Attempt::Retry(reason) => {
                retries.fetch_add(1, Ordering::Relaxed);
                tracing::info!(instance = %inst.id, attempt, %reason, "retrying");
                let delay = source.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                tokio::time::sleep(Duration::from_millis(delay)).await;
            }
        }
    };

    match source.kind {
        SourceKind::HttpScore => {
            let pointer = source.response_pointer.as_deref().unwrap_or("/score");
            let value = response
                .pointer(pointer)
                .and_then(Value::as_f64)
                .ok_or_else(|| fail(format!("no number at {pointer}"), attempt))?;
            let (kind, value) = match &source.score_rescale {
                Some(r) => (PredictionKind::Scalar, r.apply(value, scale)),
                None => (PredictionKind::Scalar, value),
            };
            Ok(record(source, &inst.id, kind, value))
        }
        SourceKind::LlmPrompt => {
            let pointer = source.response_pointer.as_deref().unwrap_or("/text");
            let text = response
                .pointer(pointer)
                .and_then(Value::as_str)
                .ok_or_else(|| fail(format!("no string at {pointer}"), attempt))?;
            match parse_model_answer(source.task.expect("validated"), text) {
                ModelAnswer::Score(s) => Ok(record(source, &inst.id, PredictionKind::Categorical, s as f64)),
                ModelAnswer::Unparseable => Err(fail(format!("unparseable answer {text:?}"), attempt)),
            }
        }
        SourceKind::Gold | SourceKind::File => unreachable!("local kinds handled elsewhere"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_midpoint() {
        let r = ScoreRescale {
            from: [0.0, 1.0],
            to: None,
        };
        assert_eq!(r.apply(0.5, &LabelScale::hate_speech()), 0.0);
        assert_eq!(r.apply(1.0, &LabelScale::social_acceptability()), 2.0);
        let flipped = ScoreRescale {
            from: [0.0, 1.0],
            to: Some([2.0, -2.0]),
        };
        assert_eq!(flipped.apply(0.25, &LabelScale::social_acceptability()), 1.0);
    }

    #[test]
    fn remote_sources_need_budget() {
        let src: TargetSource = serde_json::from_value(json!({
            "target_id": "perspective",
            "kind": "http_score",
            "location": "http://localhost/score"
        }))
        .unwrap();
        assert!(src.validate().is_err());
        let src: TargetSource = serde_json::from_value(json!({
            "target_id": "gpt4",
            "kind": "llm_prompt",
            "location": "http://localhost/complete",
            "timeout_ms": 1000,
            "max_retries": 2
        }))
        .unwrap();
        assert!(src.validate().is_err(), "task missing");
        let gold: TargetSource = serde_json::from_value(json!({"target_id": "gold", "kind": "gold"})).unwrap();
        assert!(gold.validate().is_ok());
        assert_eq!(gold.concurrency, 4);
    }
}
