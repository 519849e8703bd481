//! Task-agnostic records shared by sampling, serving, and analysis, plus the
//! instance and prediction file formats.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::LabelScale;

/// One annotatable text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub task_id: String,
    pub text: String,
    #[serde(default)]
    pub strata: BTreeMap<String, String>,
    pub gold: f64,
}

impl Instance {
    pub fn stratum(&self, attribute: &str) -> Option<&str> {
        self.strata.get(attribute).map(String::as_str)
    }

    pub fn validate(&self, scale: &LabelScale) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("instance id must be nonempty".into()));
        }
        if !self.gold.is_finite() || !scale.in_range(self.gold) {
            return Err(Error::OffScale {
                scale: scale.name().to_string(),
                score: self.gold,
            });
        }
        Ok(())
    }
}

fn default_batches() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub title: String,
    pub instruction_text: String,
    pub scale: LabelScale,
    pub batch_size: usize,
    pub strata_attribute: String,
    /// Number of batches a participant annotates before the study reports
    /// completion.
    #[serde(default = "default_batches")]
    pub batches_per_participant: u32,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 3 {
            return Err(Error::Invalid(format!(
                "batch_size must be at least 3, got {}",
                self.batch_size
            )));
        }
        if self.batches_per_participant == 0 {
            return Err(Error::Invalid("batches_per_participant must be positive".into()));
        }
        Ok(())
    }
}

/// One participant's score for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub participant_id: String,
    pub instance_id: String,
    pub score: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Probability,
    Categorical,
    Scalar,
}

/// One target's value for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub target_id: String,
    pub kind: PredictionKind,
    pub value: f64,
}

impl PredictionRecord {
    pub fn validate(&self, scale: &LabelScale) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::NonFinite(self.value));
        }
        let ok = match self.kind {
            PredictionKind::Probability => (0.0..=1.0).contains(&self.value),
            PredictionKind::Categorical => {
                self.value.fract() == 0.0 && scale.contains_score(self.value as i64)
            }
            PredictionKind::Scalar => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "{:?} value {} for instance {:?} target {:?} is out of range",
                self.kind, self.value, self.instance_id, self.target_id
            )))
        }
    }
}

/// Reads instances from JSON Lines. Blank lines are skipped.
pub fn read_instances<R: BufRead>(reader: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let instance: Instance = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("instances line {}: {e}", lineno + 1)))?;
        out.push(instance);
    }
    Ok(out)
}

pub fn write_instances<W: Write>(mut writer: W, instances: &[Instance]) -> Result<()> {
    for instance in instances {
        serde_json::to_writer(&mut writer, instance)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the `instance_id,target_id,kind,value` predictions CSV.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(writer: W, records: &[PredictionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if records.is_empty() {
        wtr.write_record(["instance_id", "target_id", "kind", "value"])?;
    }
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
