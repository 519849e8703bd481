//! Append-only event logs, the on-disk study store, and annotation export.
//!
//! Layout under the store root:
//!
//! ```text
//! studies/{study_id}/study.json     definition, written once
//! studies/{study_id}/events.jsonl   one LogRecord per line, seq dense from 0
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::demographics::{CulturalSphereTable, DemographicProfile};
use crate::domain::Annotation;
use crate::error::{Error, Result};
use crate::study::{StudyDefinition, StudyEvent, StudyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: StudyEvent,
    pub timestamp: DateTime<Utc>,
}

/// A JSONL event log opened for appending. Every append is flushed and
/// synced before it returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Opens or creates the log and returns its existing records.
    ///
    /// A trailing line without a newline is a torn write and is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogRecord>)> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let complete = buf.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < buf.len() {
            file.set_len(complete as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let records = parse_records(&buf[..complete])?;
        let next_seq = records.len() as u64;
        Ok((Self { path, file, next_seq }, records))
    }

    /// Reads a log without opening it for writing.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        let complete = buf.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        parse_records(&buf[..complete])
    }

    pub fn append(&mut self, event: &StudyEvent, timestamp: DateTime<Utc>) -> Result<LogRecord> {
        let record = LogRecord {
            seq: self.next_seq,
            event: event.clone(),
            timestamp,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.next_seq += 1;
        Ok(record)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }
}

fn parse_records(bytes: &[u8]) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_slice(line)
            .map_err(|e| Error::Invalid(format!("event log line {}: {e}", lineno + 1)))?;
        if record.seq != records.len() as u64 {
            return Err(Error::Invalid(format!(
                "event log line {}: expected seq {}, found {}",
                lineno + 1,
                records.len(),
                record.seq
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Directory-backed collection of studies.
#[derive(Debug, Clone)]
pub struct StudyStore {
    root: PathBuf,
}

impl StudyStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("studies"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn study_dir(&self, study_id: &str) -> PathBuf {
        self.root.join("studies").join(study_id)
    }

    fn events_path(&self, study_id: &str) -> PathBuf {
        self.study_dir(study_id).join("events.jsonl")
    }

    pub fn exists(&self, study_id: &str) -> bool {
        self.study_dir(study_id).join("study.json").is_file()
    }

    pub fn create_study(&self, definition: &StudyDefinition) -> Result<()> {
        definition.validate()?;
        let dir = self.study_dir(&definition.id);
        if dir.exists() {
            return Err(Error::Conflict(format!("study {:?} already exists", definition.id)));
        }
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("study.json.tmp");
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, definition)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        File::create(dir.join("events.jsonl"))?.sync_all()?;
        fs::rename(tmp, dir.join("study.json"))?;
        Ok(())
    }

    pub fn list_studies(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("studies"))? {
            let entry = entry?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if self.exists(&id) {
                ids.push(id);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load_definition(&self, study_id: &str) -> Result<StudyDefinition> {
        if !self.exists(study_id) {
            return Err(Error::UnknownStudy(study_id.to_string()));
        }
        let f = File::open(self.study_dir(study_id).join("study.json"))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn open_log(&self, study_id: &str) -> Result<(EventLog, Vec<LogRecord>)> {
        if !self.exists(study_id) {
            return Err(Error::UnknownStudy(study_id.to_string()));
        }
        EventLog::open(self.events_path(study_id))
    }

    /// Appends one event to a study's log.
    pub fn append(&self, study_id: &str, event: &StudyEvent, timestamp: DateTime<Utc>) -> Result<LogRecord> {
        let (mut log, _) = self.open_log(study_id)?;
        log.append(event, timestamp)
    }

    /// Replays a study's log into fresh state.
    pub fn load_state(
        &self,
        study_id: &str,
        spheres: Arc<CulturalSphereTable>,
    ) -> Result<(StudyState, EventLog)> {
        let definition = self.load_definition(study_id)?;
        let (log, records) = self.open_log(study_id)?;
        let state = StudyState::replay(definition, spheres, records.iter().map(|r| &r.event))?;
        Ok((state, log))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Invalid(format!("unknown export format {other:?}"))),
        }
    }
}

/// One exported annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub participant_id: String,
    pub instance_id: String,
    pub score: i64,
    pub label_text: String,
    pub created_at: DateTime<Utc>,
}

const EXPORT_HEADER: [&str; 5] = ["participant_id", "instance_id", "score", "label_text", "created_at"];

impl ExportRow {
    pub fn into_annotation(self) -> Annotation {
        Annotation {
            participant_id: self.participant_id,
            instance_id: self.instance_id,
            score: self.score,
            rationale: None,
            created_at: self.created_at,
        }
    }
}

/// Annotations in submission order.
pub fn export_rows(state: &StudyState) -> Vec<ExportRow> {
    state
        .annotations()
        .iter()
        .map(|r| ExportRow {
            participant_id: r.annotation.participant_id.clone(),
            instance_id: r.annotation.instance_id.clone(),
            score: r.annotation.score,
            label_text: r.label_text.clone(),
            created_at: r.annotation.created_at,
        })
        .collect()
}

/// Writes rows; CSV always carries a header, even with no rows.
pub fn write_export<W: Write>(mut writer: W, rows: &[ExportRow], format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            w.write_record(EXPORT_HEADER)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ExportFormat::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut writer, row)?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

pub fn read_export<R: Read>(reader: R, format: ExportFormat) -> Result<Vec<ExportRow>> {
    match format {
        ExportFormat::Csv => {
            let mut r = csv::Reader::from_reader(reader);
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            if header != EXPORT_HEADER {
                return Err(Error::Invalid(format!("unexpected export header {header:?}")));
            }
            Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
        }
        ExportFormat::Jsonl => {
            let mut rows = Vec::new();
            for line in BufReader::new(reader).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    rows.push(serde_json::from_str(&line)?);
                }
            }
            Ok(rows)
        }
    }
}

/// Sidecar line pairing a participant with their profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub participant_id: String,
    pub profile: DemographicProfile,
}

pub fn write_profiles<W: Write>(mut writer: W, state: &StudyState) -> Result<()> {
    for (id, rec) in state.participants() {
        let row = ProfileRow {
            participant_id: id.clone(),
            profile: rec.profile.clone(),
        };
        serde_json::to_writer(&mut writer, &row)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_profiles<R: Read>(reader: R) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ProfileRow = serde_json::from_str(&line)?;
        row.profile.validate()?;
        rows.push(row);
    }
    Ok(rows)
}
