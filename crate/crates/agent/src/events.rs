//! Append-only campaign event log. Every state change of a campaign is one
//! event, and replaying the events in order rebuilds the campaign exactly.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use lodestar_core::acquisition::AcquisitionConfig;
use lodestar_core::campaign::{InsightsObject, Observation, Trial, TrialFailure};
use lodestar_core::compass::ExperimentCompass;
use lodestar_core::space::PointAssignment;

use crate::error::{AgentError, AgentResult};
use crate::knowledge::{NoteRecord, VerificationReport};
use crate::reasoning::{HypothesisRow, Overview};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Total evaluations.
    pub budget: usize,
    pub acquisition: AcquisitionConfig,
    /// Passages retrieved per knowledge query.
    pub knowledge_k: usize,
    pub knowledge_depth: usize,
    /// Character cap on retrieved knowledge in a prompt.
    pub knowledge_budget: usize,
    pub narrative_temperature: f64,
    /// Extra entity names accepted by note verification.
    #[serde(default)]
    pub whitelist: Vec<String>,
}

impl CampaignConfig {
    pub fn for_compass(compass: &ExperimentCompass, seed: u64) -> Self {
        CampaignConfig {
            seed,
            budget: compass.budget.total_evaluations(),
            acquisition: AcquisitionConfig::qlogei(),
            knowledge_k: 3,
            knowledge_depth: 2,
            knowledge_budget: 2000,
            narrative_temperature: 0.7,
            whitelist: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub points: Vec<PointAssignment>,
    pub acquisition_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub compass: ExperimentCompass,
    pub config: CampaignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub round: usize,
    pub trials: Vec<Trial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolSnapshot>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub audit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Observed(Observation),
    Failed(TrialFailure),
}

impl Outcome {
    pub fn trial_id(&self) -> &str {
        match self {
            Outcome::Observed(o) => &o.trial_id,
            Outcome::Failed(f) => &f.trial_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightsRecord {
    /// The round these insights guide.
    pub round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overview: Option<Overview>,
    /// `None` when the phase failed and the previous insights stand.
    pub insights: Option<InsightsObject>,
    #[serde(default)]
    pub retrieved_knowledge: String,
    #[serde(default)]
    pub raw: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub audit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteStoredRecord {
    pub note: NoteRecord,
    pub verification: VerificationReport,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub audit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub hypotheses: Vec<HypothesisRow>,
    pub summary: String,
    pub conclusion: String,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum EventPayload {
    Created(Created),
    TrialProposed(Proposal),
    ObservationRecorded(Outcome),
    Insights(InsightsRecord),
    NoteStored(NoteStoredRecord),
    Finished(Report),
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::Created(_) => "created",
            EventPayload::TrialProposed(_) => "trial-proposed",
            EventPayload::ObservationRecorded(_) => "observation-recorded",
            EventPayload::Insights(_) => "insights",
            EventPayload::NoteStored(_) => "note-stored",
            EventPayload::Finished(_) => "finished",
        }
    }

    pub fn flags(&self) -> &[String] {
        match self {
            EventPayload::TrialProposed(p) => &p.flags,
            EventPayload::Insights(i) => &i.flags,
            EventPayload::NoteStored(n) => &n.flags,
            EventPayload::Finished(r) => &r.flags,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
    pub timestamp: DateTime<Utc>,
}

/// Event timestamps. The logical clock makes logs byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// `origin + seq` seconds.
    Logical { origin: DateTime<Utc> },
}

impl Clock {
    pub fn logical() -> Self {
        Clock::Logical {
            origin: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    pub fn at(&self, seq: u64) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Logical { origin } => *origin + chrono::Duration::seconds(seq as i64),
        }
    }
}

pub trait EventSink: Send {
    /// Must be durable when it returns `Ok`.
    fn append(&mut self, event: &CampaignEvent) -> AgentResult<()>;
}

/// Keeps nothing; the campaign's in-memory list is the only copy.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _event: &CampaignEvent) -> AgentResult<()> {
        Ok(())
    }
}

/// One JSON event per line, flushed and synced per append.
#[derive(Debug)]
pub struct JsonlSink {
    path: PathBuf,
    file: File,
}

impl JsonlSink {
    pub fn open(path: &Path) -> AgentResult<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlSink {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Reads an existing log and reopens it for appending. A final line torn
    /// by a crash is cut off; a complete final event missing only its
    /// newline gets one. Later appends then start on a fresh line.
    pub fn recover(path: &Path) -> AgentResult<(Vec<CampaignEvent>, Self)> {
        let text = std::fs::read_to_string(path)?;
        let events = parse_events(&text).map_err(|e| AgentError::EventLog(format!("{}: {e}", path.display())))?;
        let mut sink = Self::open(path)?;
        if !text.is_empty() && !text.ends_with('\n') {
            let cut = text.rfind('\n').map_or(0, |i| i + 1);
            if serde_json::from_str::<CampaignEvent>(&text[cut..]).is_ok() {
                sink.file.write_all(b"\n")?;
            } else {
                sink.file.set_len(cut as u64)?;
            }
            sink.file.sync_data()?;
        }
        Ok((events, sink))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for JsonlSink {
    fn append(&mut self, event: &CampaignEvent) -> AgentResult<()> {
        let mut line = serde_json::to_string(event).map_err(|e| AgentError::EventLog(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }
}

pub fn to_jsonl(events: &[CampaignEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}

/// Reads a log written by [`JsonlSink`]. A final line without a newline
/// that fails to parse is a torn write and is skipped; any other bad line
/// is an error.
pub fn read_events(path: &Path) -> AgentResult<Vec<CampaignEvent>> {
    let text = std::fs::read_to_string(path)?;
    parse_events(&text).map_err(|e| AgentError::EventLog(format!("{}: {e}", path.display())))
}

pub fn parse_events(text: &str) -> Result<Vec<CampaignEvent>, String> {
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut events: Vec<CampaignEvent> = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CampaignEvent>(line) {
            Ok(e) => {
                if e.seq != events.len() as u64 {
                    return Err(format!("line {}: sequence {} where {} was expected", i + 1, e.seq, events.len()));
                }
                events.push(e);
            }
            Err(_) if i == last && !complete => break,
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(seq: u64) -> CampaignEvent {
        CampaignEvent {
            seq,
            payload: EventPayload::ObservationRecorded(Outcome::Observed(Observation {
                trial_id: format!("t{seq:04}"),
                value: 0.1 + 0.2,
                recorded_at: Clock::logical().at(seq),
            })),
            timestamp: Clock::logical().at(seq),
        }
    }

    #[test]
    fn wire_shape_and_float_roundtrip() {
        let e = event(0);
        let line = serde_json::to_string(&e).unwrap();
        assert!(line.starts_with(r#"{"seq":0,"kind":"observation-recorded","payload":"#), "{line}");
        let back: CampaignEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn torn_tail_is_skipped_but_corruption_is_not() {
        let good = to_jsonl(&[event(0), event(1)]);
        assert_eq!(parse_events(&good).unwrap().len(), 2);
        let torn = format!("{good}{{\"seq\":2,\"ki");
        assert_eq!(parse_events(&torn).unwrap().len(), 2);
        let corrupt = format!("{{oops}}\n{good}");
        assert!(parse_events(&corrupt).is_err());
        let gap = to_jsonl(&[event(0), event(2)]);
        assert!(parse_events(&gap).is_err());
    }

    #[test]
    fn jsonl_sink_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut sink = JsonlSink::open(&path).unwrap();
        sink.append(&event(0)).unwrap();
        sink.append(&event(1)).unwrap();
        assert_eq!(read_events(&path).unwrap(), vec![event(0), event(1)]);
    }

    #[test]
    fn recover_repairs_the_tail_before_appending() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let good = to_jsonl(&[event(0), event(1)]);
        std::fs::write(&path, format!("{good}{{\"seq\":2,\"ki")).unwrap();
        let (events, mut sink) = JsonlSink::recover(&path).unwrap();
        assert_eq!(events.len(), 2);
        sink.append(&event(2)).unwrap();
        assert_eq!(read_events(&path).unwrap(), vec![event(0), event(1), event(2)]);

        // a whole event missing only its newline is kept
        std::fs::write(&path, good.trim_end()).unwrap();
        let (events, mut sink) = JsonlSink::recover(&path).unwrap();
        assert_eq!(events.len(), 2);
        sink.append(&event(2)).unwrap();
        assert_eq!(read_events(&path).unwrap().len(), 3);
    }
}
