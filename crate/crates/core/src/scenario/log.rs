//! Episode logs: a `POWRL-EPISODE-LOG 1` header line, one JSON metadata
//! line, then one JSON record per step. Field order is fixed by the struct
//! declarations below, so two runs with equal inputs write equal bytes.
//!
//! Non-finite loadings (infeasible look-aheads) are written as `null`.

use crate::controller::{Branch, Decision};
use crate::environment::{Action, DoneReason, IllegalReason, StepResult};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const LOG_MAGIC: &str = "POWRL-EPISODE-LOG";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("expected header `{LOG_MAGIC} {LOG_VERSION}`, found `{0}`")]
    Header(String),
    #[error("missing metadata line")]
    MissingMeta,
    #[error("record {record} (line {line}): {message}")]
    Record { record: usize, line: usize, message: String },
}

mod rho_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub grid: String,
    pub chronic: String,
    pub seed: u64,
    pub agent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    #[serde(with = "rho_or_null")]
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub branch: Branch,
    pub candidates: usize,
    #[serde(with = "rho_or_null")]
    pub rho_do_nothing: f64,
    #[serde(with = "rho_or_null")]
    pub rho_chosen: f64,
    pub simulated: Vec<CandidateRecord>,
}

impl From<&Decision> for DecisionRecord {
    fn from(d: &Decision) -> Self {
        DecisionRecord {
            branch: d.branch,
            candidates: d.candidates.len(),
            rho_do_nothing: d.rho_do_nothing,
            rho_chosen: d.rho_chosen,
            simulated: d.candidates.iter().map(|c| CandidateRecord { index: c.index, rho_max: c.rho_max }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Chronic row reached by this step.
    pub step: usize,
    /// Applied action (`DoNothing` if the request was illegal).
    pub action: Action,
    pub illegal: Option<IllegalReason>,
    pub attacked: Option<usize>,
    pub tripped: Vec<usize>,
    pub rho: f64,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    pub decision: Option<DecisionRecord>,
}

impl StepRecord {
    pub fn new(result: &StepResult, decision: Option<&Decision>) -> Self {
        StepRecord {
            step: result.observation.step,
            action: result.info.applied.clone(),
            illegal: result.info.illegal,
            attacked: result.info.attacked_line,
            tripped: result.info.tripped_lines.clone(),
            rho: result.observation.rho_max(),
            reward: result.reward,
            done: result.done,
            done_reason: result.done_reason,
            decision: decision.map(DecisionRecord::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub meta: LogMeta,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn new(meta: LogMeta) -> Self {
        EpisodeLog { meta, records: Vec::new() }
    }

    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn header_line() -> String {
        format!("{LOG_MAGIC} {LOG_VERSION}")
    }

    pub fn to_text(&self) -> String {
        let mut s = Self::header_line();
        s.push('\n');
        s.push_str(&serde_json::to_string(&self.meta).expect("metadata serializes"));
        s.push('\n');
        for r in &self.records {
            s.push_str(&record_line(r));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
        if header != Self::header_line() {
            return Err(LogError::Header(header.to_string()));
        }
        let (meta_no, meta_line) = lines.next().ok_or(LogError::MissingMeta)?;
        let meta: LogMeta = serde_json::from_str(meta_line).map_err(|e| LogError::Record {
            record: 0,
            line: meta_no + 1,
            message: format!("metadata: {e}"),
        })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let r: StepRecord = serde_json::from_str(line).map_err(|e| LogError::Record {
                record: records.len(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(EpisodeLog { meta, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LogError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| LogError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }
}

/// One JSON line, without the trailing newline.
pub fn record_line(r: &StepRecord) -> String {
    serde_json::to_string(r).expect("records serialize")
}
