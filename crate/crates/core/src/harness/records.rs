//! JSON-lines result files: a header, one line per evaluated episode, and a
//! summary once the search has finished.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, HijackOutcome};
use crate::bayesopt::{Evaluation, IterationRecord, Phase, Strategy};
use crate::objective::ScoreWindow;
use crate::pattern::PatternParams;
use crate::simulate::{InfractionReport, Severity, Termination};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultHeader {
    pub schema: u32,
    pub name: String,
    pub config: ExperimentConfig,
    /// Hash of the result-relevant config fields; resuming requires a match.
    pub fingerprint: String,
    /// Baseline episode file, relative to the run directory.
    pub baseline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub params: PatternParams,
    pub unit: Vec<f64>,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub sentinel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<ScoreWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infractions: Option<InfractionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hijack: Option<HijackOutcome>,
    /// Episode file, relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<String>,
    pub best_score: Option<f64>,
    pub best_iteration: Option<usize>,
    pub wall_seconds: f64,
}

/// Per-episode payload carried through the search layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInfo {
    pub episode: String,
    pub window: Option<ScoreWindow>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hijack: Option<HijackOutcome>,
}

impl ResultRecord {
    pub fn from_iteration(rec: &IterationRecord) -> Self {
        let info: Option<EpisodeInfo> = serde_json::from_value(rec.extra.clone()).ok();
        ResultRecord {
            iteration: rec.iteration,
            phase: rec.phase,
            params: rec.params.clone(),
            unit: rec.unit.clone(),
            score: rec.score,
            error: rec.error.clone(),
            sentinel: rec.sentinel,
            window: info.as_ref().and_then(|i| i.window),
            infractions: rec.infractions,
            severity: rec.infractions.map(|r| r.severity),
            termination: info.as_ref().map(|i| i.termination),
            hijack: info.as_ref().and_then(|i| i.hijack),
            episode: info.map(|i| i.episode),
            best_score: rec.best_score,
            best_iteration: rec.best_iteration,
            wall_seconds: rec.wall_seconds,
        }
    }

    /// What the evaluator returned for this record, for replay on resume.
    pub fn evaluation(&self) -> Result<Evaluation, String> {
        if let Some(e) = &self.error {
            return Err(e.clone());
        }
        let score = self.score.ok_or_else(|| "record has neither score nor error".to_string())?;
        let extra = match (&self.episode, self.termination) {
            (Some(episode), Some(termination)) => serde_json::to_value(EpisodeInfo {
                episode: episode.clone(),
                window: self.window,
                termination,
                hijack: self.hijack,
            })
            .expect("episode info serializes"),
            _ => serde_json::Value::Null,
        };
        Ok(Evaluation {
            score,
            infractions: self.infractions,
            sentinel: self.sentinel,
            extra,
        })
    }

    pub fn is_failure(&self) -> bool {
        self.score.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub evaluated: usize,
    pub failed: usize,
    pub best_iteration: Option<usize>,
    pub best_score: Option<f64>,
    pub worst_severity: Option<Severity>,
    pub hijack_successes: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ResultLine {
    Header(Box<ResultHeader>),
    Iteration(Box<ResultRecord>),
    Summary(RunSummary),
}

impl ResultLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result line serializes")
    }
}

/// A parsed result file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub path: PathBuf,
    pub header: ResultHeader,
    pub records: Vec<ResultRecord>,
    pub summary: Option<RunSummary>,
}

impl RunData {
    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or_else(|| Path::new("."))
    }
}

/// Read a result file; any malformed line is an error.
pub fn load_results(path: &Path) -> Result<RunData, HarnessError> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut header = None;
    let mut records = Vec::new();
    let mut summary = None;
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ResultLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::format(path, format!("line {}: {e}", n + 1)))?;
        match parsed {
            ResultLine::Header(h) if n == 0 => {
                if h.schema != SCHEMA_VERSION {
                    return Err(HarnessError::format(path, format!("unsupported schema version {}", h.schema)));
                }
                header = Some(*h);
            }
            ResultLine::Header(_) => return Err(HarnessError::format(path, format!("line {}: stray header", n + 1))),
            ResultLine::Iteration(r) => {
                if r.iteration != records.len() {
                    return Err(HarnessError::format(
                        path,
                        format!("line {}: iteration {} out of order", n + 1, r.iteration),
                    ));
                }
                records.push(*r);
            }
            ResultLine::Summary(s) => summary = Some(s),
        }
    }
    let header = header.ok_or_else(|| HarnessError::format(path, "missing header"))?;
    Ok(RunData {
        path: path.to_path_buf(),
        header,
        records,
        summary,
    })
}
