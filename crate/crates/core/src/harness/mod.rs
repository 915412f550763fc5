//! Experiment orchestration: cached reference runs, persisted searches,
//! hijack classification and report emission.

mod cache;
mod hijack;
mod records;
mod report;
mod run;

pub use cache::{cache_key, record_target, run_baseline, BaselineCache, TargetCache};
pub use hijack::{classify_hijack, HijackOutcome};
pub use records::{load_results, EpisodeInfo, ResultHeader, ResultLine, ResultRecord, RunData, RunSummary, SCHEMA_VERSION};
pub use report::{emit_report, unique_success_curve, Report, SeverityCounts, UNIQUE_TOL};
pub use run::{run_search, EpisodeEvaluator, RunControl, RunOutcome};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesopt::{BayesError, SearchOptions, Strategy};
use crate::controller::{Command, ControllerError, ControllerSpec};
use crate::objective::{ObjectiveError, ObjectiveKind, WindowMode};
use crate::pattern::{param_space, ParamSpace, PatternConfig, PatternError, PatternFamily};
use crate::simulate::{Severity, SimConfig, SimError};
use crate::world::{build_layout, CanvasPlacement, GeometryConfig, ObservationConfig, RoadLayout, Scenario, WorldError};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ROADMARK_OUT";
pub const DEFAULT_OUT: &str = "roadmark-out";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{scenario} {what} run is not safe (severity {severity:?})")]
    Unsafe {
        scenario: Scenario,
        what: &'static str,
        severity: Severity,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Search(#[from] BayesError),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Whether the error comes from a bad configuration rather than a failure while running.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config(_)
            | HarnessError::Unsafe { .. }
            | HarnessError::World(_)
            | HarnessError::Pattern(_)
            | HarnessError::Controller(_) => true,
            HarnessError::Sim(e) => matches!(e, SimError::Config(_)),
            HarnessError::Objective(e) => {
                matches!(e, ObjectiveError::MissingCompanion(..) | ObjectiveError::UnknownKind(_))
            }
            HarnessError::Search(e) => matches!(e, BayesError::Parameter(_) | BayesError::Pattern(_)),
            HarnessError::Format { .. } | HarnessError::Io { .. } => false,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// One experiment: what is attacked, how, and where results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run directory name under `<out>/runs`; derived from the other fields when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub scenario: Scenario,
    /// Canvas slot; the layout's first slot when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    pub pattern: PatternFamily,
    pub objective: ObjectiveKind,
    /// Command the attacker wants the vehicle to follow (hijack only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Command>,
    pub strategy: Strategy,
    pub budget: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Per-dimension grid counts for grid search; the canonical grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    pub window: WindowMode,
    pub search: SearchOptions,
    pub controller: ControllerSpec,
    pub sim: SimConfig,
    pub geometry: GeometryConfig,
    pub view: ObservationConfig,
    pub canvas: PatternConfig,
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: None,
            scenario: Scenario::RightTurn,
            slot: None,
            pattern: PatternFamily::TwoLine,
            objective: ObjectiveKind::AbsSteerDiff,
            target: None,
            strategy: Strategy::Bayes,
            budget: 120,
            warmup: 20,
            seed: 0,
            grid: None,
            window: WindowMode::default(),
            search: SearchOptions::default(),
            controller: ControllerSpec::default(),
            sim: SimConfig::default(),
            geometry: GeometryConfig::default(),
            view: ObservationConfig::default(),
            canvas: PatternConfig::default(),
            out: default_out(),
        }
    }
}

/// Output root from the environment, or `roadmark-out`.
pub fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Command the episodes are driven with.
    pub fn command(&self) -> Command {
        self.scenario.default_command()
    }

    pub fn layout(&self) -> Result<RoadLayout, HarnessError> {
        Ok(build_layout(self.scenario, &self.geometry)?)
    }

    pub fn placement(&self, layout: &RoadLayout) -> Result<CanvasPlacement, HarnessError> {
        Ok(match &self.slot {
            Some(name) => layout.slot(name)?.placement,
            None => layout.default_slot().placement,
        })
    }

    pub fn space(&self) -> Result<ParamSpace, HarnessError> {
        let space = param_space(self.pattern)?;
        Ok(match &self.grid {
            Some(counts) => space.with_grid_counts(counts)?,
            None => space,
        })
    }

    pub fn run_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mut name = format!(
            "{}_{}_{}_{}_seed{}",
            self.scenario,
            self.pattern.to_string().replace(':', "-"),
            self.objective,
            self.strategy,
            self.seed
        );
        if let Some(t) = self.target {
            name.push_str("_to-");
            name.push_str(t.name());
        }
        if let Some(s) = &self.slot {
            name.push('_');
            name.push_str(s);
        }
        name
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join("runs").join(self.run_name())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }

    /// Validate everything that can be checked without simulating.
    pub fn check(&self) -> Result<(), HarnessError> {
        self.sim.check()?;
        self.controller.check()?;
        self.view.check()?;
        self.geometry.check(self.sim.vehicle.width)?;
        self.pattern.check()?;
        if self.objective.needs_target() && self.target.is_none() {
            return Err(HarnessError::Config(format!("objective {} needs a target command", self.objective)));
        }
        if let Some(t) = self.target {
            if !self.scenario.is_intersection() {
                return Err(HarnessError::Config(format!("{} has no junction to hijack", self.scenario)));
            }
            if t == Command::LaneFollow {
                return Err(HarnessError::Config("target must be an intersection command".into()));
            }
            if t == self.command() {
                return Err(HarnessError::Config(format!("target {t} equals the scenario command")));
            }
        }
        if let Some(n) = &self.name {
            if n.is_empty() || n.contains(['/', '\\']) || n == "." || n == ".." {
                return Err(HarnessError::Config(format!("bad run name `{n}`")));
            }
        }
        match self.strategy {
            Strategy::Grid => {}
            Strategy::Random if self.budget == 0 => {
                return Err(HarnessError::Config("budget must be at least 1".into()));
            }
            Strategy::Bayes if self.warmup < 2 || self.warmup > self.budget => {
                return Err(HarnessError::Config(format!(
                    "need 2 <= warmup <= budget, got warmup {} and budget {}",
                    self.warmup, self.budget
                )));
            }
            _ => {}
        }
        let layout = self.layout()?;
        self.placement(&layout)?;
        self.space()?;
        Ok(())
    }

    /// Hash of every field that can change results; the output root, run
    /// name and worker count are left out.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.name = None;
        c.search.workers = 0;
        cache_key(&serde_json::to_value(&c).expect("config serializes"))
    }
}
