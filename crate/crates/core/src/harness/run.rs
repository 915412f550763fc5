//! Persisted, resumable attack searches.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::cache::write_trace;
use super::records::{EpisodeInfo, ResultHeader, ResultLine, ResultRecord, RunSummary, SCHEMA_VERSION};
use super::{classify_hijack, record_target, run_baseline, BaselineCache, ExperimentConfig, HarnessError, TargetCache};
use crate::bayesopt::{
    bayes_search, grid_search, random_search, BayesError, Evaluation, Evaluator, IterationRecord, SearchResult,
    Strategy,
};
use crate::controller::{Command, ReferenceController};
use crate::objective::{evaluate, EpisodeArtifacts, ObjectiveKind, Visibility, WindowMode};
use crate::pattern::{rasterize, PatternConfig, PatternParams};
use crate::simulate::{run_episode, AttackInfo, EpisodeTrace, SimConfig};
use crate::world::{place_canvas, visibility_window, CanvasPlacement, ObservationConfig, RoadLayout};

/// Place a pattern, drive one episode, score it and store the episode file.
pub struct EpisodeEvaluator<'a> {
    pub layout: RoadLayout,
    pub placement: CanvasPlacement,
    pub view: ObservationConfig,
    pub canvas: PatternConfig,
    pub controller: ReferenceController,
    pub sim: SimConfig,
    pub command: Command,
    pub objective: ObjectiveKind,
    pub window: WindowMode,
    pub baseline: &'a EpisodeTrace,
    pub target: Option<&'a TargetCache>,
    /// Run directory; episode files go to `episodes/` below it.
    pub dir: Option<PathBuf>,
    simulated: AtomicUsize,
}

impl<'a> EpisodeEvaluator<'a> {
    pub fn new(
        config: &ExperimentConfig,
        baseline: &'a EpisodeTrace,
        target: Option<&'a TargetCache>,
        dir: Option<PathBuf>,
    ) -> Result<Self, HarnessError> {
        let layout = config.layout()?;
        let placement = config.placement(&layout)?;
        Ok(EpisodeEvaluator {
            layout,
            placement,
            view: config.view,
            canvas: config.canvas,
            controller: ReferenceController::new(config.controller)?,
            sim: config.sim,
            command: config.command(),
            objective: config.objective,
            window: config.window,
            baseline,
            target,
            dir,
            simulated: AtomicUsize::new(0),
        })
    }

    /// Episodes simulated so far.
    pub fn simulated(&self) -> usize {
        self.simulated.load(Ordering::Relaxed)
    }

    /// Simulate one attacked episode.
    pub fn episode(&self, params: &PatternParams) -> Result<(EpisodeTrace, Visibility), HarnessError> {
        let canvas = rasterize(params, &self.canvas)?;
        let world = place_canvas(&self.layout, &self.placement, canvas, &self.view)?;
        let attack = AttackInfo {
            pattern: Some(params.clone()),
        };
        self.simulated.fetch_add(1, Ordering::Relaxed);
        let trace = run_episode(&world, &self.controller, self.command, &self.sim, &attack)?;
        let (first, count) = visibility_window(&world, &trace.poses());
        Ok((trace, Visibility { first, count }))
    }

    fn run(&self, iteration: usize, params: &PatternParams) -> Result<Evaluation, HarnessError> {
        let (trace, visibility) = self.episode(params)?;
        let artifacts = EpisodeArtifacts {
            trace: &trace,
            visibility,
            baseline: Some(self.baseline),
            target: self.target.map(|t| &t.trace),
        };
        let score = evaluate(self.objective, &artifacts, self.window, &self.sim.thresholds)?;
        let hijack = match self.target {
            Some(t) => Some(classify_hijack(&trace, t, &self.sim.thresholds)?),
            None => None,
        };
        let episode = format!("episodes/{iteration:05}.jsonl");
        if let Some(dir) = &self.dir {
            write_trace(&dir.join(&episode), &trace)?;
        }
        let info = EpisodeInfo {
            episode,
            window: score.window,
            termination: trace.termination,
            hijack,
        };
        Ok(Evaluation {
            score: score.score,
            infractions: Some(score.infractions),
            sentinel: score.sentinel,
            extra: serde_json::to_value(info).expect("episode info serializes"),
        })
    }
}

impl Evaluator for EpisodeEvaluator<'_> {
    fn evaluate(&self, iteration: usize, params: &PatternParams) -> Result<Evaluation, String> {
        self.run(iteration, params).map_err(|e| e.to_string())
    }
}

/// Answers already-recorded iterations from the result file.
struct Replay<'a> {
    inner: &'a EpisodeEvaluator<'a>,
    recorded: &'a [ResultRecord],
}

impl Evaluator for Replay<'_> {
    fn evaluate(&self, iteration: usize, params: &PatternParams) -> Result<Evaluation, String> {
        match self.recorded.get(iteration) {
            Some(r) => r.evaluation(),
            None => self.inner.evaluate(iteration, params),
        }
    }
}

/// Knobs for one invocation of [`run_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunControl {
    /// Continue an existing result file instead of starting over.
    pub resume: bool,
    /// Stop with an interruption error after writing this many new records.
    pub stop_after: Option<usize>,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl {
            resume: true,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: SearchResult,
    pub records: Vec<ResultRecord>,
    pub summary: RunSummary,
    pub path: PathBuf,
    pub baseline: BaselineCache,
    pub target: Option<TargetCache>,
    /// Iterations taken from an earlier, interrupted run.
    pub resumed: usize,
    /// Episodes simulated by this invocation.
    pub simulated: usize,
}

/// `path` as seen from a run directory `<out>/runs/<name>`.
fn relative_to(path: &Path, dir: &Path) -> String {
    let root = dir.parent().and_then(Path::parent).unwrap_or(Path::new(""));
    match path.strip_prefix(root) {
        Ok(rest) => format!("../../{}", rest.to_string_lossy()),
        Err(_) => path.to_string_lossy().into_owned(),
    }
}

/// Recorded iterations of an earlier run with the same fingerprint, and the
/// byte length of the file prefix holding them.
fn previous_records(path: &Path, fingerprint: &str) -> Result<Option<(Vec<ResultRecord>, u64)>, HarnessError> {
    let Ok(f) = File::open(path) else {
        return Ok(None);
    };
    let mut reader = BufReader::new(f);
    let mut line = String::new();
    let mut offset = 0u64;
    let mut records = Vec::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| HarnessError::io(path, e))?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<ResultLine>(&line) {
            Ok(ResultLine::Header(h)) if first => {
                if h.schema != SCHEMA_VERSION || h.fingerprint != fingerprint {
                    return Err(HarnessError::Config(format!(
                        "{} belongs to a different experiment; pick another name or start fresh",
                        path.display()
                    )));
                }
            }
            Ok(ResultLine::Iteration(r)) if !first && r.iteration == records.len() => records.push(*r),
            _ => break,
        }
        first = false;
        offset += n as u64;
    }
    if first {
        return Ok(None);
    }
    Ok(Some((records, offset)))
}

/// Run the configured search, appending one record per episode to
/// `<run dir>/results.jsonl`. An existing file for the same experiment is
/// continued: recorded iterations are replayed instead of simulated.
pub fn run_search(config: &ExperimentConfig, control: &RunControl) -> Result<RunOutcome, HarnessError> {
    config.check()?;
    let baseline = run_baseline(config)?;
    let target = match config.target {
        Some(t) => Some(record_target(config, t)?),
        None => None,
    };
    let dir = config.run_dir();
    fs::create_dir_all(dir.join("episodes")).map_err(|e| HarnessError::io(&dir, e))?;
    let path = dir.join("results.jsonl");
    let fingerprint = config.fingerprint();

    let previous = if control.resume {
        previous_records(&path, &fingerprint)?
    } else {
        None
    };
    let (recorded, mut file) = match previous {
        Some((records, len)) => {
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| HarnessError::io(&path, e))?;
            f.set_len(len).map_err(|e| HarnessError::io(&path, e))?;
            let mut f = BufWriter::new(f);
            std::io::Seek::seek(f.get_mut(), std::io::SeekFrom::End(0)).map_err(|e| HarnessError::io(&path, e))?;
            (records, f)
        }
        None => {
            let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            let mut f = BufWriter::new(f);
            let header = ResultHeader {
                schema: SCHEMA_VERSION,
                name: config.run_name(),
                config: config.clone(),
                fingerprint: fingerprint.clone(),
                baseline: relative_to(&baseline.path, &dir),
                target: target.as_ref().map(|t| relative_to(&t.path, &dir)),
            };
            writeln!(f, "{}", ResultLine::Header(Box::new(header)).to_json()).map_err(|e| HarnessError::io(&path, e))?;
            f.flush().map_err(|e| HarnessError::io(&path, e))?;
            (Vec::new(), f)
        }
    };

    let inner = EpisodeEvaluator::new(config, &baseline.trace, target.as_ref(), Some(dir.clone()))?;
    let replay = Replay {
        inner: &inner,
        recorded: &recorded,
    };
    let mut written = 0usize;
    let mut records = Vec::new();
    let mut io_error = None;
    let mut sink = |rec: &IterationRecord| -> Result<(), BayesError> {
        let r = ResultRecord::from_iteration(rec);
        if let Some(old) = recorded.get(rec.iteration) {
            if old.params != r.params || old.score != r.score || old.error != r.error {
                return Err(BayesError::Interrupted(format!(
                    "replayed iteration {} differs from the recorded one",
                    rec.iteration
                )));
            }
            records.push(old.clone());
            return Ok(());
        }
        if let Some(limit) = control.stop_after {
            if written >= limit {
                return Err(BayesError::Interrupted(format!("stopped after {limit} new records")));
            }
        }
        let line = ResultLine::Iteration(Box::new(r.clone())).to_json();
        if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
            io_error = Some(e);
            return Err(BayesError::Interrupted("write failed".into()));
        }
        written += 1;
        records.push(r);
        Ok(())
    };
    let space = config.space()?;
    let opts = &config.search;
    let searched = match config.strategy {
        Strategy::Random => random_search(&space, config.budget, &replay, config.seed, opts, &mut sink),
        Strategy::Grid => grid_search(&space, &replay, opts, &mut sink),
        Strategy::Bayes => bayes_search(&space, config.warmup, config.budget, &replay, config.seed, opts, &mut sink),
    };
    if let Some(e) = io_error {
        return Err(HarnessError::io(&path, e));
    }
    let result = searched?;

    let simulated = inner.simulated();
    drop(inner);
    let summary = summarize(config.strategy, &records);
    writeln!(file, "{}", ResultLine::Summary(summary.clone()).to_json()).map_err(|e| HarnessError::io(&path, e))?;
    file.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(RunOutcome {
        result,
        records,
        summary,
        path,
        baseline,
        target,
        resumed: recorded.len(),
        simulated,
    })
}

fn summarize(strategy: Strategy, records: &[ResultRecord]) -> RunSummary {
    let best = records
        .iter()
        .rev()
        .find_map(|r| r.best_iteration.map(|b| (b, r.best_score)));
    RunSummary {
        strategy,
        evaluated: records.iter().filter(|r| !r.is_failure()).count(),
        failed: records.iter().filter(|r| r.is_failure()).count(),
        best_iteration: best.map(|b| b.0),
        best_score: best.and_then(|b| b.1),
        worst_severity: records.iter().filter_map(|r| r.severity).max(),
        hijack_successes: records
            .iter()
            .filter(|r| r.hijack.is_some_and(|h| h.success))
            .count(),
        wall_seconds: records.iter().map(|r| r.wall_seconds).sum(),
    }
}
