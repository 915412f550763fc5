//! C interface to the roadmark attack search.
//!
//! Every function returns an [`RmStatus`]; on failure the message is kept
//! per thread and can be fetched with [`rm_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use roadmark::harness::{
    record_target, run_baseline, run_search, EpisodeEvaluator, ExperimentConfig, HarnessError, RunControl,
};
use roadmark::objective::{evaluate, EpisodeArtifacts};
use roadmark::pattern::PatternParams;
use roadmark::simulate::{infractions, EpisodeTrace, Severity};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The experiment is misconfigured.
    ConfigError = 3,
    /// Simulation, search or file output failed.
    RuntimeError = 4,
    /// The caller's buffer is too small; the needed size was written.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Worst infraction of an episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmSeverity {
    Safe = 0,
    OppositeLane = 1,
    Offroad = 2,
    Collision = 3,
}

impl From<Severity> for RmSeverity {
    fn from(s: Severity) -> Self {
        match s {
            Severity::Safe => RmSeverity::Safe,
            Severity::OppositeLane => RmSeverity::OppositeLane,
            Severity::Offroad => RmSeverity::Offroad,
            Severity::Collision => RmSeverity::Collision,
        }
    }
}

/// Summary of a finished search.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmSummary {
    pub evaluated: usize,
    pub failed: usize,
    /// Iterations read back from an earlier run.
    pub resumed: usize,
    pub simulated: usize,
    /// -1 when no iteration was scored.
    pub best_iteration: i64,
    /// NaN when no iteration was scored.
    pub best_score: f64,
    /// -1 when no iteration was scored.
    pub worst_severity: c_int,
    pub hijack_successes: usize,
}

/// An experiment configuration.
pub struct RmExperiment {
    config: ExperimentConfig,
}

/// One simulated episode.
pub struct RmTrace {
    trace: EpisodeTrace,
    severity: RmSeverity,
    visible_first: usize,
    visible_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: RmStatus, msg: impl Into<String>) -> RmStatus {
    set_error(msg);
    status
}

fn harness_status(e: HarnessError) -> RmStatus {
    let status = if e.is_config() { RmStatus::ConfigError } else { RmStatus::RuntimeError };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> RmStatus) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RmStatus::Panic, msg)
        }
    }
}

unsafe fn utf8<'a>(s: *const c_char, what: &str) -> Result<&'a str, RmStatus> {
    if s.is_null() {
        return Err(fail(RmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(RmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> RmStatus {
    if len.is_null() {
        return fail(RmStatus::NullPointer, "len is null");
    }
    *len = src.len();
    if cap < src.len() {
        return fail(RmStatus::BufferTooSmall, format!("need {} values, got room for {cap}", src.len()));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return fail(RmStatus::NullPointer, "buf is null");
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    RmStatus::Ok
}

fn make_trace(trace: EpisodeTrace, config: &ExperimentConfig, visible: (usize, usize)) -> Result<RmTrace, RmStatus> {
    let report = infractions(&trace, &config.sim.thresholds).map_err(|e| fail(RmStatus::RuntimeError, e.to_string()))?;
    Ok(RmTrace {
        trace,
        severity: report.severity.into(),
        visible_first: visible.0,
        visible_count: visible.1,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated).
/// `needed` receives the size including the terminator.
///
/// # Safety
/// `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn rm_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> RmStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len() + 1;
        if !needed.is_null() {
            *needed = n;
        }
        if cap < n {
            return RmStatus::BufferTooSmall;
        }
        if buf.is_null() {
            return RmStatus::NullPointer;
        }
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), msg.len());
        *buf.add(msg.len()) = 0;
        RmStatus::Ok
    })
}

/// Create an experiment from a JSON config; null selects the defaults.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_new(config_json: *const c_char, out: *mut *mut RmExperiment) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RmStatus::NullPointer, "out is null");
        }
        let config = if config_json.is_null() {
            ExperimentConfig::default()
        } else {
            let text = match utf8(config_json, "config_json") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match serde_json::from_str::<ExperimentConfig>(text) {
                Ok(c) => c,
                Err(e) => return fail(RmStatus::ConfigError, format!("invalid experiment config: {e}")),
            }
        };
        if let Err(e) = config.check() {
            return harness_status(e);
        }
        *out = Box::into_raw(Box::new(RmExperiment { config }));
        RmStatus::Ok
    })
}

/// # Safety
/// `exp` is null or a handle from [`rm_experiment_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_free(exp: *mut RmExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Set the output root for cached runs and result files.
///
/// # Safety
/// `exp` is a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_set_out(exp: *mut RmExperiment, path: *const c_char) -> RmStatus {
    guard(|| {
        let Some(exp) = exp.as_mut() else {
            return fail(RmStatus::NullPointer, "exp is null");
        };
        match utf8(path, "path") {
            Ok(p) => {
                exp.config.out = PathBuf::from(p);
                RmStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Number of pattern parameters of the configured family.
///
/// # Safety
/// `exp` is a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_dimension(exp: *const RmExperiment, out: *mut usize) -> RmStatus {
    guard(|| {
        let (Some(exp), false) = (exp.as_ref(), out.is_null()) else {
            return fail(RmStatus::NullPointer, "null argument");
        };
        *out = exp.config.pattern.dimension();
        RmStatus::Ok
    })
}

/// Lower and upper parameter bounds, `dimension` values each.
///
/// # Safety
/// `lower` and `upper` hold `cap` doubles; `len` is writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_bounds(
    exp: *const RmExperiment,
    lower: *mut f64,
    upper: *mut f64,
    cap: usize,
    len: *mut usize,
) -> RmStatus {
    guard(|| {
        let Some(exp) = exp.as_ref() else {
            return fail(RmStatus::NullPointer, "exp is null");
        };
        let space = match exp.config.space() {
            Ok(s) => s,
            Err(e) => return harness_status(e),
        };
        let lo: Vec<f64> = space.dims.iter().map(|d| d.lower).collect();
        let hi: Vec<f64> = space.dims.iter().map(|d| d.upper).collect();
        match copy_out(&lo, lower, cap, len) {
            RmStatus::Ok => copy_out(&hi, upper, cap, len),
            s => s,
        }
    })
}

/// Record (or load from the cache) the attack-free run.
///
/// # Safety
/// `exp` is a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_baseline(exp: *const RmExperiment, out: *mut *mut RmTrace) -> RmStatus {
    guard(|| {
        let (Some(exp), false) = (exp.as_ref(), out.is_null()) else {
            return fail(RmStatus::NullPointer, "null argument");
        };
        let base = match run_baseline(&exp.config) {
            Ok(b) => b,
            Err(e) => return harness_status(e),
        };
        let n = base.trace.len();
        match make_trace(base.trace, &exp.config, (n, 0)) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(t));
                RmStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Simulate one attacked episode with the given pattern parameters.
/// `score` receives the objective value and may be null.
///
/// # Safety
/// `params` holds `n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_episode(
    exp: *const RmExperiment,
    params: *const f64,
    n: usize,
    out: *mut *mut RmTrace,
    score: *mut f64,
) -> RmStatus {
    guard(|| {
        let (Some(exp), false, false) = (exp.as_ref(), params.is_null() && n > 0, out.is_null()) else {
            return fail(RmStatus::NullPointer, "null argument");
        };
        let cfg = &exp.config;
        if n != cfg.pattern.dimension() {
            return fail(
                RmStatus::InvalidArgument,
                format!("{} takes {} parameters, got {n}", cfg.pattern, cfg.pattern.dimension()),
            );
        }
        let values = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(params, n).to_vec() };
        let run = || -> Result<(RmTrace, f64), HarnessError> {
            let base = run_baseline(cfg)?;
            let target = match cfg.target {
                Some(t) => Some(record_target(cfg, t)?),
                None => None,
            };
            let ev = EpisodeEvaluator::new(cfg, &base.trace, target.as_ref(), None)?;
            let p = PatternParams::new(cfg.pattern, values);
            let (trace, vis) = ev.episode(&p)?;
            let art = EpisodeArtifacts {
                trace: &trace,
                visibility: vis,
                baseline: Some(&base.trace),
                target: target.as_ref().map(|t| &t.trace),
            };
            let score = evaluate(cfg.objective, &art, cfg.window, &cfg.sim.thresholds)?.score;
            let t = make_trace(trace, cfg, (vis.first, vis.count))
                .map_err(|_| HarnessError::Config(LAST_ERROR.with(|e| e.borrow().clone())))?;
            Ok((t, score))
        };
        match run() {
            Ok((t, s)) => {
                if !score.is_null() {
                    *score = s;
                }
                *out = Box::into_raw(Box::new(t));
                RmStatus::Ok
            }
            Err(e) => harness_status(e),
        }
    })
}

/// Run the configured search, writing `<out>/runs/<name>/results.jsonl`.
/// A non-zero `resume` continues an earlier run of the same experiment.
///
/// # Safety
/// `exp` is a live handle and `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_experiment_search(exp: *const RmExperiment, resume: c_int, summary: *mut RmSummary) -> RmStatus {
    guard(|| {
        let (Some(exp), false) = (exp.as_ref(), summary.is_null()) else {
            return fail(RmStatus::NullPointer, "null argument");
        };
        let control = RunControl {
            resume: resume != 0,
            ..Default::default()
        };
        match run_search(&exp.config, &control) {
            Ok(o) => {
                let s = &o.summary;
                *summary = RmSummary {
                    evaluated: s.evaluated,
                    failed: s.failed,
                    resumed: o.resumed,
                    simulated: o.simulated,
                    best_iteration: s.best_iteration.map_or(-1, |i| i as i64),
                    best_score: s.best_score.unwrap_or(f64::NAN),
                    worst_severity: s.worst_severity.map_or(-1, |v| RmSeverity::from(v) as c_int),
                    hijack_successes: s.hijack_successes,
                };
                RmStatus::Ok
            }
            Err(e) => harness_status(e),
        }
    })
}

/// # Safety
/// `trace` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_free(trace: *mut RmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of frames.
///
/// # Safety
/// `trace` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_len(trace: *const RmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.len())
}

/// # Safety
/// `trace` is a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_severity(trace: *const RmTrace, out: *mut RmSeverity) -> RmStatus {
    let (Some(t), false) = (trace.as_ref(), out.is_null()) else {
        return fail(RmStatus::NullPointer, "null argument");
    };
    *out = t.severity;
    RmStatus::Ok
}

/// First frame with the canvas in view and the number of such frames.
///
/// # Safety
/// `trace` is a live handle; `first` and `count` are writable.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_visibility(trace: *const RmTrace, first: *mut usize, count: *mut usize) -> RmStatus {
    let (Some(t), false) = (trace.as_ref(), first.is_null() || count.is_null()) else {
        return fail(RmStatus::NullPointer, "null argument");
    };
    *first = t.visible_first;
    *count = t.visible_count;
    RmStatus::Ok
}

/// Per-frame steering commands.
///
/// # Safety
/// `buf` holds `cap` doubles; `len` is writable.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_steering(trace: *const RmTrace, buf: *mut f64, cap: usize, len: *mut usize) -> RmStatus {
    let Some(t) = trace.as_ref() else {
        return fail(RmStatus::NullPointer, "trace is null");
    };
    copy_out(&t.trace.steering(), buf, cap, len)
}

/// Per-frame positions as interleaved x, y pairs (`2 * len` values).
///
/// # Safety
/// `buf` holds `cap` doubles; `len` is writable.
#[no_mangle]
pub unsafe extern "C" fn rm_trace_positions(trace: *const RmTrace, buf: *mut f64, cap: usize, len: *mut usize) -> RmStatus {
    let Some(t) = trace.as_ref() else {
        return fail(RmStatus::NullPointer, "trace is null");
    };
    let xy: Vec<f64> = t.trace.positions().into_iter().flat_map(|(x, y)| [x, y]).collect();
    copy_out(&xy, buf, cap, len)
}
