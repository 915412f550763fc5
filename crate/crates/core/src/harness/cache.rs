//! Attack-free reference runs, stored under a hash of everything that shapes them.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, HarnessError};
use crate::controller::{Command, Controller, ReferenceController};
use crate::simulate::{infractions, run_episode, AttackInfo, EpisodeTrace, Severity};
use crate::world::{Exit, Gate, World};

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn cache_key<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("cache key serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Attack-free run under the scenario's own command.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCache {
    pub trace: EpisodeTrace,
    pub path: PathBuf,
    pub key: String,
    pub from_cache: bool,
}

/// Attack-free run under the attacker's command.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCache {
    pub trace: EpisodeTrace,
    pub command: Command,
    pub exit: Exit,
    /// Gate at the end of the target leg.
    pub gate: Gate,
    pub path: PathBuf,
    pub key: String,
    pub from_cache: bool,
}

fn reference_key(config: &ExperimentConfig, kind: &str, command: Command, controller: &dyn Controller) -> String {
    cache_key(&serde_json::json!({
        "kind": kind,
        "scenario": config.scenario,
        "command": command,
        "controller": controller.fingerprint(),
        "sim": config.sim,
        "geometry": config.geometry,
        "view": config.view,
    }))
}

fn read_trace(path: &Path) -> Option<EpisodeTrace> {
    let f = File::open(path).ok()?;
    EpisodeTrace::read_jsonl(BufReader::new(f)).ok()
}

/// Write via a temporary file so a crash never leaves a partial cache entry.
pub(crate) fn write_trace(path: &Path, trace: &EpisodeTrace) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let f = File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    let mut w = BufWriter::new(f);
    trace.write_jsonl(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn reference_run(
    config: &ExperimentConfig,
    kind: &'static str,
    command: Command,
) -> Result<(EpisodeTrace, PathBuf, String, bool), HarnessError> {
    let controller = ReferenceController::new(config.controller)?;
    let key = reference_key(config, kind, command, &controller);
    let path = config.cache_dir().join(format!("{kind}-{}.jsonl", &key[..16]));
    let (trace, from_cache) = match read_trace(&path) {
        Some(t) => (t, true),
        None => {
            let layout = config.layout()?;
            let world = World::plain(&layout, &config.view)?;
            let t = run_episode(&world, &controller, command, &config.sim, &AttackInfo::default())?;
            (t, false)
        }
    };
    let report = infractions(&trace, &config.sim.thresholds)?;
    if report.severity != Severity::Safe {
        return Err(HarnessError::Unsafe {
            scenario: config.scenario,
            what: kind,
            severity: report.severity,
        });
    }
    if !from_cache {
        write_trace(&path, &trace)?;
    }
    Ok((trace, path, key, from_cache))
}

/// Run (or load) the attack-free episode the attacked runs are compared with.
/// Fails when that episode is not safe.
pub fn run_baseline(config: &ExperimentConfig) -> Result<BaselineCache, HarnessError> {
    config.check()?;
    let (trace, path, key, from_cache) = reference_run(config, "baseline", config.command())?;
    Ok(BaselineCache {
        trace,
        path,
        key,
        from_cache,
    })
}

/// Run (or load) the attack-free episode under the attacker's `target`
/// command. The hijack search itself keeps the scenario's own command.
pub fn record_target(config: &ExperimentConfig, target: Command) -> Result<TargetCache, HarnessError> {
    let cfg = ExperimentConfig {
        target: Some(target),
        ..config.clone()
    };
    cfg.check()?;
    let exit = Exit::for_command(target).ok_or_else(|| HarnessError::Config("target has no exit".into()))?;
    let layout = cfg.layout()?;
    let gate = *layout
        .exit_gate(exit)
        .ok_or_else(|| HarnessError::Config(format!("{} has no {exit:?} exit", cfg.scenario)))?;
    let (trace, path, key, from_cache) = reference_run(&cfg, "target", target)?;
    if !trace.reached_gate(Some(exit)) {
        return Err(HarnessError::Config(format!(
            "target run under {target} ended with {:?} instead of reaching its gate",
            trace.termination
        )));
    }
    Ok(TargetCache {
        trace,
        command: target,
        exit,
        gate,
        path,
        key,
        from_cache,
    })
}
