use serde::{Deserialize, Serialize};

use super::TargetCache;
use crate::geom::Vec2;
use crate::simulate::{infractions, EpisodeTrace, Severity, SeverityThresholds, SimError};

/// Whether an attacked episode followed the attacker's route cleanly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HijackOutcome {
    pub success: bool,
    pub reached_target_gate: bool,
    pub severity: Severity,
    /// Distance from the final position to the center of the target gate, meters.
    pub distance: f64,
}

/// Classify an attacked intersection episode against the target run.
pub fn classify_hijack(
    episode: &EpisodeTrace,
    target: &TargetCache,
    thresholds: &SeverityThresholds,
) -> Result<HijackOutcome, SimError> {
    let severity = infractions(episode, thresholds)?.severity;
    let reached_target_gate = episode.reached_gate(Some(target.exit));
    let end = Vec2::new(episode.final_state.x, episode.final_state.y);
    Ok(HijackOutcome {
        success: reached_target_gate && severity == Severity::Safe,
        reached_target_gate,
        severity,
        distance: (end - target.gate.center).norm(),
    })
}
