//! Attack objectives over episode traces. Every score is oriented so that the
//! search layer maximizes it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{infractions, EpisodeTrace, InfractionReport, SeverityThresholds, SimError};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("objective {0} needs a {1} trace")]
    MissingCompanion(ObjectiveKind, &'static str),
    #[error("cannot align an empty trace")]
    EmptyTrace,
    #[error("unknown objective `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Steering values over the scoring window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringTrace {
    pub values: Vec<f64>,
}

/// Vehicle positions over the scoring window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    CollideRight,
    CollideLeft,
    AbsSteerDiff,
    PathDeviation,
    HijackDistance,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 5] = [
        ObjectiveKind::CollideRight,
        ObjectiveKind::CollideLeft,
        ObjectiveKind::AbsSteerDiff,
        ObjectiveKind::PathDeviation,
        ObjectiveKind::HijackDistance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::CollideRight => "collide-right",
            ObjectiveKind::CollideLeft => "collide-left",
            ObjectiveKind::AbsSteerDiff => "abs-steer-diff",
            ObjectiveKind::PathDeviation => "path-deviation",
            ObjectiveKind::HijackDistance => "hijack-distance",
        }
    }

    pub fn needs_baseline(&self) -> bool {
        matches!(self, ObjectiveKind::AbsSteerDiff | ObjectiveKind::PathDeviation)
    }

    pub fn needs_target(&self) -> bool {
        *self == ObjectiveKind::HijackDistance
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = ObjectiveError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ObjectiveError::UnknownKind(s.to_string()))
    }
}

/// Which frames are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Only the frames in which the canvas is in view.
    Visible,
    /// From the first visible frame to the end of the longer episode.
    #[default]
    ExtendToEnd,
}

/// Output of `world::visibility_window`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub first: usize,
    pub count: usize,
}

impl Visibility {
    /// Every frame counts, as for an attack-free comparison.
    pub fn whole(len: usize) -> Self {
        Visibility { first: 0, count: len }
    }
}

/// Scored frames `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreWindow {
    pub start: usize,
    pub end: usize,
}

impl ScoreWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Pad both sequences to a common length by repeating their last element, then
/// cut out the scoring window. `None` when the canvas was never visible.
pub fn align<T: Copy>(
    a: &[T],
    b: &[T],
    visibility: Visibility,
    mode: WindowMode,
) -> Result<Option<(Vec<T>, Vec<T>, ScoreWindow)>, ObjectiveError> {
    let (Some(&last_a), Some(&last_b)) = (a.last(), b.last()) else {
        return Err(ObjectiveError::EmptyTrace);
    };
    let len = a.len().max(b.len());
    if visibility.count == 0 || visibility.first >= len {
        return Ok(None);
    }
    let end = match mode {
        WindowMode::Visible => (visibility.first + visibility.count).min(len),
        WindowMode::ExtendToEnd => len,
    };
    let window = ScoreWindow {
        start: visibility.first,
        end,
    };
    let cut = |s: &[T], last: T| -> Vec<T> {
        (window.start..window.end)
            .map(|i| s.get(i).copied().unwrap_or(last))
            .collect()
    };
    Ok(Some((cut(a, last_a), cut(b, last_b), window)))
}

/// Align two steering traces.
pub fn align_steering(
    a: &SteeringTrace,
    b: &SteeringTrace,
    visibility: Visibility,
    mode: WindowMode,
) -> Result<Option<(SteeringTrace, SteeringTrace)>, ObjectiveError> {
    Ok(align(&a.values, &b.values, visibility, mode)?
        .map(|(a, b, _)| (SteeringTrace { values: a }, SteeringTrace { values: b })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
}

pub fn steering_sum(trace: &SteeringTrace, direction: Direction) -> f64 {
    let s: f64 = trace.values.iter().sum();
    match direction {
        Direction::Right => s,
        Direction::Left => -s,
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn abs_steer_diff(trace: &SteeringTrace, baseline: &SteeringTrace) -> f64 {
    l1(&trace.values, &baseline.values)
}

pub fn path_deviation(path: &PathTrace, baseline: &PathTrace) -> f64 {
    path.points
        .iter()
        .zip(&baseline.points)
        .map(|(p, q)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn hijack_distance(trace: &SteeringTrace, target: &SteeringTrace) -> f64 {
    -l1(&trace.values, &target.values)
}

/// Everything `evaluate` may need from one attacked episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeArtifacts<'a> {
    pub trace: &'a EpisodeTrace,
    pub visibility: Visibility,
    pub baseline: Option<&'a EpisodeTrace>,
    pub target: Option<&'a EpisodeTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub kind: ObjectiveKind,
    pub score: f64,
    /// `None` together with `sentinel` when the canvas was never visible.
    pub window: Option<ScoreWindow>,
    pub sentinel: bool,
    pub infractions: InfractionReport,
}

/// Score one episode. The infraction report rides along and never enters the score.
pub fn evaluate(
    kind: ObjectiveKind,
    artifacts: &EpisodeArtifacts<'_>,
    mode: WindowMode,
    thresholds: &SeverityThresholds,
) -> Result<Score, ObjectiveError> {
    let trace = artifacts.trace;
    let companion = match kind {
        ObjectiveKind::CollideRight | ObjectiveKind::CollideLeft => trace,
        ObjectiveKind::AbsSteerDiff | ObjectiveKind::PathDeviation => artifacts
            .baseline
            .ok_or(ObjectiveError::MissingCompanion(kind, "baseline"))?,
        ObjectiveKind::HijackDistance => artifacts
            .target
            .ok_or(ObjectiveError::MissingCompanion(kind, "target"))?,
    };
    let report = infractions(trace, thresholds)?;
    let vis = artifacts.visibility;
    let scored = if kind == ObjectiveKind::PathDeviation {
        align(&trace.positions(), &companion.positions(), vis, mode)?.map(|(a, b, w)| {
            let s = path_deviation(&PathTrace { points: a }, &PathTrace { points: b });
            (s, w)
        })
    } else {
        align(&trace.steering(), &companion.steering(), vis, mode)?.map(|(a, b, w)| {
            let a = SteeringTrace { values: a };
            let b = SteeringTrace { values: b };
            let s = match kind {
                ObjectiveKind::CollideRight => steering_sum(&a, Direction::Right),
                ObjectiveKind::CollideLeft => steering_sum(&a, Direction::Left),
                ObjectiveKind::AbsSteerDiff => abs_steer_diff(&a, &b),
                _ => hijack_distance(&a, &b),
            };
            (s, w)
        })
    };
    Ok(match scored {
        Some((score, window)) => Score {
            kind,
            score,
            window: Some(window),
            sentinel: false,
            infractions: report,
        },
        None => Score {
            kind,
            score: 0.0,
            window: None,
            sentinel: true,
            infractions: report,
        },
    })
}
