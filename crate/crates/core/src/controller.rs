//! The attacked driving controller: a perception-based lane keeper with
//! branch commands, behind the [`Controller`] trait.
//!
//! Perception looks for "drivable cue" pixels, those whose intensity lies
//! between the dark and bright thresholds. Painted dark lines and bright lane
//! markings are both treated as non-drivable, so a black line removes
//! drivable mass from one side of the view and pulls the estimate away from
//! it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{Control, VehicleState};
use crate::world::Observation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller spec: {0}")]
    Spec(String),
    #[error("non-finite controller input: {0}")]
    NonFinite(String),
    #[error("observation is {got_w}x{got_h}, controller expects {want_w}x{want_h}")]
    Dims {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("controller failed: {0}")]
    Other(String),
}

/// High-level route command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    LaneFollow,
    LeftAtIntersection,
    RightAtIntersection,
    StraightAtIntersection,
}

impl Command {
    pub const INTERSECTION: [Command; 3] = [
        Command::LeftAtIntersection,
        Command::RightAtIntersection,
        Command::StraightAtIntersection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::LaneFollow => "lane-follow",
            Command::LeftAtIntersection => "left",
            Command::RightAtIntersection => "right",
            Command::StraightAtIntersection => "straight",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "lane-follow" | "follow" => Ok(Command::LaneFollow),
            "left" | "left-at-intersection" => Ok(Command::LeftAtIntersection),
            "right" | "right-at-intersection" => Ok(Command::RightAtIntersection),
            "straight" | "straight-at-intersection" => Ok(Command::StraightAtIntersection),
            _ => Err(ControllerError::Spec(format!("unknown command `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSpec {
    pub dark_threshold: f64,
    pub bright_threshold: f64,
    /// Steering per meter of lateral offset.
    pub k_p: f64,
    /// Steering per radian of heading error.
    pub k_d: f64,
    /// Target speed, m/s.
    pub v_target: f64,
    /// Weight of the branch bias.
    pub w_cmd: f64,
    /// Magnitude of the branch bias for turn commands.
    pub branch_bias: f64,
    /// Throttle per m/s below target.
    pub k_throttle: f64,
    /// Brake per m/s above target.
    pub k_brake: f64,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec {
            dark_threshold: 0.35,
            bright_threshold: 0.85,
            k_p: 0.3,
            k_d: 1.4,
            v_target: 8.0,
            w_cmd: 1.0,
            branch_bias: 0.4,
            k_throttle: 1.0,
            k_brake: 0.5,
        }
    }
}

impl ControllerSpec {
    pub fn check(&self) -> Result<(), ControllerError> {
        let finite = [
            self.dark_threshold,
            self.bright_threshold,
            self.k_p,
            self.k_d,
            self.v_target,
            self.w_cmd,
            self.branch_bias,
            self.k_throttle,
            self.k_brake,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ControllerError::Spec("all fields must be finite".into()));
        }
        if !(0.0 < self.dark_threshold && self.dark_threshold < self.bright_threshold && self.bright_threshold < 1.0) {
            return Err(ControllerError::Spec(format!(
                "need 0 < dark ({}) < bright ({}) < 1",
                self.dark_threshold, self.bright_threshold
            )));
        }
        if self.k_p <= 0.0 || self.k_d <= 0.0 || self.k_throttle <= 0.0 || self.k_brake <= 0.0 {
            return Err(ControllerError::Spec("gains must be positive".into()));
        }
        if self.v_target <= 0.0 {
            return Err(ControllerError::Spec("target speed must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.w_cmd) || self.branch_bias < 0.0 {
            return Err(ControllerError::Spec("w_cmd must lie in [0,1] and the bias be nonnegative".into()));
        }
        Ok(())
    }

    /// Signed branch bias for `command`, positive to the right.
    pub fn bias(&self, command: Command) -> f64 {
        match command {
            Command::RightAtIntersection => self.branch_bias,
            Command::LeftAtIntersection => -self.branch_bias,
            _ => 0.0,
        }
    }

    #[inline]
    pub fn is_cue(&self, v: f64) -> bool {
        v >= self.dark_threshold && v <= self.bright_threshold
    }
}

/// What the controller extracts from one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    /// Centroid of the drivable cue mass, meters right of the window center.
    pub offset: f64,
    /// Angle of the cue mass principal axis from straight ahead, radians,
    /// positive to the right.
    pub heading_error: f64,
    pub cue_pixels: usize,
}

/// Cue-mass moments in exact integer arithmetic. Coordinates are measured in
/// half pixels from the window center, so every coordinate is an odd integer
/// and a left-right flip negates the odd moments exactly.
pub fn perceive_full(obs: &Observation, spec: &ControllerSpec) -> Perception {
    let (w, h) = (obs.width as i64, obs.height as i64);
    let mut n: i64 = 0;
    let (mut sx, mut sy) = (0i64, 0i64);
    let (mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128);
    for row in 0..obs.height {
        // forward coordinate grows toward row 0
        let y = h - 1 - 2 * row as i64;
        for col in 0..obs.width {
            if !spec.is_cue(obs.get(col, row)) {
                continue;
            }
            let x = 2 * col as i64 + 1 - w;
            n += 1;
            sx += x;
            sy += y;
            sxx += (x * x) as i128;
            syy += (y * y) as i128;
            sxy += (x * y) as i128;
        }
    }
    if n == 0 {
        return Perception {
            offset: 0.0,
            heading_error: 0.0,
            cue_pixels: 0,
        };
    }
    let offset = obs.lateral_mpp * (sx as f64 / (2 * n) as f64);
    let nn = n as i128;
    let (sx, sy) = (sx as i128, sy as i128);
    let cxx = (nn * sxx - sx * sx) as f64 * obs.lateral_mpp * obs.lateral_mpp;
    let cyy = (nn * syy - sy * sy) as f64 * obs.forward_mpp * obs.forward_mpp;
    let cxy = (nn * sxy - sx * sy) as f64 * obs.lateral_mpp * obs.forward_mpp;
    let heading_error = if cxy == 0.0 && cyy >= cxx {
        0.0
    } else {
        0.5 * libm::atan2(2.0 * cxy, cyy - cxx)
    };
    Perception {
        offset,
        heading_error,
        cue_pixels: n as usize,
    }
}

/// Lateral offset estimate in meters, positive to the right.
pub fn perceive(obs: &Observation, spec: &ControllerSpec) -> f64 {
    perceive_full(obs, spec).offset
}

/// Control law given a perception result.
pub fn control_law(
    state: &VehicleState,
    perception: &Perception,
    command: Command,
    spec: &ControllerSpec,
) -> Result<Control, ControllerError> {
    for (name, v) in [
        ("speed", state.speed),
        ("offset", perception.offset),
        ("heading error", perception.heading_error),
    ] {
        if !v.is_finite() {
            return Err(ControllerError::NonFinite(format!("{name} = {v}")));
        }
    }
    let raw = spec.k_p * perception.offset + spec.k_d * perception.heading_error + spec.w_cmd * spec.bias(command);
    let steer = raw.clamp(-1.0, 1.0);
    let err = spec.v_target - state.speed;
    let throttle = (spec.k_throttle * err).clamp(0.0, 1.0);
    let brake = (-spec.k_brake * err).clamp(0.0, 1.0);
    Ok(Control {
        steer,
        throttle,
        brake,
    })
}

pub fn act(
    state: &VehicleState,
    obs: &Observation,
    command: Command,
    spec: &ControllerSpec,
) -> Result<Control, ControllerError> {
    if obs.pixels.iter().any(|v| !v.is_finite()) {
        return Err(ControllerError::NonFinite("observation pixel".into()));
    }
    control_law(state, &perceive_full(obs, spec), command, spec)
}

/// Anything that maps (state, observation, command) to a control, once per
/// frame. Implementations must be deterministic for episodes to be
/// reproducible.
pub trait Controller: Sync {
    fn control(&self, state: &VehicleState, obs: &Observation, command: Command) -> Result<Control, ControllerError>;

    /// Stable description used to key cached runs.
    fn fingerprint(&self) -> String;
}

/// The built-in perception controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceController {
    pub spec: ControllerSpec,
}

impl ReferenceController {
    pub fn new(spec: ControllerSpec) -> Result<Self, ControllerError> {
        spec.check()?;
        Ok(ReferenceController { spec })
    }
}

impl Default for ReferenceController {
    fn default() -> Self {
        ReferenceController {
            spec: ControllerSpec::default(),
        }
    }
}

impl Controller for ReferenceController {
    fn control(&self, state: &VehicleState, obs: &Observation, command: Command) -> Result<Control, ControllerError> {
        act(state, obs, command, &self.spec)
    }

    fn fingerprint(&self) -> String {
        serde_json::to_string(&self.spec).expect("spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(speed: f64) -> VehicleState {
        VehicleState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed,
        }
    }

    fn obs() -> Observation {
        Observation::uniform(64, 64, 0.55, 7.0 / 64.0, 12.0 / 64.0)
    }

    #[test]
    fn uniform_is_centered() {
        let p = perceive_full(&obs(), &ControllerSpec::default());
        assert_eq!(p.offset, 0.0);
        assert_eq!(p.heading_error, 0.0);
        assert_eq!(p.cue_pixels, 64 * 64);
    }

    #[test]
    fn left_black_half_pushes_right() {
        let mut o = obs();
        for row in 0..64 {
            for col in 0..32 {
                o.set(col, row, 0.0);
            }
        }
        let off = perceive(&o, &ControllerSpec::default());
        assert!(off > 0.0);
        // centroid of columns 32..64 is 16 px right of center
        assert!((off - 16.0 * 7.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn no_cues_gives_zero() {
        let o = Observation::uniform(8, 8, 0.0, 0.1, 0.1);
        assert_eq!(perceive(&o, &ControllerSpec::default()), 0.0);
    }

    #[test]
    fn equilibrium() {
        let c = act(&state(8.0), &obs(), Command::LaneFollow, &ControllerSpec::default()).unwrap();
        assert_eq!(c.steer, 0.0);
        assert_eq!(c.throttle, 0.0);
        assert_eq!(c.brake, 0.0);
    }

    #[test]
    fn proportional_law() {
        let spec = ControllerSpec {
            k_p: 1.0,
            w_cmd: 0.0,
            ..Default::default()
        };
        let p = Perception {
            offset: 0.5,
            heading_error: 0.0,
            cue_pixels: 1,
        };
        let c = control_law(&state(8.0), &p, Command::LaneFollow, &spec).unwrap();
        assert_eq!(c.steer, 0.5);
    }

    #[test]
    fn branch_bias_signs() {
        let spec = ControllerSpec::default();
        let r = act(&state(8.0), &obs(), Command::RightAtIntersection, &spec).unwrap();
        let l = act(&state(8.0), &obs(), Command::LeftAtIntersection, &spec).unwrap();
        let s = act(&state(8.0), &obs(), Command::StraightAtIntersection, &spec).unwrap();
        assert!(r.steer > 0.0);
        assert_eq!(l.steer, -r.steer);
        assert_eq!(s.steer, 0.0);
    }

    #[test]
    fn speed_control() {
        let spec = ControllerSpec::default();
        let slow = act(&state(4.0), &obs(), Command::LaneFollow, &spec).unwrap();
        assert!(slow.throttle > 0.0 && slow.brake == 0.0);
        let fast = act(&state(12.0), &obs(), Command::LaneFollow, &spec).unwrap();
        assert!(fast.brake > 0.0 && fast.throttle == 0.0);
    }

    #[test]
    fn nonfinite_rejected() {
        let mut o = obs();
        o.set(3, 3, f64::NAN);
        assert!(act(&state(8.0), &o, Command::LaneFollow, &ControllerSpec::default()).is_err());
        assert!(act(&state(f64::INFINITY), &obs(), Command::LaneFollow, &ControllerSpec::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ControllerSpec::default().check().is_ok());
        let bad = ControllerSpec {
            dark_threshold: 0.9,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        let bad = ControllerSpec {
            k_p: 0.0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        assert_eq!("right".parse::<Command>().unwrap(), Command::RightAtIntersection);
    }
}
