//! Vehicle kinematics, closed-loop episodes and infraction scoring.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Command, Controller, ControllerError};
use crate::geom::{wrap_angle, OrientedRect, Vec2};
use crate::pattern::PatternParams;
use crate::world::{render, CanvasPlacement, Exit, Pose, Region, RoadLayout, Scenario, World};

const SAFE_EPS: f64 = 1e-12;
/// Footprint subsampling for region fractions: cells along x across.
pub const CLASSIFY_GRID: (usize, usize) = (32, 16);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("controller error at frame {frame}: {source}")]
    Controller {
        frame: usize,
        #[source]
        source: ControllerError,
    },
    #[error("controller returned a non-finite control at frame {frame}")]
    NonFiniteControl { frame: usize },
    #[error("empty trace")]
    EmptyTrace,
    #[error("trace format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Vehicle body and dynamics constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    /// Steering angle at `steer = 1`, degrees.
    pub max_steer_deg: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    pub drag: f64,
    pub mass: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            length: 4.5,
            width: 2.0,
            wheelbase: 2.9,
            max_steer_deg: 35.0,
            max_accel: 3.0,
            max_brake: 8.0,
            drag: 0.05,
            mass: 1500.0,
        }
    }
}

/// Per-measure thresholds above which a severity tier is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeverityThresholds {
    pub opposite_lane: f64,
    pub offroad: f64,
    pub collision: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        SeverityThresholds {
            opposite_lane: 0.0,
            offroad: 0.0,
            collision: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub max_frames: usize,
    pub initial_speed: f64,
    /// Speed used to normalize collision intensity.
    pub v_target: f64,
    pub vehicle: VehicleParams,
    pub thresholds: SeverityThresholds,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            max_frames: 100,
            initial_speed: 8.0,
            v_target: 8.0,
            vehicle: VehicleParams::default(),
            thresholds: SeverityThresholds::default(),
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_frames == 0 {
            return Err(SimError::Config("max_frames must be at least 1".into()));
        }
        if !(self.initial_speed.is_finite() && self.initial_speed >= 0.0) {
            return Err(SimError::Config("initial speed must be nonnegative".into()));
        }
        if !(self.v_target.is_finite() && self.v_target > 0.0) {
            return Err(SimError::Config("v_target must be positive".into()));
        }
        let v = &self.vehicle;
        for (name, x) in [
            ("length", v.length),
            ("width", v.width),
            ("wheelbase", v.wheelbase),
            ("max_steer_deg", v.max_steer_deg),
            ("mass", v.mass),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(SimError::Config(format!("vehicle {name} must be positive")));
            }
        }
        if v.max_steer_deg >= 90.0 {
            return Err(SimError::Config("max steer must be below 90 degrees".into()));
        }
        for (name, x) in [("max_accel", v.max_accel), ("max_brake", v.max_brake), ("drag", v.drag)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(SimError::Config(format!("vehicle {name} must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self, params: &VehicleParams) -> OrientedRect {
        OrientedRect {
            center: self.position(),
            heading: self.heading,
            length: params.length,
            width: params.width,
        }
    }
}

/// Steering (positive right), throttle and brake.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Control {
    pub fn is_finite(&self) -> bool {
        self.steer.is_finite() && self.throttle.is_finite() && self.brake.is_finite()
    }

    pub fn clamped(&self) -> Control {
        Control {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }
}

/// Advance the kinematic bicycle model by `dt`. Positive steer turns right,
/// i.e. clockwise in the world frame.
pub fn step(state: &VehicleState, control: &Control, dt: f64, params: &VehicleParams) -> VehicleState {
    let c = control.clamped();
    let v = state.speed;
    let (s, cs) = state.heading.sin_cos();
    let yaw_rate = v / params.wheelbase * (c.steer * params.max_steer_deg.to_radians()).tan();
    let accel = params.max_accel * c.throttle - params.max_brake * c.brake - params.drag * v;
    VehicleState {
        x: state.x + v * cs * dt,
        y: state.y + v * s * dt,
        heading: wrap_angle(state.heading - yaw_rate * dt),
        speed: (v + accel * dt).max(0.0),
    }
}

/// Fractions of the footprint area in each region; wall counts as offroad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionFractions {
    pub own: f64,
    pub opposite: f64,
    pub offroad: f64,
}

impl RegionFractions {
    pub fn sum(&self) -> f64 {
        self.own + self.opposite + self.offroad
    }
}

/// Region fractions of the footprint by cell-center subsampling.
pub fn classify(layout: &RoadLayout, state: &VehicleState, params: &VehicleParams) -> RegionFractions {
    let rect = state.footprint(params);
    let u = Vec2::from_heading(rect.heading);
    let n = u.perp_left();
    let (na, nb) = CLASSIFY_GRID;
    let mut counts = [0usize; 3];
    for i in 0..na {
        let a = (i as f64 + 0.5) / na as f64;
        for j in 0..nb {
            let b = (j as f64 + 0.5) / nb as f64;
            let p = rect.local_point(a, b, u, n);
            let k = match layout.region(p, state.heading) {
                Region::OwnLane => 0,
                Region::OppositeLane => 1,
                Region::Offroad | Region::Wall => 2,
            };
            counts[k] += 1;
        }
    }
    let total = (na * nb) as f64;
    RegionFractions {
        own: counts[0] as f64 / total,
        opposite: counts[1] as f64 / total,
        offroad: counts[2] as f64 / total,
    }
}

/// Points along the footprint boundary used for wall contact.
pub fn boundary_points(rect: &OrientedRect) -> Vec<Vec2> {
    const LONG: usize = 32;
    const SHORT: usize = 16;
    let c = rect.corners();
    let mut pts = Vec::with_capacity(2 * (LONG + SHORT));
    for (i, count) in [LONG, SHORT, LONG, SHORT].into_iter().enumerate() {
        let a = c[i];
        let b = c[(i + 1) % 4];
        for k in 0..count {
            pts.push(a + (b - a) * (k as f64 / count as f64));
        }
    }
    pts
}

fn touches_wall(layout: &RoadLayout, state: &VehicleState, params: &VehicleParams) -> bool {
    boundary_points(&state.footprint(params))
        .into_iter()
        .any(|p| layout.region(p, state.heading) == Region::Wall)
}

/// Collision intensity (kg m/s) of the move from `prev` to `state`: the
/// vehicle mass times the previous speed when the footprint enters the wall
/// region, otherwise zero.
pub fn collision_check(layout: &RoadLayout, prev: &VehicleState, state: &VehicleState, params: &VehicleParams) -> f64 {
    if touches_wall(layout, state, params) && !touches_wall(layout, prev, params) {
        params.mass * prev.speed
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    /// State at the start of the frame.
    pub state: VehicleState,
    pub control: Control,
    pub command: Command,
    /// Region fractions after the step.
    pub regions: RegionFractions,
    /// Collision intensity of the step, kg m/s.
    pub collision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Collision,
    Gate { exit: Option<Exit> },
    MaxFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub scenario: Scenario,
    pub command: Command,
    pub pattern: Option<PatternParams>,
    pub placement: Option<CanvasPlacement>,
    pub dt: f64,
    pub mass: f64,
    pub v_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub meta: EpisodeMeta,
    pub frames: Vec<FrameRecord>,
    /// State after the last frame.
    pub final_state: VehicleState,
    pub termination: Termination,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn steering(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.control.steer).collect()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.frames.iter().map(|f| (f.state.x, f.state.y)).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.state.pose()).collect()
    }

    /// Whether the episode ended by crossing the gate of `exit` (or the route
    /// gate of a non-junction layout when `exit` is `None`).
    pub fn reached_gate(&self, exit: Option<Exit>) -> bool {
        self.termination == Termination::Gate { exit }
    }

    /// JSON-lines: a header line, one line per frame, a summary line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let header = serde_json::json!({"record": "header", "meta": self.meta});
        writeln!(w, "{header}")?;
        for f in &self.frames {
            let mut v = serde_json::to_value(f).map_err(|e| SimError::Format(e.to_string()))?;
            v["record"] = "frame".into();
            writeln!(w, "{v}")?;
        }
        let summary = serde_json::json!({
            "record": "summary",
            "final_state": self.final_state,
            "termination": self.termination,
        });
        writeln!(w, "{summary}")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EpisodeTrace, SimError> {
        let mut meta = None;
        let mut frames = Vec::new();
        let mut summary = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| SimError::Format(e.to_string()))?;
            let bad = |e: serde_json::Error| SimError::Format(e.to_string());
            match v["record"].as_str() {
                Some("header") => meta = Some(serde_json::from_value::<EpisodeMeta>(v["meta"].clone()).map_err(bad)?),
                Some("frame") => frames.push(serde_json::from_value::<FrameRecord>(v).map_err(bad)?),
                Some("summary") => {
                    let fs: VehicleState = serde_json::from_value(v["final_state"].clone()).map_err(bad)?;
                    let t: Termination = serde_json::from_value(v["termination"].clone()).map_err(bad)?;
                    summary = Some((fs, t));
                }
                other => return Err(SimError::Format(format!("unknown record type {other:?}"))),
            }
        }
        let meta = meta.ok_or_else(|| SimError::Format("missing header".into()))?;
        let (final_state, termination) = summary.ok_or_else(|| SimError::Format("missing summary".into()))?;
        Ok(EpisodeTrace {
            meta,
            frames,
            final_state,
            termination,
        })
    }
}

/// Attack metadata carried into the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackInfo {
    pub pattern: Option<PatternParams>,
}

/// Run one closed-loop episode. `command` is the route command; it is only
/// passed to the controller while the vehicle is inside the junction's
/// command zone.
pub fn run_episode(
    world: &World,
    controller: &dyn Controller,
    command: Command,
    config: &SimConfig,
    attack: &AttackInfo,
) -> Result<EpisodeTrace, SimError> {
    config.check()?;
    let layout = &world.layout;
    let params = &config.vehicle;
    let (start, heading) = layout.start_pose();
    let mut state = VehicleState {
        x: start.x,
        y: start.y,
        heading,
        speed: config.initial_speed,
    };
    let mut frames = Vec::with_capacity(config.max_frames);
    let mut termination = Termination::MaxFrames;
    for frame in 0..config.max_frames {
        let obs = render(world, &state.pose());
        let cmd = layout.command_at(state.position(), command);
        let raw = controller
            .control(&state, &obs, cmd)
            .map_err(|source| SimError::Controller { frame, source })?;
        if !raw.is_finite() {
            return Err(SimError::NonFiniteControl { frame });
        }
        let control = raw.clamped();
        let next = step(&state, &control, config.dt, params);
        let regions = classify(layout, &next, params);
        let collision = collision_check(layout, &state, &next, params);
        frames.push(FrameRecord {
            frame,
            state,
            control,
            command: cmd,
            regions,
            collision,
        });
        state = next;
        if collision > 0.0 {
            termination = Termination::Collision;
            break;
        }
        let corners = state.footprint(params).corners();
        if let Some(g) = layout.gates.iter().find(|g| g.gate.crossed_by_any(&corners)) {
            termination = Termination::Gate { exit: g.exit };
            break;
        }
    }
    Ok(EpisodeTrace {
        meta: EpisodeMeta {
            scenario: layout.scenario,
            command,
            pattern: attack.pattern.clone(),
            placement: world.canvas.as_ref().map(|c| c.placement),
            dt: config.dt,
            mass: params.mass,
            v_target: config.v_target,
        },
        frames,
        final_state: state,
        termination,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Safe,
    OppositeLane,
    Offroad,
    Collision,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Safe, Severity::OppositeLane, Severity::Offroad, Severity::Collision];

    pub fn name(&self) -> &'static str {
        match self {
            Severity::Safe => "safe",
            Severity::OppositeLane => "opposite_lane",
            Severity::Offroad => "offroad",
            Severity::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfractionReport {
    pub mean_opposite: f64,
    pub mean_offroad: f64,
    /// Sum of collision intensities, kg m/s.
    pub total_collision: f64,
    /// Collision intensity divided by `mass * v_target`.
    pub normalized_collision: f64,
    pub severity: Severity,
}

/// Severity from the three normalized measures.
pub fn severity_of(mean_opposite: f64, mean_offroad: f64, normalized_collision: f64, t: &SeverityThresholds) -> Severity {
    if normalized_collision > t.collision.max(SAFE_EPS) {
        Severity::Collision
    } else if mean_offroad > t.offroad.max(SAFE_EPS) {
        Severity::Offroad
    } else if mean_opposite > t.opposite_lane.max(SAFE_EPS) {
        Severity::OppositeLane
    } else {
        Severity::Safe
    }
}

pub fn infractions(trace: &EpisodeTrace, thresholds: &SeverityThresholds) -> Result<InfractionReport, SimError> {
    if trace.frames.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let n = trace.frames.len() as f64;
    let mean_opposite = trace.frames.iter().map(|f| f.regions.opposite).sum::<f64>() / n;
    let mean_offroad = trace.frames.iter().map(|f| f.regions.offroad).sum::<f64>() / n;
    let total_collision: f64 = trace.frames.iter().map(|f| f.collision).sum();
    let normalized_collision = total_collision / (trace.meta.mass * trace.meta.v_target);
    Ok(InfractionReport {
        mean_opposite,
        mean_offroad,
        total_collision,
        normalized_collision,
        severity: severity_of(mean_opposite, mean_offroad, normalized_collision, thresholds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ReferenceController;
    use crate::world::{build_layout, GeometryConfig, ObservationConfig};

    fn params_no_drag() -> VehicleParams {
        VehicleParams {
            drag: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn straight_step() {
        let s = VehicleState {
            x: 1.0,
            y: 2.0,
            heading: 0.3,
            speed: 5.0,
        };
        let n = step(&s, &Control::default(), 0.1, &params_no_drag());
        assert_eq!(n.heading, 0.3);
        assert!((n.x - (1.0 + 0.5 * 0.3f64.cos())).abs() < 1e-15);
        assert!((n.y - (2.0 + 0.5 * 0.3f64.sin())).abs() < 1e-15);
        assert_eq!(n.speed, 5.0);
    }

    #[test]
    fn standstill() {
        let s = VehicleState {
            x: 1.0,
            y: 2.0,
            heading: 0.3,
            speed: 0.0,
        };
        let c = Control {
            steer: 0.7,
            throttle: 0.0,
            brake: 0.5,
        };
        assert_eq!(step(&s, &c, 0.1, &VehicleParams::default()), s);
        let c = Control { throttle: 1.0, brake: 0.0, ..c };
        assert!(step(&s, &c, 0.1, &VehicleParams::default()).speed > 0.0);
    }

    #[test]
    fn right_steer_turns_clockwise() {
        let s = VehicleState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 5.0,
        };
        let n = step(&s, &Control { steer: 0.5, ..Default::default() }, 0.1, &params_no_drag());
        assert!(n.heading < 0.0);
    }

    #[test]
    fn centered_footprint_fractions() {
        let layout = build_layout(Scenario::StraightRoad, &GeometryConfig::default()).unwrap();
        let p = VehicleParams::default();
        let s = VehicleState {
            x: 20.0,
            y: -1.75,
            heading: 0.0,
            speed: 8.0,
        };
        let f = classify(&layout, &s, &p);
        assert_eq!((f.own, f.opposite, f.offroad), (1.0, 0.0, 0.0));
        let s = VehicleState { y: 0.0, ..s };
        let f = classify(&layout, &s, &p);
        assert!((f.own - 0.5).abs() <= 0.02 && (f.opposite - 0.5).abs() <= 0.02);
        assert_eq!(f.sum(), 1.0);
    }

    #[test]
    fn wall_entry_intensity() {
        let layout = build_layout(Scenario::StraightRoad, &GeometryConfig::default()).unwrap();
        let p = VehicleParams::default();
        let prev = VehicleState {
            x: 20.0,
            y: -1.75,
            heading: 0.0,
            speed: 8.0,
        };
        assert_eq!(collision_check(&layout, &prev, &prev, &p), 0.0);
        let hit = VehicleState { y: -5.0, ..prev };
        assert_eq!(collision_check(&layout, &prev, &hit, &p), 12000.0);
        // resting exactly on the wall boundary is not a crossing
        let graze = VehicleState { y: -(3.5 + 2.0 - 1.0), ..prev };
        assert_eq!(collision_check(&layout, &prev, &graze, &p), 0.0);
    }

    #[test]
    fn arithmetic_examples() {
        let meta = EpisodeMeta {
            scenario: Scenario::StraightRoad,
            command: Command::LaneFollow,
            pattern: None,
            placement: None,
            dt: 0.1,
            mass: 1500.0,
            v_target: 10.0,
        };
        let s = VehicleState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 8.0,
        };
        let frame = |k: usize| FrameRecord {
            frame: k,
            state: s,
            control: Control::default(),
            command: Command::LaneFollow,
            regions: RegionFractions {
                own: 1.0,
                opposite: 0.0,
                offroad: 0.0,
            },
            collision: 0.0,
        };
        let mut frames: Vec<FrameRecord> = (0..80).map(frame).collect();
        let mut trace = EpisodeTrace {
            meta,
            frames: frames.clone(),
            final_state: s,
            termination: Termination::MaxFrames,
        };
        let t = SeverityThresholds::default();
        let r = infractions(&trace, &t).unwrap();
        assert_eq!(r.severity, Severity::Safe);
        assert_eq!((r.mean_opposite, r.mean_offroad, r.total_collision), (0.0, 0.0, 0.0));
        frames[10].regions = RegionFractions {
            own: 0.6,
            opposite: 0.4,
            offroad: 0.0,
        };
        trace.frames = frames.clone();
        let r = infractions(&trace, &t).unwrap();
        assert!((r.mean_opposite - 0.005).abs() < 1e-15);
        assert_eq!(r.severity, Severity::OppositeLane);
        frames[79].collision = 1500.0 * 8.0;
        trace.frames = frames;
        let r = infractions(&trace, &t).unwrap();
        assert!((r.normalized_collision - 0.8).abs() < 1e-15);
        assert_eq!(r.severity, Severity::Collision);
        trace.frames.clear();
        assert!(matches!(infractions(&trace, &t), Err(SimError::EmptyTrace)));
    }

    #[test]
    fn zero_frames_rejected_and_runs_repeat() {
        let layout = build_layout(Scenario::StraightRoad, &GeometryConfig::default()).unwrap();
        let world = World::plain(&layout, &ObservationConfig::default()).unwrap();
        let ctl = ReferenceController::default();
        let cfg = SimConfig {
            max_frames: 0,
            ..Default::default()
        };
        assert!(run_episode(&world, &ctl, Command::LaneFollow, &cfg, &AttackInfo::default()).is_err());
        let cfg = SimConfig::default();
        let a = run_episode(&world, &ctl, Command::LaneFollow, &cfg, &AttackInfo::default()).unwrap();
        let b = run_episode(&world, &ctl, Command::LaneFollow, &cfg, &AttackInfo::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let back = EpisodeTrace::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, a);
    }
}
