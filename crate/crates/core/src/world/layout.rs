//! Road layouts: centerline paths, the region map, canvas slots and gates.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::controller::Command;
use crate::geom::{wrap_angle, Vec2};

const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    StraightRoad,
    RightTurn,
    LeftTurn,
    RightIntersection,
    LeftIntersection,
    StraightIntersection,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::StraightRoad,
        Scenario::RightTurn,
        Scenario::LeftTurn,
        Scenario::RightIntersection,
        Scenario::LeftIntersection,
        Scenario::StraightIntersection,
    ];

    pub fn is_intersection(&self) -> bool {
        matches!(
            self,
            Scenario::RightIntersection | Scenario::LeftIntersection | Scenario::StraightIntersection
        )
    }

    /// High-level command the scenario is driven with.
    pub fn default_command(&self) -> Command {
        match self {
            Scenario::RightIntersection => Command::RightAtIntersection,
            Scenario::LeftIntersection => Command::LeftAtIntersection,
            Scenario::StraightIntersection => Command::StraightAtIntersection,
            _ => Command::LaneFollow,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::StraightRoad => "straight-road",
            Scenario::RightTurn => "right-turn",
            Scenario::LeftTurn => "left-turn",
            Scenario::RightIntersection => "right-intersection",
            Scenario::LeftIntersection => "left-intersection",
            Scenario::StraightIntersection => "straight-intersection",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == key || sc.name().replace('-', "") == key)
            .or(match key.as_str() {
                "straight" => Some(Scenario::StraightRoad),
                _ => None,
            })
            .ok_or_else(|| WorldError::Config(format!("unknown scenario `{s}`")))
    }
}

/// Exit legs of the junction used by the intersection scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exit {
    Straight,
    Left,
    Right,
}

impl Exit {
    pub fn for_command(command: Command) -> Option<Exit> {
        match command {
            Command::StraightAtIntersection => Some(Exit::Straight),
            Command::LeftAtIntersection => Some(Exit::Left),
            Command::RightAtIntersection => Some(Exit::Right),
            Command::LaneFollow => None,
        }
    }
}

/// Surface appearance, as grayscale albedo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Appearance {
    pub pavement: f64,
    pub marking: f64,
    pub offroad: f64,
    /// Draw the center double line.
    pub markings: bool,
    /// Width of each of the two center stripes, meters.
    pub marking_width: f64,
    /// Gap between the two center stripes, meters.
    pub marking_gap: f64,
}

impl Default for Appearance {
    fn default() -> Self {
        Appearance {
            pavement: 0.55,
            marking: 0.95,
            offroad: 0.30,
            markings: true,
            marking_width: 0.15,
            marking_gap: 0.10,
        }
    }
}

/// Dimensions of the road network. All lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub lane_width: f64,
    pub offroad_margin: f64,
    pub straight_length: f64,
    /// Radius of the road centerline in the turn scenarios.
    pub turn_radius: f64,
    pub approach_length: f64,
    pub exit_length: f64,
    /// Curb fillet radius at the junction corners.
    pub corner_radius: f64,
    /// How far before the junction box right and straight commands are issued.
    pub command_lead: f64,
    /// How far inside the junction box a left command is issued. Left turns
    /// swing wide into the far lane, so they start later.
    pub left_command_delay: f64,
    /// How far before the far edge of the junction box the command is withdrawn.
    pub command_clear: f64,
    pub appearance: Appearance,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            lane_width: 3.5,
            offroad_margin: 2.0,
            straight_length: 66.0,
            turn_radius: 20.0,
            approach_length: 22.0,
            exit_length: 22.0,
            corner_radius: 8.0,
            command_lead: 0.0,
            left_command_delay: 4.0,
            command_clear: 12.0,
            appearance: Appearance::default(),
        }
    }
}

impl GeometryConfig {
    pub fn check(&self, vehicle_width: f64) -> Result<(), WorldError> {
        let positive = [
            ("lane_width", self.lane_width),
            ("offroad_margin", self.offroad_margin),
            ("straight_length", self.straight_length),
            ("turn_radius", self.turn_radius),
            ("approach_length", self.approach_length),
            ("exit_length", self.exit_length),
            ("corner_radius", self.corner_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorldError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lane_width <= vehicle_width {
            return Err(WorldError::Config(format!(
                "lane width {} must exceed vehicle width {vehicle_width}",
                self.lane_width
            )));
        }
        if self.turn_radius <= self.lane_width + self.offroad_margin {
            return Err(WorldError::Config(format!(
                "turn radius {} must exceed lane width plus offroad margin",
                self.turn_radius
            )));
        }
        if self.corner_radius <= self.offroad_margin {
            return Err(WorldError::Config(
                "corner radius must exceed the offroad margin".into(),
            ));
        }
        Ok(())
    }
}

/// One piece of a centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Straight {
        start: Vec2,
        heading: f64,
        length: f64,
    },
    /// Circular arc; `sweep > 0` turns left (counter-clockwise).
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

/// Closest-point query result against a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point along the path.
    pub s: f64,
    /// Signed distance, positive to the left of the travel direction.
    pub lateral: f64,
    /// Path heading at the closest point.
    pub heading: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn start_heading(&self) -> f64 {
        self.pose_at(0.0).1
    }

    pub fn end_point(&self) -> Vec2 {
        self.pose_at(self.length()).0
    }

    /// Position and heading at arc length `s` from the segment start.
    pub fn pose_at(&self, s: f64) -> (Vec2, f64) {
        match *self {
            Segment::Straight { start, heading, .. } => {
                (start + Vec2::from_heading(heading) * s, heading)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dir = sweep.signum();
                let angle = start_angle + dir * s / radius;
                let p = center + Vec2::from_heading(angle) * radius;
                (p, wrap_angle(angle + dir * FRAC_PI_2))
            }
        }
    }

    /// Closest point, with projections clamped to the segment unless the
    /// corresponding end is open.
    fn project(&self, p: Vec2, open_start: bool, open_end: bool) -> (f64, Projection) {
        match *self {
            Segment::Straight {
                start,
                heading,
                length,
            } => {
                let u = Vec2::from_heading(heading);
                let rel = p - start;
                let along = rel.dot(u);
                let lo = if open_start { f64::NEG_INFINITY } else { 0.0 };
                let hi = if open_end { f64::INFINITY } else { length };
                let s = along.clamp(lo, hi);
                let foot = start + u * s;
                let off = p - foot;
                let dist = off.norm();
                let lateral = if s == along {
                    u.cross(rel)
                } else {
                    dist.copysign(u.cross(off))
                };
                (
                    dist,
                    Projection {
                        s,
                        lateral,
                        heading,
                    },
                )
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = p - center;
                let rho = rel.norm();
                let phi = rel.y.atan2(rel.x);
                let dir = sweep.signum();
                let delta = (dir * (phi - start_angle)).rem_euclid(2.0 * PI);
                let total = sweep.abs();
                let (s, foot) = if delta <= total {
                    (radius * delta, None)
                } else {
                    // beyond either end: snap to the nearer endpoint
                    let past_end = delta - total;
                    let before_start = 2.0 * PI - delta;
                    if past_end < before_start {
                        (self.length(), Some(self.end_point()))
                    } else {
                        (0.0, Some(self.pose_at(0.0).0))
                    }
                };
                let (_, heading) = self.pose_at(s);
                // for a left (ccw) arc the center lies on the left
                let lateral_exact = if dir > 0.0 { radius - rho } else { rho - radius };
                match foot {
                    None => (lateral_exact.abs(), Projection { s, lateral: lateral_exact, heading }),
                    Some(f) => {
                        let off = p - f;
                        let dist = off.norm();
                        let lateral = dist.copysign(Vec2::from_heading(heading).cross(off));
                        (dist, Projection { s, lateral, heading })
                    }
                }
            }
        }
    }
}

/// Piecewise centerline of straight segments and circular arcs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub segments: Vec<Segment>,
}

impl Path {
    pub fn new(segments: Vec<Segment>) -> Self {
        Path { segments }
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn start(&self) -> (Vec2, f64) {
        self.segments[0].pose_at(0.0)
    }

    pub fn end(&self) -> (Vec2, f64) {
        let last = self.segments.last().expect("nonempty path");
        last.pose_at(last.length())
    }

    /// Pose at arc length `s`; values outside `[0, length]` extrapolate along
    /// the end tangents.
    pub fn pose_at(&self, s: f64) -> (Vec2, f64) {
        let mut rest = s;
        let n = self.segments.len();
        for (i, seg) in self.segments.iter().enumerate() {
            let len = seg.length();
            if rest <= len || i + 1 == n {
                if rest < 0.0 {
                    let (p, h) = seg.pose_at(0.0);
                    return (p + Vec2::from_heading(h) * rest, h);
                }
                if rest > len {
                    let (p, h) = seg.pose_at(len);
                    return (p + Vec2::from_heading(h) * (rest - len), h);
                }
                return seg.pose_at(rest);
            }
            rest -= len;
        }
        unreachable!("path has at least one segment")
    }

    /// Closest point on the path; the two ends extend to infinity.
    pub fn project(&self, p: Vec2) -> Projection {
        let n = self.segments.len();
        let mut best: Option<(f64, Projection)> = None;
        let mut offset = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let (dist, mut proj) = seg.project(p, i == 0, i + 1 == n);
            proj.s += offset;
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, proj));
            }
            offset += seg.length();
        }
        best.expect("nonempty path").1
    }
}

/// Safety regions in ascending order of risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    OwnLane,
    OppositeLane,
    Offroad,
    Wall,
}

/// Surface class used for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Pavement,
    Marking,
    Offroad,
}

/// How the plane is partitioned into regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegionMap {
    /// A single two-lane road following the centerline.
    Corridor,
    /// Two perpendicular two-lane roads crossing at the origin with filleted
    /// corners; the junction box is unmarked and counts as the own lane.
    Crossroads { corner_radius: f64 },
}

/// Line across a road leg; crossing it ends an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub center: Vec2,
    /// Direction of travel through the gate.
    pub heading: f64,
    pub half_width: f64,
}

impl Gate {
    pub fn crossed_by(&self, p: Vec2) -> bool {
        let n = Vec2::from_heading(self.heading);
        let rel = p - self.center;
        rel.dot(n) >= 0.0 && n.cross(rel).abs() <= self.half_width
    }

    pub fn crossed_by_any(&self, points: &[Vec2]) -> bool {
        points.iter().any(|p| self.crossed_by(*p))
    }
}

/// Where a canvas sits relative to the route centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasPlacement {
    /// Arc length of the canvas center along the route centerline, meters.
    pub arc_position: f64,
    /// Offset of the canvas center, meters, positive to the left.
    pub lateral_offset: f64,
    /// Extra rotation of the canvas relative to the centerline tangent, radians.
    pub yaw: f64,
    /// Meters per canvas pixel.
    pub scale: f64,
}

/// Default canvas scale, meters per pixel.
pub const DEFAULT_CANVAS_SCALE: f64 = 0.035;

const APEX_INSET: f64 = 0.25;
const APEX_SCALE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub placement: CanvasPlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGate {
    pub exit: Option<Exit>,
    pub gate: Gate,
}

/// Lane geometry, region map, canvas slots and gates of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLayout {
    pub scenario: Scenario,
    pub geometry: GeometryConfig,
    /// Road centerline of the commanded route.
    pub centerline: Path,
    pub region_map: RegionMap,
    pub slots: Vec<Slot>,
    /// Gates that end an episode; the first one belongs to the route.
    pub gates: Vec<NamedGate>,
    /// Junction box half-size; zero for scenarios without a junction.
    pub junction_half: f64,
}

fn straight(start: Vec2, heading: f64, length: f64) -> Segment {
    Segment::Straight {
        start,
        heading,
        length,
    }
}

fn slot(name: &str, arc_position: f64) -> Slot {
    Slot {
        name: name.to_string(),
        placement: CanvasPlacement {
            arc_position,
            lateral_offset: 0.0,
            yaw: 0.0,
            scale: DEFAULT_CANVAS_SCALE,
        },
    }
}

/// Build the layout of one scenario.
pub fn build_layout(scenario: Scenario, geometry: &GeometryConfig) -> Result<RoadLayout, WorldError> {
    geometry.check(0.0)?;
    let g = geometry;
    let w = g.lane_width;
    let gate_half = w + g.offroad_margin;
    let mut junction_half = 0.0;
    let (segments, region_map, slots, exits): (Vec<Segment>, RegionMap, Vec<Slot>, Vec<(Option<Exit>, Vec2, f64)>) =
        match scenario {
            Scenario::StraightRoad => {
                let segs = vec![straight(Vec2::new(0.0, 0.0), 0.0, g.straight_length)];
                let mid = 0.5 * g.straight_length;
                (
                    segs,
                    RegionMap::Corridor,
                    vec![slot("mid", mid), slot("early", mid - 10.0)],
                    vec![],
                )
            }
            Scenario::RightTurn | Scenario::LeftTurn => {
                let dir = if scenario == Scenario::LeftTurn { 1.0 } else { -1.0 };
                let a = g.approach_length;
                let r = g.turn_radius;
                let segs = vec![
                    straight(Vec2::new(0.0, 0.0), 0.0, a),
                    Segment::Arc {
                        center: Vec2::new(a, dir * r),
                        radius: r,
                        start_angle: -dir * FRAC_PI_2,
                        sweep: dir * FRAC_PI_2,
                    },
                    straight(Vec2::new(a + r, dir * r), dir * FRAC_PI_2, g.exit_length),
                ];
                // A full-width canvas cannot lie flat on the arc, so the apex
                // slot uses a smaller scale, nudged toward the arc center.
                let mut apex = slot("turn-apex", a + 0.25 * PI * r);
                apex.placement.lateral_offset = dir * APEX_INSET;
                apex.placement.scale = APEX_SCALE;
                (
                    segs,
                    RegionMap::Corridor,
                    vec![apex, slot("turn-entry", a - 4.0), slot("approach", a - 12.0)],
                    vec![],
                )
            }
            Scenario::RightIntersection | Scenario::LeftIntersection | Scenario::StraightIntersection => {
                let j = w + g.corner_radius;
                junction_half = j;
                let a = g.approach_length;
                let e = g.exit_length;
                let mut segs = vec![straight(Vec2::new(-j - a, 0.0), 0.0, a)];
                match scenario {
                    Scenario::StraightIntersection => {
                        segs.push(straight(Vec2::new(-j, 0.0), 0.0, 2.0 * j + e));
                    }
                    Scenario::RightIntersection => {
                        segs.push(Segment::Arc {
                            center: Vec2::new(-j, -j),
                            radius: j,
                            start_angle: FRAC_PI_2,
                            sweep: -FRAC_PI_2,
                        });
                        segs.push(straight(Vec2::new(0.0, -j), -FRAC_PI_2, e));
                    }
                    _ => {
                        segs.push(Segment::Arc {
                            center: Vec2::new(-j, j),
                            radius: j,
                            start_angle: -FRAC_PI_2,
                            sweep: FRAC_PI_2,
                        });
                        segs.push(straight(Vec2::new(0.0, j), FRAC_PI_2, e));
                    }
                }
                let far = j + e;
                let exits = vec![
                    (Some(Exit::Straight), Vec2::new(far, 0.0), 0.0),
                    (Some(Exit::Left), Vec2::new(0.0, far), FRAC_PI_2),
                    (Some(Exit::Right), Vec2::new(0.0, -far), -FRAC_PI_2),
                ];
                (
                    segs,
                    RegionMap::Crossroads {
                        corner_radius: g.corner_radius,
                    },
                    vec![slot("junction-entry", a + 4.5), slot("approach", a - 4.0)],
                    exits,
                )
            }
        };

    let centerline = Path::new(segments);
    let mut gates = Vec::new();
    let route_exit = Exit::for_command(scenario.default_command());
    if exits.is_empty() {
        let (end, heading) = centerline.end();
        gates.push(NamedGate {
            exit: None,
            gate: Gate {
                center: end,
                heading,
                half_width: gate_half,
            },
        });
    } else {
        // route gate first, then the remaining legs
        let mut sorted = exits;
        sorted.sort_by_key(|(exit, _, _)| *exit != route_exit);
        for (exit, center, heading) in sorted {
            gates.push(NamedGate {
                exit,
                gate: Gate {
                    center,
                    heading,
                    half_width: gate_half,
                },
            });
        }
    }

    Ok(RoadLayout {
        scenario,
        geometry: *geometry,
        centerline,
        region_map,
        slots,
        gates,
        junction_half,
    })
}

/// Lateral classification within a road whose left-of-travel offset is `d`.
#[inline]
fn band(d: f64, own_on_left: bool, lane_width: f64, margin: f64) -> Region {
    let a = d.abs();
    if a <= lane_width + BOUNDARY_EPS {
        if (d >= 0.0) == own_on_left {
            Region::OwnLane
        } else {
            Region::OppositeLane
        }
    } else if a <= lane_width + margin + BOUNDARY_EPS {
        Region::Offroad
    } else {
        Region::Wall
    }
}

impl RoadLayout {
    pub fn lane_width(&self) -> f64 {
        self.geometry.lane_width
    }

    /// Total paved width (both lanes).
    pub fn road_width(&self) -> f64 {
        2.0 * self.geometry.lane_width
    }

    /// Start pose: own lane center at the route start, facing along the route.
    pub fn start_pose(&self) -> (Vec2, f64) {
        let (p, h) = self.centerline.start();
        let right = -Vec2::from_heading(h).perp_left();
        (p + right * (0.5 * self.geometry.lane_width), h)
    }

    pub fn slot(&self, name: &str) -> Result<&Slot, WorldError> {
        self.slots
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| WorldError::Config(format!("layout {} has no slot `{name}`", self.scenario)))
    }

    pub fn default_slot(&self) -> &Slot {
        &self.slots[0]
    }

    pub fn route_gate(&self) -> &Gate {
        &self.gates[0].gate
    }

    pub fn exit_gate(&self, exit: Exit) -> Option<&Gate> {
        self.gates.iter().find(|g| g.exit == Some(exit)).map(|g| &g.gate)
    }

    /// First gate crossed by `p`, if any.
    pub fn gate_crossed(&self, p: Vec2) -> Option<&NamedGate> {
        self.gates.iter().find(|g| g.gate.crossed_by(p))
    }

    /// High-level command issued at position `p` when the route command is `route`.
    pub fn command_at(&self, p: Vec2, route: Command) -> Command {
        if self.junction_half <= 0.0 || route == Command::LaneFollow {
            return Command::LaneFollow;
        }
        let j = self.junction_half;
        let start = match route {
            Command::LeftAtIntersection => -j + self.geometry.left_command_delay,
            _ => -j - self.geometry.command_lead,
        };
        let in_zone = p.x >= start && p.x <= j - self.geometry.command_clear && p.y.abs() <= j;
        if in_zone {
            route
        } else {
            Command::LaneFollow
        }
    }

    /// Region of point `p` for a vehicle heading `heading`.
    pub fn region(&self, p: Vec2, heading: f64) -> Region {
        let w = self.geometry.lane_width;
        let m = self.geometry.offroad_margin;
        match self.region_map {
            RegionMap::Corridor => {
                let proj = self.centerline.project(p);
                let forward = (heading - proj.heading).cos() >= 0.0;
                band(proj.lateral, !forward, w, m)
            }
            RegionMap::Crossroads { corner_radius } => {
                crossroads_region(p, heading, w, m, corner_radius)
            }
        }
    }

    pub fn is_paved(&self, p: Vec2) -> bool {
        matches!(self.region(p, 0.0), Region::OwnLane | Region::OppositeLane)
    }

    /// Surface class at `p` for rendering.
    pub fn surface(&self, p: Vec2) -> Surface {
        let w = self.geometry.lane_width;
        let ap = &self.geometry.appearance;
        let marking = |d: f64| {
            let a = d.abs();
            ap.markings && a >= 0.5 * ap.marking_gap && a <= 0.5 * ap.marking_gap + ap.marking_width
        };
        match self.region_map {
            RegionMap::Corridor => {
                let d = self.centerline.project(p).lateral;
                if d.abs() > w + BOUNDARY_EPS {
                    Surface::Offroad
                } else if marking(d) {
                    Surface::Marking
                } else {
                    Surface::Pavement
                }
            }
            RegionMap::Crossroads { corner_radius } => {
                let j = w + corner_radius;
                if !crossroads_paved(p, w, corner_radius) {
                    Surface::Offroad
                } else if (p.x.abs() >= j && marking(p.y)) || (p.y.abs() >= j && marking(p.x)) {
                    Surface::Marking
                } else {
                    Surface::Pavement
                }
            }
        }
    }

    pub fn albedo(&self, p: Vec2) -> f64 {
        let ap = &self.geometry.appearance;
        match self.surface(p) {
            Surface::Pavement => ap.pavement,
            Surface::Marking => ap.marking,
            Surface::Offroad => ap.offroad,
        }
    }
}

fn crossroads_paved(p: Vec2, w: f64, rc: f64) -> bool {
    let (ax, ay) = (p.x.abs(), p.y.abs());
    if ax <= w + BOUNDARY_EPS || ay <= w + BOUNDARY_EPS {
        return true;
    }
    let j = w + rc;
    if ax >= j || ay >= j {
        return false;
    }
    // corner square: paved outside the curb fillet
    let dx = j - ax;
    let dy = j - ay;
    dx.hypot(dy) >= rc - BOUNDARY_EPS
}

fn crossroads_region(p: Vec2, heading: f64, w: f64, m: f64, rc: f64) -> Region {
    let (ax, ay) = (p.x.abs(), p.y.abs());
    let j = w + rc;
    if ax < j && ay < j {
        if crossroads_paved(p, w, rc) {
            return Region::OwnLane;
        }
        let curb = rc - (j - ax).hypot(j - ay);
        let dist = curb.min(ax - w).min(ay - w);
        return if dist <= m + BOUNDARY_EPS {
            Region::Offroad
        } else {
            Region::Wall
        };
    }
    let (s, c) = heading.sin_cos();
    if ay <= w + BOUNDARY_EPS && ax >= j {
        // east-west arm; eastbound traffic keeps to y < 0
        return band(p.y, c < 0.0, w, m);
    }
    if ax <= w + BOUNDARY_EPS && ay >= j {
        // north-south arm; northbound traffic keeps to x > 0
        return band(-p.x, s < 0.0, w, m);
    }
    let dist = (ax - w).min(ay - w);
    if dist <= m + BOUNDARY_EPS {
        Region::Offroad
    } else {
        Region::Wall
    }
}
