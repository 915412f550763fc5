//! Road worlds: layouts with an optional attack canvas composited onto the
//! pavement, and the top-down observation the controller sees each frame.
//!
//! The attack canvas is laid flat on the road. Its `x` axis points along the
//! direction of travel and its `y` axis (pixel rows, pointing down on screen)
//! points to the driver's right, so the pattern `position` parameter moves a
//! line across the road.

mod layout;

use std::io::Write;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{convex_overlap, OrientedRect, Vec2};
use crate::pattern::Canvas;

pub use layout::{
    build_layout, Appearance, CanvasPlacement, Exit, Gate, GeometryConfig, NamedGate, Path,
    Projection, Region, RegionMap, RoadLayout, Scenario, Segment, Slot, Surface,
    DEFAULT_CANVAS_SCALE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error("canvas placement leaves the pavement: {0}")]
    Placement(String),
}

/// Planar pose of the vehicle reference point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Shape of the forward observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    pub width: usize,
    pub height: usize,
    /// Forward extent of the window from the vehicle reference point, meters.
    pub lookahead: f64,
    /// Lateral extent, meters. Zero means one road width (two lanes).
    pub span: f64,
    /// Shift of the window center to the left of the vehicle, meters. Slightly
    /// more than half a lane, so the vehicle settles a little right of its
    /// lane center.
    pub left_shift: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            width: 64,
            height: 64,
            lookahead: 9.0,
            span: 0.0,
            left_shift: 2.0,
        }
    }
}

impl ObservationConfig {
    pub fn check(&self) -> Result<(), WorldError> {
        if self.width == 0 || self.height == 0 {
            return Err(WorldError::Config("observation dims must be positive".into()));
        }
        if !(self.lookahead.is_finite() && self.lookahead > 0.0) {
            return Err(WorldError::Config("lookahead must be positive".into()));
        }
        if !self.span.is_finite() || self.span < 0.0 || !self.left_shift.is_finite() {
            return Err(WorldError::Config("invalid observation span or shift".into()));
        }
        Ok(())
    }
}

/// Observation window geometry with defaults resolved against a layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub width: usize,
    pub height: usize,
    pub lookahead: f64,
    pub span: f64,
    pub left_shift: f64,
}

impl ViewGeometry {
    pub fn resolve(cfg: &ObservationConfig, layout: &RoadLayout) -> Self {
        let span = if cfg.span > 0.0 { cfg.span } else { layout.road_width() };
        let left_shift = cfg.left_shift;
        ViewGeometry {
            width: cfg.width,
            height: cfg.height,
            lookahead: cfg.lookahead,
            span,
            left_shift,
        }
    }

    pub fn lateral_mpp(&self) -> f64 {
        self.span / self.width as f64
    }

    pub fn forward_mpp(&self) -> f64 {
        self.lookahead / self.height as f64
    }

    /// World rectangle covered by the window at `pose`.
    pub fn footprint(&self, pose: &Pose) -> OrientedRect {
        let u = Vec2::from_heading(pose.heading);
        let center = pose.position() + u * (0.5 * self.lookahead) + u.perp_left() * self.left_shift;
        OrientedRect {
            center,
            heading: pose.heading,
            length: self.lookahead,
            width: self.span,
        }
    }
}

/// Grayscale top-down view ahead of the vehicle. Row 0 is the farthest row;
/// column 0 is the leftmost.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// Meters per pixel across the window.
    pub lateral_mpp: f64,
    /// Meters per pixel along the window.
    pub forward_mpp: f64,
}

impl Observation {
    pub fn uniform(width: usize, height: usize, value: f64, lateral_mpp: f64, forward_mpp: f64) -> Self {
        Observation {
            width,
            height,
            pixels: vec![value; width * height],
            lateral_mpp,
            forward_mpp,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }

    /// Left-right flip.
    pub fn mirrored(&self) -> Observation {
        let mut out = self.clone();
        for row in 0..self.height {
            for col in 0..self.width {
                out.pixels[row * self.width + col] = self.get(self.width - 1 - col, row);
            }
        }
        out
    }

    /// Binary PGM (P5), 8 bits per pixel.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)
    }

    pub fn save_pgm(&self, path: &FsPath) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_pgm(std::io::BufWriter::new(f))
    }
}

/// A canvas fixed on the road.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedCanvas {
    pub canvas: Canvas,
    pub placement: CanvasPlacement,
    pub center: Vec2,
    pub heading: f64,
    /// Per-pixel `(alpha, gray)`.
    texels: Vec<(f64, f64)>,
    any_opaque: bool,
}

impl PlacedCanvas {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect {
            center: self.center,
            heading: self.heading,
            length: self.canvas.width as f64 * self.placement.scale,
            width: self.canvas.height as f64 * self.placement.scale,
        }
    }

    /// Canvas texel `(alpha, gray)` under world point `p`, if inside.
    #[inline]
    pub fn texel(&self, p: Vec2) -> Option<(f64, f64)> {
        let u = Vec2::from_heading(self.heading);
        let rel = p - self.center;
        let along = rel.dot(u);
        let right = -u.cross(rel);
        let s = self.placement.scale;
        let col = (along / s + 0.5 * self.canvas.width as f64).floor();
        let row = (right / s + 0.5 * self.canvas.height as f64).floor();
        if col < 0.0 || row < 0.0 || col >= self.canvas.width as f64 || row >= self.canvas.height as f64 {
            return None;
        }
        Some(self.texels[row as usize * self.canvas.width + col as usize])
    }
}

/// A road layout with an optional attack canvas and an observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub layout: RoadLayout,
    pub canvas: Option<PlacedCanvas>,
    pub view: ViewGeometry,
}

const FOOTPRINT_SAMPLES: usize = 24;

/// Check that the canvas footprint at `placement` lies on pavement.
pub fn check_placement(layout: &RoadLayout, placement: &CanvasPlacement, canvas_w: usize, canvas_h: usize) -> Result<(Vec2, f64), WorldError> {
    if !(placement.scale.is_finite() && placement.scale > 0.0) {
        return Err(WorldError::Config(format!("canvas scale must be positive, got {}", placement.scale)));
    }
    if !placement.arc_position.is_finite() || !placement.lateral_offset.is_finite() || !placement.yaw.is_finite() {
        return Err(WorldError::Config("non-finite canvas placement".into()));
    }
    let (base, tangent) = layout.centerline.pose_at(placement.arc_position);
    let center = base + Vec2::from_heading(tangent).perp_left() * placement.lateral_offset;
    let heading = tangent + placement.yaw;
    let rect = OrientedRect {
        center,
        heading,
        length: canvas_w as f64 * placement.scale,
        width: canvas_h as f64 * placement.scale,
    };
    let corners = rect.corners();
    let mut samples = vec![center];
    for i in 0..4 {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        for k in 0..FOOTPRINT_SAMPLES {
            let t = k as f64 / FOOTPRINT_SAMPLES as f64;
            samples.push(a + (b - a) * t);
        }
    }
    if let Some(bad) = samples.iter().find(|p| !layout.is_paved(**p)) {
        return Err(WorldError::Placement(format!(
            "point ({:.3}, {:.3}) of the canvas footprint is off the pavement",
            bad.x, bad.y
        )));
    }
    Ok((center, heading))
}

/// Lay `canvas` on the road of `layout` at `placement`.
pub fn place_canvas(
    layout: &RoadLayout,
    placement: &CanvasPlacement,
    canvas: Canvas,
    view: &ObservationConfig,
) -> Result<World, WorldError> {
    view.check()?;
    let (center, heading) = check_placement(layout, placement, canvas.width, canvas.height)?;
    let texels: Vec<(f64, f64)> = canvas
        .pixels
        .iter()
        .map(|px| {
            let gray = (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0;
            (px[3] as f64, gray)
        })
        .collect();
    let any_opaque = texels.iter().any(|t| t.0 > 0.0);
    Ok(World {
        view: ViewGeometry::resolve(view, layout),
        layout: layout.clone(),
        canvas: Some(PlacedCanvas {
            canvas,
            placement: *placement,
            center,
            heading,
            texels,
            any_opaque,
        }),
    })
}

impl World {
    /// Attack-free world.
    pub fn plain(layout: &RoadLayout, view: &ObservationConfig) -> Result<World, WorldError> {
        view.check()?;
        Ok(World {
            view: ViewGeometry::resolve(view, layout),
            layout: layout.clone(),
            canvas: None,
        })
    }

    /// Surface albedo at `p` with the canvas composited over the road.
    #[inline]
    pub fn albedo(&self, p: Vec2) -> f64 {
        let road = self.layout.albedo(p);
        match &self.canvas {
            Some(c) if c.any_opaque => match c.texel(p) {
                Some((a, gray)) if a > 0.0 => a * gray + (1.0 - a) * road,
                _ => road,
            },
            _ => road,
        }
    }

    pub fn canvas_footprint(&self) -> Option<OrientedRect> {
        self.canvas.as_ref().map(PlacedCanvas::footprint)
    }
}

/// Sample the world over the forward window at `pose`.
pub fn render(world: &World, pose: &Pose) -> Observation {
    let v = &world.view;
    let lat = v.lateral_mpp();
    let fwd = v.forward_mpp();
    let u = Vec2::from_heading(pose.heading);
    let right = -u.perp_left();
    let origin = pose.position();
    let mut pixels = Vec::with_capacity(v.width * v.height);
    for row in 0..v.height {
        let f = (v.height - row) as f64 * fwd - 0.5 * fwd;
        let row_origin = origin + u * f;
        for col in 0..v.width {
            let r = (col as f64 + 0.5) * lat - 0.5 * v.span - v.left_shift;
            pixels.push(world.albedo(row_origin + right * r));
        }
    }
    Observation {
        width: v.width,
        height: v.height,
        pixels,
        lateral_mpp: lat,
        forward_mpp: fwd,
    }
}

/// First frame whose observation window overlaps the canvas footprint, and the
/// number of consecutive overlapping frames from there. Returns
/// `(trajectory.len(), 0)` when the canvas is never in view.
pub fn visibility_window(world: &World, trajectory: &[Pose]) -> (usize, usize) {
    let Some(canvas) = world.canvas_footprint() else {
        return (trajectory.len(), 0);
    };
    let canvas = canvas.corners();
    let visible = |pose: &Pose| convex_overlap(&world.view.footprint(pose).corners(), &canvas);
    match trajectory.iter().position(visible) {
        None => (trajectory.len(), 0),
        Some(first) => {
            let count = trajectory[first..].iter().take_while(|p| visible(p)).count();
            (first, count)
        }
    }
}
