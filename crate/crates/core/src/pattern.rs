//! Attack pattern families, their parameter spaces, and the canvas rasterizer.
//!
//! A pattern is a family plus a flat parameter vector. Every family is made of
//! straight lines drawn as filled rotated rectangles on a `200 x 200` RGBA
//! canvas with a transparent background.
//!
//! Conventions (canvas pixel coordinates, origin top-left, `y` pointing down):
//!
//! * every line is centered at `x = width / 2`; the `position` parameter sets
//!   the center's `y` coordinate,
//! * `rotation` is in degrees, counter-clockwise as seen on screen from the
//!   canvas `x` axis, so a line at rotation `θ` runs along `(cos θ, -sin θ)`,
//! * rendering is hard-edged: a pixel is covered iff its center lies inside the
//!   rectangle (boundary included).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side of the square attack canvas in pixels.
pub const CANVAS_SIZE: usize = 200;

/// Default cap on the number of grid points a sweep may enumerate.
pub const DEFAULT_GRID_CAP: usize = 100_000;

const GRID_COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("invalid pattern family: {0}")]
    InvalidFamily(String),
    #[error("parameter vector has {got} values, family {family} expects {expected}")]
    DimensionMismatch {
        family: PatternFamily,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("pattern parameters out of bounds: {0:?}")]
    OutOfBounds(Vec<Violation>),
    #[error("grid of {count} points exceeds the cap of {cap}")]
    GridTooLarge { count: u128, cap: usize },
}

/// Structural choice of an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternFamily {
    SingleLine,
    DoubleLine,
    TwoLine,
    NLines(usize),
}

impl PatternFamily {
    /// Number of free parameters of the family.
    pub fn dimension(&self) -> usize {
        match self {
            PatternFamily::SingleLine => 2,
            PatternFamily::DoubleLine => 3,
            PatternFamily::TwoLine => 4,
            PatternFamily::NLines(n) => 6 * n,
        }
    }

    pub fn check(&self) -> Result<(), PatternError> {
        match self {
            PatternFamily::NLines(0) => Err(PatternError::InvalidFamily(
                "n-lines needs at least one line".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PatternFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternFamily::SingleLine => f.write_str("single"),
            PatternFamily::DoubleLine => f.write_str("double"),
            PatternFamily::TwoLine => f.write_str("two"),
            PatternFamily::NLines(n) => write!(f, "nlines:{n}"),
        }
    }
}

impl FromStr for PatternFamily {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let family = match lower.as_str() {
            "single" | "single-line" | "singleline" => PatternFamily::SingleLine,
            "double" | "double-line" | "doubleline" => PatternFamily::DoubleLine,
            "two" | "two-line" | "twoline" => PatternFamily::TwoLine,
            other => {
                let n = other
                    .strip_prefix("nlines:")
                    .or_else(|| other.strip_prefix("n-lines:"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| PatternError::InvalidFamily(s.to_string()))?;
                PatternFamily::NLines(n)
            }
        };
        family.check()?;
        Ok(family)
    }
}

impl Serialize for PatternFamily {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatternFamily {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a single parameter dimension controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Position,
    Rotation,
    Gap,
    Length,
    Width,
    Gray,
    Opacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub kind: DimKind,
    pub lower: f64,
    pub upper: f64,
    pub grid_step: f64,
}

impl Dimension {
    pub fn new(kind: DimKind, lower: f64, upper: f64, grid_step: f64) -> Self {
        Dimension {
            kind,
            lower,
            upper,
            grid_step,
        }
    }

    fn canonical(kind: DimKind) -> Self {
        match kind {
            DimKind::Position => Dimension::new(kind, 0.0, CANVAS_SIZE as f64, 20.0),
            DimKind::Rotation => Dimension::new(kind, 0.0, 180.0, 18.0),
            DimKind::Gap => Dimension::new(kind, 0.0, 100.0, 10.0),
            DimKind::Length => Dimension::new(kind, 1.0, 283.0, 28.2),
            DimKind::Width => Dimension::new(kind, 1.0, 40.0, 3.9),
            DimKind::Gray => Dimension::new(kind, 0.0, 1.0, 0.25),
            DimKind::Opacity => Dimension::new(kind, 0.0, 1.0, 0.25),
        }
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }

    /// Number of grid nodes `lower, lower + step, ... <= upper`.
    pub fn grid_count(&self) -> usize {
        (self.span() / self.grid_step + GRID_COUNT_EPS).floor() as usize + 1
    }

    pub fn grid_value(&self, k: usize) -> f64 {
        (self.lower + k as f64 * self.grid_step).min(self.upper)
    }
}

/// Bounded box of feasible parameter vectors for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub family: PatternFamily,
    pub dims: Vec<Dimension>,
}

impl ParamSpace {
    pub fn new(family: PatternFamily, dims: Vec<Dimension>) -> Result<Self, PatternError> {
        family.check()?;
        if dims.len() != family.dimension() {
            return Err(PatternError::DimensionMismatch {
                family,
                expected: family.dimension(),
                got: dims.len(),
            });
        }
        for (i, d) in dims.iter().enumerate() {
            let finite = d.lower.is_finite() && d.upper.is_finite() && d.grid_step.is_finite();
            if !finite || d.lower >= d.upper || d.grid_step <= 0.0 || d.grid_step > d.span() {
                return Err(PatternError::InvalidSpace(format!(
                    "dimension {i} ({:?}) has bounds [{}, {}] and step {}",
                    d.kind, d.lower, d.upper, d.grid_step
                )));
            }
        }
        Ok(ParamSpace { family, dims })
    }

    pub fn dimension(&self) -> usize {
        self.dims.len()
    }

    /// Re-space the grid so dimension `i` has exactly `counts[i]` nodes
    /// spanning its full range.
    pub fn with_grid_counts(mut self, counts: &[usize]) -> Result<Self, PatternError> {
        if counts.len() != self.dims.len() {
            return Err(PatternError::InvalidSpace(format!(
                "{} grid counts given for {} dimensions",
                counts.len(),
                self.dims.len()
            )));
        }
        for (d, &c) in self.dims.iter_mut().zip(counts) {
            if c < 2 {
                return Err(PatternError::InvalidSpace(
                    "grid counts must be at least 2".into(),
                ));
            }
            d.grid_step = d.span() / (c - 1) as f64;
        }
        Ok(self)
    }

    /// Map a point of the box to the unit cube.
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.dims)
            .map(|(v, d)| (v - d.lower) / d.span())
            .collect()
    }

    /// Map a unit-cube point back into the box, clamping to the bounds.
    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.dims)
            .map(|(u, d)| (d.lower + u * d.span()).clamp(d.lower, d.upper))
            .collect()
    }

    pub fn params_from_unit(&self, unit: &[f64]) -> PatternParams {
        PatternParams {
            family: self.family,
            values: self.denormalize(unit),
        }
    }

    pub fn grid_size(&self) -> u128 {
        self.dims.iter().map(|d| d.grid_count() as u128).product()
    }
}

/// Canonical bounds for a family.
pub fn param_space(family: PatternFamily) -> Result<ParamSpace, PatternError> {
    use DimKind::*;
    family.check()?;
    let kinds: Vec<DimKind> = match family {
        PatternFamily::SingleLine => vec![Position, Rotation],
        PatternFamily::DoubleLine => vec![Position, Rotation, Gap],
        PatternFamily::TwoLine => vec![Position, Rotation, Position, Rotation],
        PatternFamily::NLines(n) => (0..n)
            .flat_map(|_| [Position, Rotation, Length, Width, Gray, Opacity])
            .collect(),
    };
    ParamSpace::new(family, kinds.into_iter().map(Dimension::canonical).collect())
}

/// The adversary: a family plus its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub family: PatternFamily,
    pub values: Vec<f64>,
}

impl PatternParams {
    pub fn new(family: PatternFamily, values: Vec<f64>) -> Self {
        PatternParams { family, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub dim: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Outcome of [`validate`] when the vector has the right shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a parameter vector against a space. A shape mismatch is an error;
/// bound violations are reported in the verdict.
pub fn validate(params: &PatternParams, space: &ParamSpace) -> Result<Verdict, PatternError> {
    if params.family != space.family || params.values.len() != space.dimension() {
        return Err(PatternError::DimensionMismatch {
            family: space.family,
            expected: space.dimension(),
            got: params.values.len(),
        });
    }
    let violations = params
        .values
        .iter()
        .zip(&space.dims)
        .enumerate()
        .filter(|(_, (v, d))| !(v.is_finite() && **v >= d.lower && **v <= d.upper))
        .map(|(dim, (v, d))| Violation {
            dim,
            value: *v,
            lower: d.lower,
            upper: d.upper,
        })
        .collect();
    Ok(Verdict { violations })
}

/// Attributes the constrained families hold fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub line_length: f64,
    pub line_width: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            canvas_width: CANVAS_SIZE,
            canvas_height: CANVAS_SIZE,
            line_length: 120.0,
            line_width: 12.0,
        }
    }
}

/// One filled rotated rectangle, in canvas pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub cx: f64,
    pub cy: f64,
    pub rotation_deg: f64,
    pub length: f64,
    pub width: f64,
    pub gray: f64,
    pub opacity: f64,
}

impl Line {
    fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let t = self.rotation_deg.to_radians();
        let (s, c) = t.sin_cos();
        // along the line, and its left-hand normal on screen
        ((c, -s), (s, c))
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (u, n) = self.axes();
        let dx = px - self.cx;
        let dy = py - self.cy;
        let along = dx * u.0 + dy * u.1;
        let perp = dx * n.0 + dy * n.1;
        along.abs() <= 0.5 * self.length && perp.abs() <= 0.5 * self.width
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let (u, n) = self.axes();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let ex = (u.0 * hl).abs() + (n.0 * hw).abs();
        let ey = (u.1 * hl).abs() + (n.1 * hw).abs();
        (self.cx - ex, self.cx + ex, self.cy - ey, self.cy + ey)
    }
}

/// Expand a parameter vector into the lines it draws, in compositing order.
pub fn lines(params: &PatternParams, config: &PatternConfig) -> Vec<Line> {
    let cx = config.canvas_width as f64 / 2.0;
    let fixed = |position: f64, rotation: f64| Line {
        cx,
        cy: position,
        rotation_deg: rotation,
        length: config.line_length,
        width: config.line_width,
        gray: 0.0,
        opacity: 1.0,
    };
    let v = &params.values;
    match params.family {
        PatternFamily::SingleLine => vec![fixed(v[0], v[1])],
        PatternFamily::DoubleLine => {
            let center = fixed(v[0], v[1]);
            let (_, n) = center.axes();
            let offset = 0.5 * (v[2] + config.line_width);
            [-offset, offset]
                .iter()
                .map(|o| Line {
                    cx: center.cx + o * n.0,
                    cy: center.cy + o * n.1,
                    ..center
                })
                .collect()
        }
        PatternFamily::TwoLine => vec![fixed(v[0], v[1]), fixed(v[2], v[3])],
        PatternFamily::NLines(_) => v
            .chunks_exact(6)
            .map(|c| Line {
                cx,
                cy: c[0],
                rotation_deg: c[1],
                length: c[2],
                width: c[3],
                gray: c[4],
                opacity: c[5],
            })
            .collect(),
    }
}

/// Row-major straight-alpha RGBA image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 4]>,
}

impl Canvas {
    pub fn transparent(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![[0.0; 4]; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> [f32; 4] {
        self.pixels[row * self.width + col]
    }

    pub fn is_transparent(&self) -> bool {
        self.pixels.iter().all(|p| p[3] == 0.0)
    }

    /// Composite one line over the canvas with the straight-alpha `over` operator.
    pub fn draw_line(&mut self, line: &Line) {
        let alpha = line.opacity.clamp(0.0, 1.0);
        let gray = line.gray.clamp(0.0, 1.0);
        let (x0, x1, y0, y1) = line.bounding_box();
        let col_lo = (x0 - 0.5).floor().max(0.0) as usize;
        let row_lo = (y0 - 0.5).floor().max(0.0) as usize;
        let col_hi = ((x1 - 0.5).ceil().max(-1.0) + 1.0).min(self.width as f64) as usize;
        let row_hi = ((y1 - 0.5).ceil().max(-1.0) + 1.0).min(self.height as f64) as usize;
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                if !line.contains(col as f64 + 0.5, row as f64 + 0.5) {
                    continue;
                }
                let dst = &mut self.pixels[row * self.width + col];
                let da = f64::from(dst[3]);
                let out_a = alpha + da * (1.0 - alpha);
                for ch in 0..3 {
                    let dc = f64::from(dst[ch]);
                    let c = if out_a > 0.0 {
                        (gray * alpha + dc * da * (1.0 - alpha)) / out_a
                    } else {
                        0.0
                    };
                    dst[ch] = c.clamp(0.0, 1.0) as f32;
                }
                dst[3] = out_a.clamp(0.0, 1.0) as f32;
            }
        }
    }

    /// 8-bit RGBA bytes, row-major from the top-left pixel.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (f64::from(c) * 255.0).round().clamp(0.0, 255.0) as u8))
            .collect()
    }

    pub fn write_png<W: Write>(&self, out: W) -> Result<(), png::EncodingError> {
        let mut encoder = png::Encoder::new(out, self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.to_rgba8())?;
        writer.finish()
    }

    pub fn save_png(&self, path: &Path) -> std::io::Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_png(file).map_err(std::io::Error::other)
    }
}

/// Render a validated pattern onto a fresh transparent canvas.
pub fn rasterize(params: &PatternParams, config: &PatternConfig) -> Result<Canvas, PatternError> {
    let space = param_space(params.family)?;
    let verdict = validate(params, &space)?;
    if !verdict.is_valid() {
        return Err(PatternError::OutOfBounds(verdict.violations));
    }
    let mut canvas = Canvas::transparent(config.canvas_width, config.canvas_height);
    for line in lines(params, config) {
        canvas.draw_line(&line);
    }
    Ok(canvas)
}

/// Cartesian product of every dimension's grid, last dimension varying fastest.
pub fn grid_points(space: &ParamSpace, cap: usize) -> Result<Vec<PatternParams>, PatternError> {
    let count = space.grid_size();
    if count > cap as u128 {
        return Err(PatternError::GridTooLarge { count, cap });
    }
    let counts: Vec<usize> = space.dims.iter().map(Dimension::grid_count).collect();
    let mut index = vec![0usize; counts.len()];
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let values = index
            .iter()
            .zip(&space.dims)
            .map(|(&k, d)| d.grid_value(k))
            .collect();
        out.push(PatternParams::new(space.family, values));
        for i in (0..index.len()).rev() {
            index[i] += 1;
            if index[i] < counts[i] {
                break;
            }
            index[i] = 0;
        }
    }
    Ok(out)
}

/// One unit-cube point drawn i.i.d. uniform per dimension.
pub fn sample_unit<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Vec<f64> {
    (0..dimension).map(|_| rng.random::<f64>()).collect()
}

pub fn sample_uniform_with<R: Rng + ?Sized>(space: &ParamSpace, rng: &mut R) -> PatternParams {
    let unit = sample_unit(space.dimension(), rng);
    space.params_from_unit(&unit)
}

/// Uniform sample from the box, reproducible for a fixed seed.
pub fn sample_uniform(space: &ParamSpace, seed: u64) -> PatternParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uniform_with(space, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(values: &[f64]) -> PatternParams {
        PatternParams::new(PatternFamily::SingleLine, values.to_vec())
    }

    #[test]
    fn family_dimensions() {
        assert_eq!(param_space(PatternFamily::SingleLine).unwrap().dimension(), 2);
        let double = param_space(PatternFamily::DoubleLine).unwrap();
        assert_eq!(double.dimension(), 3);
        assert_eq!(double.dims[2].kind, DimKind::Gap);
        assert_eq!(double.dims[2].upper, 100.0);
        assert_eq!(param_space(PatternFamily::NLines(3)).unwrap().dimension(), 18);
        assert!(matches!(
            param_space(PatternFamily::NLines(0)),
            Err(PatternError::InvalidFamily(_))
        ));
    }

    #[test]
    fn single_line_bounds_match_sweep_ranges() {
        let s = param_space(PatternFamily::SingleLine).unwrap();
        assert_eq!((s.dims[0].lower, s.dims[0].upper), (0.0, 200.0));
        assert_eq!((s.dims[1].lower, s.dims[1].upper), (0.0, 180.0));
    }

    #[test]
    fn family_string_roundtrip() {
        for f in [
            PatternFamily::SingleLine,
            PatternFamily::DoubleLine,
            PatternFamily::TwoLine,
            PatternFamily::NLines(4),
        ] {
            assert_eq!(f.to_string().parse::<PatternFamily>().unwrap(), f);
        }
        assert!("nlines:0".parse::<PatternFamily>().is_err());
        assert!("zigzag".parse::<PatternFamily>().is_err());
    }

    #[test]
    fn validate_examples() {
        let space = param_space(PatternFamily::SingleLine).unwrap();
        assert!(validate(&single(&[100.0, 90.0]), &space).unwrap().is_valid());

        let bad = validate(&single(&[250.0, 90.0]), &space).unwrap();
        assert_eq!(bad.violations.len(), 1);
        assert_eq!(bad.violations[0].dim, 0);

        assert!(matches!(
            validate(&single(&[100.0, 90.0, 5.0]), &space),
            Err(PatternError::DimensionMismatch { .. })
        ));
        let nan = validate(&single(&[f64::NAN, 90.0]), &space).unwrap();
        assert!(!nan.is_valid());
    }

    #[test]
    fn invalid_spaces_rejected() {
        let d = Dimension::new(DimKind::Position, 5.0, 5.0, 1.0);
        assert!(ParamSpace::new(PatternFamily::SingleLine, vec![d, d]).is_err());
        let d = Dimension::new(DimKind::Position, 0.0, 5.0, 6.0);
        assert!(ParamSpace::new(PatternFamily::SingleLine, vec![d, d]).is_err());
        let d = Dimension::new(DimKind::Position, 0.0, 5.0, 0.0);
        assert!(ParamSpace::new(PatternFamily::SingleLine, vec![d, d]).is_err());
    }

    #[test]
    fn rasterize_rejects_out_of_bounds() {
        let err = rasterize(&single(&[100.0, 200.0]), &PatternConfig::default()).unwrap_err();
        assert!(matches!(err, PatternError::OutOfBounds(_)));
    }

    #[test]
    fn zero_opacity_lines_leave_canvas_transparent() {
        let values = vec![
            50.0, 30.0, 150.0, 20.0, 0.0, 0.0, //
            120.0, 100.0, 200.0, 40.0, 0.3, 0.0,
        ];
        let params = PatternParams::new(PatternFamily::NLines(2), values);
        let canvas = rasterize(&params, &PatternConfig::default()).unwrap();
        assert!(canvas.is_transparent());
    }

    #[test]
    fn rotation_quarter_turn_is_transpose() {
        let config = PatternConfig::default();
        let a = rasterize(&single(&[100.0, 0.0]), &config).unwrap();
        let b = rasterize(&single(&[100.0, 90.0]), &config).unwrap();
        let mut covered = 0;
        for row in 0..CANVAS_SIZE {
            for col in 0..CANVAS_SIZE {
                assert_eq!(a.get(col, row)[3], b.get(row, col)[3], "pixel ({col},{row})");
                covered += (a.get(col, row)[3] > 0.0) as usize;
            }
        }
        assert_eq!(covered, 120 * 12);
    }

    #[test]
    fn double_line_separation_is_perpendicular() {
        let config = PatternConfig::default();
        // horizontal lines, gap 20 => centers at y = 100 -/+ 16
        let params = PatternParams::new(PatternFamily::DoubleLine, vec![100.0, 0.0, 20.0]);
        let ls = lines(&params, &config);
        assert_eq!(ls.len(), 2);
        let ys: Vec<f64> = ls.iter().map(|l| l.cy).collect();
        assert!((ys[0] - ys[1]).abs() - 32.0 < 1e-9);
        assert!(ls.iter().all(|l| (l.cx - 100.0).abs() < 1e-9));
    }

    #[test]
    fn grid_counts() {
        let d = Dimension::new(DimKind::Position, 0.0, 200.0, 20.0);
        assert_eq!(d.grid_count(), 11);
        let space = param_space(PatternFamily::SingleLine)
            .unwrap()
            .with_grid_counts(&[11, 10])
            .unwrap();
        let pts = grid_points(&space, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(pts.len(), 110);
        assert_eq!(pts[0].values, vec![0.0, 0.0]);
        assert_eq!(pts[1].values[0], 0.0);
        assert_eq!(pts[10].values[0], 20.0);
        assert_eq!(pts[109].values, vec![200.0, 180.0]);
        for w in pts.windows(2) {
            assert!(w[0].values < w[1].values, "lexicographic order");
        }
    }

    #[test]
    fn double_line_grid_matches_sweep_scale() {
        let space = param_space(PatternFamily::DoubleLine)
            .unwrap()
            .with_grid_counts(&[12, 10, 12])
            .unwrap();
        assert_eq!(grid_points(&space, DEFAULT_GRID_CAP).unwrap().len(), 1440);
        let space = space.with_grid_counts(&[10, 8, 4]).unwrap();
        assert_eq!(space.grid_size(), 320);
    }

    #[test]
    fn grid_cap_enforced() {
        let space = param_space(PatternFamily::NLines(3)).unwrap();
        assert!(matches!(
            grid_points(&space, DEFAULT_GRID_CAP),
            Err(PatternError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn uniform_samples_are_reproducible_and_in_bounds() {
        let space = param_space(PatternFamily::TwoLine).unwrap();
        assert_eq!(sample_uniform(&space, 7), sample_uniform(&space, 7));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = sample_uniform_with(&space, &mut rng);
            assert!(validate(&p, &space).unwrap().is_valid());
            sum += p.values[0];
        }
        // 3 sigma of the mean of U(0, 200) over 1e4 draws is ~1.73
        let mean = sum / n as f64;
        assert!((95.0..=105.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn png_export_has_expected_size() {
        let canvas = rasterize(&single(&[60.0, 45.0]), &PatternConfig::default()).unwrap();
        assert_eq!(canvas.to_rgba8().len(), 200 * 200 * 4);
        let mut buf = Vec::new();
        canvas.write_png(&mut buf).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }

    #[test]
    fn params_json_shape() {
        let p = PatternParams::new(PatternFamily::NLines(1), vec![1.0, 2.0, 3.0, 4.0, 0.5, 1.0]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"family":"nlines:1","values":[1.0,2.0,3.0,4.0,0.5,1.0]}"#);
        assert_eq!(serde_json::from_str::<PatternParams>(&json).unwrap(), p);
    }
}
