//! Small planar geometry helpers. World frame: `x` east, `y` north, meters;
//! headings are radians counter-clockwise from `+x`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        Vec2::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product; positive when `o` is to the left of `self`.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotate 90 degrees counter-clockwise.
    #[inline]
    pub fn perp_left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Oriented rectangle given by its center, heading of its long axis, and extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let u = Vec2::from_heading(self.heading) * (0.5 * self.length);
        let n = Vec2::from_heading(self.heading).perp_left() * (0.5 * self.width);
        let c = self.center;
        [c - u - n, c + u - n, c + u + n, c - u + n]
    }

    /// Point at normalized coordinates `(a, b)` in `[0,1]^2`, `a` along the
    /// long axis from back to front, `b` across from right to left.
    #[inline]
    pub fn local_point(&self, a: f64, b: f64, u: Vec2, n: Vec2) -> Vec2 {
        self.center + u * ((a - 0.5) * self.length) + n * ((b - 0.5) * self.width)
    }
}

/// Separating-axis test for two convex polygons; touching counts as overlap.
pub fn convex_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    const EPS: f64 = 1e-9;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let edge = poly[(i + 1) % poly.len()] - poly[i];
            let axis = edge.perp_left();
            let (amin, amax) = project(a, axis);
            let (bmin, bmax) = project(b, axis);
            let scale = axis.norm().max(1.0);
            if amax < bmin - EPS * scale || bmax < amin - EPS * scale {
                return false;
            }
        }
    }
    true
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
