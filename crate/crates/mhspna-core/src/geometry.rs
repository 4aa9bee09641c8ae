//! Planar polyline geometry: lengths, bearings, angular curvature, and
//! nearest-point queries. Coordinates are metric and planar throughout; there
//! is no spherical math anywhere in the crate.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        math::hypot(other.x - self.x, other.y - self.y)
    }
}

/// Direction of the segment a -> b in degrees, in (-180, 180].
pub fn bearing(a: Point, b: Point) -> f64 {
    math::atan2(b.y - a.y, b.x - a.x) * (180.0 / core::f64::consts::PI)
}

/// Absolute angular difference between two bearings, folded into [0, 180].
pub fn bearing_change(from: f64, to: f64) -> f64 {
    let mut d = math::abs(to - from);
    while d > 360.0 {
        d -= 360.0;
    }
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

pub fn polyline_length(pts: &[Point]) -> f64 {
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += w[0].dist(w[1]);
    }
    total
}

/// Sum of absolute bearing changes over interior vertices, in degrees.
/// Inserting a collinear vertex leaves the total unchanged.
pub fn angular_curvature(pts: &[Point]) -> f64 {
    let mut total = 0.0;
    for w in pts.windows(3) {
        total += bearing_change(bearing(w[0], w[1]), bearing(w[1], w[2]));
    }
    total
}

/// Nearest point on the segment a-b to p, as the clamped parameter t in [0,1].
pub fn project_on_segment(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return 0.0;
    }
    let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    math::clamp(t, 0.0, 1.0)
}

pub fn point_on_segment(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

/// Closest approach of a polyline to p: (distance, segment index, parameter).
/// Ties between segments resolve to the earliest segment.
pub fn nearest_on_polyline(pts: &[Point], p: Point) -> (f64, usize, f64) {
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for (i, w) in pts.windows(2).enumerate() {
        let t = project_on_segment(p, w[0], w[1]);
        let q = point_on_segment(w[0], w[1], t);
        let d = p.dist(q);
        if d < best.0 {
            best = (d, i, t);
        }
    }
    best
}

/// Splits a polyline at (segment, t), duplicating the split vertex into both
/// halves. Callers guarantee the split point is not an endpoint of the whole
/// polyline; a split exactly on an interior vertex puts that vertex in both.
pub fn split_polyline(pts: &[Point], seg: usize, t: f64) -> (Vec<Point>, Vec<Point>) {
    let cut = point_on_segment(pts[seg], pts[seg + 1], t);
    let mut first: Vec<Point> = pts[..=seg].to_vec();
    if t > 0.0 {
        first.push(cut);
    }
    let mut second: Vec<Point> = Vec::with_capacity(pts.len() - seg);
    second.push(cut);
    if t < 1.0 {
        second.push(pts[seg + 1]);
    }
    second.extend_from_slice(&pts[seg + 2..]);
    (first, second)
}
