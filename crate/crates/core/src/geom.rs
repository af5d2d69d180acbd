//! Planar points in meters and integer grid cells.

use serde::{Deserialize, Serialize};

/// A position in map coordinates (meters). Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// A raster cell, `col` along x and `row` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// 8-connected moves in a fixed order; orthogonal moves first.
pub(crate) const MOVES8: [(isize, isize); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

pub(crate) const MOVES4: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Octile distance in cell units.
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.col.abs_diff(b.col) as f64;
    let dy = a.row.abs_diff(b.row) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    hi - lo + lo * std::f64::consts::SQRT_2
}

/// Total Euclidean length of a polyline.
pub fn polyline_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Resamples a polyline by arc length so consecutive samples are at most `step` apart.
/// Endpoints are preserved; a single-point input is returned unchanged.
pub fn resample(path: &[Point], step: f64) -> Vec<Point> {
    assert!(step > 0.0, "resample step must be positive");
    if path.len() < 2 {
        return path.to_vec();
    }
    let total = polyline_length(path);
    if total == 0.0 {
        return vec![path[0]];
    }
    let n = (total / step).ceil().max(1.0) as usize;
    let spacing = total / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    out.push(path[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut seg_len = path[0].dist(path[1]);
    for k in 1..n {
        let s = spacing * k as f64;
        while seg + 2 < path.len() && s > seg_start + seg_len {
            seg_start += seg_len;
            seg += 1;
            seg_len = path[seg].dist(path[seg + 1]);
        }
        let t = if seg_len > 0.0 {
            ((s - seg_start) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(path[seg].lerp(path[seg + 1], t));
    }
    out.push(*path.last().unwrap());
    out
}
