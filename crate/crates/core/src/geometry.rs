//! Closed uniform cubic B-splines and the parametrized shape models.
//!
//! A contour is a closed cubic B-spline over `N` control points. The bent-rod
//! model maps an 8-vector of geometric parameters onto six control points; the
//! ovoid model does the same for round-to-elliptic objects.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of control points of both built-in shape models.
pub const MODEL_POINTS: usize = 6;

/// Default number of equidistant samples per spline segment.
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Which 2x2 matrix rotates the rod template.
///
/// `Proper` is the ordinary rotation matrix. `Printed` is
/// `[[cos, -sin], [sin, -cos]]`: a vertical mirror at `alpha = 0`, but its
/// determinant is `-cos 2alpha`, so it flattens the rod onto a line near
/// `alpha = ±pi/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    Printed,
    #[default]
    Proper,
}

impl RotationMode {
    /// Row-major 2x2 transform for angle `alpha`.
    pub fn matrix(self, alpha: f64) -> [[f64; 2]; 2] {
        let (s, c) = alpha.sin_cos();
        match self {
            RotationMode::Printed => [[c, -s], [s, -c]],
            RotationMode::Proper => [[c, -s], [s, c]],
        }
    }
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationMode::Printed => f.write_str("printed"),
            RotationMode::Proper => f.write_str("proper"),
        }
    }
}

impl FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "printed" => Ok(RotationMode::Printed),
            "proper" => Ok(RotationMode::Proper),
            other => Err(Error::InvalidParameter(format!(
                "unknown rotation mode '{other}' (expected printed|proper)"
            ))),
        }
    }
}

/// Geometric parameters of a bent rod, all lengths in tile pixels.
///
/// `l1`/`l2` are the length segments above and below the center, `w` the
/// width, `d`/`e` the lateral offsets of the top and bottom ends and `alpha`
/// the rotation angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodParams {
    pub cx: f64,
    pub cy: f64,
    pub l1: f64,
    pub l2: f64,
    pub w: f64,
    pub d: f64,
    pub e: f64,
    pub alpha: f64,
}

impl RodParams {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.cx, self.cy, self.l1, self.l2, self.w, self.d, self.e, self.alpha,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            cx: v[0],
            cy: v[1],
            l1: v[2],
            l2: v[3],
            w: v[4],
            d: v[5],
            e: v[6],
            alpha: v[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks the type invariants (positive lengths and width, finite fields).
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite rod parameters: {self:?}"
            )));
        }
        if self.l1 <= 0.0 || self.l2 <= 0.0 || self.w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rod lengths and width must be positive: l1={}, l2={}, w={}",
                self.l1, self.l2, self.w
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.l1 + self.l2
    }

    /// Same rod with its center shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Angle reduced to `[0, 2π)`.
    pub fn normalized_alpha(&self) -> f64 {
        self.alpha.rem_euclid(2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolygon {
    points: Vec<Point>,
}

impl ControlPolygon {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidParameter(format!(
                "a closed cubic spline needs at least 4 control points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite control point {p:?}"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `p -> A p + b` to every control point.
    pub fn map_affine(&self, a: [[f64; 2]; 2], b: Point) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| Point {
                x: a[0][0] * p.x + a[0][1] * p.y + b.x,
                y: a[1][0] * p.x + a[1][1] * p.y + b.y,
            })
            .collect();
        Self { points }
    }
}

/// Closed polyline; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Iterator over closed edges `(start, end)`.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.edges().map(|(a, b)| a.distance(&b)).collect()
    }

    pub fn length(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(&b)).sum()
    }

    /// Shoelace signed area; positive for counterclockwise order.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    /// Reverses the vertex order while keeping vertex 0 in place.
    pub fn reversed(&self) -> Self {
        let mut vertices = Vec::with_capacity(self.vertices.len());
        if let Some(first) = self.vertices.first() {
            vertices.push(*first);
            vertices.extend(self.vertices[1..].iter().rev());
        }
        Self { vertices }
    }

    /// Returns the polyline with non-negative signed area.
    pub fn normalized(self) -> Self {
        if self.signed_area() < 0.0 {
            self.reversed()
        } else {
            self
        }
    }

    /// Axis-aligned extents `(min, max)`.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        }))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

/// Dense `N x (N*n)` matrix of cubic B-spline basis weights.
///
/// Every column has exactly four nonzero entries, which are also kept in a
/// compact form so sampling costs four multiply-adds per point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    control_points: usize,
    samples_per_segment: usize,
    entries: Vec<f64>,
    columns: Vec<[(usize, f64); 4]>,
}

/// The four uniform cubic B-spline blending weights at local parameter `t`.
pub fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

impl BasisMatrix {
    pub fn rows(&self) -> usize {
        self.control_points
    }

    pub fn cols(&self) -> usize {
        self.control_points * self.samples_per_segment
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_segment
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.entry(r, col)).collect()
    }
}

/// Builds the basis matrix for a closed spline with `n_points` control points
/// sampled `samples_per_segment` times per segment.
pub fn basis_matrix(n_points: usize, samples_per_segment: usize) -> Result<BasisMatrix> {
    if n_points < 4 {
        return Err(Error::InvalidParameter(format!(
            "basis matrix needs N >= 4 control points, got {n_points}"
        )));
    }
    if samples_per_segment == 0 {
        return Err(Error::InvalidParameter(
            "samples per segment must be >= 1".into(),
        ));
    }
    let cols = n_points * samples_per_segment;
    let mut entries = vec![0.0; n_points * cols];
    let mut columns = Vec::with_capacity(cols);
    for seg in 0..n_points {
        for s in 0..samples_per_segment {
            let col = seg * samples_per_segment + s;
            let t = s as f64 / samples_per_segment as f64;
            let w = cubic_weights(t);
            let mut compact = [(0usize, 0.0f64); 4];
            for (k, wk) in w.iter().enumerate() {
                let row = (seg + k) % n_points;
                entries[row * cols + col] += wk;
                compact[k] = (row, *wk);
            }
            columns.push(compact);
        }
    }
    Ok(BasisMatrix {
        control_points: n_points,
        samples_per_segment,
        entries,
        columns,
    })
}

/// Samples the closed spline `P * B` and orients the result counterclockwise.
pub fn spline_sample(control: &ControlPolygon, basis: &BasisMatrix) -> Result<Polyline> {
    if control.len() != basis.rows() {
        return Err(Error::InvalidParameter(format!(
            "basis built for {} control points, polygon has {}",
            basis.rows(),
            control.len()
        )));
    }
    let pts = control.points();
    let vertices = basis
        .columns
        .iter()
        .map(|col| {
            col.iter().fold(Point::default(), |acc, &(row, w)| Point {
                x: acc.x + w * pts[row].x,
                y: acc.y + w * pts[row].y,
            })
        })
        .collect();
    Ok(Polyline::new(vertices).normalized())
}

/// Template offsets of the six rod control points relative to the center.
fn rod_offsets(theta: &RodParams) -> [Point; MODEL_POINTS] {
    let hw = 0.5 * theta.w;
    [
        Point::new(hw, 0.0),
        Point::new(hw - theta.d, theta.l1),
        Point::new(-hw - theta.d, theta.l1),
        Point::new(-hw, 0.0),
        Point::new(-hw - theta.e, -theta.l2),
        Point::new(hw - theta.e, -theta.l2),
    ]
}

/// Control points of the bent-rod model: `c + M(alpha) * offsets`.
pub fn rod_control_points(theta: &RodParams, mode: RotationMode) -> Result<ControlPolygon> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "non-finite rod parameters: {theta:?}"
        )));
    }
    if theta.w <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "rod width must be positive, got {}",
            theta.w
        )));
    }
    let m = mode.matrix(theta.alpha);
    let points = rod_offsets(theta)
        .iter()
        .map(|o| Point {
            x: theta.cx + m[0][0] * o.x + m[0][1] * o.y,
            y: theta.cy + m[1][0] * o.x + m[1][1] * o.y,
        })
        .collect();
    Ok(ControlPolygon { points })
}

/// Radius scale that makes the knot points of a regular-hexagon spline land
/// on the target circle: `(P_i + 4 P_{i+1} + P_{i+2}) / 6` shrinks by
/// `(4 + 2 cos 60°) / 6`.
pub const OVOID_SCALE: f64 = 3.0 / 2.5;

/// Control points of the ovoid model: six points at 60° spacing on a scaled
/// ellipse, rotated by `alpha` about `center`.
pub fn ovoid_control_points(
    center: Point,
    r_major: f64,
    r_minor: f64,
    alpha: f64,
) -> Result<ControlPolygon> {
    if !(center.is_finite() && r_major.is_finite() && r_minor.is_finite() && alpha.is_finite()) {
        return Err(Error::InvalidParameter("non-finite ovoid parameters".into()));
    }
    if r_minor <= 0.0 || r_major <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ovoid radii must be positive, got ({r_major}, {r_minor})"
        )));
    }
    if r_major < r_minor {
        return Err(Error::InvalidParameter(format!(
            "r_major ({r_major}) must be >= r_minor ({r_minor})"
        )));
    }
    let (sa, ca) = alpha.sin_cos();
    let points = (0..MODEL_POINTS)
        .map(|k| {
            let phi = k as f64 * PI / 3.0;
            let ex = r_major * OVOID_SCALE * phi.cos();
            let ey = r_minor * OVOID_SCALE * phi.sin();
            Point::new(center.x + ca * ex - sa * ey, center.y + sa * ex + ca * ey)
        })
        .collect();
    Ok(ControlPolygon { points })
}
