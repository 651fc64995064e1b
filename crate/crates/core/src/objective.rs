//! The three-term contour energy.
//!
//! Region averages are evaluated as contour integrals: for a channel `f` with
//! cumulative fields `f^x`, `f^y`, the area integral over the enclosed region
//! equals `1/2 ∮ (f^x ν₁ + f^y ν₂) ds`. Both line integrals use the segment
//! midpoint rule on the sampled polyline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polyline};
use crate::imageops::{GrayImage, Tile};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_GRADIENT_POWER: f64 = 1.5;
/// Default region weights, picked on synthetic colonies; tune for real data.
pub const DEFAULT_W_REGION: f64 = 3.0;
pub const DEFAULT_W_GEODESIC: f64 = 1.0;

/// Regions smaller than this (in px²) are reported as degenerate.
const MIN_AREA: f64 = 1.0;

/// Running sums along rows (`fx`) and columns (`fy`) of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeTable {
    width: usize,
    height: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl CumulativeTable {
    pub fn new(channel: &GrayImage) -> Self {
        let (w, h) = (channel.width(), channel.height());
        let src = channel.data();
        let mut fx = vec![0.0; w * h];
        let mut fy = vec![0.0; w * h];
        for y in 0..h {
            let mut acc = 0.0;
            for x in 0..w {
                acc += src[y * w + x];
                fx[y * w + x] = acc;
            }
        }
        for x in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                acc += src[y * w + x];
                fy[y * w + x] = acc;
            }
        }
        Self {
            width: w,
            height: h,
            fx,
            fy,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry `Σ_{t ≤ x} f(t, y)`.
    pub fn fx_at(&self, x: usize, y: usize) -> f64 {
        self.fx[y * self.width + x]
    }

    /// Table entry `Σ_{t ≤ y} f(x, t)`.
    pub fn fy_at(&self, x: usize, y: usize) -> f64 {
        self.fy[y * self.width + x]
    }

    /// Continuous `f^x(x, y) = ∫ f(t, y) dt` from the left tile edge.
    ///
    /// Pixel `i` is the unit cell `[i - 0.5, i + 0.5]`, so the table entry at
    /// `i` is the integral up to `i + 0.5`; the running integral is piecewise
    /// linear in `x` and linearly interpolated between pixel rows in `y`.
    /// Beyond the tile the border pixels are replicated, so the integral keeps
    /// growing (or goes negative left of the tile).
    pub fn integral_x(&self, x: f64, y: f64) -> f64 {
        let (y0, y1, fy) = lerp_index(y, self.height);
        let row = |r: usize| cumulative_at(&self.fx[r * self.width..(r + 1) * self.width], x, 1);
        row(y0) * (1.0 - fy) + row(y1) * fy
    }

    /// Continuous `f^y(x, y) = ∫ f(x, t) dt` from the top tile edge.
    pub fn integral_y(&self, x: f64, y: f64) -> f64 {
        let (x0, x1, fx) = lerp_index(x, self.width);
        let col = |c: usize| cumulative_at(&self.fy[c..], y, self.width);
        col(x0) * (1.0 - fx) + col(x1) * fx
    }
}

/// Neighboring pixel indices and weight for linear interpolation at `v`.
#[inline]
fn lerp_index(v: f64, len: usize) -> (usize, usize, f64) {
    let v = v.clamp(0.0, (len - 1) as f64);
    let i0 = v.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, v - i0 as f64)
}

/// Piecewise-linear running integral at continuous position `pos`, reading
/// entries `data[i * stride]` for `i` in `0..len`. Outside the tile the
/// channel is continued by replicating its border pixels.
#[inline]
fn cumulative_at(data: &[f64], pos: f64, stride: usize) -> f64 {
    let len = (data.len() + stride - 1) / stride;
    let u = pos - 0.5;
    if u <= 0.0 {
        return (u + 1.0) * data[0];
    }
    let last = (len - 1) as f64;
    if u >= last {
        let tail = if len > 1 {
            data[(len - 1) * stride] - data[(len - 2) * stride]
        } else {
            data[0]
        };
        return data[(len - 1) * stride] + (u - last) * tail;
    }
    let i0 = u.floor();
    let frac = u - i0;
    let lo = data[i0 as usize * stride];
    let hi = data[(i0 + 1.0) as usize * stride];
    lo * (1.0 - frac) + hi * frac
}

/// Cumulative tables of the intensity and geodesic channels.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralTables {
    pub intensity: CumulativeTable,
    pub geodesic: CumulativeTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionChannel {
    Intensity,
    Geodesic,
}

impl IntegralTables {
    pub fn channel(&self, which: RegionChannel) -> &CumulativeTable {
        match which {
            RegionChannel::Intensity => &self.intensity,
            RegionChannel::Geodesic => &self.geodesic,
        }
    }
}

pub fn build_tables(tile: &Tile) -> IntegralTables {
    IntegralTables {
        intensity: CumulativeTable::new(&tile.intensity),
        geodesic: CumulativeTable::new(&tile.geodesic),
    }
}

/// Energy weights and the edge-term shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub epsilon: f64,
    pub k: f64,
    pub w_region: f64,
    pub w_geodesic: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_GRADIENT_POWER,
            w_region: DEFAULT_W_REGION,
            w_geodesic: DEFAULT_W_GEODESIC,
        }
    }
}

impl ObjectiveConfig {
    pub fn with_weights(self, w_region: f64, w_geodesic: f64) -> Self {
        Self {
            w_region,
            w_geodesic,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.k > 0.0
            && self.w_region >= 0.0
            && self.w_geodesic >= 0.0
            && [self.epsilon, self.k, self.w_region, self.w_geodesic]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "objective config requires eps > 0, k > 0 and non-negative weights: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub f_ce: f64,
    pub f_re: f64,
    pub f_ge: f64,
    pub total: f64,
    pub contour_length: f64,
    pub area: f64,
}

#[inline]
fn midpoint(a: Point, b: Point) -> Point {
    Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
}

/// Length-weighted mean of `1 / (|∇I| + ε)^k` along the contour.
pub fn contour_energy(polyline: &Polyline, gradient: &GrayImage, cfg: &ObjectiveConfig) -> Result<f64> {
    if polyline.len() < 3 {
        return Err(Error::DegenerateContour(format!(
            "{} vertices",
            polyline.len()
        )));
    }
    let mut len = 0.0;
    let mut acc = 0.0;
    for (a, b) in polyline.edges() {
        let l = a.distance(&b);
        let m = midpoint(a, b);
        let g = gradient.sample_bilinear(m.x, m.y);
        acc += l * (g + cfg.epsilon).powf(-cfg.k);
        len += l;
    }
    if !(len > 0.0) {
        return Err(Error::DegenerateContour("zero-length contour".into()));
    }
    Ok(acc / len)
}

/// Mean of the tabulated channel over the region enclosed by `polyline`.
///
/// Works for either orientation: the boundary term and the shoelace area flip
/// sign together.
pub fn region_energy(polyline: &Polyline, table: &CumulativeTable) -> Result<f64> {
    let area = polyline.signed_area();
    if !(area.abs() >= MIN_AREA) {
        return Err(Error::DegenerateRegion(area));
    }
    let mut acc = 0.0;
    for (a, b) in polyline.edges() {
        let m = midpoint(a, b);
        // (dy, -dx) is the outward normal scaled by the segment length
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        acc += table.integral_x(m.x, m.y) * dy - table.integral_y(m.x, m.y) * dx;
    }
    Ok(0.5 * acc / area)
}

/// Evaluates all three energy terms and their weighted sum.
pub fn total_energy(
    polyline: &Polyline,
    tile: &Tile,
    tables: &IntegralTables,
    cfg: &ObjectiveConfig,
) -> Result<EnergyBreakdown> {
    let f_ce = contour_energy(polyline, &tile.gradient, cfg)?;
    let f_re = region_energy(polyline, &tables.intensity)?;
    let f_ge = region_energy(polyline, &tables.geodesic)?;
    Ok(EnergyBreakdown {
        f_ce,
        f_re,
        f_ge,
        total: f_ce + cfg.w_region * f_re + cfg.w_geodesic * f_ge,
        contour_length: polyline.length(),
        area: polyline.signed_area().abs(),
    })
}
