//! Synthetic bright-field colonies with exact ground truth.
//!
//! Cells are bent rods drawn from the constraint ranges, placed by rejection
//! so that masks overlap by at most a fixed fraction, and painted darker than
//! the background with a one-pixel darker rim centered on each contour.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    basis_matrix, rod_control_points, spline_sample, Polyline, RodParams, RotationMode,
    DEFAULT_SAMPLES_PER_SEGMENT, MODEL_POINTS,
};
use crate::imageops::{BoundingBox, GrayImage, DEFAULT_PIXEL_SIZE_UM};
use crate::metrics::{rasterize, Mask};
use crate::optimizer::ConstraintSet;

const MAX_REJECTIONS: usize = 10_000;
/// Distance kept between a cell contour and the canvas border.
const BORDER_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_cells: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub background_level: f64,
    pub cell_level: f64,
    pub rim_level: f64,
    pub noise_sigma: f64,
    /// Largest allowed overlap of two masks, as a fraction of the smaller one.
    pub max_overlap: f64,
    pub rotation_mode: RotationMode,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_cells: 15,
            width: 256,
            height: 256,
            pixel_size: DEFAULT_PIXEL_SIZE_UM,
            background_level: 0.75,
            cell_level: 0.45,
            rim_level: 0.2,
            noise_sigma: 0.02,
            max_overlap: 0.2,
            rotation_mode: RotationMode::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Square canvas large enough to place `n_cells` at moderate density.
    pub fn for_cells(n_cells: usize, seed: u64) -> Self {
        let side = ((n_cells as f64 * 4000.0).sqrt().ceil() as usize).max(160);
        Self {
            n_cells,
            width: side,
            height: side,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::InvalidParameter("n_cells must be >= 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("canvas must be non-empty".into()));
        }
        let levels = [self.background_level, self.cell_level, self.rim_level];
        if levels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!("levels outside [0, 1]: {levels:?}")));
        }
        if !(self.background_level > self.cell_level && self.cell_level > self.rim_level) {
            return Err(Error::InvalidParameter(
                "levels must satisfy background > cell > rim".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) || !(self.pixel_size > 0.0) {
            return Err(Error::InvalidParameter("noise and pixel size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCell {
    /// Ground-truth parameters in canvas coordinates.
    pub theta: RodParams,
    pub mask: Mask,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColonyScene {
    pub image: GrayImage,
    pub cells: Vec<SceneCell>,
    pub config: SceneConfig,
}

impl ColonyScene {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.cells.iter().map(|c| c.bbox).collect()
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.cells.iter().map(|c| c.mask.clone()).collect()
    }

    pub fn canvas(&self) -> (usize, usize) {
        (self.image.width(), self.image.height())
    }

    /// 16-bit label image: 0 is background, cell `i` is `i + 1`. Later cells
    /// win where masks overlap.
    pub fn label_image(&self) -> Vec<u16> {
        let (w, h) = self.canvas();
        let mut labels = vec![0u16; w * h];
        for (i, c) in self.cells.iter().enumerate() {
            for (x, y) in c.mask.global_pixels() {
                labels[y * w + x] = (i + 1) as u16;
            }
        }
        labels
    }
}

/// Rasterizes `contour` inside its own bounding window of a canvas.
pub fn rasterize_on_canvas(contour: &Polyline, canvas: (usize, usize)) -> Option<Mask> {
    let (lo, hi) = contour.bounds()?;
    let x0 = lo.x.floor().max(0.0) as usize;
    let y0 = lo.y.floor().max(0.0) as usize;
    let x1 = (hi.x.ceil() as usize).min(canvas.0.saturating_sub(1));
    let y1 = (hi.y.ceil() as usize).min(canvas.1.saturating_sub(1));
    if x1 < x0 || y1 < y0 {
        return None;
    }
    let local = contour.translated(-(x0 as f64), -(y0 as f64));
    Some(rasterize(&local, x1 - x0 + 1, y1 - y0 + 1).with_origin((x0, y0)))
}

fn overlap(a: &Mask, b: &Mask) -> usize {
    a.global_pixels().filter(|&(x, y)| b.get_global(x, y)).count()
}

/// Samples parameters uniformly within the biological ranges.
pub fn sample_theta(rng: &mut impl Rng, bounds: &ConstraintSet, cx: f64, cy: f64) -> RodParams {
    RodParams {
        cx,
        cy,
        l1: rng.random_range(bounds.l_min..=bounds.l_max),
        l2: rng.random_range(bounds.l_min..=bounds.l_max),
        w: rng.random_range(bounds.w_min..=bounds.w_max),
        d: rng.random_range(-bounds.de_max..=bounds.de_max),
        e: rng.random_range(-bounds.de_max..=bounds.de_max),
        alpha: rng.random_range(0.0..2.0 * PI),
    }
}

/// Generates a scene; fails with a capacity error when the cells cannot be
/// placed within the rejection budget.
pub fn render_scene(cfg: &SceneConfig) -> Result<ColonyScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = basis_matrix(MODEL_POINTS, DEFAULT_SAMPLES_PER_SEGMENT)?;
    let canvas = (cfg.width, cfg.height);
    // the length budget is checked per cell against its own box below
    let ranges = ConstraintSet::biological(cfg.pixel_size, f64::INFINITY, canvas);
    let mut cells: Vec<SceneCell> = Vec::with_capacity(cfg.n_cells);
    let mut rejections = 0usize;

    while cells.len() < cfg.n_cells {
        if rejections >= MAX_REJECTIONS {
            return Err(Error::Capacity(format!(
                "placed {} of {} cells on a {}x{} canvas before {} rejections",
                cells.len(),
                cfg.n_cells,
                cfg.width,
                cfg.height,
                MAX_REJECTIONS
            )));
        }
        let cx = rng.random_range(0.0..cfg.width as f64);
        let cy = rng.random_range(0.0..cfg.height as f64);
        let theta = sample_theta(&mut rng, &ranges, cx, cy);
        match try_place(&theta, cfg, canvas, &basis, &cells) {
            Some(cell) => cells.push(cell),
            None => rejections += 1,
        }
    }

    let image = paint(cfg, &cells, &mut rng)?;
    Ok(ColonyScene {
        image,
        cells,
        config: cfg.clone(),
    })
}

fn try_place(
    theta: &RodParams,
    cfg: &SceneConfig,
    canvas: (usize, usize),
    basis: &crate::geometry::BasisMatrix,
    placed: &[SceneCell],
) -> Option<SceneCell> {
    let contour = spline_sample(&rod_control_points(theta, cfg.rotation_mode).ok()?, basis).ok()?;
    let (lo, hi) = contour.bounds()?;
    if lo.x < BORDER_MARGIN
        || lo.y < BORDER_MARGIN
        || hi.x > canvas.0 as f64 - 1.0 - BORDER_MARGIN
        || hi.y > canvas.1 as f64 - 1.0 - BORDER_MARGIN
    {
        return None;
    }
    let mask = rasterize_on_canvas(&contour, canvas)?;
    let bbox = mask.tight_box()?;
    if bbox.validate().is_err() || theta.length() > bbox.diagonal() {
        return None;
    }
    let n = mask.count();
    for other in placed {
        let smaller = n.min(other.mask.count()) as f64;
        if overlap(&mask, &other.mask) as f64 > cfg.max_overlap * smaller {
            return None;
        }
    }
    Some(SceneCell {
        theta: *theta,
        mask,
        bbox,
    })
}

fn paint(cfg: &SceneConfig, cells: &[SceneCell], rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let (w, h) = (cfg.width, cfg.height);
    let basis = basis_matrix(MODEL_POINTS, DEFAULT_SAMPLES_PER_SEGMENT)?;
    let mut img = GrayImage::filled(w, h, cfg.background_level);
    for cell in cells {
        for (x, y) in cell.mask.global_pixels() {
            if x < w && y < h {
                img.set(x, y, cfg.cell_level);
            }
        }
    }
    // the rim is centered on the contour: every pixel whose center lies
    // within half a pixel of it, on either side
    for cell in cells {
        let contour = spline_sample(&rod_control_points(&cell.theta, cfg.rotation_mode)?, &basis)?;
        let Some((lo, hi)) = contour.bounds() else { continue };
        let x0 = (lo.x - 1.0).floor().max(0.0) as usize;
        let y0 = (lo.y - 1.0).floor().max(0.0) as usize;
        let x1 = ((hi.x + 1.0).ceil().max(0.0) as usize).min(w - 1);
        let y1 = ((hi.y + 1.0).ceil().max(0.0) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if distance_to_contour(&contour, x as f64, y as f64) < 0.5 {
                    img.set(x, y, cfg.rim_level);
                }
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in img.data_mut() {
            *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    Ok(img)
}

fn distance_to_contour(contour: &Polyline, px: f64, py: f64) -> f64 {
    contour
        .edges()
        .map(|(a, b)| {
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (px - a.x - t * dx).hypot(py - a.y - t * dy)
        })
        .fold(f64::INFINITY, f64::min)
}
