//! Contour rasterization and the segmentation scores: Dice, foreground Dice
//! (FD) and average multi-object Dice (AMD).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::imageops::BoundingBox;

/// Binary mask placed at `origin` in a larger frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    pub origin: (usize, usize),
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            origin: (0, 0),
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
            origin: (0, 0),
        })
    }

    pub fn with_origin(mut self, origin: (usize, usize)) -> Self {
        self.origin = origin;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Foreground test in the enclosing frame.
    pub fn get_global(&self, gx: usize, gy: usize) -> bool {
        let (ox, oy) = self.origin;
        if gx < ox || gy < oy {
            return false;
        }
        let (x, y) = (gx - ox, gy - oy);
        x < self.width && y < self.height && self.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixels in the enclosing frame.
    pub fn global_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (ox, oy) = self.origin;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (ox + i % self.width, oy + i / self.width))
    }

    /// Tight inclusive bounding box of the foreground in the enclosing frame.
    pub fn tight_box(&self) -> Option<BoundingBox> {
        let mut it = self.global_pixels();
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some(BoundingBox {
            x_min: x0 as f64,
            y_min: y0 as f64,
            x_max: x1 as f64,
            y_max: y1 as f64,
        })
    }

    /// Copies this mask into a zero-origin mask of the given frame size.
    pub fn placed(&self, width: usize, height: usize) -> Result<Mask> {
        let (ox, oy) = self.origin;
        if ox + self.width > width || oy + self.height > height {
            return Err(Error::InvalidInput(format!(
                "mask {}x{} at {:?} exceeds {width}x{height} canvas",
                self.width, self.height, self.origin
            )));
        }
        let mut out = Mask::empty(width, height);
        for (x, y) in self.global_pixels() {
            out.set(x, y, true);
        }
        Ok(out)
    }

    /// Number of 4-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % self.width, i / self.width);
                let mut push = |j: usize| {
                    if self.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    push(i - 1);
                }
                if x + 1 < self.width {
                    push(i + 1);
                }
                if y > 0 {
                    push(i - self.width);
                }
                if y + 1 < self.height {
                    push(i + self.width);
                }
            }
        }
        count
    }
}

/// Even-odd scanline fill; a pixel is set iff its center lies inside.
pub fn rasterize(polyline: &Polyline, width: usize, height: usize) -> Mask {
    let mut mask = Mask::empty(width, height);
    if polyline.len() < 3 || polyline.signed_area() == 0.0 {
        return mask;
    }
    let mut xs = Vec::new();
    for py in 0..height {
        let yc = py as f64;
        xs.clear();
        for (a, b) in polyline.edges() {
            if (a.y > yc) != (b.y > yc) {
                xs.push((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
            }
        }
        xs.sort_by(|p, q| p.total_cmp(q));
        for pair in xs.chunks_exact(2) {
            // centers px with pair[0] <= px < pair[1]
            let lo = pair[0].ceil().max(0.0);
            let hi = pair[1].ceil() - 1.0;
            if hi < lo {
                continue;
            }
            let hi = hi.min(width as f64 - 1.0);
            let mut px = lo;
            while px <= hi {
                mask.set(px as usize, py, true);
                px += 1.0;
            }
        }
    }
    mask
}

/// Dice of two masks sharing the same frame: `2|A∩B| / (|A|+|B|)`, and 1
/// when both are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.origin != b.origin {
        return Err(Error::InvalidInput(format!(
            "mask mismatch: {}x{} at {:?} vs {}x{} at {:?}",
            a.width, a.height, a.origin, b.width, b.height, b.origin
        )));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    Ok(dice_from_counts(na, nb, both))
}

/// Dice of two masks placed by their origins in a common frame.
pub fn dice_aligned(a: &Mask, b: &Mask) -> f64 {
    let na = a.count();
    let nb = b.count();
    let both = a.global_pixels().filter(|&(x, y)| b.get_global(x, y)).count();
    dice_from_counts(na, nb, both)
}

fn dice_from_counts(na: usize, nb: usize, both: usize) -> f64 {
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

fn union_on_canvas(masks: &[Mask], canvas: (usize, usize)) -> Result<Mask> {
    let mut out = Mask::empty(canvas.0, canvas.1);
    for m in masks {
        let (ox, oy) = m.origin;
        if ox + m.width > canvas.0 || oy + m.height > canvas.1 {
            return Err(Error::InvalidInput(format!(
                "mask {}x{} at {:?} exceeds {}x{} canvas",
                m.width, m.height, m.origin, canvas.0, canvas.1
            )));
        }
        for (x, y) in m.global_pixels() {
            out.set(x, y, true);
        }
    }
    Ok(out)
}

/// Foreground Dice: Dice of the union of predictions against the union of
/// ground-truth masks, so overlapping pixels count once.
pub fn foreground_dice(pred: &[Mask], gt: &[Mask], canvas: (usize, usize)) -> Result<f64> {
    let p = union_on_canvas(pred, canvas)?;
    let g = union_on_canvas(gt, canvas)?;
    dice(&p, &g)
}

fn check_pairing(n_pred: usize, n_gt: usize, pairing: &[usize]) -> Result<()> {
    if n_pred != n_gt || pairing.len() != n_pred {
        return Err(Error::InvalidPairing(format!(
            "{n_pred} predictions, {n_gt} ground-truth masks, {} pairs",
            pairing.len()
        )));
    }
    let mut used = vec![false; n_gt];
    for &j in pairing {
        if j >= n_gt || used[j] {
            return Err(Error::InvalidPairing(format!(
                "ground-truth index {j} is out of range or used twice"
            )));
        }
        used[j] = true;
    }
    Ok(())
}

/// Per-pair Dice where prediction `i` is matched to `gt[pairing[i]]`.
pub fn per_cell_dice(pred: &[Mask], gt: &[Mask], pairing: &[usize]) -> Result<Vec<f64>> {
    check_pairing(pred.len(), gt.len(), pairing)?;
    Ok(pred
        .iter()
        .zip(pairing)
        .map(|(p, &j)| dice_aligned(p, &gt[j]))
        .collect())
}

/// Average multi-object Dice: mean of per-pair Dice values.
pub fn average_multiobject_dice(pred: &[Mask], gt: &[Mask], pairing: &[usize]) -> Result<f64> {
    let d = per_cell_dice(pred, gt, pairing)?;
    if d.is_empty() {
        return Err(Error::InvalidInput("no cells to score".into()));
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub fd: f64,
    pub amd: f64,
    pub per_cell_dice: Vec<f64>,
    pub n_cells: usize,
}

/// Computes FD and AMD for one scene under an explicit pairing.
pub fn score(
    pred: &[Mask],
    gt: &[Mask],
    pairing: &[usize],
    canvas: (usize, usize),
) -> Result<ScoreReport> {
    let per_cell = per_cell_dice(pred, gt, pairing)?;
    let fd = foreground_dice(pred, gt, canvas)?;
    let amd = if per_cell.is_empty() {
        1.0
    } else {
        per_cell.iter().sum::<f64>() / per_cell.len() as f64
    };
    Ok(ScoreReport {
        fd,
        amd,
        n_cells: per_cell.len(),
        per_cell_dice: per_cell,
    })
}

/// Greedy one-to-one matching by overlap: pairs with the largest shared
/// pixel count are taken first (ties by lower indices). Returns
/// `(pred, gt)` index pairs; masks without a positive overlap stay unmatched.
pub fn match_by_overlap(pred: &[Mask], gt: &[Mask]) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let shared = p.global_pixels().filter(|&(x, y)| g.get_global(x, y)).count();
            if shared > 0 {
                candidates.push((shared, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Scores predictions against ground truth without a known pairing. Masks are
/// matched with [`match_by_overlap`]; every unmatched mask on either side
/// counts as one cell with Dice 0.
pub fn score_unpaired(pred: &[Mask], gt: &[Mask], canvas: (usize, usize)) -> Result<ScoreReport> {
    let pairs = match_by_overlap(pred, gt);
    let fd = foreground_dice(pred, gt, canvas)?;
    let mut per_cell: Vec<f64> = pairs.iter().map(|&(i, j)| dice_aligned(&pred[i], &gt[j])).collect();
    let unmatched = pred.len() + gt.len() - 2 * pairs.len();
    per_cell.extend(std::iter::repeat_n(0.0, unmatched));
    let amd = if per_cell.is_empty() {
        1.0
    } else {
        per_cell.iter().sum::<f64>() / per_cell.len() as f64
    };
    Ok(ScoreReport {
        fd,
        amd,
        n_cells: per_cell.len(),
        per_cell_dice: per_cell,
    })
}
