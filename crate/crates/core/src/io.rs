//! File formats: bounding-box lists, grayscale and label images, per-cell
//! JSON records, score tables and contour overlays. Every writer goes through
//! a temporary file in the target directory followed by a rename.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polyline, RodParams};
use crate::imageops::{BoundingBox, GrayImage};
use crate::metrics::{Mask, ScoreReport};
use crate::objective::EnergyBreakdown;
use crate::optimizer::SegmentationResult;
use crate::synthgen::{ColonyScene, SceneCell, SceneConfig};

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// One line of a box file: a caller-chosen index and an inclusive box in
/// full-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub index: usize,
    pub bbox: BoundingBox,
}

/// Parses `index x_min y_min x_max y_max` lines. Blank lines and lines
/// starting with `#` are skipped; indices must be unique.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BoxRecord>> {
    let mut out: Vec<BoxRecord> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_error(path, n + 1, format!("expected 5 fields, found {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_error(path, n + 1, format!("bad index '{}'", fields[0])))?;
        let mut v = [0.0; 4];
        for (k, f) in fields[1..].iter().enumerate() {
            v[k] = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_error(path, n + 1, format!("bad coordinate '{f}'")))?;
        }
        let bbox = BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_error(path, n + 1, e.to_string()))?;
        if out.iter().any(|r| r.index == index) {
            return Err(parse_error(path, n + 1, format!("duplicate index {index}")));
        }
        out.push(BoxRecord { index, bbox });
    }
    Ok(out)
}

pub fn read_boxes(path: &Path) -> Result<Vec<BoxRecord>> {
    parse_boxes(&read_text(path)?, path)
}

pub fn format_boxes(boxes: &[BoxRecord]) -> String {
    let mut s = String::new();
    for r in boxes {
        let b = r.bbox;
        let _ = writeln!(s, "{} {} {} {} {}", r.index, b.x_min, b.y_min, b.x_max, b.y_max);
    }
    s
}

pub fn write_boxes(path: &Path, boxes: &[BoxRecord]) -> Result<()> {
    write_atomic(path, format_boxes(boxes).as_bytes())
}

/// Converts detector output in normalized center format (`class x_c y_c w h`,
/// values in `[0, 1]`) to inclusive pixel boxes on a `width x height` image.
/// Boxes are indexed by their line order, starting at 0.
pub fn parse_yolo(text: &str, path: &Path, width: usize, height: usize) -> Result<Vec<BoxRecord>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(parse_error(path, n + 1, format!("expected 5 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (k, f) in fields[1..5].iter().enumerate() {
            v[k] = f
                .parse::<f64>()
                .ok()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(|| parse_error(path, n + 1, format!("value '{f}' is not in [0, 1]")))?;
        }
        let (xc, yc, bw, bh) = (v[0] * width as f64, v[1] * height as f64, v[2] * width as f64, v[3] * height as f64);
        let x_min = (xc - bw / 2.0).floor().max(0.0);
        let y_min = (yc - bh / 2.0).floor().max(0.0);
        let x_max = ((xc + bw / 2.0).ceil() - 1.0).min(width as f64 - 1.0).max(x_min);
        let y_max = ((yc + bh / 2.0).ceil() - 1.0).min(height as f64 - 1.0).max(y_min);
        let bbox = BoundingBox::new(x_min, y_min, x_max, y_max).map_err(|e| parse_error(path, n + 1, e.to_string()))?;
        out.push(BoxRecord { index: out.len(), bbox });
    }
    Ok(out)
}

pub fn read_yolo(path: &Path, width: usize, height: usize) -> Result<Vec<BoxRecord>> {
    parse_yolo(&read_text(path)?, path, width, height)
}

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads an 8- or 16-bit grayscale PNG or PGM scaled to `[0, 1]`. Color
/// images are converted to luma.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    );
    let data: Vec<f64> = if wide {
        img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    } else {
        img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
    };
    GrayImage::new(w, h, data).map_err(|e| image_error(path, e))
}

fn encode(path: &Path, img: DynamicImage) -> Result<()> {
    let format = image::ImageFormat::from_path(path).map_err(|e| image_error(path, e))?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, format).map_err(|e| image_error(path, e))?;
    write_atomic(path, bytes.get_ref())
}

/// Writes a 16-bit grayscale image; values are clamped to `[0, 1]`. The
/// format follows the extension (`.png` or `.pgm`).
pub fn write_gray16(path: &Path, img: &GrayImage) -> Result<()> {
    let raw: Vec<u16> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer matches dimensions");
    encode(path, DynamicImage::ImageLuma16(buf))
}

pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    let raw: Vec<u8> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer matches dimensions");
    encode(path, DynamicImage::ImageLuma8(buf))
}

/// Row-major 16-bit label image: 0 is background, cell `i` has label `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl LabelImage {
    /// Paints masks in order, so later cells win where they overlap.
    pub fn from_masks(masks: &[Mask], width: usize, height: usize) -> Result<Self> {
        if masks.len() > u16::MAX as usize {
            return Err(Error::Capacity(format!("{} cells exceed the 16-bit label range", masks.len())));
        }
        let mut labels = vec![0u16; width * height];
        for (i, m) in masks.iter().enumerate() {
            for (x, y) in m.global_pixels() {
                if x < width && y < height {
                    labels[y * width + x] = (i + 1) as u16;
                }
            }
        }
        Ok(Self { width, height, labels })
    }

    /// One full-frame mask per label `1..=max_label`.
    pub fn to_masks(&self) -> Vec<Mask> {
        let n = self.labels.iter().copied().max().unwrap_or(0) as usize;
        let mut masks = vec![Mask::empty(self.width, self.height); n];
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                masks[l as usize - 1].set(i % self.width, i / self.width, true);
            }
        }
        masks
    }
}

pub fn write_labels(path: &Path, labels: &LabelImage) -> Result<()> {
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(labels.width as u32, labels.height as u32, labels.labels.clone())
        .ok_or_else(|| image_error(path, "label buffer does not match dimensions"))?;
    encode(path, DynamicImage::ImageLuma16(buf))
}

pub fn read_labels(path: &Path) -> Result<LabelImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = img.to_luma16().into_raw();
    Ok(LabelImage {
        width: w,
        height: h,
        labels,
    })
}

/// Per-cell output record. Parameters are in full-image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub bbox: BoundingBox,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_px: Option<RodParams>,
    /// Same parameters in micrometers (angle unchanged).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_um: Option<RodParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyBreakdown>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contour: Vec<Point>,
    /// The scored mask, kept exactly so evaluation does not re-rasterize.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRle>,
}

impl CellRecord {
    pub fn from_result(index: usize, bbox: BoundingBox, result: &Result<SegmentationResult>, pixel_size: f64) -> Self {
        match result {
            Ok(r) => {
                let t = r.theta_image;
                let um = scale_lengths(&t, pixel_size);
                let (ox, oy) = r.mask.origin;
                Self {
                    index,
                    bbox,
                    ok: true,
                    error: None,
                    theta_px: Some(t),
                    theta_um: Some(um),
                    energy: Some(r.energy),
                    contour: r.contour.translated(ox as f64, oy as f64).vertices().to_vec(),
                    mask: Some(MaskRle::encode(&r.mask)),
                }
            }
            Err(e) => Self {
                index,
                bbox,
                ok: false,
                error: Some(e.to_string()),
                theta_px: None,
                theta_um: None,
                energy: None,
                contour: Vec::new(),
                mask: None,
            },
        }
    }

    /// The stored contour as a polyline, if the cell succeeded.
    pub fn polyline(&self) -> Option<Polyline> {
        if self.contour.len() < 3 {
            return None;
        }
        Some(Polyline::new(self.contour.clone()))
    }
}

/// Run-length encoded mask: `runs` alternates background and foreground
/// lengths over the row-major window, starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub origin: (usize, usize),
    pub width: usize,
    pub height: usize,
    pub runs: Vec<usize>,
}

impl MaskRle {
    pub fn encode(mask: &Mask) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &b in mask.bits() {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        Self {
            origin: mask.origin,
            width: mask.width(),
            height: mask.height(),
            runs,
        }
    }

    pub fn decode(&self) -> Result<Mask> {
        let mut bits = Vec::with_capacity(self.width * self.height);
        for (i, &n) in self.runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, n));
        }
        Ok(Mask::from_bits(self.width, self.height, bits)?.with_origin(self.origin))
    }
}

/// Ground truth of a synthetic scene: everything needed to score against it
/// and to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SceneConfig,
    pub cells: Vec<GroundTruthCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCell {
    pub index: usize,
    pub bbox: BoundingBox,
    pub theta_px: RodParams,
    pub theta_um: RodParams,
    pub mask: MaskRle,
}

impl GroundTruth {
    pub fn from_scene(scene: &ColonyScene) -> Self {
        let um = scene.config.pixel_size;
        let cells = scene
            .cells
            .iter()
            .enumerate()
            .map(|(index, c)| GroundTruthCell {
                index,
                bbox: c.bbox,
                theta_px: c.theta,
                theta_um: scale_lengths(&c.theta, um),
                mask: MaskRle::encode(&c.mask),
            })
            .collect();
        Self {
            config: scene.config.clone(),
            cells,
        }
    }

    /// Rebuilds the scene around an image read back from disk.
    pub fn into_scene(self, image: GrayImage) -> Result<ColonyScene> {
        if (image.width(), image.height()) != (self.config.width, self.config.height) {
            return Err(Error::InvalidInput(format!(
                "image is {}x{}, ground truth expects {}x{}",
                image.width(),
                image.height(),
                self.config.width,
                self.config.height
            )));
        }
        let cells = self
            .cells
            .into_iter()
            .map(|c| {
                Ok(SceneCell {
                    theta: c.theta_px,
                    mask: c.mask.decode()?,
                    bbox: c.bbox,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ColonyScene {
            image,
            cells,
            config: self.config,
        })
    }
}

/// Lengths scaled by `s`; the angle is unchanged.
pub fn scale_lengths(t: &RodParams, s: f64) -> RodParams {
    RodParams {
        cx: t.cx * s,
        cy: t.cy * s,
        l1: t.l1 * s,
        l2: t.l2 * s,
        w: t.w * s,
        d: t.d * s,
        e: t.e * s,
        alpha: t.alpha,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| image_error(path, e))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

/// One row of a score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub name: String,
    pub report: ScoreReport,
}

/// CSV with one row per scene: `name,n_cells,fd,amd,min_dice`.
pub fn format_scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("name,n_cells,fd,amd,min_dice\n");
    for r in rows {
        let min = r.report.per_cell_dice.iter().copied().fold(f64::NAN, f64::min);
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", r.name, r.report.n_cells, r.report.fd, r.report.amd, min);
    }
    s
}

pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    write_atomic(path, format_scores_csv(rows).as_bytes())
}

/// Grayscale image with contours drawn in red, as an RGB PNG.
pub fn write_overlay(path: &Path, image: &GrayImage, contours: &[Polyline]) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let mut rgb = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        let v = (image.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    for c in contours {
        for (a, b) in c.edges() {
            let steps = (a.distance(&b) * 2.0).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let (x, y) = ((a.x + t * (b.x - a.x)).round(), (a.y + t * (b.y - a.y)).round());
                if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                    rgb.put_pixel(x as u32, y as u32, Rgb([255, 0, 0]));
                }
            }
        }
    }
    encode(path, DynamicImage::ImageRgb8(rgb))
}
