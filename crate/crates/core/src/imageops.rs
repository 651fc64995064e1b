//! Tile extraction and the per-tile image channels: normalized intensity,
//! processed gradient magnitude and the geodesic distance map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Default Gaussian smoothing applied to the gradient magnitude.
pub const GRADIENT_SIGMA: f64 = 3.0;
/// Upper clip of the smoothed gradient magnitude.
pub const GRADIENT_CLIP: f64 = 0.45;
/// Default weighting of intensity differences in the geodesic path cost.
pub const GEODESIC_LAMBDA: f64 = 0.8;
/// Default physical pixel size in micrometers.
pub const DEFAULT_PIXEL_SIZE_UM: f64 = 0.065;
/// Default padding added to each bounding box side.
pub const DEFAULT_PAD: usize = 5;

/// Parameters of the derived tile channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Gaussian smoothing of the gradient magnitude, pixels.
    pub sigma: f64,
    /// Clip ceiling of the smoothed gradient magnitude.
    pub clip: f64,
    /// Intensity weight of the geodesic step cost.
    pub lambda: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            sigma: GRADIENT_SIGMA,
            clip: GRADIENT_CLIP,
            lambda: GEODESIC_LAMBDA,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.clip > 0.0 && (0.0..=1.0).contains(&self.lambda)) {
            return Err(Error::InvalidParameter(format!(
                "channel parameters out of range: sigma {} clip {} lambda {}",
                self.sigma, self.clip, self.lambda
            )));
        }
        Ok(())
    }
}

const GEODESIC_MAX_PASSES: usize = 4;
const GEODESIC_TOLERANCE: f64 = 1e-6;

/// Row-major real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with coordinates clamped to the image (border replicate).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    /// Bilinear interpolation with pixel centers at integer coordinates;
    /// positions outside the image are clamped to its border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Min-max normalization to `[0, 1]`; a constant image maps to zeros.
    pub fn normalized(&self) -> Self {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        let data = if range > 0.0 {
            self.data.iter().map(|v| (v - lo) / range).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Copies the inclusive pixel window `[x0, x1] x [y0, y1]`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let width = x1 - x0 + 1;
        let height = y1 - y0 + 1;
        let mut data = Vec::with_capacity(width * height);
        for y in y0..=y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..=y * self.width + x1]);
        }
        Self {
            width,
            height,
            data,
        }
    }
}

/// Axis-aligned box with inclusive pixel bounds in full-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::InvalidBox(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

/// Padded per-cell crop with its derived channels.
#[derive(Debug, Clone)]
pub struct Tile {
    pub intensity: GrayImage,
    pub gradient: GrayImage,
    pub geodesic: GrayImage,
    /// Geodesic seed in tile pixel coordinates.
    pub marker: Point,
    /// Full-image coordinates of tile pixel (0, 0).
    pub origin: (usize, usize),
    /// Micrometers per pixel.
    pub pixel_size: f64,
    /// The bounding box the tile was cut from, in full-image coordinates.
    pub source_box: BoundingBox,
}

impl Tile {
    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    pub fn height(&self) -> usize {
        self.intensity.height()
    }

    /// Fills the gradient and geodesic channels from the intensity channel.
    pub fn with_channels(mut self, params: &ChannelParams) -> Result<Self> {
        params.validate()?;
        self.gradient = gradient_channel_with(&self.intensity, params.sigma, params.clip);
        let (mx, my) = self.marker_pixel();
        self.geodesic = geodesic_channel(&self.intensity, mx, my, params.lambda)?;
        Ok(self)
    }

    /// Marker rounded to the nearest pixel inside the tile.
    pub fn marker_pixel(&self) -> (usize, usize) {
        let mx = self.marker.x.round().clamp(0.0, (self.width() - 1) as f64) as usize;
        let my = self.marker.y.round().clamp(0.0, (self.height() - 1) as f64) as usize;
        (mx, my)
    }

    /// The tile's source box expressed in tile coordinates.
    pub fn local_box(&self) -> BoundingBox {
        BoundingBox {
            x_min: self.source_box.x_min - self.origin.0 as f64,
            y_min: self.source_box.y_min - self.origin.1 as f64,
            x_max: self.source_box.x_max - self.origin.0 as f64,
            y_max: self.source_box.y_max - self.origin.1 as f64,
        }
    }
}

/// Crops `bbox` grown by `pad` pixels per side, clamped to the image, and
/// normalizes the crop to `[0, 1]`. Gradient and geodesic channels are left
/// zeroed; see [`Tile::with_channels`].
pub fn extract_tile(
    image: &GrayImage,
    bbox: &BoundingBox,
    pad: usize,
    pixel_size: f64,
) -> Result<Tile> {
    bbox.validate()?;
    let w = image.width() as f64;
    let h = image.height() as f64;
    if bbox.x_max < 0.0 || bbox.y_max < 0.0 || bbox.x_min > w - 1.0 || bbox.y_min > h - 1.0 {
        return Err(Error::InvalidBox(format!(
            "{bbox:?} lies outside the {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let pad = pad as f64;
    let x0 = (bbox.x_min.floor() - pad).max(0.0) as usize;
    let y0 = (bbox.y_min.floor() - pad).max(0.0) as usize;
    let x1 = (bbox.x_max.ceil() + pad).min(w - 1.0) as usize;
    let y1 = (bbox.y_max.ceil() + pad).min(h - 1.0) as usize;
    let intensity = image.crop(x0, y0, x1, y1).normalized();
    let (tw, th) = (intensity.width(), intensity.height());
    let c = bbox.center();
    Ok(Tile {
        gradient: GrayImage::filled(tw, th, 0.0),
        geodesic: GrayImage::filled(tw, th, 0.0),
        intensity,
        marker: Point::new(c.x - x0 as f64, c.y - y0 as f64),
        origin: (x0, y0),
        pixel_size,
        source_box: *bbox,
    })
}

/// Extracts the tile and computes all channels with the default parameters.
pub fn prepare_tile(
    image: &GrayImage,
    bbox: &BoundingBox,
    pad: usize,
    pixel_size: f64,
    params: &ChannelParams,
) -> Result<Tile> {
    extract_tile(image, bbox, pad, pixel_size)?.with_channels(params)
}

/// Gradient magnitude by central differences (one-sided at the border).
pub fn gradient_magnitude(image: &GrayImage) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    GrayImage::from_fn(w, h, |x, y| {
        let gx = derivative(w, |i| image.get(i, y), x);
        let gy = derivative(h, |j| image.get(x, j), y);
        gx.hypot(gy)
    })
}

fn derivative(len: usize, at: impl Fn(usize) -> f64, i: usize) -> f64 {
    if len == 1 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == len - 1 {
        at(len - 1) - at(len - 2)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

/// Normalized 1-D Gaussian kernel truncated at three standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian smoothing with border replication.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let horizontal = GrayImage::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * image.get_clamped(x as isize + i as isize - r, y as isize))
            .sum()
    });
    GrayImage::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * horizontal.get_clamped(x as isize, y as isize + i as isize - r))
            .sum()
    })
}

/// Gradient channel: magnitude, Gaussian smoothing, clipping to
/// `[0, GRADIENT_CLIP]` and division by the clip ceiling.
pub fn gradient_channel(intensity: &GrayImage) -> GrayImage {
    gradient_channel_with(intensity, GRADIENT_SIGMA, GRADIENT_CLIP)
}

pub fn gradient_channel_with(intensity: &GrayImage, sigma: f64, clip: f64) -> GrayImage {
    let mut g = gaussian_blur(&gradient_magnitude(intensity), sigma);
    for v in g.data_mut() {
        *v = v.clamp(0.0, clip) / clip;
    }
    g
}

#[inline]
fn step_cost(lambda: f64, dist2: f64, di: f64) -> f64 {
    let a = 1.0 - lambda;
    (a * a * dist2 + lambda * lambda * di * di).sqrt()
}

const FORWARD: [(isize, isize); 4] = [(-1, 0), (-1, -1), (0, -1), (1, -1)];
const BACKWARD: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];

fn raster_sweep(
    image: &GrayImage,
    dist: &mut [f64],
    lambda: f64,
    offsets: &[(isize, isize); 4],
    forward: bool,
) -> f64 {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let mut max_change: f64 = 0.0;
    let mut visit = |x: isize, y: isize| {
        let idx = (y * w + x) as usize;
        let here = image.data[idx];
        let mut best = dist[idx];
        for &(dx, dy) in offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let nidx = (ny * w + nx) as usize;
            let cand = dist[nidx]
                + step_cost(lambda, (dx * dx + dy * dy) as f64, here - image.data[nidx]);
            if cand < best {
                best = cand;
            }
        }
        if best < dist[idx] {
            let change = if dist[idx].is_finite() {
                dist[idx] - best
            } else {
                f64::INFINITY
            };
            max_change = max_change.max(change);
            dist[idx] = best;
        }
    };
    if forward {
        for y in 0..h {
            for x in 0..w {
                visit(x, y);
            }
        }
    } else {
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                visit(x, y);
            }
        }
    }
    max_change
}

/// Unnormalized geodesic distance from `(mx, my)` by alternating raster
/// scans over the 8-connected grid.
///
/// One pass is a forward sweep followed by a backward sweep. Scanning stops
/// once a pass changes no pixel by more than `1e-6`, or after four passes.
pub fn geodesic_distance(
    intensity: &GrayImage,
    mx: usize,
    my: usize,
    lambda: f64,
) -> Result<GrayImage> {
    geodesic_distance_with_passes(intensity, mx, my, lambda, GEODESIC_MAX_PASSES)
}

pub fn geodesic_distance_with_passes(
    intensity: &GrayImage,
    mx: usize,
    my: usize,
    lambda: f64,
    max_passes: usize,
) -> Result<GrayImage> {
    let (w, h) = (intensity.width(), intensity.height());
    if mx >= w || my >= h {
        return Err(Error::InvalidMarker {
            x: mx,
            y: my,
            width: w,
            height: h,
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "geodesic lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let mut dist = vec![f64::INFINITY; w * h];
    dist[my * w + mx] = 0.0;
    for _ in 0..max_passes.max(1) {
        let a = raster_sweep(intensity, &mut dist, lambda, &FORWARD, true);
        let b = raster_sweep(intensity, &mut dist, lambda, &BACKWARD, false);
        if a.max(b) <= GEODESIC_TOLERANCE {
            break;
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data: dist,
    })
}

/// Geodesic distance map normalized to `[0, 1]`.
pub fn geodesic_channel(intensity: &GrayImage, mx: usize, my: usize, lambda: f64) -> Result<GrayImage> {
    Ok(geodesic_distance(intensity, mx, my, lambda)?.normalized())
}
