//! C interface to `rodfit`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`RodfitStatus`]; on failure the message is available from
//! [`rodfit_last_error`] on the same thread. Panics never cross the
//! boundary: they are reported as [`RodfitStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use rodfit::config::RunConfig;
use rodfit::error::Error;
use rodfit::geometry::RotationMode;
use rodfit::imageops::{BoundingBox, GrayImage};
use rodfit::io;
use rodfit::optimizer::SegmentationResult;
use rodfit::pipeline::segment_image;

/// Result codes. `Ok` is 0; every other value is an error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RodfitStatus {
    Ok = 0,
    /// A null pointer, bad index or non-UTF-8 string was passed.
    InvalidArgument = 1,
    InvalidParameter = 2,
    InvalidBox = 3,
    /// The fitted contour or region degenerated.
    Degenerate = 4,
    Infeasible = 5,
    Io = 6,
    Parse = 7,
    Capacity = 8,
    InvalidInput = 9,
    Internal = 10,
}

impl From<&Error> for RodfitStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => RodfitStatus::InvalidParameter,
            Error::InvalidBox(_) | Error::InvalidMarker { .. } => RodfitStatus::InvalidBox,
            Error::DegenerateContour(_) | Error::DegenerateRegion(_) => RodfitStatus::Degenerate,
            Error::Infeasible(_) => RodfitStatus::Infeasible,
            Error::Io { .. } | Error::Image { .. } => RodfitStatus::Io,
            Error::Parse { .. } => RodfitStatus::Parse,
            Error::Capacity(_) => RodfitStatus::Capacity,
            Error::InvalidInput(_) | Error::InvalidPairing(_) => RodfitStatus::InvalidInput,
        }
    }
}

/// Contour model orientation transform.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RodfitRotationMode {
    Proper = 0,
    Printed = 1,
}

/// Inclusive bounding box in image pixel coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodfitBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Fitted rod parameters in image pixels (angle in radians).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RodfitParams {
    pub cx: f64,
    pub cy: f64,
    pub l1: f64,
    pub l2: f64,
    pub w: f64,
    pub d: f64,
    pub e: f64,
    pub alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RodfitEnergy {
    pub f_ce: f64,
    pub f_re: f64,
    pub f_ge: f64,
    pub total: f64,
}

/// Grayscale image with values in `[0, 1]`.
pub struct RodfitImage(GrayImage);

/// Run configuration (objective, optimizer and tile settings).
pub struct RodfitConfig(RunConfig);

/// Per-box outcomes of one segmentation call, in box order.
pub struct RodfitResults(Vec<Result<SegmentationResult, Error>>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: RodfitStatus, message: &str) -> RodfitStatus {
    set_error(message);
    status
}

fn fail_with(e: &Error) -> RodfitStatus {
    fail(RodfitStatus::from(e), &e.to_string())
}

/// Runs `f`, turning panics into [`RodfitStatus::Internal`].
fn guard(f: impl FnOnce() -> RodfitStatus) -> RodfitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RodfitStatus::Internal, "internal panic"),
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, RodfitStatus> {
    if p.is_null() {
        return Err(fail(RodfitStatus::InvalidArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(RodfitStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn boxed<T>(out: *mut *mut T, value: T) -> RodfitStatus {
    // SAFETY: callers check `out` for null before producing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    RodfitStatus::Ok
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn rodfit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rodfit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies a row-major `width * height` buffer into a new image.
///
/// # Safety
/// `data` must point to `width * height` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_image_new(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut RodfitImage,
) -> RodfitStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(RodfitStatus::InvalidArgument, "null pointer");
        }
        let Some(n) = width.checked_mul(height) else {
            return fail(RodfitStatus::InvalidArgument, "image size overflows");
        };
        let pixels = std::slice::from_raw_parts(data, n).to_vec();
        match GrayImage::new(width, height, pixels) {
            Ok(img) => boxed(out, RodfitImage(img)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Reads an 8- or 16-bit grayscale PNG or PGM.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_image_read(path: *const c_char, out: *mut *mut RodfitImage) -> RodfitStatus {
    guard(|| {
        if out.is_null() {
            return fail(RodfitStatus::InvalidArgument, "null pointer");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_gray(&path) {
            Ok(img) => boxed(out, RodfitImage(img)),
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `image` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rodfit_image_free(image: *mut RodfitImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_image_size(
    image: *const RodfitImage,
    width: *mut usize,
    height: *mut usize,
) -> RodfitStatus {
    if image.is_null() || width.is_null() || height.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    *width = (*image).0.width();
    *height = (*image).0.height();
    RodfitStatus::Ok
}

/// Configuration with the library defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_new(out: *mut *mut RodfitConfig) -> RodfitStatus {
    if out.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    boxed(out, RodfitConfig(RunConfig::default()))
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_load(path: *const c_char, out: *mut *mut RodfitConfig) -> RodfitStatus {
    guard(|| {
        if out.is_null() {
            return fail(RodfitStatus::InvalidArgument, "null pointer");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match RunConfig::load(&path) {
            Ok(c) => boxed(out, RodfitConfig(c)),
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_free(config: *mut RodfitConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn with_config(config: *mut RodfitConfig, f: impl FnOnce(&mut RunConfig)) -> RodfitStatus {
    if config.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    let mut next = (*config).0.clone();
    f(&mut next);
    match next.validate() {
        Ok(()) => {
            (*config).0 = next;
            RodfitStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// Sets the region and geodesic weights. Invalid values leave the
/// configuration unchanged.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_set_weights(
    config: *mut RodfitConfig,
    w_region: f64,
    w_geodesic: f64,
) -> RodfitStatus {
    with_config(config, |c| {
        c.w_region = w_region;
        c.w_geodesic = w_geodesic;
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_set_rotation_mode(
    config: *mut RodfitConfig,
    mode: RodfitRotationMode,
) -> RodfitStatus {
    with_config(config, |c| {
        c.rotation_mode = match mode {
            RodfitRotationMode::Proper => RotationMode::Proper,
            RodfitRotationMode::Printed => RotationMode::Printed,
        }
    })
}

/// Enables (non-zero) or disables the biological shape constraints.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_set_constrained(config: *mut RodfitConfig, constrained: i32) -> RodfitStatus {
    with_config(config, |c| c.constrained = constrained != 0)
}

/// Worker threads for [`rodfit_segment`]; 0 uses one per core.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_set_workers(config: *mut RodfitConfig, workers: usize) -> RodfitStatus {
    with_config(config, |c| c.workers = workers)
}

/// Micrometers per pixel.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_config_set_pixel_size(config: *mut RodfitConfig, pixel_size: f64) -> RodfitStatus {
    with_config(config, |c| c.pixel_size = pixel_size)
}

/// Segments one cell per box. Per-box failures do not fail the call; query
/// them with [`rodfit_results_status`].
///
/// # Safety
/// `image` and `config` must be live handles, `boxes` must point to
/// `n_boxes` readable boxes (or be null when `n_boxes` is 0) and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_segment(
    image: *const RodfitImage,
    config: *const RodfitConfig,
    boxes: *const RodfitBox,
    n_boxes: usize,
    out: *mut *mut RodfitResults,
) -> RodfitStatus {
    guard(|| {
        if image.is_null() || config.is_null() || out.is_null() || (boxes.is_null() && n_boxes > 0) {
            return fail(RodfitStatus::InvalidArgument, "null pointer");
        }
        let raw = if n_boxes == 0 { &[][..] } else { std::slice::from_raw_parts(boxes, n_boxes) };
        let bboxes: Vec<BoundingBox> = raw
            .iter()
            .map(|b| BoundingBox {
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
            })
            .collect();
        match segment_image(&(*image).0, &bboxes, &(*config).0.pipeline()) {
            Ok(r) => boxed(out, RodfitResults(r)),
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_free(results: *mut RodfitResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of boxes in the result set (0 for a null handle).
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_len(results: *const RodfitResults) -> usize {
    if results.is_null() {
        0
    } else {
        (*results).0.len()
    }
}

unsafe fn cell<'a>(results: *const RodfitResults, index: usize) -> Result<&'a SegmentationResult, RodfitStatus> {
    if results.is_null() {
        return Err(fail(RodfitStatus::InvalidArgument, "null pointer"));
    }
    let all = &(*results).0;
    match all.get(index) {
        None => Err(fail(RodfitStatus::InvalidArgument, &format!("cell index {index} out of range"))),
        Some(Ok(r)) => Ok(r),
        Some(Err(e)) => Err(fail_with(e)),
    }
}

/// Outcome of cell `index`: `Ok`, or the error that cell failed with (the
/// message is then available from [`rodfit_last_error`]).
///
/// # Safety
/// `results` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_status(results: *const RodfitResults, index: usize) -> RodfitStatus {
    match cell(results, index) {
        Ok(_) => RodfitStatus::Ok,
        Err(s) => s,
    }
}

/// Fitted parameters of cell `index` in image coordinates.
///
/// # Safety
/// `results` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_params(
    results: *const RodfitResults,
    index: usize,
    out: *mut RodfitParams,
) -> RodfitStatus {
    if out.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    match cell(results, index) {
        Ok(r) => {
            let t = r.theta_image;
            *out = RodfitParams {
                cx: t.cx,
                cy: t.cy,
                l1: t.l1,
                l2: t.l2,
                w: t.w,
                d: t.d,
                e: t.e,
                alpha: t.alpha,
            };
            RodfitStatus::Ok
        }
        Err(s) => s,
    }
}

/// # Safety
/// `results` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_energy(
    results: *const RodfitResults,
    index: usize,
    out: *mut RodfitEnergy,
) -> RodfitStatus {
    if out.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    match cell(results, index) {
        Ok(r) => {
            *out = RodfitEnergy {
                f_ce: r.energy.f_ce,
                f_re: r.energy.f_re,
                f_ge: r.energy.f_ge,
                total: r.energy.total,
            };
            RodfitStatus::Ok
        }
        Err(s) => s,
    }
}

/// Copies the contour of cell `index` in image coordinates as interleaved
/// `x, y` pairs into `xy` (room for `capacity` points) and stores the
/// vertex count in `n_points`. With `xy` null only the count is returned;
/// if `capacity` is too small nothing is copied and `InvalidArgument` is
/// returned with the required count in `n_points`.
///
/// # Safety
/// `results` must be a live handle, `n_points` writable and `xy` null or
/// writable for `2 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn rodfit_results_contour(
    results: *const RodfitResults,
    index: usize,
    xy: *mut f64,
    capacity: usize,
    n_points: *mut usize,
) -> RodfitStatus {
    if n_points.is_null() {
        return fail(RodfitStatus::InvalidArgument, "null pointer");
    }
    let r = match cell(results, index) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let (ox, oy) = r.mask.origin;
    let verts = r.contour.vertices();
    *n_points = verts.len();
    if xy.is_null() {
        return RodfitStatus::Ok;
    }
    if capacity < verts.len() {
        return fail(
            RodfitStatus::InvalidArgument,
            &format!("contour has {} points, buffer holds {capacity}", verts.len()),
        );
    }
    let dst = std::slice::from_raw_parts_mut(xy, 2 * verts.len());
    for (k, p) in verts.iter().enumerate() {
        dst[2 * k] = p.x + ox as f64;
        dst[2 * k + 1] = p.y + oy as f64;
    }
    RodfitStatus::Ok
}
