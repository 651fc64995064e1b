//! Geometry-aware variational segmentation of rod-shaped cells.
//!
//! Each cell is cut out of the image by its bounding box and fitted with a
//! closed cubic B-spline whose six control points come from a bent-rod model
//! (center, two length segments, width, two bend offsets, rotation). The fit
//! minimizes an energy made of an edge term along the contour and two region
//! averages (intensity and geodesic distance from the box center), subject to
//! biological bounds on the rod dimensions.
//!
//! Module map:
//!
//! - [`geometry`]: spline basis, sampling, rod and ovoid models.
//! - [`imageops`]: tiles and their intensity, gradient and geodesic channels.
//! - [`objective`]: cumulative tables and the three energy terms.
//! - [`optimizer`]: constraints, initial guess, alternating COBYLA fit.
//! - [`metrics`]: rasterization, Dice, FD and AMD.
//! - [`synthgen`]: synthetic colony scenes with ground truth.
//! - [`tuning`]: random search over the energy weights.
//! - [`pipeline`], [`io`], [`config`]: whole-image runs and file formats.
//! - [`cli`]: the `rodfit` command.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod imageops;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod pipeline;
pub mod synthgen;
pub mod tuning;

pub use error::{Error, Result};
pub use geometry::{Point, Polyline, RodParams, RotationMode};
pub use imageops::{BoundingBox, GrayImage, Tile};
pub use metrics::{Mask, ScoreReport};
pub use objective::{EnergyBreakdown, ObjectiveConfig};
pub use optimizer::{ConstraintSet, OptimizerConfig, SegmentationResult};
