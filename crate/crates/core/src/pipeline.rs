//! Whole-image segmentation: one tile per bounding box, cells fitted in
//! parallel, results kept in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{prepare_tile, BoundingBox, ChannelParams, GrayImage, DEFAULT_PAD, DEFAULT_PIXEL_SIZE_UM};
use crate::metrics::{score, Mask, ScoreReport};
use crate::objective::ObjectiveConfig;
use crate::optimizer::{segment_cell, ConstraintSet, OptimizerConfig, SegmentationResult};
use crate::synthgen::ColonyScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pad: usize,
    pub pixel_size: f64,
    pub channels: ChannelParams,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    /// Apply the biological constraints; when false only the model's
    /// structural bounds are kept.
    pub constrained: bool,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pad: DEFAULT_PAD,
            pixel_size: DEFAULT_PIXEL_SIZE_UM,
            channels: ChannelParams::default(),
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerConfig::default(),
            constrained: true,
            workers: 0,
        }
    }
}

/// Prepares the tile for one box and fits the rod model.
pub fn segment_box(image: &GrayImage, bbox: &BoundingBox, cfg: &PipelineConfig) -> Result<SegmentationResult> {
    let tile = prepare_tile(image, bbox, cfg.pad, cfg.pixel_size, &cfg.channels)?;
    let constraints = if cfg.constrained {
        ConstraintSet::for_tile(&tile)
    } else {
        ConstraintSet::relaxed((tile.width(), tile.height()))
    };
    segment_cell(&tile, &cfg.optimizer, &cfg.objective, &constraints)
}

/// Segments every box; entry `i` of the output belongs to `boxes[i]`.
pub fn segment_image(
    image: &GrayImage,
    boxes: &[BoundingBox],
    cfg: &PipelineConfig,
) -> Result<Vec<Result<SegmentationResult>>> {
    let run = || {
        boxes
            .par_iter()
            .map(|b| segment_box(image, b, cfg))
            .collect::<Vec<_>>()
    };
    if cfg.workers == 0 {
        return Ok(run());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(run))
}

/// Prediction masks for scoring; failed cells contribute an empty mask.
pub fn prediction_masks(results: &[Result<SegmentationResult>], canvas: (usize, usize)) -> Vec<Mask> {
    results
        .iter()
        .map(|r| match r {
            Ok(seg) => seg.mask.clone(),
            Err(_) => Mask::empty(canvas.0, canvas.1),
        })
        .collect()
}

/// Runs the pipeline from the scene's ground-truth boxes and scores it.
/// Prediction `i` is paired with ground-truth cell `i`.
pub fn evaluate_scene(scene: &ColonyScene, cfg: &PipelineConfig) -> Result<(ScoreReport, Vec<Result<SegmentationResult>>)> {
    let boxes = scene.boxes();
    let results = segment_image(&scene.image, &boxes, cfg)?;
    let pred = prediction_masks(&results, scene.canvas());
    let pairing: Vec<usize> = (0..pred.len()).collect();
    let report = score(&pred, &scene.masks(), &pairing, scene.canvas())?;
    Ok((report, results))
}
