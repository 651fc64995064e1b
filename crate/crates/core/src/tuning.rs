//! Random search over the region weights `(w_R, w_D)`, scored by the average
//! multi-object Dice on a scene with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{evaluate_scene, PipelineConfig};
use crate::synthgen::ColonyScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    /// Each weight is drawn from `[0, range_max]`.
    pub range_max: f64,
    /// Number of evaluated weight pairs, including the `(0, 0)` baseline.
    pub trials: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            range_max: 500.0,
            trials: 1000,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_max.is_finite() && self.range_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "range_max must be positive, got {}",
                self.range_max
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub w_region: f64,
    pub w_geodesic: f64,
    pub amd: f64,
    pub fd: f64,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub w_region: f64,
    pub w_geodesic: f64,
    pub best_amd: f64,
    /// Every trial in sampling order.
    pub trials: Vec<Trial>,
}

/// The weight pairs a search with `cfg` evaluates, in order. The first pair
/// is always `(0, 0)`.
pub fn sample_weights(cfg: &TuneConfig) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.trials);
    out.push((0.0, 0.0));
    while out.len() < cfg.trials {
        let wr = rng.random_range(0.0..=cfg.range_max);
        let wd = rng.random_range(0.0..=cfg.range_max);
        out.push((wr, wd));
    }
    out
}

/// Evaluates every sampled pair on `scene` (segmenting from the ground-truth
/// boxes) and returns the pair with the highest AMD. Ties go to the lower
/// `w_R`, then the lower `w_D`.
pub fn tune_weights(scene: &ColonyScene, cfg: &TuneConfig, base: &PipelineConfig) -> Result<TuneResult> {
    cfg.validate()?;
    if scene.cells.is_empty() {
        return Err(Error::InvalidInput("tuning scene has no cells".into()));
    }
    let pairs = sample_weights(cfg);
    let trials = pairs
        .par_iter()
        .enumerate()
        .map(|(index, &(wr, wd))| {
            let mut pc = base.clone();
            pc.objective = pc.objective.with_weights(wr, wd);
            let (report, results) = evaluate_scene(scene, &pc)?;
            Ok(Trial {
                index,
                w_region: wr,
                w_geodesic: wd,
                amd: report.amd,
                fd: report.fd,
                failed_cells: results.iter().filter(|r| r.is_err()).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = trials
        .iter()
        .min_by(|a, b| {
            b.amd
                .total_cmp(&a.amd)
                .then(a.w_region.total_cmp(&b.w_region))
                .then(a.w_geodesic.total_cmp(&b.w_geodesic))
        })
        .expect("at least one trial");
    Ok(TuneResult {
        w_region: best.w_region,
        w_geodesic: best.w_geodesic,
        best_amd: best.amd,
        trials: trials.clone(),
    })
}
