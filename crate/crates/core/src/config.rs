//! Flat run configuration, read from and written to TOML. Every key is
//! optional; missing keys take the library defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RotationMode, DEFAULT_SAMPLES_PER_SEGMENT, MODEL_POINTS};
use crate::imageops::{ChannelParams, DEFAULT_PAD, DEFAULT_PIXEL_SIZE_UM, GEODESIC_LAMBDA, GRADIENT_CLIP, GRADIENT_SIGMA};
use crate::io::write_atomic;
use crate::objective::{ObjectiveConfig, DEFAULT_EPSILON, DEFAULT_GRADIENT_POWER, DEFAULT_W_GEODESIC, DEFAULT_W_REGION};
use crate::optimizer::OptimizerConfig;
use crate::pipeline::PipelineConfig;
use crate::synthgen::SceneConfig;
use crate::tuning::TuneConfig;

/// Tuning trials of a command-line run; the library default is the full
/// 1000-trial search.
pub const DEFAULT_TUNE_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub image: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,

    /// Micrometers per pixel.
    pub pixel_size: f64,
    pub pad: usize,

    pub epsilon: f64,
    pub k: f64,
    pub w_region: f64,
    pub w_geodesic: f64,

    pub gradient_sigma: f64,
    pub gradient_clip: f64,
    pub geodesic_lambda: f64,

    /// Control points of the contour model; only 6 is supported.
    pub control_points: usize,
    pub samples_per_segment: usize,
    pub rotation_mode: RotationMode,

    pub constrained: bool,
    pub rounds: usize,
    pub evals_per_stage: usize,
    pub initial_trust_radius: f64,
    pub angle_trust_radius: f64,
    pub final_trust_radius: f64,

    pub seed: u64,
    /// 0 uses one worker per core.
    pub workers: usize,

    pub synth_cells: usize,
    /// Canvas side; 0 picks one from the cell count.
    pub synth_size: usize,
    pub background_level: f64,
    pub cell_level: f64,
    pub rim_level: f64,
    pub noise_sigma: f64,
    pub max_overlap: f64,

    pub tune_trials: usize,
    pub tune_range_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let scene = SceneConfig::default();
        let tune = TuneConfig::default();
        Self {
            image: None,
            boxes: None,
            ground_truth: None,
            output_dir: None,
            pixel_size: DEFAULT_PIXEL_SIZE_UM,
            pad: DEFAULT_PAD,
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_GRADIENT_POWER,
            w_region: DEFAULT_W_REGION,
            w_geodesic: DEFAULT_W_GEODESIC,
            gradient_sigma: GRADIENT_SIGMA,
            gradient_clip: GRADIENT_CLIP,
            geodesic_lambda: GEODESIC_LAMBDA,
            control_points: MODEL_POINTS,
            samples_per_segment: DEFAULT_SAMPLES_PER_SEGMENT,
            rotation_mode: RotationMode::default(),
            constrained: true,
            rounds: opt.rounds,
            evals_per_stage: opt.evals_per_stage,
            initial_trust_radius: opt.initial_trust_radius,
            angle_trust_radius: opt.angle_trust_radius,
            final_trust_radius: opt.final_trust_radius,
            seed: 0,
            workers: 0,
            synth_cells: scene.n_cells,
            synth_size: 0,
            background_level: scene.background_level,
            cell_level: scene.cell_level,
            rim_level: scene.rim_level,
            noise_sigma: scene.noise_sigma,
            max_overlap: scene.max_overlap,
            tune_trials: DEFAULT_TUNE_TRIALS,
            tune_range_max: tune.range_max,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; syntax and type errors name the file and line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML text, returning `(line, message)` on failure.
    pub fn from_toml(text: &str) -> std::result::Result<Self, (usize, String)> {
        toml::from_str(text).map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            (line, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_points != MODEL_POINTS {
            return Err(Error::InvalidParameter(format!(
                "control_points must be {MODEL_POINTS}, got {}",
                self.control_points
            )));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("pixel_size must be positive, got {}", self.pixel_size)));
        }
        self.channels().validate()?;
        self.objective().validate()?;
        self.optimizer().validate()?;
        self.tune_config().validate()?;
        Ok(())
    }

    pub fn channels(&self) -> ChannelParams {
        ChannelParams {
            sigma: self.gradient_sigma,
            clip: self.gradient_clip,
            lambda: self.geodesic_lambda,
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            epsilon: self.epsilon,
            k: self.k,
            w_region: self.w_region,
            w_geodesic: self.w_geodesic,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            rounds: self.rounds,
            evals_per_stage: self.evals_per_stage,
            initial_trust_radius: self.initial_trust_radius,
            angle_trust_radius: self.angle_trust_radius,
            final_trust_radius: self.final_trust_radius,
            seed: self.seed,
            samples_per_segment: self.samples_per_segment,
            rotation_mode: self.rotation_mode,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            pad: self.pad,
            pixel_size: self.pixel_size,
            channels: self.channels(),
            objective: self.objective(),
            optimizer: self.optimizer(),
            constrained: self.constrained,
            workers: self.workers,
        }
    }

    pub fn scene(&self) -> SceneConfig {
        let auto = SceneConfig::for_cells(self.synth_cells.max(1), self.seed);
        let side = if self.synth_size == 0 { auto.width } else { self.synth_size };
        SceneConfig {
            n_cells: self.synth_cells,
            width: side,
            height: side,
            pixel_size: self.pixel_size,
            background_level: self.background_level,
            cell_level: self.cell_level,
            rim_level: self.rim_level,
            noise_sigma: self.noise_sigma,
            max_overlap: self.max_overlap,
            rotation_mode: self.rotation_mode,
            seed: self.seed,
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            range_max: self.tune_range_max,
            trials: self.tune_trials,
            seed: self.seed,
        }
    }
}
