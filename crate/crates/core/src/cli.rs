//! Command-line front end: `segment`, `synth`, `eval` and `tune`.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 some cells failed,
//! 3 infeasible configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    basis_matrix, rod_control_points, spline_sample, RotationMode, DEFAULT_SAMPLES_PER_SEGMENT, MODEL_POINTS,
};
use crate::io::{self, BoxRecord, CellRecord, GroundTruth, LabelImage, ScoreRow};
use crate::metrics::{score, score_unpaired, Mask, ScoreReport};
use crate::pipeline::{prediction_masks, segment_image};
use crate::synthgen::{render_scene, ColonyScene};
use crate::tuning::{tune_weights, TuneResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// File names inside an output directory.
pub const IMAGE_FILE: &str = "image.png";
pub const LABELS_FILE: &str = "labels.png";
pub const BOXES_FILE: &str = "boxes.txt";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CELLS_FILE: &str = "cells.json";
pub const OVERLAY_FILE: &str = "overlay.png";
pub const SCORES_CSV: &str = "scores.csv";
pub const SCORES_JSON: &str = "scores.json";
pub const TUNE_FILE: &str = "tune.json";

#[derive(Debug, Parser)]
#[command(name = "rodfit", version, about = "Rod-shaped cell segmentation from bounding boxes")]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Also write a PNG with the contours drawn in red.
    #[arg(long, global = true)]
    pub overlay: bool,
    #[arg(long, global = true, value_enum)]
    pub rotation_mode: Option<ModeArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Printed,
    Proper,
}

impl From<ModeArg> for RotationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Printed => RotationMode::Printed,
            ModeArg::Proper => RotationMode::Proper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one contour per bounding box.
    Segment(SegmentArgs),
    /// Render a synthetic colony with ground truth.
    Synth(SynthArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Random search over the region weights on a scene with ground truth.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Box file (`index x_min y_min x_max y_max` per line).
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// Read the box file as normalized detector output (`class xc yc w h`).
    #[arg(long)]
    pub yolo: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Skip the biological constraints.
    #[arg(long)]
    pub unconstrained: bool,
    #[arg(long)]
    pub w_region: Option<f64>,
    #[arg(long)]
    pub w_geodesic: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub cells: Option<usize>,
    /// Canvas side in pixels (default: chosen from the cell count).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: a `cells.json` from `segment` or a 16-bit label image.
    /// Repeat together with `--gt` to score several scenes.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground truth: a `ground_truth.json` from `synth` or a label image.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Pair cells by overlap instead of by index.
    #[arg(long)]
    pub match_overlap: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Scene image; with `--ground-truth`. Without both a synthetic scene
    /// is generated into the output directory.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub range_max: Option<f64>,
    /// Cells of the generated scene.
    #[arg(long, default_value_t = 15)]
    pub cells: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Infeasible(_) | Error::Capacity(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Loads the configuration and applies the global flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(m) = cli.rotation_mode {
        cfg.rotation_mode = m.into();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<i32> {
    let mut cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Segment(a) => {
            if let Some(p) = &a.image {
                cfg.image = Some(p.clone());
            }
            if let Some(p) = &a.boxes {
                cfg.boxes = Some(p.clone());
            }
            if let Some(p) = &a.out {
                cfg.output_dir = Some(p.clone());
            }
            if a.unconstrained {
                cfg.constrained = false;
            }
            if let Some(w) = a.w_region {
                cfg.w_region = w;
            }
            if let Some(w) = a.w_geodesic {
                cfg.w_geodesic = w;
            }
        }
        Command::Synth(a) => {
            if let Some(n) = a.cells {
                cfg.synth_cells = n;
            }
            if let Some(s) = a.size {
                cfg.synth_size = s;
            }
            if let Some(s) = a.noise {
                cfg.noise_sigma = s;
            }
            if let Some(p) = &a.out {
                cfg.output_dir = Some(p.clone());
            }
        }
        Command::Eval(a) => {
            if let Some(p) = &a.out {
                cfg.output_dir = Some(p.clone());
            }
        }
        Command::Tune(a) => {
            if let Some(p) = &a.image {
                cfg.image = Some(p.clone());
            }
            if let Some(p) = &a.ground_truth {
                cfg.ground_truth = Some(p.clone());
            }
            if let Some(t) = a.trials {
                cfg.tune_trials = t;
            }
            if let Some(r) = a.range_max {
                cfg.tune_range_max = r;
            }
            if let Some(p) = &a.out {
                cfg.output_dir = Some(p.clone());
            }
        }
    }
    cfg.validate()?;

    let workers = cfg.workers;
    let job = || match &cli.command {
        Command::Segment(a) => cmd_segment(&cfg, a.yolo, cli.overlay),
        Command::Synth(_) => cmd_synth(&cfg, cli.overlay).map(|_| EXIT_OK),
        Command::Eval(a) => cmd_eval(&cfg, &a.pred, &a.gt, a.match_overlap),
        Command::Tune(a) => cmd_tune(&cfg, a.cells).map(|_| EXIT_OK),
    };
    if workers == 0 {
        return job();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(job)
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("missing {what} (set it in the config or on the command line)")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Segments every box of the configured image. Writes `cells.json` (one
/// record per box, in input order), `labels.png` and optionally
/// `overlay.png`. Returns [`EXIT_PARTIAL`] when any cell failed.
pub fn cmd_segment(cfg: &RunConfig, yolo: bool, overlay: bool) -> Result<i32> {
    let image_path = required(&cfg.image, "image")?;
    let boxes_path = required(&cfg.boxes, "box file")?;
    let out = required(&cfg.output_dir, "output directory")?;
    let image = io::read_gray(image_path)?;
    let boxes: Vec<BoxRecord> = if yolo {
        io::read_yolo(boxes_path, image.width(), image.height())?
    } else {
        io::read_boxes(boxes_path)?
    };
    ensure_dir(out)?;

    let mut pc = cfg.pipeline();
    pc.workers = 0;
    let bboxes: Vec<_> = boxes.iter().map(|b| b.bbox).collect();
    let results = segment_image(&image, &bboxes, &pc)?;
    let records: Vec<CellRecord> = boxes
        .iter()
        .zip(&results)
        .map(|(b, r)| CellRecord::from_result(b.index, b.bbox, r, cfg.pixel_size))
        .collect();
    io::write_json(&out.join(CELLS_FILE), &records)?;

    let masks = prediction_masks(&results, (image.width(), image.height()));
    let labels = LabelImage::from_masks(&masks, image.width(), image.height())?;
    io::write_labels(&out.join(LABELS_FILE), &labels)?;
    if overlay {
        let contours: Vec<_> = records.iter().filter_map(|r| r.polyline()).collect();
        io::write_overlay(&out.join(OVERLAY_FILE), &image, &contours)?;
    }

    let failed: Vec<&CellRecord> = records.iter().filter(|r| !r.ok).collect();
    for r in &failed {
        eprintln!("cell {}: {}", r.index, r.error.as_deref().unwrap_or("failed"));
    }
    println!("segmented {} of {} cells", records.len() - failed.len(), records.len());
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

/// Renders a scene and writes `image.png` (16-bit), `labels.png`,
/// `boxes.txt`, `ground_truth.json` and the `config.toml` that reproduces it.
pub fn cmd_synth(cfg: &RunConfig, overlay: bool) -> Result<ColonyScene> {
    let out = required(&cfg.output_dir, "output directory")?;
    let scene = render_scene(&cfg.scene())?;
    write_scene(out, &scene, cfg, overlay)?;
    println!(
        "wrote {} cells on a {}x{} canvas (seed {})",
        scene.cells.len(),
        scene.image.width(),
        scene.image.height(),
        cfg.seed
    );
    Ok(scene)
}

fn write_scene(out: &Path, scene: &ColonyScene, cfg: &RunConfig, overlay: bool) -> Result<()> {
    ensure_dir(out)?;
    let (w, h) = scene.canvas();
    io::write_gray16(&out.join(IMAGE_FILE), &scene.image)?;
    io::write_labels(&out.join(LABELS_FILE), &LabelImage::from_masks(&scene.masks(), w, h)?)?;
    let boxes: Vec<BoxRecord> = scene
        .cells
        .iter()
        .enumerate()
        .map(|(index, c)| BoxRecord { index, bbox: c.bbox })
        .collect();
    io::write_boxes(&out.join(BOXES_FILE), &boxes)?;
    io::write_json(&out.join(GROUND_TRUTH_FILE), &GroundTruth::from_scene(scene))?;
    // Paths are left out so the file is independent of where it was written.
    let repro = RunConfig {
        image: None,
        boxes: None,
        ground_truth: None,
        output_dir: None,
        synth_cells: scene.config.n_cells,
        synth_size: w,
        ..cfg.clone()
    };
    repro.save(&out.join(CONFIG_FILE))?;
    if overlay {
        let basis = basis_matrix(MODEL_POINTS, DEFAULT_SAMPLES_PER_SEGMENT)?;
        let contours = scene
            .cells
            .iter()
            .map(|c| spline_sample(&rod_control_points(&c.theta, scene.config.rotation_mode)?, &basis))
            .collect::<Result<Vec<_>>>()?;
        io::write_overlay(&out.join(OVERLAY_FILE), &scene.image, &contours)?;
    }
    Ok(())
}

/// Masks of one side of an evaluation, keyed by cell index.
struct Side {
    indices: Vec<usize>,
    masks: Vec<Mask>,
    canvas: Option<(usize, usize)>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn load_labels(path: &Path) -> Result<Side> {
    let labels = io::read_labels(path)?;
    let masks = labels.to_masks();
    Ok(Side {
        indices: (0..masks.len()).collect(),
        masks,
        canvas: Some((labels.width, labels.height)),
    })
}

fn load_predictions(path: &Path) -> Result<Side> {
    if !is_json(path) {
        return load_labels(path);
    }
    let records: Vec<CellRecord> = io::read_json(path)?;
    let mut masks = Vec::with_capacity(records.len());
    for r in &records {
        masks.push(match &r.mask {
            Some(m) => m.decode()?,
            None => Mask::empty(0, 0),
        });
    }
    Ok(Side {
        indices: records.iter().map(|r| r.index).collect(),
        masks,
        canvas: None,
    })
}

fn load_ground_truth(path: &Path) -> Result<Side> {
    if !is_json(path) {
        return load_labels(path);
    }
    let gt: GroundTruth = io::read_json(path)?;
    let masks = gt.cells.iter().map(|c| c.mask.decode()).collect::<Result<Vec<_>>>()?;
    Ok(Side {
        indices: gt.cells.iter().map(|c| c.index).collect(),
        masks,
        canvas: Some((gt.config.width, gt.config.height)),
    })
}

fn scene_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) => format!("{}/{}", dir.to_string_lossy(), stem),
        None => stem,
    }
}

/// Scores one prediction file against one ground-truth file.
pub fn evaluate_files(pred: &Path, gt: &Path, match_overlap: bool) -> Result<ScoreReport> {
    let p = load_predictions(pred)?;
    let g = load_ground_truth(gt)?;
    let canvas = g
        .canvas
        .or(p.canvas)
        .ok_or_else(|| Error::InvalidInput(format!("{}: cannot determine the canvas size", gt.display())))?;
    // Empty masks of failed cells have no window; give them the canvas.
    let fix = |m: &Mask| if m.width() == 0 { Mask::empty(canvas.0, canvas.1) } else { m.clone() };
    let pm: Vec<Mask> = p.masks.iter().map(fix).collect();
    if match_overlap {
        return score_unpaired(&pm, &g.masks, canvas);
    }
    let mut pairing = Vec::with_capacity(g.indices.len());
    if p.indices.len() != g.indices.len() {
        return Err(Error::InvalidPairing(format!(
            "{} has {} cells, {} has {}",
            pred.display(),
            p.indices.len(),
            gt.display(),
            g.indices.len()
        )));
    }
    // pairing[i] is the ground-truth position for prediction i
    for idx in &p.indices {
        let j = g.indices.iter().position(|g| g == idx).ok_or_else(|| {
            Error::InvalidPairing(format!("cell {idx} of {} has no ground truth", pred.display()))
        })?;
        pairing.push(j);
    }
    score(&pm, &g.masks, &pairing, canvas)
}

/// Scores each `(pred, gt)` pair; prints a table and writes `scores.csv`
/// and `scores.json` when an output directory is set.
pub fn cmd_eval(cfg: &RunConfig, pred: &[PathBuf], gt: &[PathBuf], match_overlap: bool) -> Result<i32> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidPairing(format!(
            "{} prediction files for {} ground-truth files",
            pred.len(),
            gt.len()
        )));
    }
    let mut rows = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        let report = evaluate_files(p, g, match_overlap)?;
        rows.push(ScoreRow {
            name: scene_name(p),
            report,
        });
    }
    println!("{:<32} {:>7} {:>7} {:>7}", "scene", "cells", "FD", "AMD");
    for r in &rows {
        println!("{:<32} {:>7} {:>7.3} {:>7.3}", r.name, r.report.n_cells, r.report.fd, r.report.amd);
    }
    if let Some(out) = &cfg.output_dir {
        ensure_dir(out)?;
        io::write_scores_csv(&out.join(SCORES_CSV), &rows)?;
        io::write_json(&out.join(SCORES_JSON), &rows)?;
    }
    Ok(EXIT_OK)
}

/// Tuning output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub image: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(flatten)]
    pub result: TuneResult,
}

/// Tunes `(w_R, w_D)` on a scene read from disk. Without configured scene
/// files, a synthetic scene of `cells` cells is written to the output
/// directory first and read back, so the result can be reproduced with
/// `segment` and `eval` on the same files.
pub fn cmd_tune(cfg: &RunConfig, cells: usize) -> Result<TuneReport> {
    let out = required(&cfg.output_dir, "output directory")?;
    ensure_dir(out)?;
    let (image_path, gt_path) = match (&cfg.image, &cfg.ground_truth) {
        (Some(i), Some(g)) => (i.clone(), g.clone()),
        (None, None) => {
            let synth = RunConfig {
                synth_cells: cells,
                ..cfg.clone()
            };
            let scene = render_scene(&synth.scene())?;
            write_scene(out, &scene, &synth, false)?;
            (out.join(IMAGE_FILE), out.join(GROUND_TRUTH_FILE))
        }
        _ => {
            return Err(Error::InvalidInput(
                "tuning needs both an image and its ground truth, or neither".into(),
            ))
        }
    };
    let gt: GroundTruth = io::read_json(&gt_path)?;
    let scene = gt.into_scene(io::read_gray(&image_path)?)?;
    let mut pc = cfg.pipeline();
    pc.workers = 0;
    let result = tune_weights(&scene, &cfg.tune_config(), &pc)?;
    println!(
        "w_region = {} w_geodesic = {} best AMD = {:.4} over {} trials",
        result.w_region,
        result.w_geodesic,
        result.best_amd,
        result.trials.len()
    );
    let report = TuneReport {
        image: image_path,
        ground_truth: gt_path,
        result,
    };
    io::write_json(&out.join(TUNE_FILE), &report)?;
    Ok(report)
}
