//! Constrained derivative-free fitting of the rod model to a tile.
//!
//! The geometric parameters and the rotation angle are minimized in
//! alternation, each stage by a COBYLA trust-region solve that starts from the
//! incumbent, so stage-end energies never increase.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    basis_matrix, rod_control_points, spline_sample, BasisMatrix, Polyline, RodParams,
    RotationMode, DEFAULT_SAMPLES_PER_SEGMENT, MODEL_POINTS,
};
use crate::imageops::Tile;
use crate::metrics::{rasterize, Mask};
use crate::objective::{
    build_tables, region_energy, total_energy, EnergyBreakdown, IntegralTables, ObjectiveConfig,
};

/// Segment length range in micrometers.
pub const LENGTH_RANGE_UM: (f64, f64) = (0.4, 2.0);
/// Maximum lateral deviation of the rod ends in micrometers.
pub const BEND_MAX_UM: f64 = 0.5;
/// Cell width range in micrometers.
pub const WIDTH_RANGE_UM: (f64, f64) = (0.7, 0.9);
/// Width of the initial rod in pixels.
pub const INITIAL_WIDTH_PX: f64 = 17.0;
/// Box aspect ratio above which the initial rod is axis-aligned.
const AXIS_ASPECT: f64 = 1.2;
/// Energy assigned to parameter vectors whose contour cannot be evaluated.
const FAILED_EVAL_ENERGY: f64 = 1e12;
/// Slack used when checking inequality constraints.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Bounds on the geometric parameters, all in tile pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub l_min: f64,
    pub l_max: f64,
    /// Upper bound on `l1 + l2`.
    pub diag: f64,
    pub de_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub cx_range: (f64, f64),
    pub cy_range: (f64, f64),
}

impl ConstraintSet {
    /// Biological constraints converted with `pixel_size` µm/px.
    pub fn biological(pixel_size: f64, diag: f64, tile_size: (usize, usize)) -> Self {
        Self {
            l_min: LENGTH_RANGE_UM.0 / pixel_size,
            l_max: LENGTH_RANGE_UM.1 / pixel_size,
            diag,
            de_max: BEND_MAX_UM / pixel_size,
            w_min: WIDTH_RANGE_UM.0 / pixel_size,
            w_max: WIDTH_RANGE_UM.1 / pixel_size,
            cx_range: (0.0, tile_size.0.saturating_sub(1) as f64),
            cy_range: (0.0, tile_size.1.saturating_sub(1) as f64),
        }
    }

    /// Biological constraints for a prepared tile, using its source box.
    pub fn for_tile(tile: &Tile) -> Self {
        Self::biological(
            tile.pixel_size,
            tile.source_box.diagonal(),
            (tile.width(), tile.height()),
        )
    }

    /// Only keeps the model well-formed: positive sizes and a center inside
    /// the tile. Used for the unconstrained variant of the method.
    pub fn relaxed(tile_size: (usize, usize)) -> Self {
        let extent = tile_size.0.max(tile_size.1) as f64;
        Self {
            l_min: 1.0,
            l_max: 4.0 * extent,
            diag: f64::INFINITY,
            de_max: 4.0 * extent,
            w_min: 1.0,
            w_max: 4.0 * extent,
            cx_range: (0.0, tile_size.0.saturating_sub(1) as f64),
            cy_range: (0.0, tile_size.1.saturating_sub(1) as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Infeasible(msg));
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return fail(format!("length range [{}, {}]", self.l_min, self.l_max));
        }
        if !(self.w_min > 0.0 && self.w_min < self.w_max) {
            return fail(format!("width range [{}, {}]", self.w_min, self.w_max));
        }
        if !(self.de_max > 0.0) {
            return fail(format!("bend limit {}", self.de_max));
        }
        if !(self.diag > 0.0) || self.diag < 2.0 * self.l_min {
            return fail(format!(
                "length budget {} below 2 * l_min = {}",
                self.diag,
                2.0 * self.l_min
            ));
        }
        if !(self.cx_range.0 <= self.cx_range.1 && self.cy_range.0 <= self.cy_range.1) {
            return fail(format!(
                "center ranges {:?} {:?}",
                self.cx_range, self.cy_range
            ));
        }
        Ok(())
    }

    /// Box bounds for `[cx, cy, l1, l2, w, d, e]`.
    pub fn geometric_bounds(&self) -> [(f64, f64); 7] {
        let l_hi = self.l_max.min(self.diag - self.l_min);
        [
            self.cx_range,
            self.cy_range,
            (self.l_min, l_hi),
            (self.l_min, l_hi),
            (self.w_min, self.w_max),
            (-self.de_max, self.de_max),
            (-self.de_max, self.de_max),
        ]
    }

    /// Nearest feasible parameters (angle untouched).
    pub fn project(&self, theta: &RodParams) -> RodParams {
        let b = self.geometric_bounds();
        let mut t = *theta;
        t.cx = t.cx.clamp(b[0].0, b[0].1);
        t.cy = t.cy.clamp(b[1].0, b[1].1);
        t.l1 = t.l1.clamp(b[2].0, b[2].1);
        t.l2 = t.l2.clamp(b[3].0, b[3].1);
        t.w = t.w.clamp(b[4].0, b[4].1);
        t.d = t.d.clamp(b[5].0, b[5].1);
        t.e = t.e.clamp(b[6].0, b[6].1);
        let excess = t.l1 + t.l2 - self.diag;
        if excess > 0.0 {
            // shrink both equally, then let the longer one absorb the rest
            let mut l1 = (t.l1 - 0.5 * excess).max(self.l_min);
            let mut l2 = (t.l2 - 0.5 * excess).max(self.l_min);
            let left = l1 + l2 - self.diag;
            if left > 0.0 {
                if l1 > l2 {
                    l1 -= left;
                } else {
                    l2 -= left;
                }
            }
            t.l1 = l1;
            t.l2 = l2;
        }
        t
    }

    pub fn is_feasible(&self, theta: &RodParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - FEASIBILITY_TOL && v <= hi + FEASIBILITY_TOL;
        inside(theta.cx, self.cx_range)
            && inside(theta.cy, self.cy_range)
            && inside(theta.l1, (self.l_min, self.l_max))
            && inside(theta.l2, (self.l_min, self.l_max))
            && theta.l1 + theta.l2 <= self.diag + FEASIBILITY_TOL
            && inside(theta.d, (-self.de_max, self.de_max))
            && inside(theta.e, (-self.de_max, self.de_max))
            && inside(theta.w, (self.w_min, self.w_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Number of (geometry, angle) alternation cycles.
    pub rounds: usize,
    /// Function-evaluation budget of each inner solve.
    pub evals_per_stage: usize,
    /// Initial trust-region radius for the geometric parameters, in pixels.
    pub initial_trust_radius: f64,
    /// Initial trust-region radius for the angle, in radians.
    pub angle_trust_radius: f64,
    /// Trust-region radius at which an inner solve stops.
    pub final_trust_radius: f64,
    /// Kept for reproducibility records; the solver itself is deterministic.
    pub seed: u64,
    pub samples_per_segment: usize,
    pub rotation_mode: RotationMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            evals_per_stage: 60,
            initial_trust_radius: 2.0,
            angle_trust_radius: 0.2,
            final_trust_radius: 0.01,
            seed: 0,
            samples_per_segment: DEFAULT_SAMPLES_PER_SEGMENT,
            rotation_mode: RotationMode::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be >= 1".into()));
        }
        if self.evals_per_stage < 7 + 2 {
            return Err(Error::InvalidParameter(format!(
                "evals_per_stage must be >= 9, got {}",
                self.evals_per_stage
            )));
        }
        if !(self.final_trust_radius > 0.0
            && self.final_trust_radius < self.initial_trust_radius
            && self.final_trust_radius < self.angle_trust_radius)
        {
            return Err(Error::InvalidParameter(format!(
                "trust radii must satisfy 0 < final < initial: {} / {} / {}",
                self.final_trust_radius, self.initial_trust_radius, self.angle_trust_radius
            )));
        }
        if self.samples_per_segment == 0 {
            return Err(Error::InvalidParameter("samples_per_segment must be >= 1".into()));
        }
        Ok(())
    }
}

/// A box-and-inequality constrained minimization problem.
pub struct Problem<'a> {
    pub bounds: Vec<(f64, f64)>,
    /// Constraint functions, satisfied when `>= 0`.
    pub inequalities: Vec<Box<dyn Fn(&[f64]) -> f64 + 'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_evals: usize,
    pub final_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// COBYLA minimization of `f` from `x0`.
///
/// `initial_steps` gives the initial trust-region radius per coordinate. The
/// returned point is the best evaluated point satisfying every bound and
/// inequality; `x0` must be feasible, so the result never exceeds `f(x0)`.
pub fn constrained_minimize<F>(
    f: F,
    x0: &[f64],
    problem: &Problem<'_>,
    initial_steps: &[f64],
    settings: SolverSettings,
) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    if problem.bounds.len() != n || initial_steps.len() != n {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: x0 {n}, bounds {}, steps {}",
            problem.bounds.len(),
            initial_steps.len()
        )));
    }
    if let Some((i, b)) = problem
        .bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, hi))| !(lo <= hi))
    {
        return Err(Error::Infeasible(format!("empty bound {b:?} on coordinate {i}")));
    }
    let clamp = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(&problem.bounds)
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    };
    let feasible = |x: &[f64]| problem.inequalities.iter().all(|g| g(x) >= -FEASIBILITY_TOL);

    let start = clamp(x0);
    if !feasible(&start) {
        return Err(Error::Infeasible(format!(
            "starting point {start:?} violates the inequality constraints"
        )));
    }
    let f0 = f(&start);
    let best = std::cell::RefCell::new((start.clone(), if f0.is_nan() { f64::INFINITY } else { f0 }));
    let evaluations = std::cell::Cell::new(1usize);

    let objective = |x: &[f64], _: &mut ()| -> f64 {
        let xc = clamp(x);
        let mut v = f(&xc);
        if !v.is_finite() {
            v = FAILED_EVAL_ENERGY;
        }
        evaluations.set(evaluations.get() + 1);
        if feasible(&xc) {
            let mut b = best.borrow_mut();
            if v < b.1 {
                *b = (xc, v);
            }
        }
        v
    };
    let cons: Vec<_> = problem
        .inequalities
        .iter()
        .map(|g| move |x: &[f64], _: &mut ()| g(x))
        .collect();

    if settings.max_evals > 1 {
        let stop = cobyla::StopTols {
            xtol_abs: vec![settings.final_radius; n],
            ..cobyla::StopTols::default()
        };
        // the outcome is read from `best`; failure statuses still leave it valid
        let _ = cobyla::minimize(
            objective,
            &start,
            &problem.bounds,
            &cons,
            (),
            settings.max_evals - 1,
            cobyla::RhoBeg::Set(initial_steps.to_vec()),
            Some(stop),
        );
    }
    let (x, value) = best.into_inner();
    Ok(Minimum {
        x,
        value,
        evaluations: evaluations.get(),
    })
}

/// Everything needed to evaluate the energy of a rod on one tile.
pub struct RodEvaluator<'a> {
    pub tile: &'a Tile,
    pub tables: &'a IntegralTables,
    pub basis: &'a BasisMatrix,
    pub objective: ObjectiveConfig,
    pub mode: RotationMode,
}

impl RodEvaluator<'_> {
    pub fn contour(&self, theta: &RodParams) -> Result<Polyline> {
        spline_sample(&rod_control_points(theta, self.mode)?, self.basis)
    }

    pub fn energy(&self, theta: &RodParams) -> Result<EnergyBreakdown> {
        total_energy(&self.contour(theta)?, self.tile, self.tables, &self.objective)
    }

    /// Total energy, or a large finite penalty when the contour is degenerate.
    pub fn energy_or_penalty(&self, theta: &RodParams) -> f64 {
        self.energy(theta)
            .map(|e| e.total)
            .unwrap_or(FAILED_EVAL_ENERGY)
    }

    pub fn geodesic_energy(&self, theta: &RodParams) -> Result<f64> {
        region_energy(&self.contour(theta)?, &self.tables.geodesic)
    }
}

/// Straight symmetric rod through the box center with an orientation taken
/// from the padded box proportions.
pub fn initial_guess(eval: &RodEvaluator<'_>, constraints: &ConstraintSet) -> RodParams {
    let tile = eval.tile;
    let (tw, th) = (tile.width() as f64, tile.height() as f64);
    let longer = tw.max(th);
    let shorter = tw.min(th);
    let mut theta = RodParams {
        cx: tile.marker.x,
        cy: tile.marker.y,
        l1: 0.5 * longer,
        l2: 0.5 * longer,
        w: INITIAL_WIDTH_PX,
        d: 0.0,
        e: 0.0,
        alpha: 0.0,
    };
    if longer > AXIS_ASPECT * shorter {
        // the template's long axis is vertical at alpha = 0
        theta.alpha = if th >= tw { 0.0 } else { FRAC_PI_2 };
        return theta;
    }
    // scored on the projected rod, which is where the fit actually starts
    let score = |alpha: f64| {
        eval.geodesic_energy(&constraints.project(&RodParams { alpha, ..theta }))
            .unwrap_or(f64::INFINITY)
    };
    theta.alpha = if score(-FRAC_PI_4) < score(FRAC_PI_4) {
        -FRAC_PI_4
    } else {
        FRAC_PI_4
    };
    theta
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Fitted parameters in tile coordinates, angle reduced to `[0, 2π)`.
    pub theta: RodParams,
    /// Same parameters with the center in full-image coordinates.
    pub theta_image: RodParams,
    /// Sampled contour in tile coordinates.
    pub contour: Polyline,
    /// Rasterized contour, placed at the tile origin.
    pub mask: Mask,
    pub energy: EnergyBreakdown,
    /// Total energy at the start and after every stage.
    pub stage_energies: Vec<f64>,
    pub initial: RodParams,
    pub evaluations: usize,
}

/// Fits the rod model to a prepared tile.
pub fn segment_cell(
    tile: &Tile,
    cfg: &OptimizerConfig,
    obj_cfg: &ObjectiveConfig,
    constraints: &ConstraintSet,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    obj_cfg.validate()?;
    constraints.validate()?;
    let tables = build_tables(tile);
    let basis = basis_matrix(MODEL_POINTS, cfg.samples_per_segment)?;
    let eval = RodEvaluator {
        tile,
        tables: &tables,
        basis: &basis,
        objective: *obj_cfg,
        mode: cfg.rotation_mode,
    };
    let start = initial_guess(&eval, constraints);
    match fit_from(&eval, start, cfg, constraints) {
        Err(Error::DegenerateContour(_)) | Err(Error::DegenerateRegion(_)) => {
            let alt = if (start.alpha - FRAC_PI_4).abs() < 1e-12 {
                -FRAC_PI_4
            } else {
                FRAC_PI_4
            };
            fit_from(&eval, RodParams { alpha: alt, ..start }, cfg, constraints)
        }
        other => other,
    }
}

/// Like [`segment_cell`] but starting from a caller-supplied guess, which is
/// projected onto the constraints first. No retry is attempted.
pub fn segment_cell_from(
    tile: &Tile,
    start: RodParams,
    cfg: &OptimizerConfig,
    obj_cfg: &ObjectiveConfig,
    constraints: &ConstraintSet,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    obj_cfg.validate()?;
    constraints.validate()?;
    let tables = build_tables(tile);
    let basis = basis_matrix(MODEL_POINTS, cfg.samples_per_segment)?;
    let eval = RodEvaluator {
        tile,
        tables: &tables,
        basis: &basis,
        objective: *obj_cfg,
        mode: cfg.rotation_mode,
    };
    fit_from(&eval, start, cfg, constraints)
}

fn fit_from(
    eval: &RodEvaluator<'_>,
    start: RodParams,
    cfg: &OptimizerConfig,
    constraints: &ConstraintSet,
) -> Result<SegmentationResult> {
    let mut theta = constraints.project(&start);
    let mut current = eval.energy_or_penalty(&theta);
    let mut stage_energies = vec![current];
    let mut evaluations = 1;

    let geo_bounds = constraints.geometric_bounds();
    let diag = constraints.diag;
    let geo_problem = Problem {
        bounds: geo_bounds.to_vec(),
        inequalities: if diag.is_finite() {
            vec![Box::new(move |x: &[f64]| diag - x[2] - x[3])]
        } else {
            Vec::new()
        },
    };
    let settings = SolverSettings {
        max_evals: cfg.evals_per_stage,
        final_radius: cfg.final_trust_radius,
    };
    let geo_steps = vec![cfg.initial_trust_radius; 7];
    let angle_steps = vec![cfg.angle_trust_radius];

    for _ in 0..cfg.rounds {
        let alpha = theta.alpha;
        let x0 = &theta.to_array()[..7];
        let geo = constrained_minimize(
            |x| {
                eval.energy_or_penalty(&RodParams {
                    cx: x[0],
                    cy: x[1],
                    l1: x[2],
                    l2: x[3],
                    w: x[4],
                    d: x[5],
                    e: x[6],
                    alpha,
                })
            },
            x0,
            &geo_problem,
            &geo_steps,
            settings,
        )?;
        evaluations += geo.evaluations;
        if geo.value <= current {
            let x = &geo.x;
            theta = RodParams {
                cx: x[0],
                cy: x[1],
                l1: x[2],
                l2: x[3],
                w: x[4],
                d: x[5],
                e: x[6],
                alpha,
            };
            current = geo.value;
        }
        stage_energies.push(current);

        let angle_problem = Problem {
            bounds: vec![(theta.alpha - PI, theta.alpha + PI)],
            inequalities: Vec::new(),
        };
        let fixed = theta;
        let ang = constrained_minimize(
            |x| eval.energy_or_penalty(&RodParams { alpha: x[0], ..fixed }),
            &[theta.alpha],
            &angle_problem,
            &angle_steps,
            settings,
        )?;
        evaluations += ang.evaluations;
        if ang.value <= current {
            theta.alpha = ang.x[0];
            current = ang.value;
        }
        stage_energies.push(current);
    }

    let contour = eval.contour(&theta)?;
    let energy = total_energy(&contour, eval.tile, eval.tables, &eval.objective)?;
    theta.alpha = theta.normalized_alpha();
    let tile = eval.tile;
    let mask = rasterize(&contour, tile.width(), tile.height()).with_origin(tile.origin);
    Ok(SegmentationResult {
        theta,
        theta_image: theta.translated(tile.origin.0 as f64, tile.origin.1 as f64),
        contour,
        mask,
        energy,
        stage_energies,
        initial: start,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(max_evals: usize) -> SolverSettings {
        SolverSettings {
            max_evals,
            final_radius: 1e-6,
        }
    }

    #[test]
    fn quadratic_interior_minimum() {
        let a = [1.3, -0.7, 2.2];
        let problem = Problem {
            bounds: vec![(-5.0, 5.0); 3],
            inequalities: Vec::new(),
        };
        let m = constrained_minimize(
            |x| x.iter().zip(&a).map(|(xi, ai)| (xi - ai).powi(2)).sum(),
            &[0.0, 0.0, 0.0],
            &problem,
            &[0.5; 3],
            settings(2000),
        )
        .unwrap();
        for (xi, ai) in m.x.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-3, "{:?}", m.x);
        }
    }

    #[test]
    fn active_linear_constraint() {
        let problem = Problem {
            bounds: vec![(-10.0, 10.0), (-10.0, 10.0)],
            inequalities: vec![Box::new(|x: &[f64]| x[0] - 2.0)],
        };
        let m = constrained_minimize(
            |x| x[0] + 0.01 * x[1] * x[1],
            &[5.0, 1.0],
            &problem,
            &[1.0, 1.0],
            settings(2000),
        )
        .unwrap();
        assert!((m.x[0] - 2.0).abs() < 1e-3, "{:?}", m.x);
        assert!(m.x[0] >= 2.0 - FEASIBILITY_TOL);
    }

    #[test]
    fn never_worse_than_start() {
        let problem = Problem {
            bounds: vec![(0.0, 1.0)],
            inequalities: Vec::new(),
        };
        let f = |x: &[f64]| (10.0 * x[0]).sin();
        let m = constrained_minimize(f, &[0.47], &problem, &[0.3], settings(5)).unwrap();
        assert!(m.value <= f(&[0.47]));
    }

    #[test]
    fn empty_bounds_are_infeasible() {
        let problem = Problem {
            bounds: vec![(1.0, 0.0)],
            inequalities: Vec::new(),
        };
        assert!(matches!(
            constrained_minimize(|x| x[0], &[0.5], &problem, &[0.1], settings(10)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn pixel_size_conversion() {
        let c = ConstraintSet::biological(0.065, 100.0, (50, 50));
        assert!((c.l_min - 6.153846153846154).abs() < 1e-12);
        assert!((c.l_max - 30.76923076923077).abs() < 1e-12);
        assert!((c.de_max - 7.6923076923076925).abs() < 1e-12);
        assert!((c.w_min - 10.76923076923077).abs() < 1e-12);
        assert!((c.w_max - 13.846153846153847).abs() < 1e-12);
    }

    #[test]
    fn projection_is_feasible() {
        let c = ConstraintSet::biological(0.065, 40.0, (60, 60));
        let theta = RodParams::from_array([-3.0, 70.0, 30.0, 29.0, 17.0, 20.0, -20.0, 0.3]);
        let p = c.project(&theta);
        assert!(c.is_feasible(&p), "{p:?}");
        assert_eq!(p.w, c.w_max);
        assert!((p.l1 + p.l2 - 40.0).abs() < 1e-12);
        assert_eq!(p.alpha, 0.3);
    }

    #[test]
    fn infeasible_sets_are_rejected() {
        let mut c = ConstraintSet::biological(0.065, 40.0, (60, 60));
        c.w_min = c.w_max + 1.0;
        assert!(matches!(c.validate(), Err(Error::Infeasible(_))));
        let c = ConstraintSet::biological(0.065, 10.0, (60, 60));
        assert!(c.validate().is_err());
    }
}
