//! Independent oracles and the criterion runners shared by the integration
//! suites. Nothing here calls the library routine it is checking.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rodfit::geometry::{basis_matrix, spline_sample, ControlPolygon, Point, Polyline, RodParams};
use rodfit::imageops::{geodesic_distance, prepare_tile, GrayImage};
use rodfit::metrics::{
    average_multiobject_dice, dice, foreground_dice, per_cell_dice, Mask,
};
use rodfit::objective::{region_energy, CumulativeTable};
use rodfit::optimizer::{
    constrained_minimize, segment_cell, ConstraintSet, Problem, SolverSettings,
};
use rodfit::pipeline::{evaluate_scene, segment_box, PipelineConfig};
use rodfit::synthgen::{render_scene, SceneConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- splines

/// Cox-de Boor recursion on integer knots.
fn cox_de_boor(i: i64, p: usize, u: f64) -> f64 {
    if p == 0 {
        return if (i as f64) <= u && u < (i + 1) as f64 { 1.0 } else { 0.0 };
    }
    let a = (u - i as f64) / p as f64 * cox_de_boor(i, p - 1, u);
    let b = ((i + p as i64 + 1) as f64 - u) / p as f64 * cox_de_boor(i + 1, p - 1, u);
    a + b
}

/// Point of the closed uniform cubic B-spline at parameter `seg + t`, by
/// summing the recursion-defined basis over the periodically extended
/// control sequence. Segment `seg` is governed by points `seg..seg+3`.
pub fn de_boor_point(control: &[Point], seg: usize, t: f64) -> Point {
    let n = control.len();
    let u = seg as f64 + 3.0 + t;
    let mut p = Point::new(0.0, 0.0);
    for k in 0..n + 3 {
        let b = cox_de_boor(k as i64, 3, u);
        let c = control[k % n];
        p.x += b * c.x;
        p.y += b * c.y;
    }
    p
}

pub fn random_control(rng: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
        .collect()
}

/// Spline samples in basis order, without orientation normalization.
pub fn raw_samples(control: &[Point], n_per_segment: usize) -> Vec<Point> {
    let n = control.len();
    let mut out = Vec::new();
    for seg in 0..n {
        for s in 0..n_per_segment {
            out.push(de_boor_point(control, seg, s as f64 / n_per_segment as f64));
        }
    }
    out
}

/// Whether two closed point sequences agree up to a reversal of order (the
/// library normalizes orientation to counterclockwise).
pub fn same_cycle(a: &[Point], b: &[Point], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let close = |p: &Point, q: &Point| (p.x - q.x).abs() <= tol && (p.y - q.y).abs() <= tol;
    let n = a.len();
    let forward = (0..n).all(|i| close(&a[i], &b[i]));
    let reverse = (0..n).any(|shift| (0..n).all(|i| close(&a[i], &b[(shift + n - i) % n])));
    forward || reverse
}

pub fn spline_identities() -> Outcome {
    let mut r = rng(77);
    let basis = basis_matrix(6, 10).unwrap();
    let mut worst_pou: f64 = 0.0;
    let mut worst_knot: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    let mut de_boor_ok = 0;
    for _ in 0..100 {
        let pts = random_control(&mut r, 6);
        let poly = ControlPolygon::new(pts.clone()).unwrap();
        let sampled = spline_sample(&poly, &basis).unwrap();
        let v = sampled.vertices();

        for c in 0..basis.cols() {
            let s: f64 = basis.column(c).iter().sum();
            worst_pou = worst_pou.max((s - 1.0).abs());
        }
        // knot values, located by search since orientation may be reversed
        for i in 0..6 {
            let k = Point::new(
                (pts[i].x + 4.0 * pts[(i + 1) % 6].x + pts[(i + 2) % 6].x) / 6.0,
                (pts[i].y + 4.0 * pts[(i + 1) % 6].y + pts[(i + 2) % 6].y) / 6.0,
            );
            let d = v.iter().map(|p| p.distance(&k)).fold(f64::INFINITY, f64::min);
            worst_knot = worst_knot.max(d);
        }
        let a = [[r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)], [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]];
        let b = Point::new(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
        let map = |p: &Point| Point::new(a[0][0] * p.x + a[0][1] * p.y + b.x, a[1][0] * p.x + a[1][1] * p.y + b.y);
        let mapped_first: Vec<Point> = raw_samples(&pts.iter().map(map).collect::<Vec<_>>(), 10);
        let mapped_after: Vec<Point> = raw_samples(&pts, 10).iter().map(map).collect();
        for (p, q) in mapped_first.iter().zip(&mapped_after) {
            worst_affine = worst_affine.max(p.distance(q));
        }
        // library affine covariance: map the polygon, sample, compare as cycles
        let lib_mapped = spline_sample(&poly.map_affine(a, b), &basis).unwrap();
        let lib_after: Vec<Point> = v.iter().map(map).collect();
        if !same_cycle(lib_mapped.vertices(), &lib_after, 1e-9) {
            worst_affine = f64::INFINITY;
        }
        if same_cycle(v, &raw_samples(&pts, 10), 1e-10) {
            de_boor_ok += 1;
        }
    }
    let pass = worst_pou <= 1e-12 && worst_knot <= 1e-10 && worst_affine <= 1e-9 && de_boor_ok == 100;
    Outcome::new(
        pass,
        format!(
            "partition of unity err {worst_pou:.1e}, knot err {worst_knot:.1e}, affine err {worst_affine:.1e}, de Boor agreement {de_boor_ok}/100"
        ),
    )
}

// ---------------------------------------------------------------- regions

/// Star-shaped (hence simple) polygon around `c` with radii in `[r_lo, r_hi]`.
pub fn random_star_polygon(rng: &mut impl Rng, c: Point, r_lo: f64, r_hi: f64) -> Polyline {
    let n = rng.random_range(5..14);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    let verts = angles
        .iter()
        .map(|&a| {
            let r = rng.random_range(r_lo..r_hi);
            Point::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    Polyline::new(verts)
}

/// Positive smooth field: offset plus a few random low-frequency waves.
pub fn random_smooth_channel(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.3),
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    GrayImage::from_fn(w, h, |x, y| {
        let mut v = 1.0;
        for &(amp, kx, ky, ph) in &waves {
            v += amp * (kx * x as f64 + ky * y as f64 + ph).sin();
        }
        v
    })
}

/// Same polygon with every edge split into pieces no longer than `h`.
pub fn subdivide(poly: &Polyline, h: f64) -> Polyline {
    let mut v = Vec::new();
    for (a, b) in poly.edges() {
        let n = (a.distance(&b) / h).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            v.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    Polyline::new(v)
}

/// Even-odd point-in-polygon by ray casting.
pub fn inside(poly: &[Point], x: f64, y: f64) -> bool {
    let mut c = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            c = !c;
        }
    }
    c
}

/// Mean of `channel` over pixel centers inside `poly`, and the count.
pub fn pixel_average(poly: &Polyline, channel: &GrayImage) -> (f64, usize) {
    let v = poly.vertices();
    let (mut sum, mut n) = (0.0, 0);
    for y in 0..channel.height() {
        for x in 0..channel.width() {
            if inside(v, x as f64, y as f64) {
                sum += channel.get(x, y);
                n += 1;
            }
        }
    }
    (sum / n.max(1) as f64, n)
}

pub fn divergence_oracle() -> Outcome {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let ch = random_smooth_channel(&mut r, 64, 64);
        let table = CumulativeTable::new(&ch);
        let c = Point::new(r.random_range(24.0..40.0), r.random_range(24.0..40.0));
        let poly = random_star_polygon(&mut r, c, 4.0, 20.0);
        if poly.signed_area().abs() < 25.0 {
            continue;
        }
        // the midpoint rule expects a finely sampled contour, as the spline gives
        let got = region_energy(&subdivide(&poly, 1.0), &table).unwrap();
        let (want, _) = pixel_average(&poly, &ch);
        worst = worst.max(((got - want) / want).abs());
        tested += 1;
    }
    Outcome::new(worst <= 0.02, format!("100 polygons, worst relative error {:.3}%", 100.0 * worst))
}

// ---------------------------------------------------------------- geodesic

#[derive(PartialEq)]
struct State(f64, usize);
impl Eq for State {}
impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Exact cheapest 8-connected path costs with step cost
/// `sqrt((1-λ)² |p-q|² + λ² (I(p)-I(q))²)`, by Dijkstra.
pub fn dijkstra_geodesic(img: &GrayImage, mx: usize, my: usize, lambda: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[my * w + mx] = 0.0;
    heap.push(State(0.0, my * w + mx));
    while let Some(State(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                let di = img.get(x as usize, y as usize) - img.get(nx as usize, ny as usize);
                let step = ((1.0 - lambda).powi(2) * (dx * dx + dy * dy) as f64 + lambda.powi(2) * di * di).sqrt();
                if d + step < dist[j] {
                    dist[j] = d + step;
                    heap.push(State(d + step, j));
                }
            }
        }
    }
    dist
}

/// Smooth field in roughly [0, 1] plus uniform noise of amplitude `noise`.
pub fn smooth_noisy_image(rng: &mut impl Rng, w: usize, h: usize, noise: f64) -> GrayImage {
    let base = random_smooth_channel(rng, w, h);
    let data = base
        .data()
        .iter()
        .map(|v| v / 2.0 + noise * rng.random_range(-1.0..1.0))
        .collect();
    GrayImage::new(w, h, data).unwrap()
}

pub fn geodesic_oracle() -> Outcome {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    let mut below = 0;
    let mut marker_ok = true;
    for _ in 0..50 {
        let img = smooth_noisy_image(&mut r, 32, 32, 0.05);
        let (mx, my) = (r.random_range(0..32), r.random_range(0..32));
        let got = geodesic_distance(&img, mx, my, 0.8).unwrap();
        let want = dijkstra_geodesic(&img, mx, my, 0.8);
        marker_ok &= got.get(mx, my) == 0.0;
        for (g, e) in got.data().iter().zip(&want) {
            if *g < e - 1e-9 {
                below += 1;
            }
            if *e > 0.0 {
                worst = worst.max((g - e) / e);
            }
        }
    }
    Outcome::new(
        worst <= 0.01 && below == 0 && marker_ok,
        format!(
            "50 smooth noisy images, worst relative excess {:.3}%, {below} pixels below the exact cost, D(marker)=0: {marker_ok}",
            100.0 * worst
        ),
    )
}

// ---------------------------------------------------------------- metrics

fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
    let mut m = Mask::empty(w, h);
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(x, y, true);
        }
    }
    m
}

pub fn metric_units() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let a = rect(20, 20, 0, 0, 10, 10);
    let b = rect(20, 20, 5, 0, 15, 10);
    let far = rect(20, 20, 10, 10, 20, 20);
    let e = Mask::empty(20, 20);
    check("identical -> 1", dice(&a, &a).unwrap() == 1.0);
    check("disjoint -> 0", dice(&a, &far).unwrap() == 0.0);
    check("|A|=|B|=100, overlap 50 -> 0.5", dice(&a, &b).unwrap() == 0.5);
    check("empty vs empty -> 1", dice(&e, &e).unwrap() == 1.0);
    check("symmetry", dice(&a, &b).unwrap() == dice(&b, &a).unwrap());
    check("size mismatch is an error", dice(&a, &Mask::empty(5, 5)).is_err());

    let canvas = (20, 20);
    check("FD pred = gt -> 1", foreground_dice(&[a.clone(), b.clone()], &[a.clone(), b.clone()], canvas).unwrap() == 1.0);
    let union = rect(20, 20, 0, 0, 15, 10);
    check(
        "FD counts overlap once",
        foreground_dice(&[a.clone(), b.clone()], &[union.clone()], canvas).unwrap() == 1.0,
    );
    check(
        "FD order invariant",
        foreground_dice(&[b.clone(), a.clone()], &[union.clone()], canvas).unwrap() == 1.0,
    );
    // 150 union pixels vs 100: 2*100/250
    check("FD partial", foreground_dice(&[a.clone()], &[union], canvas).unwrap() == 0.8);

    check("AMD all identical -> 1", average_multiobject_dice(&[a.clone(), b.clone()], &[a.clone(), b.clone()], &[0, 1]).unwrap() == 1.0);
    check("AMD (1 + 0)/2", average_multiobject_dice(&[a.clone(), far.clone()], &[a.clone(), a.clone()], &[0, 1]).unwrap() == 0.5);
    check("AMD follows pairing", average_multiobject_dice(&[b.clone(), a.clone()], &[a.clone(), b.clone()], &[1, 0]).unwrap() == 1.0);
    check("AMD rejects non-bijection", average_multiobject_dice(&[a.clone(), b.clone()], &[a.clone(), b.clone()], &[0, 0]).is_err());
    let d = per_cell_dice(&[a.clone(), b.clone()], &[b.clone(), b.clone()], &[0, 1]).unwrap();
    check("per-cell values", d == vec![0.5, 1.0]);

    // 5-cell scene with hand-computed dice values
    let gt: Vec<Mask> = (0..5).map(|i| rect(60, 12, 12 * i, 1, 12 * i + 10, 11)).collect();
    let pred: Vec<Mask> = (0..5).map(|i| rect(60, 12, 12 * i + i, 1, 12 * i + 10, 11)).collect();
    // cell i: |P| = 100 - 10 i, overlap = |P|, dice = 2(100-10i)/(200-10i)
    let manual: f64 = (0..5).map(|i| 2.0 * (100.0 - 10.0 * i as f64) / (200.0 - 10.0 * i as f64)).sum::<f64>() / 5.0;
    let got = average_multiobject_dice(&pred, &gt, &[0, 1, 2, 3, 4]).unwrap();
    check("5-cell manual oracle", (got - manual).abs() <= 1e-15);

    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            "all unit cases exact, union semantics verified".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------- optimizer

pub fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

/// Dense grid search with step `h` over `[0, hi]²`.
pub fn grid_search(f: impl Fn(&[f64]) -> f64, hi: f64, h: f64) -> ([f64; 2], f64) {
    let n = (hi / h).round() as usize;
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for i in 0..=n {
        for j in 0..=n {
            let x = [i as f64 * h, j as f64 * h];
            let v = f(&x);
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    best
}

pub fn optimizer_contract() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let tight = SolverSettings {
        max_evals: 2000,
        final_radius: 1e-8,
    };

    let a = [0.3, -0.7, 1.2];
    let quad = constrained_minimize(
        |x| x.iter().zip(&a).map(|(v, t)| (v - t).powi(2)).sum(),
        &[0.0, 0.0, 0.0],
        &Problem {
            bounds: vec![(-2.0, 2.0); 3],
            inequalities: Vec::new(),
        },
        &[0.5; 3],
        tight,
    )
    .unwrap();
    let qerr = quad.x.iter().zip(&a).map(|(v, t)| (v - t).abs()).fold(0.0, f64::max);
    pass &= qerr <= 1e-3;
    notes.push(format!("quadratic err {qerr:.1e}"));

    let lin = constrained_minimize(
        |x| x[0],
        &[5.0, 1.0],
        &Problem {
            bounds: vec![(-10.0, 10.0); 2],
            inequalities: vec![Box::new(|x: &[f64]| x[0] - 2.0)],
        },
        &[1.0, 1.0],
        tight,
    )
    .unwrap();
    pass &= (lin.x[0] - 2.0).abs() <= 1e-3;
    notes.push(format!("active constraint x1 = {:.5}", lin.x[0]));

    let rb = constrained_minimize(
        rosenbrock,
        &[0.1, 0.1],
        &Problem {
            bounds: vec![(0.0, 0.8); 2],
            inequalities: Vec::new(),
        },
        &[0.1, 0.1],
        tight,
    )
    .unwrap();
    let (gx, gv) = grid_search(rosenbrock, 0.8, 1e-3);
    let rerr = (rb.x[0] - gx[0]).abs().max((rb.x[1] - gx[1]).abs());
    pass &= rerr <= 1e-2 && rb.value <= gv + 1e-2;
    notes.push(format!("Rosenbrock box err {rerr:.1e} (grid optimum {gx:?})"));

    let (mono, feas) = stage_properties(20);
    pass &= mono == 20 && feas == 20;
    notes.push(format!("monotone stages {mono}/20, feasible {feas}/20"));
    Outcome::new(pass, notes.join("; "))
}

/// Segments `n` random single-cell renders and counts the fits whose
/// stage energies never increase, and whose parameters satisfy every
/// constraint exactly (the sum constraint within 1e-6).
pub fn stage_properties(n: usize) -> (usize, usize) {
    let cfg = PipelineConfig::default();
    let (mut mono, mut feas) = (0, 0);
    for seed in 0..n as u64 {
        let scene = render_scene(&SceneConfig {
            n_cells: 1,
            width: 96,
            height: 96,
            seed: 500 + seed,
            ..SceneConfig::default()
        })
        .unwrap();
        let tile = prepare_tile(&scene.image, &scene.cells[0].bbox, cfg.pad, cfg.pixel_size, &cfg.channels).unwrap();
        let cs = ConstraintSet::for_tile(&tile);
        let res = segment_cell(&tile, &cfg.optimizer, &cfg.objective, &cs).unwrap();
        if res.stage_energies.windows(2).all(|w| w[1] <= w[0]) {
            mono += 1;
        }
        let t = res.theta;
        let within = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        let [(cxl, cxh), (cyl, cyh), (l1l, l1h), (l2l, l2h), (wl, wh), (dl, dh), (el, eh)] = cs.geometric_bounds();
        if within(t.cx, cxl, cxh)
            && within(t.cy, cyl, cyh)
            && within(t.l1, l1l, l1h)
            && within(t.l2, l2l, l2h)
            && within(t.w, wl, wh)
            && within(t.d, dl, dh)
            && within(t.e, el, eh)
            && within(t.l1, cs.l_min, cs.l_max)
            && within(t.l2, cs.l_min, cs.l_max)
            && within(t.w, cs.w_min, cs.w_max)
            && t.d.abs() <= cs.de_max
            && t.e.abs() <= cs.de_max
            && t.l1 + t.l2 <= cs.diag + 1e-6
        {
            feas += 1;
        }
    }
    (mono, feas)
}

// ---------------------------------------------------------------- end to end

pub const TABLE1_CELLS: [usize; 7] = [2, 3, 7, 15, 32, 71, 196];

pub fn table1() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut rows = Vec::new();
    let mut pass = true;
    for (i, &n) in TABLE1_CELLS.iter().enumerate() {
        let scene = render_scene(&SceneConfig::for_cells(n, 100 + i as u64)).unwrap();
        let (report, _) = evaluate_scene(&scene, &cfg).unwrap();
        pass &= report.fd >= 0.9 && report.amd >= 0.9;
        rows.push(format!("{n}: FD {:.3} AMD {:.3}", report.fd, report.amd));
    }
    Outcome::new(pass, rows.join(", "))
}

pub fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// AMD over the 5x5 weight grid on the 15-cell scene, with and without
/// constraints.
pub fn robustness() -> Outcome {
    let scene = render_scene(&SceneConfig::for_cells(15, 103)).unwrap();
    let grid = [0.0, 125.0, 250.0, 375.0, 500.0];
    let mut amds = [Vec::new(), Vec::new()];
    for (k, constrained) in [true, false].into_iter().enumerate() {
        for &wr in &grid {
            for &wd in &grid {
                let mut cfg = PipelineConfig::default();
                cfg.constrained = constrained;
                cfg.objective = cfg.objective.with_weights(wr, wd);
                amds[k].push(evaluate_scene(&scene, &cfg).unwrap().0.amd);
            }
        }
    }
    let (sc, su) = (std_dev(&amds[0]), std_dev(&amds[1]));
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Outcome::new(
        sc <= su,
        format!(
            "AMD std GA+C {sc:.3} (mean {:.3}) vs GA {su:.3} (mean {:.3})",
            mean(&amds[0]),
            mean(&amds[1])
        ),
    )
}

/// Angle difference modulo pi, in degrees.
pub fn angle_error_deg(a: f64, b: f64) -> f64 {
    let x = (a - b).rem_euclid(PI);
    x.min(PI - x).to_degrees()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RecoveryCounts {
    pub length: usize,
    pub width: usize,
    pub angle: usize,
    pub dice: usize,
    pub all: usize,
}

pub fn recover(noise: f64, seeds: std::ops::Range<u64>) -> RecoveryCounts {
    let cfg = PipelineConfig::default();
    let dice_min = if noise == 0.0 { 0.95 } else { 0.90 };
    let mut c = RecoveryCounts::default();
    for seed in seeds {
        let scene = render_scene(&SceneConfig {
            n_cells: 1,
            width: 96,
            height: 96,
            noise_sigma: noise,
            seed,
            ..SceneConfig::default()
        })
        .unwrap();
        let cell = &scene.cells[0];
        let fit = segment_box(&scene.image, &cell.bbox, &cfg).unwrap();
        let (gt, f): (RodParams, RodParams) = (cell.theta, fit.theta_image);
        let ok_l = (f.l1 + f.l2 - gt.l1 - gt.l2).abs() <= 2.0;
        let ok_w = (f.w - gt.w).abs() <= 1.5;
        let ok_a = angle_error_deg(f.alpha, gt.alpha) <= 5.0;
        let d = dice(&fit.mask.placed(96, 96).unwrap(), &cell.mask.placed(96, 96).unwrap()).unwrap();
        let ok_d = d >= dice_min;
        c.length += ok_l as usize;
        c.width += ok_w as usize;
        c.angle += ok_a as usize;
        c.dice += ok_d as usize;
        c.all += (ok_l && ok_w && ok_a && ok_d) as usize;
    }
    c
}

pub fn parameter_recovery() -> Outcome {
    let clean = recover(0.0, 1000..1020);
    let noisy = recover(0.02, 1000..1020);
    // at least 90% of 20 cases
    let pass = clean.all >= 18 && noisy.all >= 18;
    let fmt = |c: RecoveryCounts| {
        format!(
            "length {}/20, width {}/20, angle {}/20, dice {}/20, all {}/20",
            c.length, c.width, c.angle, c.dice, c.all
        )
    };
    Outcome::new(pass, format!("noiseless: {}; noisy: {}", fmt(clean), fmt(noisy)))
}

// ---------------------------------------------------------------- masks

/// Number of 4-connected foreground components, by flood fill.
pub fn four_components(mask: &Mask) -> usize {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || !mask.get(start % w, start / w) {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut push = |nx: usize, ny: usize| {
                let j = ny * w + nx;
                if !seen[j] && mask.get(nx, ny) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < w {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < h {
                push(x, y + 1);
            }
        }
    }
    count
}
