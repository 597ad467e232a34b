//! Executable checks of structural properties: quasiconvexity of solutions,
//! consistency of the scheme, monotonicity, comparison and operator ordering.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope1d::{is_quasiconvex, qce_line};
use crate::error::{param, Result};
use crate::grid::{Grid, GridFunction};
use crate::obstacle::Obstacle;
use crate::operators::{
    arm, f_eps_exact, f_eps_scheme, g_eps_scheme, lambda_exact, vector_norm, ArmEnd, Constraint,
    QuadraticTestFunction, SchemeKind, SchemeParams, StencilPlan, ORACLE_SAMPLES,
};
use crate::solver::{cfl_step, for_each_line};
use crate::stencil::StencilSet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub location: Option<String>,
    pub samples: usize,
}

impl CheckReport {
    pub fn new(name: &str, worst_violation: f64, tolerance: f64, location: Option<String>, samples: usize) -> Self {
        Self {
            name: name.to_string(),
            passed: worst_violation <= tolerance,
            worst_violation,
            tolerance,
            location,
            samples,
        }
    }
}

/// Running maximum that remembers where it was attained.
struct Worst {
    value: f64,
    location: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: 0.0,
            location: None,
        }
    }

    fn update(&mut self, value: f64, location: impl FnOnce() -> String) {
        if value > self.value {
            self.value = value;
            self.location = Some(location());
        }
    }
}

fn line_defect(values: &[f64]) -> f64 {
    values
        .iter()
        .zip(qce_line(values))
        .map(|(a, b)| a - b)
        .fold(0.0, f64::max)
}

/// Largest gap between `u` and its quasiconvex envelope along any lattice
/// line of any stencil direction. Lines lying in a face are skipped.
pub fn qc_along_stencil(u: &GridFunction, stencil: &StencilSet, tolerance: f64) -> CheckReport {
    let grid = *u.grid();
    let mut worst = Worst::new();
    let mut samples = 0;
    let mut buf = Vec::new();
    let mut vals = Vec::new();
    for v in stencil.directions() {
        for_each_line(&grid, v, &mut buf, |line| {
            if line.len() < 3 || grid.is_boundary(line[1]) {
                return;
            }
            vals.clear();
            vals.extend(line.iter().map(|&i| u.get(i)));
            samples += 1;
            worst.update(line_defect(&vals), || {
                format!("direction {v:?}, line from node {:?}", grid.node(line[0]))
            });
        });
    }
    CheckReport::new("qc_along_stencil", worst.value, tolerance, worst.location, samples)
}

/// Quasiconvexity defect along `sample_dirs` directions that avoid the
/// lattice, measured on piecewise-bilinear interpolants of `u` through every
/// interior node.
pub fn approx_qc_offgrid(u: &GridFunction, sample_dirs: usize, tolerance: f64) -> Result<CheckReport> {
    let grid = *u.grid();
    if grid.dim() != 2 {
        return param("off-grid quasiconvexity is a 2D check");
    }
    if sample_dirs == 0 {
        return param("at least one direction is required");
    }
    let h = grid.h();
    let mut worst = Worst::new();
    let mut samples = 0;
    let mut line = Vec::new();
    for k in 0..sample_dirs {
        let theta = PI * (k as f64 + 0.5) / sample_dirs as f64 + 0.1234;
        let d = [theta.cos() * h, theta.sin() * h];
        for i in grid.interior() {
            let x = grid.coord(i);
            let (tp, tm) = grid.ray_clip(&x, &d)?;
            line.clear();
            let lo = -(tm.floor() as i64);
            let hi = tp.floor() as i64;
            for t in lo..=hi {
                let p = [x[0] + t as f64 * d[0], x[1] + t as f64 * d[1]];
                line.push(u.interpolate_unchecked(&p));
            }
            samples += 1;
            worst.update(line_defect(&line), || format!("theta {theta:.4} through node {:?}", grid.node(i)));
        }
    }
    Ok(CheckReport::new("approx_qc_offgrid", worst.value, tolerance, worst.location, samples))
}

/// Random quadratics with coefficients uniform in `[-1, 1]`.
pub fn random_quadratics(count: usize, dim: usize, seed: u64) -> Vec<QuadraticTestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let off = rng.random_range(-1.0..1.0);
            let a = [[rng.random_range(-1.0..1.0), off], [off, rng.random_range(-1.0..1.0)]];
            let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            QuadraticTestFunction::new(dim, a, b, rng.random_range(-1.0..1.0)).expect("valid quadratic")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub width: usize,
    pub n: usize,
    pub h: f64,
    pub dtheta: f64,
    /// `max |F_h - F|` against the continuous operator.
    pub error: f64,
    /// `max |F_h - F_V|` against the continuous operator restricted to the
    /// stencil directions; this is the part that vanishes with `h`.
    pub grid_error: f64,
    /// `max |F_V - F|`, the directional-resolution floor.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyTable {
    pub epsilon: f64,
    pub rows: Vec<ConsistencyRow>,
    /// Least-squares log-log slope of `grid_error` in `h`, per width.
    pub slopes: Vec<(usize, f64)>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn directional_exact(q: &QuadraticTestFunction, x: &[f64], eps: f64, stencil: &StencilSet) -> f64 {
    let p = q.gradient(x);
    let m = q.hessian();
    stencil
        .directions()
        .map(|v| {
            let n = vector_norm(v);
            let (c, s) = (v[0] as f64 / n, v[1] as f64 / n);
            (p[0] * c + p[1] * s).abs() / eps + m[0][0] * c * c + 2.0 * m[0][1] * c * s + m[1][1] * s * s
        })
        .fold(f64::INFINITY, f64::min)
}

/// Scheme-versus-oracle errors for every `(W, N)`.
///
/// Errors are taken at the nodes of the coarsest grid with `|x|∞ ≤ 1/2`,
/// which are shared by all grids when every `N - 1` is a multiple of the
/// coarsest `N - 1`.
pub fn consistency_sweep(
    quadratics: &[QuadraticTestFunction],
    eps: f64,
    widths: &[usize],
    ns: &[usize],
) -> Result<ConsistencyTable> {
    let dim = quadratics.first().map_or(2, |q| q.dim);
    let coarse = *ns.iter().min().ok_or_else(|| crate::Error::Parameter("empty N list".into()))?;
    if ns.iter().any(|&n| (n - 1) % (coarse - 1) != 0) {
        return param("every N - 1 must be a multiple of the coarsest N - 1");
    }
    let coarse_grid = Grid::new(dim, coarse)?;
    let points: Vec<[f64; 2]> = (0..coarse_grid.len())
        .map(|i| coarse_grid.coord(i))
        .filter(|x| x[..dim].iter().all(|c| c.abs() <= 0.5 + 1e-12))
        .collect();
    let exact: Vec<Vec<f64>> = quadratics
        .iter()
        .map(|q| points.iter().map(|x| f_eps_exact(q, &x[..dim], eps, ORACLE_SAMPLES)).collect())
        .collect();
    let dummy = Obstacle::custom("unused", dim, -1.0, 1.0, |_| 0.0)?;
    let mut rows = Vec::new();
    for &w in widths {
        let stencil = StencilSet::new(dim, w)?;
        let params = SchemeParams::new(eps, stencil.clone(), dummy.clone())?;
        for &n in ns {
            let grid = Grid::new(dim, n)?;
            let (mut error, mut grid_error, mut floor) = (0.0f64, 0.0f64, 0.0f64);
            for (q, ex) in quadratics.iter().zip(&exact) {
                let u = q.sample(&grid);
                for (x, &f) in points.iter().zip(ex) {
                    let i = grid.index(grid.locate(&x[..dim])?);
                    let fh = f_eps_scheme(&u, i, &params);
                    let fv = directional_exact(q, &x[..dim], eps, &stencil);
                    error = error.max((fh - f).abs());
                    grid_error = grid_error.max((fh - fv).abs());
                    floor = floor.max((fv - f).abs());
                }
            }
            rows.push(ConsistencyRow {
                width: w,
                n,
                h: grid.h(),
                dtheta: stencil.dtheta(),
                error,
                grid_error,
                floor,
            });
        }
    }
    let slopes = widths
        .iter()
        .map(|&w| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.width == w && r.grid_error > 0.0)
                .map(|r| (r.h, r.grid_error))
                .collect();
            (w, if pts.len() >= 2 { loglog_slope(&pts) } else { f64::NAN })
        })
        .collect();
    Ok(ConsistencyTable { epsilon: eps, rows, slopes })
}

fn random_function(grid: &Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction::from_fn(*grid, |_| rng.random_range(-1.0..1.0))
}

/// Random single-entry increases: raising `u(x)` must not lower `G[u](x)`;
/// raising a stencil neighbour of `x` must not raise it.
pub fn ellipticity_fuzz(params: &SchemeParams, grid: &Grid, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior: Vec<usize> = grid.interior().collect();
    if interior.is_empty() {
        return param("grid has no interior nodes");
    }
    let dirs: Vec<_> = params.stencil().directions().collect();
    let mut worst = Worst::new();
    for trial in 0..trials {
        let mut u = random_function(grid, &mut rng);
        let i = interior[rng.random_range(0..interior.len())];
        let before = g_eps_scheme(&u, i, params);
        let bump = rng.random_range(1e-3..1.0);
        let center = rng.random_bool(0.2);
        let target = if center {
            Some(i)
        } else {
            let v = dirs[rng.random_range(0..dirs.len())];
            let sign = if rng.random_bool(0.5) { 1 } else { -1 };
            match arm(grid, i, v, sign, params.obstacle()).end {
                ArmEnd::Node(j) => Some(j),
                ArmEnd::Boundary(_) => None,
            }
        };
        let Some(j) = target else { continue };
        u.values_mut()[j] += bump;
        let after = g_eps_scheme(&u, i, params);
        let violation = if center { before - after } else { after - before };
        worst.update(violation, || format!("trial {trial}, node {i}, raised {j}"));
    }
    Ok(CheckReport::new("ellipticity_fuzz", worst.value, 1e-12, worst.location, trials))
}

/// Solves `G[u] = f` by the same Jacobi iteration as the solver.
fn solve_perturbed(
    plan: &StencilPlan,
    eps: f64,
    f: &[f64],
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, bool) {
    let (delta, _) = cfl_step(eps, plan.grid().h());
    let mut u = start;
    let mut next = u.clone();
    for _ in 0..max_iter {
        let mut sup = 0.0f64;
        for i in 0..u.len() {
            let r = plan.residual(&u, i, eps, SchemeKind::Full) - f[i];
            next[i] = u[i] - delta * r;
            sup = sup.max(r.abs());
        }
        std::mem::swap(&mut u, &mut next);
        if sup <= tol {
            return (u, true);
        }
    }
    (u, false)
}

/// Pairs `u, v` solving `G[u] = f_u < f_v = G[v]` from random data;
/// checks `u ≤ v`. Pairs whose computed residuals do not confirm the strict
/// premise are not counted.
pub fn comparison_fuzz(params: &SchemeParams, grid: &Grid, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = params.epsilon();
    let mut worst = Worst::new();
    let mut counted = 0;
    for trial in 0..trials {
        let g_vals = random_function(grid, &mut rng);
        let g = Obstacle::from_grid_function("random", g_vals.clone());
        let plan = StencilPlan::new(grid, params.stencil(), &g)?;
        let fu: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let fv: Vec<f64> = fu.iter().map(|x| x + rng.random_range(0.01..0.2)).collect();
        let su: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sv: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (u, ok_u) = solve_perturbed(&plan, eps, &fu, su, 1e-10, 2_000_000);
        let (v, ok_v) = solve_perturbed(&plan, eps, &fv, sv, 1e-10, 2_000_000);
        if !(ok_u && ok_v) {
            continue;
        }
        let premise = (0..grid.len()).all(|i| {
            plan.residual(&u, i, eps, SchemeKind::Full) < plan.residual(&v, i, eps, SchemeKind::Full)
        });
        if !premise {
            continue;
        }
        counted += 1;
        for i in 0..grid.len() {
            worst.update(u[i] - v[i], || format!("trial {trial}, node {i}"));
        }
    }
    if counted * 10 < trials * 9 {
        return Ok(CheckReport::new(
            "comparison_fuzz",
            f64::INFINITY,
            0.0,
            Some(format!("only {counted} of {trials} pairs confirmed the premise")),
            counted,
        ));
    }
    Ok(CheckReport::new("comparison_fuzz", worst.value, 0.0, worst.location, counted))
}

/// For random `u ≤ w`: one Euler step preserves the order and does not
/// expand the sup-norm distance.
pub fn euler_monotonicity_fuzz(params: &SchemeParams, grid: &Grid, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = StencilPlan::new(grid, params.stencil(), params.obstacle())?;
    let eps = params.epsilon();
    let (delta, _) = cfl_step(eps, grid.h());
    let g = plan.obstacle_values();
    let step = |u: &[f64]| -> Vec<f64> {
        (0..u.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    g[i]
                } else {
                    u[i] - delta * plan.residual(u, i, eps, SchemeKind::Full)
                }
            })
            .collect()
    };
    let mut worst = Worst::new();
    for trial in 0..trials {
        let u: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = u.iter().map(|x| x + rng.random_range(0.0..0.5)).collect();
        let (tu, tw) = (step(&u), step(&w));
        let before = u.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let after = tu.iter().zip(&tw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for i in 0..grid.len() {
            worst.update(tu[i] - tw[i], || format!("order, trial {trial}, node {i}"));
        }
        worst.update(after - before, || format!("expansion, trial {trial}"));
    }
    Ok(CheckReport::new("euler_monotonicity_fuzz", worst.value, 1e-12, worst.location, trials))
}

/// Ordering of the curvature operators at random points:
/// `-λ_QC ≤ -λ^{ε²} ≤ ε - F^ε`, each within `1e-5`.
pub fn ordering_audit(quadratics: &[QuadraticTestFunction], eps_list: &[f64], seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let mut samples = 0;
    for (k, q) in quadratics.iter().enumerate() {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let x = &x[..q.dim];
        for &eps in eps_list {
            let qc = -lambda_exact(q, x, Constraint::Equality);
            let relaxed = -lambda_exact(q, x, Constraint::Relaxed(eps * eps));
            let penalized = eps - f_eps_exact(q, x, eps, ORACLE_SAMPLES);
            samples += 1;
            let v = (qc - relaxed).max(relaxed - penalized);
            worst.update(v, || format!("quadratic {k}, eps {eps}: {qc} / {relaxed} / {penalized}"));
        }
    }
    CheckReport::new("ordering_audit", worst.value, 1e-5, worst.location, samples)
}

/// Envelope by its level-set characterization:
/// `min over j ≤ i ≤ k of max(a_j, a_k)`.
pub fn qce_line_brute_force(a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..=i {
                for k in i..a.len() {
                    best = best.min(a[j].max(a[k]));
                }
            }
            best
        })
        .collect()
}

/// Largest quasiconvex minorant by enumerating every candidate sequence over
/// `alphabet` (the envelope of an alphabet-valued sequence stays in it).
pub fn qce_line_enumerated(a: &[f64], alphabet: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut digits = vec![0usize; n];
    let mut cand = vec![0.0; n];
    loop {
        for i in 0..n {
            cand[i] = alphabet[digits[i]];
        }
        if cand.iter().zip(a).all(|(c, x)| c <= x) && is_quasiconvex(&cand) {
            for i in 0..n {
                best[i] = best[i].max(cand[i]);
            }
        }
        let mut k = 0;
        while k < n {
            digits[k] += 1;
            if digits[k] < alphabet.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == n {
            return best;
        }
    }
}

/// Compares [`qce_line`] with the level-set oracle on every sequence of
/// length `1..=max_len` over five values, and with full minorant enumeration
/// up to length `enum_len`.
pub fn qce_line_oracle_check(max_len: usize, enum_len: usize) -> CheckReport {
    let alphabet = [-2.0, -0.5, 0.0, 1.0, 3.0];
    let mut worst = Worst::new();
    let mut samples = 0;
    for len in 1..=max_len {
        let total = alphabet.len().pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let a: Vec<f64> = (0..len)
                .map(|_| {
                    let d = c % alphabet.len();
                    c /= alphabet.len();
                    alphabet[d]
                })
                .collect();
            let fast = qce_line(&a);
            let mut diff = fast
                .iter()
                .zip(qce_line_brute_force(&a))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if len <= enum_len {
                let e = qce_line_enumerated(&a, &alphabet);
                diff = fast.iter().zip(&e).map(|(x, y)| (x - y).abs()).fold(diff, f64::max);
            }
            samples += 1;
            worst.update(diff, || format!("{a:?}"));
        }
    }
    CheckReport::new("qce_line_oracle", worst.value, 0.0, worst.location, samples)
}

/// Obstacle constraint and stability bounds:
/// `min g - 4ε²d - tol ≤ u ≤ g + tol` at every node.
pub fn sandwich_audit(u: &GridFunction, g: &GridFunction, eps: f64, tol: f64) -> CheckReport {
    let dim = u.grid().dim() as f64;
    let lower = g.min() - 4.0 * eps * eps * dim;
    let mut worst = Worst::new();
    for i in 0..u.values().len() {
        let v = (u.get(i) - g.get(i)).max(lower - u.get(i));
        worst.update(v, || format!("node {:?}", u.grid().node(i)));
    }
    CheckReport::new("sandwich", worst.value, tol, worst.location, u.values().len())
}

/// `max |G[u]|` over interior nodes against `tolerance`.
pub fn residual_audit(u: &GridFunction, plan: &StencilPlan, eps: f64, scheme: SchemeKind, tolerance: f64) -> CheckReport {
    let mut worst = Worst::new();
    let grid = *u.grid();
    for i in grid.interior() {
        let r = plan.residual(u.values(), i, eps, scheme).abs();
        worst.update(r, || format!("node {:?}", grid.node(i)));
    }
    CheckReport::new("residual", worst.value, tolerance, worst.location, grid.interior().count())
}

/// Where `u < g - tol`, the curvature term satisfies `F_h[u] ≥ floor`.
pub fn noncontact_audit(u: &GridFunction, plan: &StencilPlan, eps: f64, tol: f64, floor: f64) -> CheckReport {
    let g = plan.obstacle_values();
    let grid = *u.grid();
    let mut worst = Worst::new();
    let mut samples = 0;
    for i in grid.interior() {
        if u.get(i) < g[i] - tol {
            samples += 1;
            let f = plan.f_eps(u.values(), i, eps);
            worst.update(floor - f, || format!("node {:?}: F = {f}", grid.node(i)));
        }
    }
    CheckReport::new("noncontact_curvature", worst.value, 0.0, worst.location, samples)
}
