//! Explicit Euler iteration `u ← u - δ G[u]` for the discrete obstacle
//! problem, with optional line-sweep acceleration.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::envelope1d::qce_line_in_place;
use crate::error::{param, Result};
use crate::grid::{Grid, GridFunction};
use crate::obstacle::Obstacle;
use crate::operators::{SchemeKind, SchemeParams, StencilPlan};
use crate::stencil::StencilSet;

/// Grids with at least this many nodes update in parallel.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// The constant `min g`.
    ConstantMin,
    /// The obstacle itself.
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    None,
    /// One line-sweep round after every `2n` Euler steps.
    LineSweep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence when the sup-norm update is at most `tol · δ`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub accel: Acceleration,
    pub step_override: Option<f64>,
    pub scheme: SchemeKind,
}

impl SolverConfig {
    /// Defaults for a problem in `dim` dimensions.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            tol: 1e-6,
            max_iter: if dim == 1 { 1_000_000 } else { 200_000 },
            init: Init::ConstantMin,
            accel: Acceleration::None,
            step_override: None,
            scheme: SchemeKind::Full,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return param(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return param("max_iter must be at least 1");
        }
        if let SchemeKind::Robust { eps_r } = self.scheme {
            if !(eps_r > 0.0) {
                return param("robust constraint width must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub delta: f64,
    #[serde(rename = "lipschitz_K")]
    pub lipschitz_k: f64,
    pub converged: bool,
    /// Last sup-norm update divided by `δ`.
    pub residual_final: f64,
    pub wall_time_s: f64,
    pub accel_rounds: usize,
    /// `(iteration, sup-norm update)` after every Euler step.
    #[serde(skip)]
    pub residual_history: Vec<(usize, f64)>,
}

/// Lipschitz constant `K = 1/(εh) + 2/h²` of the scheme in `u(x)` and the
/// largest stable step `δ = 1/K`. Returns `(δ, K)`.
pub fn cfl_step(epsilon: f64, h: f64) -> (f64, f64) {
    let k = 1.0 / (epsilon * h) + 2.0 / (h * h);
    (1.0 / k, k)
}

pub fn initialize(g: &Obstacle, grid: &Grid, policy: Init) -> Result<GridFunction> {
    let sampled = g.sample(grid)?;
    Ok(match policy {
        Init::Obstacle => sampled,
        Init::ConstantMin => GridFunction::constant(*grid, sampled.min()),
    })
}

/// Replaces `u` along every maximal lattice line of every stencil direction
/// by its quasiconvex envelope. Directions are processed in order, each
/// reading the previous result; lines lying in a face are skipped so
/// boundary values never change.
pub fn line_sweep_round(u: &GridFunction, stencil: &StencilSet) -> GridFunction {
    let mut out = u.clone();
    let grid = *u.grid();
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for v in stencil.directions() {
        for_each_line(&grid, v, &mut idx, |line| {
            if line.len() < 3 || grid.is_boundary(line[1]) {
                return;
            }
            vals.clear();
            vals.extend(line.iter().map(|&i| out.get(i)));
            qce_line_in_place(&mut vals);
            let values = out.values_mut();
            for (&i, &x) in line.iter().zip(&vals) {
                values[i] = x;
            }
        });
    }
    out
}

/// Calls `f` with the node indices of each maximal lattice line along `v`.
pub(crate) fn for_each_line(grid: &Grid, v: [i64; 2], buf: &mut Vec<usize>, mut f: impl FnMut(&[usize])) {
    let n = grid.n() as i64;
    let dim = grid.dim();
    let inside = |p: [i64; 2]| (0..dim).all(|k| (0..n).contains(&p[k]));
    for start in 0..grid.len() {
        let node = grid.node(start);
        let p = [node[0] as i64, node[1] as i64];
        if inside([p[0] - v[0], p[1] - v[1]]) {
            continue;
        }
        buf.clear();
        let mut q = p;
        while inside(q) {
            buf.push(grid.index([q[0] as usize, q[1] as usize]));
            q = [q[0] + v[0], q[1] + v[1]];
        }
        f(buf);
    }
}

/// Explicit Euler iteration with its state exposed one step at a time.
pub struct Solver {
    plan: StencilPlan,
    stencil: StencilSet,
    epsilon: f64,
    config: SolverConfig,
    delta: f64,
    k: f64,
    u: Vec<f64>,
    next: Vec<f64>,
    iterations: usize,
    accel_rounds: usize,
    sweeping: bool,
    history: Vec<(usize, f64)>,
}

impl Solver {
    pub fn new(grid: &Grid, params: &SchemeParams, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        if grid.dim() != params.obstacle().dim() {
            return param("grid and obstacle dimensions differ");
        }
        let (mut delta, k) = cfl_step(params.epsilon(), grid.h());
        if let Some(step) = config.step_override {
            if !(step > 0.0 && step <= delta * (1.0 + 1e-12)) {
                return param(format!("step {step} violates the CFL bound 1/K = {delta}"));
            }
            delta = step;
        }
        let plan = StencilPlan::new(grid, params.stencil(), params.obstacle())?;
        let u = initialize(params.obstacle(), grid, config.init)?.into_values();
        Ok(Self {
            plan,
            stencil: params.stencil().clone(),
            epsilon: params.epsilon(),
            config: *config,
            delta,
            k,
            next: vec![0.0; u.len()],
            u,
            iterations: 0,
            accel_rounds: 0,
            sweeping: config.accel == Acceleration::LineSweep,
            history: Vec::new(),
        })
    }

    /// Replaces the current iterate.
    pub fn set_state(&mut self, u: &GridFunction) -> Result<()> {
        if u.grid() != self.plan.grid() {
            return param("state lives on a different grid");
        }
        self.u.copy_from_slice(u.values());
        Ok(())
    }

    pub fn state(&self) -> GridFunction {
        GridFunction::new(*self.plan.grid(), self.u.clone()).expect("iterates stay finite")
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn plan(&self) -> &StencilPlan {
        &self.plan
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.k
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One Jacobi update; returns the sup-norm of the change.
    pub fn step(&mut self) -> f64 {
        let (plan, u, delta, eps, scheme) = (&self.plan, &self.u, self.delta, self.epsilon, self.config.scheme);
        let g = plan.obstacle_values();
        let row_len = plan.row_len();
        let update = |(r, out): (usize, &mut [f64])| {
            plan.residual_row(u, r, eps, scheme, out);
            for (k, o) in out.iter_mut().enumerate() {
                let i = r * row_len + k;
                *o = if plan.is_boundary(i) { g[i] } else { u[i] - delta * *o };
            }
        };
        if u.len() >= PARALLEL_THRESHOLD {
            self.next.par_chunks_mut(row_len).enumerate().for_each(update);
        } else {
            self.next.chunks_mut(row_len).enumerate().for_each(update);
        }
        let sup = self
            .u
            .iter()
            .zip(&self.next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut self.u, &mut self.next);
        self.iterations += 1;
        self.history.push((self.iterations, sup));
        sup
    }

    /// One line-sweep round over all stencil directions.
    pub fn sweep(&mut self) {
        let swept = line_sweep_round(&self.state(), &self.stencil);
        self.u = swept.into_values();
        self.accel_rounds += 1;
    }

    /// Iterates to convergence or `max_iter`.
    pub fn run(mut self) -> (GridFunction, SolveReport) {
        let started = Instant::now();
        let threshold = self.config.tol * self.delta;
        let block = 2 * self.plan.grid().n();
        let mut last = f64::INFINITY;
        let mut converged = false;
        while self.iterations < self.config.max_iter {
            last = self.step();
            if last <= threshold {
                converged = true;
                break;
            }
            if self.sweeping {
                if last < 100.0 * threshold {
                    self.sweeping = false;
                } else if self.iterations.is_multiple_of(block) {
                    self.sweep();
                }
            }
        }
        let report = SolveReport {
            iterations: self.iterations,
            delta: self.delta,
            lipschitz_k: self.k,
            converged,
            residual_final: last / self.delta,
            wall_time_s: started.elapsed().as_secs_f64(),
            accel_rounds: self.accel_rounds,
            residual_history: std::mem::take(&mut self.history),
        };
        (self.state(), report)
    }
}

/// Solves the obstacle problem on `grid`. Non-convergence is reported in the
/// returned report, not raised.
pub fn solve(grid: &Grid, params: &SchemeParams, config: &SolverConfig) -> Result<(GridFunction, SolveReport)> {
    Ok(Solver::new(grid, params, config)?.run())
}

/// One Euler step from `u` with step `delta`; boundary nodes are set to `g`.
pub fn euler_step(u: &GridFunction, params: &SchemeParams, delta: f64) -> Result<(GridFunction, f64)> {
    let config = SolverConfig {
        step_override: Some(delta),
        ..SolverConfig::for_dim(u.grid().dim())
    };
    let mut solver = Solver::new(u.grid(), params, &config)?;
    solver.set_state(u)?;
    let sup = solver.step();
    Ok((solver.state(), sup))
}
