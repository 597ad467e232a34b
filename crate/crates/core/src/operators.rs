//! Pointwise difference operators and the discrete obstacle scheme.
//!
//! Directional differences are normalized by the true arm length, so for a
//! grid vector `v` they approximate derivatives along the unit direction
//! `v/|v|`:
//!
//! ```text
//! first_diff  = max_{s=±} (u(x + s·a_s) - u(x)) / |a_s|        ≈ |∇u·v̂| + O(h)
//! second_diff = 2 (t₋ (u₊ - u) + t₊ (u₋ - u)) / (t₊ t₋ (t₊ + t₋)) ≈ v̂ᵀ D²u v̂
//! ```
//!
//! where `a_±` are the two arms. An arm that would leave the cube is clipped
//! at the exact boundary intersection and reads the obstacle there; clipped
//! arms are never shorter than `h`, which keeps the coefficient of `u(x)`
//! bounded by `1/(εh) + 2/h²`.
//!
//! The obstacle scheme is
//!
//! ```text
//! G[u](x) = max(u(x) - g(x), ε - min_v { first_diff/ε + second_diff })   interior
//! G[u](x) = u(x) - g(x)                                                 boundary
//! ```
//!
//! which is nondecreasing in `u(x)` and nonincreasing in every neighbour.

use std::f64::consts::PI;

use crate::error::{param, Result};
use crate::grid::{Grid, GridFunction};
use crate::obstacle::Obstacle;
use crate::stencil::{GridVector, StencilSet};

/// Penalty parameter plus the stencil and obstacle the scheme reads.
#[derive(Debug, Clone)]
pub struct SchemeParams {
    epsilon: f64,
    stencil: StencilSet,
    obstacle: Obstacle,
}

impl SchemeParams {
    pub fn new(epsilon: f64, stencil: StencilSet, obstacle: Obstacle) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return param(format!("epsilon must be positive, got {epsilon}"));
        }
        if stencil.dtheta() > PI / 4.0 {
            return param("stencil directional resolution exceeds pi/4");
        }
        if stencil.dim() != obstacle.dim() {
            return param("stencil and obstacle dimensions differ");
        }
        Ok(Self {
            epsilon,
            stencil,
            obstacle,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn stencil(&self) -> &StencilSet {
        &self.stencil
    }

    pub fn obstacle(&self) -> &Obstacle {
        &self.obstacle
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.stencil.clone(), self.obstacle.clone())
    }
}

/// Where a stencil arm ends: on a lattice node, or at a boundary point where
/// the obstacle has already been evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmEnd {
    Node(usize),
    Boundary(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub end: ArmEnd,
    /// Euclidean length.
    pub length: f64,
}

impl Arm {
    #[inline]
    fn value(&self, u: &[f64]) -> f64 {
        match self.end {
            ArmEnd::Node(j) => u[j],
            ArmEnd::Boundary(g) => g,
        }
    }
}

pub(crate) fn vector_norm(v: GridVector) -> f64 {
    ((v[0] * v[0] + v[1] * v[1]) as f64).sqrt()
}

/// The arm from node `index` along `sign · v`.
pub fn arm(grid: &Grid, index: usize, v: GridVector, sign: i64, g: &Obstacle) -> Arm {
    let node = grid.node(index);
    let last = (grid.n() - 1) as i64;
    let dim = grid.dim();
    let mut target = [0usize; 2];
    let mut fits = true;
    for k in 0..dim {
        let j = node[k] as i64 + sign * v[k];
        if !(0..=last).contains(&j) {
            fits = false;
            break;
        }
        target[k] = j as usize;
    }
    let full = grid.h() * vector_norm(v);
    if fits {
        return Arm {
            end: ArmEnd::Node(grid.index(target)),
            length: full,
        };
    }
    let x = grid.coord(index);
    let w = [
        sign as f64 * grid.h() * v[0] as f64,
        sign as f64 * grid.h() * v[1] as f64,
    ];
    let (t, _) = grid
        .ray_clip(&x[..dim], &w[..dim])
        .expect("lattice nodes lie in the cube");
    let mut exit = [0.0; 2];
    for k in 0..dim {
        exit[k] = (x[k] + t * w[k]).clamp(grid.lo(), grid.hi());
    }
    Arm {
        end: ArmEnd::Boundary(g.value(&exit[..dim])),
        length: t * full,
    }
}

#[inline]
fn first_diff_raw(u0: f64, up: f64, lp: f64, um: f64, lm: f64) -> f64 {
    ((up - u0) / lp).max((um - u0) / lm)
}

#[inline]
fn second_diff_raw(u0: f64, up: f64, lp: f64, um: f64, lm: f64) -> f64 {
    if lp == lm {
        (up + um - 2.0 * u0) / (lp * lp)
    } else {
        2.0 * (lm * (up - u0) + lp * (um - u0)) / (lp * lm * (lp + lm))
    }
}

fn assert_interior(u: &GridFunction, index: usize) {
    assert!(
        !u.grid().is_boundary(index),
        "difference operators are only defined at interior nodes (node {index})"
    );
}

fn arm_pair(u: &GridFunction, index: usize, v: GridVector, g: &Obstacle) -> (f64, f64, f64, f64) {
    let grid = u.grid();
    let p = arm(grid, index, v, 1, g);
    let m = arm(grid, index, v, -1, g);
    (p.value(u.values()), p.length, m.value(u.values()), m.length)
}

/// Normalized one-sided first difference `max` over both arms.
pub fn first_diff(u: &GridFunction, index: usize, v: GridVector, g: &Obstacle) -> f64 {
    assert_interior(u, index);
    let (up, lp, um, lm) = arm_pair(u, index, v, g);
    first_diff_raw(u.get(index), up, lp, um, lm)
}

/// Normalized three-point second difference, non-uniform on clipped arms.
pub fn second_diff(u: &GridFunction, index: usize, v: GridVector, g: &Obstacle) -> f64 {
    assert_interior(u, index);
    let (up, lp, um, lm) = arm_pair(u, index, v, g);
    second_diff_raw(u.get(index), up, lp, um, lm)
}

/// `min_v { first_diff / ε + second_diff }`.
pub fn f_eps_scheme(u: &GridFunction, index: usize, params: &SchemeParams) -> f64 {
    assert_interior(u, index);
    let u0 = u.get(index);
    params
        .stencil
        .directions()
        .map(|v| {
            let (up, lp, um, lm) = arm_pair(u, index, v, &params.obstacle);
            first_diff_raw(u0, up, lp, um, lm) / params.epsilon + second_diff_raw(u0, up, lp, um, lm)
        })
        .fold(f64::INFINITY, f64::min)
}

/// The obstacle scheme `G[u](x)`, at any node.
pub fn g_eps_scheme(u: &GridFunction, index: usize, params: &SchemeParams) -> f64 {
    let c = u.grid().coord(index);
    let gap = u.get(index) - params.obstacle.value(&c[..u.grid().dim()]);
    if u.grid().is_boundary(index) {
        gap
    } else {
        gap.max(params.epsilon - f_eps_scheme(u, index, params))
    }
}

/// Minimum curvature over directions whose first difference is at most
/// `eps_r`; `f64::INFINITY` when no direction qualifies.
pub fn robust_scheme(
    u: &GridFunction,
    index: usize,
    eps_r: f64,
    stencil: &StencilSet,
    g: &Obstacle,
) -> f64 {
    assert_interior(u, index);
    let u0 = u.get(index);
    stencil
        .directions()
        .filter_map(|v| {
            let (up, lp, um, lm) = arm_pair(u, index, v, g);
            (first_diff_raw(u0, up, lp, um, lm) <= eps_r).then(|| second_diff_raw(u0, up, lp, um, lm))
        })
        .fold(f64::INFINITY, f64::min)
}

/// `-min_v first_diff / ε`, the pure first-order discretization. With
/// `ε = h/2` its O(h) error supplies the curvature term.
pub fn first_order_scheme(u: &GridFunction, index: usize, params: &SchemeParams) -> f64 {
    assert_interior(u, index);
    let u0 = u.get(index);
    -params
        .stencil
        .directions()
        .map(|v| {
            let (up, lp, um, lm) = arm_pair(u, index, v, &params.obstacle);
            first_diff_raw(u0, up, lp, um, lm)
        })
        .fold(f64::INFINITY, f64::min)
        / params.epsilon
}

/// Which discrete operator drives the obstacle iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    /// `max(u - g, ε - F^ε_h[u])`.
    Full,
    /// `max(u - g, ε - min_v first_diff / ε)`.
    FirstOrder,
    /// `max(u - g, -λ_h[u])` with the constrained curvature of
    /// [`robust_scheme`]; nodes with no admissible direction only feel the
    /// obstacle term.
    Robust { eps_r: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Boundary,
    Deep,
    Near(usize),
}

/// Precomputed arm geometry for one grid, stencil and obstacle.
///
/// Nodes far enough from the boundary read neighbours through fixed index
/// offsets; nodes whose arms may be clipped store their arms explicitly,
/// including the obstacle value at each clipped end.
#[derive(Debug, Clone)]
pub struct StencilPlan {
    grid: Grid,
    slots: Vec<Slot>,
    offsets: Vec<(isize, f64)>,
    /// `(offset, 1/|a|, 1/|a|²)` for the deep-node fast path.
    deep: Vec<(isize, f64, f64)>,
    /// Per row, the half-open index range of deep nodes.
    deep_rows: Vec<(usize, usize)>,
    near: Vec<[Arm; 2]>,
    obstacle_values: Vec<f64>,
}

impl StencilPlan {
    pub fn new(grid: &Grid, stencil: &StencilSet, g: &Obstacle) -> Result<Self> {
        if grid.dim() != stencil.dim() {
            return param("stencil and grid dimensions differ");
        }
        let obstacle_values = g.sample(grid)?.into_values();
        let dirs: Vec<GridVector> = stencil.directions().collect();
        let n = grid.n() as isize;
        let offsets: Vec<(isize, f64)> = dirs
            .iter()
            .map(|v| {
                let off = match grid.dim() {
                    1 => v[0] as isize,
                    _ => v[0] as isize * n + v[1] as isize,
                };
                (off, grid.h() * vector_norm(*v))
            })
            .collect();
        let mut slots = Vec::with_capacity(grid.len());
        let mut near = Vec::new();
        for i in 0..grid.len() {
            if grid.is_boundary(i) {
                slots.push(Slot::Boundary);
                continue;
            }
            let node = grid.node(i);
            let deep = dirs.iter().all(|v| {
                (0..grid.dim()).all(|k| {
                    let lo = node[k] as i64 - v[k].abs();
                    let hi = node[k] as i64 + v[k].abs();
                    lo >= 0 && hi < grid.n() as i64
                })
            });
            if deep {
                slots.push(Slot::Deep);
            } else {
                slots.push(Slot::Near(near.len()));
                for v in &dirs {
                    near.push([arm(grid, i, *v, 1, g), arm(grid, i, *v, -1, g)]);
                }
            }
        }
        let row_len = grid.n();
        let deep_rows = (0..grid.len() / row_len)
            .map(|r| {
                let row = r * row_len..(r + 1) * row_len;
                let mut deep = row.clone().filter(|&i| matches!(slots[i], Slot::Deep));
                match deep.next() {
                    Some(lo) => (lo, deep.next_back().unwrap_or(lo) + 1),
                    None => (row.start, row.start),
                }
            })
            .collect();
        Ok(Self {
            grid: *grid,
            deep_rows,
            slots,
            deep: offsets.iter().map(|&(o, l)| (o, 1.0 / l, 1.0 / (l * l))).collect(),
            offsets,
            near,
            obstacle_values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Obstacle sampled at the nodes.
    pub fn obstacle_values(&self) -> &[f64] {
        &self.obstacle_values
    }

    pub fn directions(&self) -> usize {
        self.offsets.len()
    }

    /// Calls `f(u₊, |a₊|, u₋, |a₋|)` for every direction at interior node `i`.
    #[inline]
    pub fn for_each_pair(&self, u: &[f64], i: usize, mut f: impl FnMut(f64, f64, f64, f64)) {
        match self.slots[i] {
            Slot::Boundary => {}
            Slot::Deep => {
                for &(off, len) in &self.offsets {
                    let p = (i as isize + off) as usize;
                    let m = (i as isize - off) as usize;
                    f(u[p], len, u[m], len);
                }
            }
            Slot::Near(start) => {
                for [p, m] in &self.near[start..start + self.offsets.len()] {
                    f(p.value(u), p.length, m.value(u), m.length);
                }
            }
        }
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        matches!(self.slots[i], Slot::Boundary)
    }

    /// `F^ε_h[u](i)`.
    pub fn f_eps(&self, u: &[f64], i: usize, eps: f64) -> f64 {
        let u0 = u[i];
        if let Slot::Deep = self.slots[i] {
            let inv_eps = 1.0 / eps;
            let mut best = f64::INFINITY;
            for &(off, inv, inv2) in &self.deep {
                let a = u[(i as isize + off) as usize] - u0;
                let b = u[(i as isize - off) as usize] - u0;
                best = best.min(a.max(b) * inv * inv_eps + (a + b) * inv2);
            }
            return best;
        }
        let mut best = f64::INFINITY;
        self.for_each_pair(u, i, |up, lp, um, lm| {
            let val = first_diff_raw(u0, up, lp, um, lm) / eps + second_diff_raw(u0, up, lp, um, lm);
            best = best.min(val);
        });
        best
    }

    /// `min_v first_diff` at node `i`.
    pub fn min_first_diff(&self, u: &[f64], i: usize) -> f64 {
        let u0 = u[i];
        let mut best = f64::INFINITY;
        self.for_each_pair(u, i, |up, lp, um, lm| {
            best = best.min(first_diff_raw(u0, up, lp, um, lm));
        });
        best
    }

    /// Constrained curvature; `INFINITY` when no direction is admissible.
    pub fn robust(&self, u: &[f64], i: usize, eps_r: f64) -> f64 {
        let u0 = u[i];
        let mut best = f64::INFINITY;
        self.for_each_pair(u, i, |up, lp, um, lm| {
            if first_diff_raw(u0, up, lp, um, lm) <= eps_r {
                best = best.min(second_diff_raw(u0, up, lp, um, lm));
            }
        });
        best
    }

    /// Nodes per row of the lattice; rows are the units of parallel work.
    pub fn row_len(&self) -> usize {
        self.grid.n()
    }

    /// Residuals at every node of row `r`, written to `out`.
    pub fn residual_row(&self, u: &[f64], r: usize, eps: f64, scheme: SchemeKind, out: &mut [f64]) {
        let start = r * self.row_len();
        let (lo, hi) = self.deep_rows[r];
        let vector = !matches!(scheme, SchemeKind::Robust { .. });
        for (k, o) in out.iter_mut().enumerate() {
            let i = start + k;
            if !vector || i < lo || i >= hi {
                *o = self.residual(u, i, eps, scheme);
            }
        }
        if !vector || lo == hi {
            return;
        }
        let inv_eps = 1.0 / eps;
        let best = &mut out[lo - start..hi - start];
        best.fill(f64::INFINITY);
        let centre = &u[lo..hi];
        for &(off, inv, inv2) in &self.deep {
            let plus = &u[(lo as isize + off) as usize..(hi as isize + off) as usize];
            let minus = &u[(lo as isize - off) as usize..(hi as isize - off) as usize];
            let (c1, c2) = match scheme {
                SchemeKind::FirstOrder => (inv, 0.0),
                _ => (inv * inv_eps, inv2),
            };
            for (((b, &p), &m), &c) in best.iter_mut().zip(plus).zip(minus).zip(centre) {
                let (a, d) = (p - c, m - c);
                *b = b.min(a.max(d) * c1 + (a + d) * c2);
            }
        }
        let g = &self.obstacle_values[lo..hi];
        for ((b, &c), &gv) in best.iter_mut().zip(centre).zip(g) {
            let pde = match scheme {
                SchemeKind::FirstOrder => eps - *b * inv_eps,
                _ => eps - *b,
            };
            *b = (c - gv).max(pde);
        }
    }

    /// Residual of the obstacle problem for `scheme` at node `i`.
    #[inline]
    pub fn residual(&self, u: &[f64], i: usize, eps: f64, scheme: SchemeKind) -> f64 {
        let gap = u[i] - self.obstacle_values[i];
        if let Slot::Boundary = self.slots[i] {
            return gap;
        }
        let pde = match scheme {
            SchemeKind::Full => eps - self.f_eps(u, i, eps),
            SchemeKind::FirstOrder => eps - self.min_first_diff(u, i) / eps,
            SchemeKind::Robust { eps_r } => {
                let lambda = self.robust(u, i, eps_r);
                if lambda.is_infinite() {
                    return gap;
                }
                -lambda
            }
        };
        gap.max(pde)
    }
}

/// `u(x) = xᵀAx + bᵀx + c` with `A` symmetric; gradient `2Ax + b`, Hessian `2A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTestFunction {
    pub dim: usize,
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: f64,
}

impl QuadraticTestFunction {
    pub fn new(dim: usize, a: [[f64; 2]; 2], b: [f64; 2], c: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return param(format!("dimension must be 1 or 2, got {dim}"));
        }
        if a[0][1] != a[1][0] {
            return param("quadratic form must be symmetric");
        }
        let mut q = Self { dim, a, b, c };
        if dim == 1 {
            q.a = [[a[0][0], 0.0], [0.0, 0.0]];
            q.b = [b[0], 0.0];
        }
        Ok(q)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.c;
        for i in 0..self.dim {
            v += self.b[i] * x[i];
            for j in 0..self.dim {
                v += x[i] * self.a[i][j] * x[j];
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for i in 0..self.dim {
            p[i] = self.b[i];
            for j in 0..self.dim {
                p[i] += 2.0 * self.a[i][j] * x[j];
            }
        }
        p
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let a = self.a;
        [[2.0 * a[0][0], 2.0 * a[0][1]], [2.0 * a[1][0], 2.0 * a[1][1]]]
    }

    pub fn sample(&self, grid: &Grid) -> GridFunction {
        GridFunction::from_fn(*grid, |x| self.value(x))
    }
}

/// Default number of angular samples for the continuous-operator oracles.
pub const ORACLE_SAMPLES: usize = 1 << 16;

#[inline]
fn quad_form(m: &[[f64; 2]; 2], c: f64, s: f64) -> f64 {
    m[0][0] * c * c + 2.0 * m[0][1] * c * s + m[1][1] * s * s
}

fn min_eigenvalue(m: &[[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half = 0.5 * (m[0][0] - m[1][1]);
    mean - half.hypot(m[0][1])
}

/// Golden-section minimization on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `min_{|v|=1} |v·p|/ε + vᵀMv`, by a uniform angular sweep followed by
/// golden-section polishing of every sampled local minimum. The tangential
/// direction, where the objective has a kink, is always a candidate.
pub fn f_eps_exact_pm(dim: usize, p: [f64; 2], m: [[f64; 2]; 2], eps: f64, samples: usize) -> f64 {
    if dim == 1 {
        return p[0].abs() / eps + m[0][0];
    }
    let samples = samples.max(16);
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        (p[0] * c + p[1] * s).abs() / eps + quad_form(&m, c, s)
    };
    let step = PI / samples as f64;
    let vals: Vec<f64> = (0..samples).map(|k| f(k as f64 * step)).collect();
    let mut best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    for k in 0..samples {
        let prev = vals[(k + samples - 1) % samples];
        let next = vals[(k + 1) % samples];
        if vals[k] <= prev && vals[k] <= next {
            let t = k as f64 * step;
            let (_, fv) = golden_section(f, t - step, t + step);
            best = best.min(fv);
        }
    }
    if p[0] != 0.0 || p[1] != 0.0 {
        best = best.min(f(p[1].atan2(p[0]) + PI / 2.0));
    }
    best
}

/// Continuous `F^ε` for a quadratic at the point `x`.
pub fn f_eps_exact(q: &QuadraticTestFunction, x: &[f64], eps: f64, samples: usize) -> f64 {
    f_eps_exact_pm(q.dim, q.gradient(x), q.hessian(), eps, samples)
}

/// Constraint set of the level-set curvature operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// `v·p = 0`.
    Equality,
    /// `|v·p| <= eps_r`.
    Relaxed(f64),
}

/// `min vᵀMv` over unit `v` in the constraint set; `INFINITY` when empty.
///
/// In 2D the minimum of a quadratic form over an arc is attained at an arc
/// endpoint or at an eigen-direction inside the arc, so the candidates are
/// enumerated exactly.
pub fn lambda_exact_pm(dim: usize, p: [f64; 2], m: [[f64; 2]; 2], constraint: Constraint) -> f64 {
    let pn = p[0].hypot(p[1]);
    if dim == 1 {
        let admissible = match constraint {
            Constraint::Equality => p[0] == 0.0,
            Constraint::Relaxed(r) => p[0].abs() <= r,
        };
        return if admissible { m[0][0] } else { f64::INFINITY };
    }
    match constraint {
        Constraint::Equality => {
            if pn == 0.0 {
                min_eigenvalue(&m)
            } else {
                quad_form(&m, -p[1] / pn, p[0] / pn)
            }
        }
        Constraint::Relaxed(r) => {
            if pn <= r {
                return min_eigenvalue(&m);
            }
            let phi = p[1].atan2(p[0]);
            let beta = (r / pn).acos();
            let feasible = |t: f64| (p[0] * t.cos() + p[1] * t.sin()).abs() <= r * (1.0 + 1e-12);
            let eig = 0.5 * (2.0 * m[0][1]).atan2(m[0][0] - m[1][1]);
            [phi + beta, phi + PI - beta, eig, eig + PI / 2.0]
                .into_iter()
                .filter(|&t| feasible(t))
                .map(|t| quad_form(&m, t.cos(), t.sin()))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn lambda_exact(q: &QuadraticTestFunction, x: &[f64], constraint: Constraint) -> f64 {
    lambda_exact_pm(q.dim, q.gradient(x), q.hessian(), constraint)
}
