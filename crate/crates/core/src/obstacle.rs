//! Obstacle functions `g`, evaluable anywhere on the closed cube.
//!
//! Boundary-clipped stencil arms sample `g` off the lattice, so every obstacle
//! is a total function of the coordinate rather than a table of node values.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{param, Result};
use crate::grid::{Grid, GridFunction};

type Evaluator = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Number of chords used to approximate the circular part of the pacman curve.
pub const PACMAN_ARC_SEGMENTS: usize = 4096;

#[derive(Clone)]
pub struct Obstacle {
    name: String,
    dim: usize,
    lo: f64,
    hi: f64,
    continuous: bool,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for Obstacle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Obstacle")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &(self.lo, self.hi))
            .finish()
    }
}

impl Obstacle {
    /// Wrap an arbitrary evaluator defined on `[lo, hi]^dim`.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        lo: f64,
        hi: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return param(format!("dimension must be 1 or 2, got {dim}"));
        }
        if !(lo < hi) {
            return param(format!("invalid extent [{lo}, {hi}]"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            lo,
            hi,
            continuous: true,
            eval: Arc::new(f),
        })
    }

    fn on_unit_cube(
        name: &str,
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::custom(name, dim, -1.0, 1.0, f).expect("static obstacle definition")
    }

    /// `g(x) = min(|x - 0.5|, |x + 0.5| - 0.3)`.
    pub fn double_well_1d() -> Self {
        Self::on_unit_cube("double-well", 1, |x| {
            (x[0] - 0.5).abs().min((x[0] + 0.5).abs() - 0.3)
        })
    }

    /// `g(x) = 1 - x^2`, whose quasiconvex envelope with these boundary values
    /// is identically 0.
    pub fn inverted_parabola_1d() -> Self {
        Self::on_unit_cube("parabola", 1, |x| 1.0 - x[0] * x[0])
    }

    /// Signed distance to the boundary of the square `max_i |x_i| <= 1/2`,
    /// negative inside.
    pub fn square_sdf() -> Self {
        Self::on_unit_cube("square", 2, |x| {
            let (a, b) = (x[0].abs(), x[1].abs());
            if a <= 0.5 && b <= 0.5 {
                a.max(b) - 0.5
            } else {
                let dx = (a - 0.5).max(0.0);
                let dy = (b - 0.5).max(0.0);
                dx.hypot(dy)
            }
        })
    }

    /// Signed distance to the closed curve made of the circle of radius 1/2
    /// minus its third quadrant, closed by the two radii along the negative
    /// axes. Negative inside the three-quarter disk.
    pub fn pacman_sdf() -> Self {
        let polygon = Arc::new(pacman_polygon(PACMAN_ARC_SEGMENTS));
        Self::on_unit_cube("pacman", 2, move |x| {
            let p = [x[0], x[1]];
            let d = polyline_distance(&polygon, p);
            if point_in_polygon(&polygon, p) {
                -d
            } else {
                d
            }
        })
    }

    /// The cone `|x| - 1/2` raised to 1 on four disks of radius 1/4 centred at
    /// `(±1/2, 0)` and `(0, ±1/2)`. Discontinuous on the disk edges.
    pub fn cone_with_circles() -> Self {
        let mut ob = Self::on_unit_cube("circles", 2, |x| {
            let r2 = 1.0 / 16.0;
            let in_disk = |cx: f64, cy: f64| (x[0] - cx).powi(2) + (x[1] - cy).powi(2) <= r2;
            if in_disk(0.5, 0.0) || in_disk(-0.5, 0.0) || in_disk(0.0, 0.5) || in_disk(0.0, -0.5) {
                1.0
            } else {
                x[0].hypot(x[1]) - 0.5
            }
        });
        ob.continuous = false;
        ob
    }

    /// Obstacle from a node dump; off-lattice points take the value of the
    /// nearest node. Lower fidelity than an analytic evaluator, since clipped
    /// stencil arms see a piecewise-constant boundary profile.
    pub fn from_grid_function(name: impl Into<String>, u: GridFunction) -> Self {
        let grid = *u.grid();
        let mut ob = Self::custom(name, grid.dim(), grid.lo(), grid.hi(), move |x| {
            let g = u.grid();
            let mut node = [0usize; 2];
            for k in 0..g.dim() {
                let s = ((x[k] - g.lo()) / g.h()).round();
                node[k] = s.clamp(0.0, (g.n() - 1) as f64) as usize;
            }
            u.at(node)
        })
        .expect("grid functions have valid extents");
        ob.continuous = false;
        ob
    }

    /// Corpus obstacle by its command-line name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "double-well" => Ok(Self::double_well_1d()),
            "parabola" => Ok(Self::inverted_parabola_1d()),
            "square" => Ok(Self::square_sdf()),
            "pacman" => Ok(Self::pacman_sdf()),
            "circles" => Ok(Self::cone_with_circles()),
            other => param(format!(
                "unknown example {other:?}; expected one of {}",
                CORPUS.join(", ")
            )),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    /// `g(x)`, rejecting points outside the closed cube.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let slack = 1e-9 * (self.hi - self.lo);
        if x.len() != self.dim || x.iter().any(|&c| c < self.lo - slack || c > self.hi + slack) {
            return Err(crate::error::Error::OutOfDomain {
                point: x.to_vec(),
                lo: self.lo,
                hi: self.hi,
                dim: self.dim,
            });
        }
        Ok(self.value(x))
    }

    /// `g(x)` without the domain check.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Sample onto the nodes of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        if grid.dim() != self.dim {
            return param(format!(
                "obstacle {} is {}-dimensional but the grid is {}-dimensional",
                self.name,
                self.dim,
                grid.dim()
            ));
        }
        let slack = 1e-9 * (self.hi - self.lo);
        if grid.lo() < self.lo - slack || grid.hi() > self.hi + slack {
            return param(format!(
                "grid extent [{}, {}] exceeds the domain of obstacle {}",
                grid.lo(),
                grid.hi(),
                self.name
            ));
        }
        GridFunction::new(*grid, {
            let mut v = Vec::with_capacity(grid.len());
            for i in 0..grid.len() {
                let c = grid.coord(i);
                v.push(self.value(&c[..self.dim]));
            }
            v
        })
    }
}

/// Command-line names of the built-in obstacles.
pub const CORPUS: [&str; 5] = ["double-well", "parabola", "square", "pacman", "circles"];

/// Closed polygon: origin, then the arc from angle -pi/2 counterclockwise to
/// pi, then back to the origin.
fn pacman_polygon(arc_segments: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(arc_segments + 2);
    pts.push([0.0, 0.0]);
    for k in 0..=arc_segments {
        let t = -PI / 2.0 + 1.5 * PI * k as f64 / arc_segments as f64;
        pts.push([0.5 * t.cos(), 0.5 * t.sin()]);
    }
    // Snap the arc ends onto the axes so the radii are exact.
    pts[1] = [0.0, -0.5];
    pts[arc_segments + 1] = [-0.5, 0.0];
    pts
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn polyline_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd ray casting.
fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn double_well_values() {
        let g = Obstacle::double_well_1d();
        assert!((g.eval(&[-0.5]).unwrap() + 0.3).abs() < 1e-15);
        assert_eq!(g.eval(&[0.5]).unwrap(), 0.0);
        assert!((g.eval(&[0.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn parabola_values() {
        let g = Obstacle::inverted_parabola_1d();
        assert_eq!(g.eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(g.eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(g.eval(&[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn square_values() {
        let g = Obstacle::square_sdf();
        assert_eq!(g.eval(&[0.0, 0.0]).unwrap(), -0.5);
        assert_eq!(g.eval(&[0.75, 0.0]).unwrap(), 0.25);
        assert_eq!(g.eval(&[0.5, 0.5]).unwrap(), 0.0);
        assert!((g.eval(&[1.0, 1.0]).unwrap() - 0.5f64.hypot(0.5)).abs() < 1e-15);
    }

    #[test]
    fn pacman_values() {
        let g = Obstacle::pacman_sdf();
        assert!(g.eval(&[0.0, -0.5]).unwrap().abs() < 1e-3);
        assert!(g.eval(&[0.0, 0.0]).unwrap().abs() < 1e-3);
        // (-0.25, 0) lies on the radius closing the curve along the negative x-axis.
        assert!(g.eval(&[-0.25, 0.0]).unwrap().abs() < 1e-3);
        assert!((g.eval(&[0.25, 0.0]).unwrap() + 0.25).abs() < 1e-3);
        assert!((g.eval(&[0.0, 0.25]).unwrap() + 0.25).abs() < 1e-3);
        // Inside the removed quadrant the point is outside the region.
        assert!((g.eval(&[-0.25, -0.25]).unwrap() - 0.25).abs() < 1e-3);
        assert!((g.eval(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn circles_values() {
        let g = Obstacle::cone_with_circles();
        assert_eq!(g.eval(&[0.5, 0.0]).unwrap(), 1.0);
        assert_eq!(g.eval(&[0.0, -0.5]).unwrap(), 1.0);
        assert_eq!(g.eval(&[0.0, 0.0]).unwrap(), -0.5);
        assert!((g.eval(&[1.0, 1.0]).unwrap() - (2f64.sqrt() - 0.5)).abs() < 1e-15);
        assert!(!g.is_continuous());
    }

    #[test]
    fn eval_rejects_points_outside_cube() {
        let g = Obstacle::square_sdf();
        assert!(g.eval(&[1.5, 0.0]).is_err());
        assert!(g.eval(&[0.0]).is_err());
        assert!(Obstacle::double_well_1d().eval(&[-1.2]).is_err());
    }

    #[test]
    fn unknown_corpus_name() {
        assert!(Obstacle::by_name("bogus").is_err());
        for name in CORPUS {
            assert_eq!(Obstacle::by_name(name).unwrap().name(), name);
        }
    }

    #[test]
    fn signed_distances_are_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in [Obstacle::square_sdf(), Obstacle::pacman_sdf()] {
            for _ in 0..2000 {
                let x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                let y = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                let lhs = (g.value(&x) - g.value(&y)).abs();
                let rhs = (x[0] - y[0]).hypot(x[1] - y[1]) + 1e-3;
                assert!(lhs <= rhs, "{}: {x:?} {y:?}", g.name());
            }
        }
    }

    #[test]
    fn square_matches_brute_force_distance() {
        // 1e5 points on the square boundary.
        let per_side = 25_000;
        let mut boundary = Vec::with_capacity(4 * per_side);
        for k in 0..per_side {
            let s = -0.5 + k as f64 / per_side as f64;
            boundary.extend([[s, -0.5], [0.5, s], [-s, 0.5], [-0.5, -s]]);
        }
        let g = Obstacle::square_sdf();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let d = boundary
                .iter()
                .map(|b| (x[0] - b[0]).hypot(x[1] - b[1]))
                .fold(f64::INFINITY, f64::min);
            let inside = x[0].abs() < 0.5 && x[1].abs() < 0.5;
            let expected = if inside { -d } else { d };
            assert!((g.value(&x) - expected).abs() < 1e-3, "{x:?}");
        }
    }

    #[test]
    fn sampling_is_exact_at_nodes() {
        let grid = Grid::new(2, 9).unwrap();
        let g = Obstacle::pacman_sdf();
        let s = g.sample(&grid).unwrap();
        for i in 0..grid.len() {
            let c = grid.coord(i);
            assert_eq!(s.get(i), g.value(&c));
        }
        assert!(g.sample(&Grid::new(1, 9).unwrap()).is_err());
    }

    #[test]
    fn nearest_node_obstacle() {
        let grid = Grid::new(1, 5).unwrap();
        let u = GridFunction::from_fn(grid, |x| x[0] * 2.0);
        let g = Obstacle::from_grid_function("dump", u);
        assert_eq!(g.value(&[0.5]), 1.0);
        assert_eq!(g.value(&[0.6]), 1.0);
        assert_eq!(g.value(&[0.8]), 2.0);
    }
}
