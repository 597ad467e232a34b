//! Uniform node-centred grids on a cube and real-valued grid functions.
//!
//! Nodes are stored densely in row-major order: in 2D the linear index of the
//! node `(i, j)` is `i * n + j`, where `i` indexes the first coordinate. The
//! faces of the cube are part of the lattice, so a grid with `n` points per
//! axis has spacing `h = (hi - lo) / (n - 1)`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{param, Error, Result};

/// Largest supported number of points per axis in 2D.
pub const MAX_POINTS_2D: usize = 513;

/// Relative slack used when deciding whether a coordinate lies on a lattice
/// node or on the closed cube.
const LATTICE_SLACK: f64 = 1e-9;

/// A lattice node given by its per-axis indices. Unused trailing entries are 0.
pub type Node = [usize; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    lo: f64,
    hi: f64,
    h: f64,
}

impl Grid {
    /// Grid on `[-1, 1]^dim` with `points_per_axis` nodes per axis.
    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::with_bounds(dim, points_per_axis, -1.0, 1.0)
    }

    /// Grid on the cube `[lo, hi]^dim`.
    pub fn with_bounds(dim: usize, points_per_axis: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return param(format!("dimension must be 1 or 2, got {dim}"));
        }
        if points_per_axis < 3 {
            return param(format!(
                "need at least 3 points per axis, got {points_per_axis}"
            ));
        }
        if dim == 2 && points_per_axis > MAX_POINTS_2D {
            return param(format!(
                "2D grids support at most {MAX_POINTS_2D} points per axis, got {points_per_axis}"
            ));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return param(format!("invalid extent [{lo}, {hi}]"));
        }
        let h = (hi - lo) / (points_per_axis - 1) as f64;
        Ok(Self {
            dim,
            n: points_per_axis,
            lo,
            hi,
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, node: Node) -> usize {
        match self.dim {
            1 => node[0],
            _ => node[0] * self.n + node[1],
        }
    }

    pub fn node(&self, index: usize) -> Node {
        match self.dim {
            1 => [index, 0],
            _ => [index / self.n, index % self.n],
        }
    }

    /// Coordinate of a single axis index. Exact at both faces.
    pub fn axis_coord(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
        }
    }

    /// Coordinates of the node with linear index `index`; the second entry is
    /// 0 in 1D.
    pub fn coord(&self, index: usize) -> [f64; 2] {
        let node = self.node(index);
        let mut c = [0.0; 2];
        for k in 0..self.dim {
            c[k] = self.axis_coord(node[k]);
        }
        c
    }

    /// Lattice node at coordinate `x`, if `x` is one.
    pub fn locate(&self, x: &[f64]) -> Result<Node> {
        self.check_dim(x)?;
        let mut node = [0usize; 2];
        for k in 0..self.dim {
            let s = (x[k] - self.lo) / self.h;
            let i = s.round();
            if !(0.0..=(self.n - 1) as f64).contains(&i) || (s - i).abs() > LATTICE_SLACK * self.n as f64 {
                return param(format!("{x:?} is not a lattice node"));
            }
            node[k] = i as usize;
        }
        Ok(node)
    }

    pub fn kind(&self, index: usize) -> NodeKind {
        let node = self.node(index);
        if node[..self.dim].iter().any(|&i| i == 0 || i == self.n - 1) {
            NodeKind::Boundary
        } else {
            NodeKind::Interior
        }
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        self.kind(index) == NodeKind::Boundary
    }

    /// Classify the node at coordinate `x`.
    pub fn classify(&self, x: &[f64]) -> Result<NodeKind> {
        let node = self.locate(x)?;
        Ok(self.kind(self.index(node)))
    }

    /// Whether `x` lies in the closed cube, with a small slack for rounding.
    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = LATTICE_SLACK * (self.hi - self.lo);
        x.len() == self.dim
            && x
                .iter()
                .all(|&c| c >= self.lo - slack && c <= self.hi + slack)
    }

    /// Distances `(t_plus, t_minus)`, in units of `w`, that can be travelled
    /// from `x` along `+w` and `-w` before leaving the cube.
    pub fn ray_clip(&self, x: &[f64], w: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        self.check_dim(w)?;
        if w.iter().all(|&c| c == 0.0) {
            return param("ray direction must be nonzero");
        }
        if !self.contains(x) {
            return Err(self.out_of_domain(x));
        }
        let exit = |sign: f64| {
            let mut t = f64::INFINITY;
            for k in 0..self.dim {
                let wk = sign * w[k];
                if wk > 0.0 {
                    t = t.min((self.hi - x[k]) / wk);
                } else if wk < 0.0 {
                    t = t.min((self.lo - x[k]) / wk);
                }
            }
            t.max(0.0)
        };
        Ok((exit(1.0), exit(-1.0)))
    }

    pub(crate) fn out_of_domain(&self, x: &[f64]) -> Error {
        Error::OutOfDomain {
            point: x.to_vec(),
            lo: self.lo,
            hi: self.hi,
            dim: self.dim,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return param(format!(
                "expected a {}-dimensional point, got {}",
                self.dim,
                x.len()
            ));
        }
        Ok(())
    }

    /// Iterator over the linear indices of interior nodes.
    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_boundary(i))
    }

    /// The CSV header line describing this grid.
    pub fn csv_header(&self) -> String {
        format!("# dim={} N={} h={}", self.dim, self.n, self.h)
    }
}

/// Real values attached to every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return param(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return param(format!("non-finite value at node {i}"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let c = grid.coord(i);
                f(&c[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn at(&self, node: Node) -> f64 {
        self.values[self.grid.index(node)]
    }

    /// Value at a lattice coordinate.
    pub fn at_coord(&self, x: &[f64]) -> Result<f64> {
        Ok(self.at(self.grid.locate(x)?))
    }

    /// Piecewise (multi)linear interpolation at any point of the closed cube.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        if !self.grid.contains(x) {
            return Err(self.grid.out_of_domain(x));
        }
        Ok(self.interpolate_unchecked(x))
    }

    pub(crate) fn interpolate_unchecked(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let last = g.n - 1;
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..g.dim {
            let s = ((x[k] - g.lo) / g.h).clamp(0.0, last as f64);
            let i = (s.floor() as usize).min(last - 1);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        match g.dim {
            1 => {
                let a = self.values[base[0]];
                let b = self.values[base[0] + 1];
                a + frac[0] * (b - a)
            }
            _ => {
                let v = |i: usize, j: usize| self.values[i * g.n + j];
                let (i, j) = (base[0], base[1]);
                let (s, t) = (frac[0], frac[1]);
                (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1))
                    + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
            }
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm distance to another function on the same grid.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.grid, other.grid, "grid functions live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Pointwise `self - other`.
    pub fn difference(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.grid, other.grid, "grid functions live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    /// Write the CSV dump: the grid header line, any extra `#` comment lines,
    /// then `x1[,x2],value` per node in index order.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        writeln!(out, "{}", self.grid.csv_header())?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.coord(i);
            match self.grid.dim {
                1 => writeln!(out, "{},{}", c[0], v)?,
                _ => writeln!(out, "{},{},{}", c[0], c[1], v)?,
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), comments)
    }

    /// Read a dump produced by [`GridFunction::write_csv`]. The grid is
    /// rebuilt from the node coordinates, so non-default extents survive.
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let (dim, n) = parse_header(first.trim()).ok_or_else(|| bad(format!("bad header {first:?}")))?;

        let mut rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for record in rows.records() {
            let record = record?;
            if record.len() != dim + 1 {
                return Err(bad(format!("expected {} columns, got {}", dim + 1, record.len())));
            }
            let mut fields = record.iter().map(|f| f.parse::<f64>());
            let mut c = [0.0; 2];
            for slot in c.iter_mut().take(dim) {
                *slot = fields.next().unwrap().map_err(|e| bad(e.to_string()))?;
            }
            coords.push(c);
            values.push(fields.next().unwrap().map_err(|e| bad(e.to_string()))?);
        }
        let expected = n.pow(dim as u32);
        if values.len() != expected {
            return Err(bad(format!("expected {expected} rows, got {}", values.len())));
        }
        let lo = coords[0][0];
        let hi = coords[expected - 1][0];
        let grid = Grid::with_bounds(dim, n, lo, hi)?;
        for (i, c) in coords.iter().enumerate() {
            let expected = grid.coord(i);
            let tol = 1e-9 * (hi - lo);
            if (0..dim).any(|k| (c[k] - expected[k]).abs() > tol) {
                return Err(bad(format!("row {i} is out of lexicographic order")));
            }
        }
        GridFunction::new(grid, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, path)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix('#')?;
    let mut dim = None;
    let mut n = None;
    for token in rest.split_whitespace() {
        let (key, value) = token.split_once('=')?;
        match key {
            "dim" => dim = value.parse().ok(),
            "N" => n = value.parse().ok(),
            _ => {}
        }
    }
    Some((dim?, n?))
}
