//! Strictly quasiconvex envelopes on uniform grids.
//!
//! The envelope is computed as the solution of the penalized obstacle problem
//! `max(u - g, ε - F^ε[u]) = 0`, `u = g` on the boundary, where
//! `F^ε[u] = min_{|v|=1} |∇u·v|/ε + vᵀD²u v`, discretized with a monotone
//! wide-stencil scheme and solved by explicit Euler iteration.

pub mod envelope1d;
pub mod error;
pub mod grid;
pub mod obstacle;
pub mod operators;
pub mod solver;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
pub use obstacle::Obstacle;
pub use operators::{SchemeKind, SchemeParams};
pub use solver::{solve, Acceleration, Init, SolveReport, SolverConfig};
pub use stencil::StencilSet;
