//! Symmetric wide stencils of reduced integer grid vectors.

use std::f64::consts::PI;

use crate::error::{param, Result};

/// An integer lattice displacement. The second entry is 0 in 1D.
pub type GridVector = [i64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct StencilSet {
    dim: usize,
    width: usize,
    vectors: Vec<GridVector>,
    dtheta: f64,
}

impl StencilSet {
    /// All gcd-reduced nonzero integer vectors in `[-W, W]^dim`.
    pub fn new(dim: usize, width: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return param(format!("dimension must be 1 or 2, got {dim}"));
        }
        if width < 1 {
            return param("stencil width must be at least 1");
        }
        let w = width as i64;
        let vectors: Vec<GridVector> = match dim {
            1 => vec![[1, 0], [-1, 0]],
            _ => {
                let mut v = Vec::new();
                for a in -w..=w {
                    for b in -w..=w {
                        if (a, b) != (0, 0) && gcd(a.unsigned_abs(), b.unsigned_abs()) == 1 {
                            v.push([a, b]);
                        }
                    }
                }
                v
            }
        };
        let dtheta = directional_resolution(dim, &vectors)?;
        Ok(Self {
            dim,
            width,
            vectors,
            dtheta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The full symmetric vector set.
    pub fn vectors(&self) -> &[GridVector] {
        &self.vectors
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    /// One representative per antipodal pair: the vector whose first nonzero
    /// entry is positive. Every scheme uses both arms `x ± hv`, so the pair
    /// members give identical values.
    pub fn directions(&self) -> impl Iterator<Item = GridVector> + '_ {
        self.vectors
            .iter()
            .copied()
            .filter(|v| v[0] > 0 || (v[0] == 0 && v[1] > 0))
    }
}

/// Largest angle between an arbitrary unit vector and the nearest direction
/// in `vectors`. Exact in 2D via the largest angular gap; 0 in 1D.
pub fn directional_resolution(dim: usize, vectors: &[GridVector]) -> Result<f64> {
    if vectors.is_empty() {
        return param("directional resolution of an empty vector set");
    }
    if vectors.iter().any(|v| v[0] == 0 && v[1] == 0) {
        return param("zero vector in stencil");
    }
    if dim == 1 {
        return Ok(0.0);
    }
    let mut angles: Vec<f64> = vectors
        .iter()
        .map(|v| (v[1] as f64).atan2(v[0] as f64).rem_euclid(2.0 * PI))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let mut gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    Ok(gap / 2.0)
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<GridVector>) -> Vec<GridVector> {
        v.sort();
        v
    }

    #[test]
    fn width_one_stencil() {
        let s = StencilSet::new(2, 1).unwrap();
        let expected = vec![
            [0, 1],
            [0, -1],
            [1, 0],
            [-1, 0],
            [1, 1],
            [-1, -1],
            [-1, 1],
            [1, -1],
        ];
        assert_eq!(sorted(s.vectors().to_vec()), sorted(expected));
        assert!((s.dtheta() - PI / 8.0).abs() < 1e-15);
        assert_eq!(s.directions().count(), 4);
    }

    #[test]
    fn width_two_stencil() {
        let s = StencilSet::new(2, 2).unwrap();
        assert_eq!(s.vectors().len(), 16);
        for v in [[1, 2], [-1, 2], [2, 1], [2, -1], [-2, -1], [1, -2]] {
            assert!(s.vectors().contains(&v));
        }
        assert!(!s.vectors().contains(&[2, 2]));
        assert!((s.dtheta() - 0.5f64.atan() / 2.0).abs() < 1e-15);
        assert!((s.dtheta() - 0.2318).abs() < 1e-4);
    }

    #[test]
    fn one_dimensional_stencil_ignores_width() {
        for w in [1, 3, 7] {
            let s = StencilSet::new(1, w).unwrap();
            assert_eq!(sorted(s.vectors().to_vec()), vec![[-1, 0], [1, 0]]);
            assert_eq!(s.dtheta(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StencilSet::new(2, 0).is_err());
        assert!(StencilSet::new(3, 1).is_err());
        assert!(directional_resolution(2, &[]).is_err());
    }

    #[test]
    fn symmetric_reduced_and_distinct() {
        for w in 1..=8 {
            let s = StencilSet::new(2, w).unwrap();
            for v in s.vectors() {
                assert!(s.vectors().contains(&[-v[0], -v[1]]));
                assert!(v[0].unsigned_abs() as usize <= w && v[1].unsigned_abs() as usize <= w);
                assert_eq!(gcd(v[0].unsigned_abs(), v[1].unsigned_abs()), 1);
            }
            for (i, a) in s.vectors().iter().enumerate() {
                for b in &s.vectors()[i + 1..] {
                    let parallel = a[0] * b[1] == a[1] * b[0] && a[0] * b[0] + a[1] * b[1] > 0;
                    assert!(!parallel, "{a:?} and {b:?} point the same way");
                }
            }
            assert!(s.dtheta() <= PI / 4.0);
        }
    }

    #[test]
    fn count_matches_octant_enumeration() {
        for w in 1..=8i64 {
            let octant = (1..=w)
                .flat_map(|a| (1..a).map(move |b| (a, b)))
                .filter(|&(a, b)| gcd(a as u64, b as u64) == 1)
                .count();
            let s = StencilSet::new(2, w as usize).unwrap();
            assert_eq!(s.vectors().len(), 8 + 8 * octant, "W = {w}");
        }
    }

    #[test]
    fn closed_form_resolution_holds_up_to_width_eight() {
        let mut prev = f64::INFINITY;
        for w in 1..=8 {
            let s = StencilSet::new(2, w).unwrap();
            let closed = (1.0 / w as f64).atan() / 2.0;
            assert!((s.dtheta() - closed).abs() < 1e-14, "W = {w}");
            assert!(s.dtheta() <= prev);
            prev = s.dtheta();
        }
    }

    /// Max-min definition evaluated by brute force over sampled unit vectors.
    fn sampled_resolution(vectors: &[GridVector], samples: usize) -> f64 {
        let dirs: Vec<(f64, f64)> = vectors
            .iter()
            .map(|v| {
                let n = ((v[0] * v[0] + v[1] * v[1]) as f64).sqrt();
                (v[0] as f64 / n, v[1] as f64 / n)
            })
            .collect();
        (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                let (c, s) = (t.cos(), t.sin());
                dirs.iter()
                    .map(|&(a, b)| (c * a + s * b).clamp(-1.0, 1.0).acos())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn exact_resolution_matches_sampled_definition() {
        for w in [1, 2, 3, 5] {
            let s = StencilSet::new(2, w).unwrap();
            let sampled = sampled_resolution(s.vectors(), 100_000);
            assert!((sampled - s.dtheta()).abs() < 1e-4, "W = {w}");
        }
    }

    #[test]
    fn resolution_is_rotation_invariant() {
        // Rotating every direction by a common angle keeps the angular gaps.
        let s = StencilSet::new(2, 3).unwrap();
        let rot = 0.3f64;
        let angles: Vec<f64> = s
            .vectors()
            .iter()
            .map(|v| (v[1] as f64).atan2(v[0] as f64) + rot)
            .collect();
        let samples = 100_000;
        let sampled = (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                angles
                    .iter()
                    .map(|a| (t.cos() * a.cos() + t.sin() * a.sin()).clamp(-1.0, 1.0).acos())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!((sampled - s.dtheta()).abs() < 1e-4);
    }
}
