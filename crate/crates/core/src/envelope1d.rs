//! One-dimensional quasiconvex envelopes and the closed-form solution of
//! `ε u'' + |u'| = ε²` on an interval.

use crate::error::{param, Result};

/// Largest quasiconvex sequence below `a`: the elementwise maximum of the
/// running minimum from the left and the running minimum from the right.
pub fn qce_line(a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    qce_line_in_place(&mut out);
    out
}

/// In-place [`qce_line`]. Endpoints are never changed.
pub fn qce_line_in_place(a: &mut [f64]) {
    let n = a.len();
    if n < 3 {
        return;
    }
    let mut suffix = vec![0.0; n];
    let mut run = f64::INFINITY;
    for i in (0..n).rev() {
        run = run.min(a[i]);
        suffix[i] = run;
    }
    let mut prefix = f64::INFINITY;
    for i in 0..n {
        prefix = prefix.min(a[i]);
        a[i] = prefix.max(suffix[i]);
    }
}

/// True when `a` is nonincreasing then nondecreasing.
pub fn is_quasiconvex(a: &[f64]) -> bool {
    let mut rising = false;
    for w in a.windows(2) {
        if w[1] > w[0] {
            rising = true;
        } else if w[1] < w[0] && rising {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// `u = ε² x`.
    LinearPlus,
    /// `u = -ε² x`.
    LinearMinus,
    /// `u = ε² x + C⁺ (1 - e^{-x/ε})`, strictly increasing.
    Increasing,
    /// `u = -ε² x + C⁻ (1 - e^{x/ε})`, strictly decreasing.
    Decreasing,
    /// `u = φ(|x - x*|) + u₀` with `φ(s) = ε² s + ε³ (e^{-s/ε} - 1)`.
    InteriorMin,
}

/// Solution of `ε u'' + |u'| = ε²` on `[0, length]` with `u(0) = 0` and
/// `u(length) = rise`.
///
/// The monotone profiles cover `|S| ≥ S_c` where
/// `S = rise / (ε² length)` and `S_c = 1 - (ε/length)(1 - e^{-length/ε}) < 1`;
/// an interior minimum only exists for `|S| < S_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analytic1DCase {
    pub length: f64,
    pub rise: f64,
    pub epsilon: f64,
    pub s: f64,
    pub kind: CaseKind,
    pub c_plus: Option<f64>,
    pub c_minus: Option<f64>,
    pub x_star: Option<f64>,
    pub u0: Option<f64>,
}

const LINEAR_TOL: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-12;

fn phi(s: f64, eps: f64) -> f64 {
    eps * eps * s + eps.powi(3) * (-s / eps).exp_m1()
}

/// Threshold on `|S|` below which the solution has an interior minimum.
pub fn interior_threshold(length: f64, eps: f64) -> f64 {
    1.0 + (eps / length) * (-length / eps).exp_m1()
}

/// Classifies the boundary data and fits the constants.
pub fn classify_case(length: f64, rise: f64, eps: f64) -> Result<Analytic1DCase> {
    if !(length > 0.0 && length.is_finite()) {
        return param(format!("interval length must be positive, got {length}"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return param(format!("epsilon must be positive, got {eps}"));
    }
    if !rise.is_finite() {
        return param("boundary rise must be finite");
    }
    let s = rise / (eps * eps * length);
    let sc = interior_threshold(length, eps);
    let kind = if (s - 1.0).abs() <= LINEAR_TOL {
        CaseKind::LinearPlus
    } else if (s + 1.0).abs() <= LINEAR_TOL {
        CaseKind::LinearMinus
    } else if s >= sc {
        CaseKind::Increasing
    } else if s <= -sc {
        CaseKind::Decreasing
    } else {
        CaseKind::InteriorMin
    };
    Ok(fit_constants(Analytic1DCase {
        length,
        rise,
        epsilon: eps,
        s,
        kind,
        c_plus: None,
        c_minus: None,
        x_star: None,
        u0: None,
    }))
}

/// Fills in `C⁺`, `C⁻` or `(x*, u₀)` from the two boundary conditions.
pub fn fit_constants(mut case: Analytic1DCase) -> Analytic1DCase {
    let (w, h, eps) = (case.length, case.rise, case.epsilon);
    let e2 = eps * eps;
    match case.kind {
        CaseKind::LinearPlus | CaseKind::LinearMinus => {}
        CaseKind::Increasing => {
            case.c_plus = Some((h - e2 * w) / -(-w / eps).exp_m1());
        }
        CaseKind::Decreasing => {
            // (H + ε²W) / (1 - e^{W/ε}) without overflow.
            case.c_minus = Some(-(h + e2 * w) * (-w / eps).exp() / -(-w / eps).exp_m1());
        }
        CaseKind::InteriorMin => {
            let gap = |xs: f64| phi(w - xs, eps) - phi(xs, eps) - h;
            let (mut lo, mut hi) = (0.0, w);
            assert!(
                gap(lo) >= 0.0 && gap(hi) <= 0.0,
                "interior minimum requested outside its parameter range"
            );
            while hi - lo > BISECTION_TOL * w.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if gap(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let xs = 0.5 * (lo + hi);
            case.x_star = Some(xs);
            case.u0 = Some(-phi(xs, eps));
        }
    }
    case
}

/// `(u, u', u'')` at `x`. At the kink of the interior-minimum case the
/// right derivative is returned.
pub fn eval_analytic_derivatives(case: &Analytic1DCase, x: f64) -> (f64, f64, f64) {
    let (w, h, eps) = (case.length, case.rise, case.epsilon);
    let e2 = eps * eps;
    let unfitted = "analytic case used before fitting its constants";
    match case.kind {
        CaseKind::LinearPlus => (e2 * x, e2, 0.0),
        CaseKind::LinearMinus => (-e2 * x, -e2, 0.0),
        CaseKind::Increasing => {
            case.c_plus.expect(unfitted);
            let k = (h - e2 * w) / -(-w / eps).exp_m1();
            let decay = (-x / eps).exp();
            (
                e2 * x - k * (-x / eps).exp_m1(),
                e2 + k / eps * decay,
                -k / e2 * decay,
            )
        }
        CaseKind::Decreasing => {
            case.c_minus.expect(unfitted);
            let k = (h + e2 * w) / -(-w / eps).exp_m1();
            let growth = ((x - w) / eps).exp();
            (
                -e2 * x + k * (growth - (-w / eps).exp()),
                -e2 + k / eps * growth,
                k / e2 * growth,
            )
        }
        CaseKind::InteriorMin => {
            let xs = case.x_star.expect(unfitted);
            let u0 = case.u0.expect(unfitted);
            let s = (x - xs).abs();
            let sign = if x >= xs { 1.0 } else { -1.0 };
            let decay = (-s / eps).exp();
            (phi(s, eps) + u0, sign * e2 * (1.0 - decay), eps * decay)
        }
    }
}

/// The fitted solution at `x ∈ [0, length]`.
pub fn eval_analytic(case: &Analytic1DCase, x: f64) -> f64 {
    eval_analytic_derivatives(case, x).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qce_line_examples() {
        assert_eq!(qce_line(&[3.0, 1.0, 2.0, 0.0, 4.0]), vec![3.0, 1.0, 1.0, 0.0, 4.0]);
        let mono = [5.0, 4.0, 4.0, 1.0, -2.0];
        assert_eq!(qce_line(&mono), mono.to_vec());
        assert_eq!(qce_line(&[7.0]), vec![7.0]);
    }

    #[test]
    fn double_well_envelope_at_origin() {
        let g = crate::obstacle::Obstacle::double_well_1d();
        let grid = crate::grid::Grid::new(1, 201).unwrap();
        let a = g.sample(&grid).unwrap();
        let env = qce_line(a.values());
        assert!(env[100].abs() < 1e-15);
    }

    #[test]
    fn quasiconvexity_predicate() {
        assert!(is_quasiconvex(&[3.0, 1.0, 1.0, 0.0, 4.0]));
        assert!(!is_quasiconvex(&[3.0, 1.0, 2.0, 0.0, 4.0]));
        assert!(is_quasiconvex(&[]));
    }

    proptest! {
        #[test]
        fn qce_line_is_a_quasiconvex_projection(a in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let q = qce_line(&a);
            prop_assert!(is_quasiconvex(&q));
            prop_assert!(q.iter().zip(&a).all(|(x, y)| x <= y));
            prop_assert_eq!(qce_line(&q), q.clone());
            prop_assert_eq!(q[0], a[0]);
            prop_assert_eq!(q[a.len() - 1], a[a.len() - 1]);
        }

        #[test]
        fn qce_line_is_monotone(
            a in prop::collection::vec(-10.0f64..10.0, 1..30),
            bump in prop::collection::vec(0.0f64..3.0, 30),
        ) {
            let b: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| x + d).collect();
            let (qa, qb) = (qce_line(&a), qce_line(&b));
            prop_assert!(qa.iter().zip(&qb).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn classification_examples() {
        let eps = 0.1;
        let w = 2.0;
        assert_eq!(classify_case(w, eps * eps * w, eps).unwrap().kind, CaseKind::LinearPlus);
        assert_eq!(classify_case(w, -eps * eps * w, eps).unwrap().kind, CaseKind::LinearMinus);
        let flat = classify_case(w, 0.0, eps).unwrap();
        assert_eq!(flat.kind, CaseKind::InteriorMin);
        assert_eq!(flat.s, 0.0);
        let up = classify_case(w, 2.0 * eps * eps * w, eps).unwrap();
        assert_eq!(up.kind, CaseKind::Increasing);
        assert!((up.s - 2.0).abs() < 1e-15);
        assert_eq!(classify_case(w, -2.0 * eps * eps * w, eps).unwrap().kind, CaseKind::Decreasing);
        assert!(classify_case(0.0, 1.0, eps).is_err());
        assert!(classify_case(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn near_one_slopes_stay_monotone() {
        // Between S_c and 1 the exponential profile still has u' ≥ 0.
        let (w, eps) = (1.0, 0.2);
        let sc = interior_threshold(w, eps);
        let s = 0.5 * (sc + 1.0);
        let c = classify_case(w, s * eps * eps * w, eps).unwrap();
        assert_eq!(c.kind, CaseKind::Increasing);
        assert!(c.c_plus.unwrap() < 0.0);
        for k in 0..=100 {
            assert!(eval_analytic_derivatives(&c, k as f64 / 100.0).1 >= 0.0);
        }
        let below = classify_case(w, 0.99 * sc * eps * eps * w, eps).unwrap();
        assert_eq!(below.kind, CaseKind::InteriorMin);
    }

    fn all_cases() -> Vec<Analytic1DCase> {
        let mut out = Vec::new();
        for eps in [0.2, 0.1, 0.05, 0.01] {
            for w in [1.0, 2.0, 0.3] {
                for s in [1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 0.0, 0.97, -0.97, 5.0, -40.0] {
                    out.push(classify_case(w, s * eps * eps * w, eps).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn boundary_conditions_hold() {
        for c in all_cases() {
            let scale = c.epsilon * c.epsilon * c.length * (1.0 + c.s.abs());
            assert!(eval_analytic(&c, 0.0).abs() <= 1e-12 * scale, "{c:?}");
            assert!((eval_analytic(&c, c.length) - c.rise).abs() <= 1e-10 * scale, "{c:?}");
        }
    }

    #[test]
    fn ode_residual_vanishes() {
        for c in all_cases() {
            let eps = c.epsilon;
            for k in 1..1000 {
                let x = c.length * k as f64 / 1000.0;
                if c.x_star.is_some_and(|xs| (x - xs).abs() < 1e-9) {
                    continue;
                }
                let (_, d1, d2) = eval_analytic_derivatives(&c, x);
                let r = eps * d2 + d1.abs() - eps * eps;
                assert!(r.abs() < 1e-8, "{c:?} at {x}: {r}");
            }
        }
    }

    #[test]
    fn ode_residual_by_finite_differences() {
        // Derivative-free check of the same identity.
        for c in all_cases().into_iter().filter(|c| c.epsilon >= 0.05) {
            let eps = c.epsilon;
            let d = 1e-4 * c.length;
            for k in 1..100 {
                let x = c.length * k as f64 / 100.0;
                if c.x_star.is_some_and(|xs| (x - xs).abs() < 4.0 * d) {
                    continue;
                }
                let (um, u, up) = (
                    eval_analytic(&c, x - d),
                    eval_analytic(&c, x),
                    eval_analytic(&c, x + d),
                );
                let r = eps * (up - 2.0 * u + um) / (d * d) + ((up - um) / (2.0 * d)).abs() - eps * eps;
                assert!(r.abs() < 1e-5 * (1.0 + c.s.abs()), "{c:?} at {x}: {r}");
            }
        }
    }

    #[test]
    fn linear_case_is_exact() {
        let c = classify_case(1.0, 0.01, 0.1).unwrap();
        assert_eq!(c.kind, CaseKind::LinearPlus);
        for x in [0.0, 0.25, 0.5, 1.0] {
            assert!((eval_analytic(&c, x) - 0.01 * x).abs() < 1e-16);
        }
    }

    #[test]
    fn symmetric_interior_minimum() {
        let c = classify_case(2.0, 0.0, 0.1).unwrap();
        assert!((c.x_star.unwrap() - 1.0).abs() < 1e-11);
        assert!((eval_analytic(&c, c.x_star.unwrap()) - c.u0.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn interior_minimum_is_locally_quadratic() {
        let c = classify_case(1.0, 0.3 * 0.01, 0.1).unwrap();
        let xs = c.x_star.unwrap();
        let eps = c.epsilon;
        for d in [1e-2, 5e-3, 1e-3] {
            let diff = eval_analytic(&c, xs + d) - eval_analytic(&c, xs);
            let rel = (diff - 0.5 * eps * d * d).abs() / (0.5 * eps * d * d);
            assert!(rel < 2.0 * d / eps, "d = {d}: {rel}");
        }
    }

    #[test]
    fn analytic_solutions_are_quasiconvex() {
        for c in all_cases() {
            let samples: Vec<f64> = (0..=2000)
                .map(|k| eval_analytic(&c, c.length * k as f64 / 2000.0))
                .collect();
            let env = qce_line(&samples);
            let dist = samples
                .iter()
                .zip(&env)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dist <= 1e-10, "{c:?}: {dist}");
        }
    }
}
