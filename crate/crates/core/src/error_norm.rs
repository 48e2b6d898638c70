//! Error functional of a difference formula and its norm in the dual of
//! `W₂^(2,1)(0,1)`.
//!
//! The functional acts as `(ℓ, φ) = Σ C[β] φ(hβ) − h Σ C₁[β] φ'(hβ)`, its Riesz
//! representer is `ψ_ℓ = ℓ * G₂` and `‖ℓ‖² = (ℓ, ψ_ℓ)`, which expands into the
//! quadratic form of [`norm_sq_quadratic`]. For the optimal formulas this
//! reduces to the k-independent closed forms of [`norm_sq_closed`].

use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::coefficients::{DifferenceFormula, FormulaKind};
use crate::kernel::{cosh_minus_one, g2, g2_double_prime, g2_prime, sinh_minus_x};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("formula node {node} lies outside [0, 1] (k·h = {span})")]
    NodeOutOfRange { node: f64, span: f64 },
}

/// Slack allowed on `k·h ≤ 1` for grids such as `h = 0.1, k = 10`.
const SPAN_SLACK: f64 = 1e-12;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A function on `[0, 1]` with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    value: RealFn,
    first: RealFn,
    second: RealFn,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        first_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            name: name.into(),
            value: Arc::new(value),
            first: Arc::new(first_derivative),
            second: Arc::new(second_derivative),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn first_derivative(&self, x: f64) -> f64 {
        (self.first)(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        (self.second)(x)
    }

    /// Central-difference spot check of both derivatives at `samples`
    /// interior points; returns the worst absolute mismatch.
    pub fn derivative_mismatch(&self, samples: usize, step: f64) -> f64 {
        (1..=samples)
            .map(|i| i as f64 / (samples + 1) as f64)
            .map(|x| {
                let d1 = (self.value(x + step) - self.value(x - step)) / (2.0 * step);
                let d2 = (self.first_derivative(x + step) - self.first_derivative(x - step))
                    / (2.0 * step);
                (d1 - self.first_derivative(x))
                    .abs()
                    .max((d2 - self.second_derivative(x)).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `(ℓ, φ) = Σ_β C[β] φ(hβ) − h Σ_β C₁[β] φ'(hβ)`.
pub fn apply_functional(formula: &DifferenceFormula, phi: &TestFunction) -> Result<f64, NormError> {
    let h = formula.h();
    let span = h * formula.k() as f64;
    if span > 1.0 + SPAN_SLACK {
        return Err(NormError::NodeOutOfRange { node: span, span });
    }
    let node = |b: usize| (h * b as f64).min(1.0);
    let values: f64 = formula
        .c()
        .iter()
        .enumerate()
        .map(|(b, c)| c * phi.value(node(b)))
        .sum();
    let slopes: f64 = formula
        .c1()
        .iter()
        .enumerate()
        .map(|(b, c)| c * phi.first_derivative(node(b)))
        .sum();
    Ok(values - h * slopes)
}

/// `‖ℓ‖² = ΣΣ C C G₂ − 2h Σ C₁ Σ C G₂' − h² ΣΣ C₁ C₁ G₂''`, all kernels taken
/// at `hγ − hβ`. Round-off below zero is clamped.
pub fn norm_sq_quadratic(formula: &DifferenceFormula) -> f64 {
    let h = formula.h();
    let (c, c1) = (formula.c(), formula.c1());
    let diff = |g: usize, b: usize| h * (g as f64 - b as f64);

    let mut values = 0.0;
    for (g, cg) in c.iter().enumerate() {
        for (b, cb) in c.iter().enumerate() {
            values += cg * cb * g2(diff(g, b));
        }
    }
    let mut mixed = 0.0;
    for (g, c1g) in c1.iter().enumerate() {
        for (b, cb) in c.iter().enumerate() {
            mixed += c1g * cb * g2_prime(diff(g, b));
        }
    }
    let mut slopes = 0.0;
    for (g, c1g) in c1.iter().enumerate() {
        for (b, c1b) in c1.iter().enumerate() {
            slopes += c1g * c1b * g2_double_prime(diff(g, b));
        }
    }
    let total = values - 2.0 * h * mixed - h * h * slopes;
    if total < 0.0 {
        if total < -1e-14 {
            warn!("negative squared norm {total:e} clamped to zero");
        }
        return 0.0;
    }
    total
}

/// Squared norm of the optimal functional:
///
/// ```text
/// explicit: h − (e^h − 1)(3e^h − 1)/(2e^{2h})
/// implicit: h − 2(e^h − 1)/(e^h + 1) = h − 2 tanh(h/2)
/// ```
///
/// Both are O(h³) differences of O(h) terms and are evaluated in rearranged,
/// cancellation-free forms.
pub fn norm_sq_closed(kind: FormulaKind, h: f64) -> f64 {
    match kind {
        // (h − sinh h) + (1 − e^{−h})(cosh h − 1)
        FormulaKind::Explicit => -sinh_minus_x(h) - (-h).exp_m1() * cosh_minus_one(h),
        // 2(u − tanh u) = 2(u cosh u − sinh u)/cosh u, u = h/2
        FormulaKind::Implicit => {
            let u = 0.5 * h;
            2.0 * u_cosh_minus_sinh(u) / u.cosh()
        }
    }
}

// u cosh u − sinh u = Σ_{n≥1} 2n u^{2n+1}/(2n+1)!, all terms positive for u > 0.
fn u_cosh_minus_sinh(u: f64) -> f64 {
    if u.abs() >= 2.0 {
        return u * u.cosh() - u.sinh();
    }
    let u2 = u * u;
    let mut power = u * u2 / 6.0; // u^{2n+1}/(2n+1)!
    let mut sum = 2.0 * power;
    let mut n = 1.0;
    loop {
        n += 1.0;
        power *= u2 / ((2.0 * n) * (2.0 * n + 1.0));
        let next = sum + 2.0 * n * power;
        if next == sum {
            return sum;
        }
        sum = next;
    }
}

/// Extremal function `ψ_ℓ(x) = Σ C[β] G₂(x − hβ) + h Σ C₁[β] G₂'(x − hβ)`
/// (with the free `d e^{−x} + p₀` part set to zero).
pub fn extremal_function(formula: &DifferenceFormula, x: f64) -> f64 {
    extremal_terms(formula, x, g2, g2_prime)
}

/// `ψ_ℓ'(x)`.
pub fn extremal_derivative(formula: &DifferenceFormula, x: f64) -> f64 {
    extremal_terms(formula, x, g2_prime, g2_double_prime)
}

fn extremal_terms(
    formula: &DifferenceFormula,
    x: f64,
    kernel: fn(f64) -> f64,
    kernel_prime: fn(f64) -> f64,
) -> f64 {
    let h = formula.h();
    let values: f64 = formula
        .c()
        .iter()
        .enumerate()
        .map(|(b, c)| c * kernel(x - h * b as f64))
        .sum();
    let slopes: f64 = formula
        .c1()
        .iter()
        .enumerate()
        .map(|(b, c)| c * kernel_prime(x - h * b as f64))
        .sum();
    values + h * slopes
}

/// `ψ_ℓ + d e^{−x} + p₀` as a [`TestFunction`]. Its second derivative has jumps
/// at the nodes, so it is meant for pairing with `ℓ`, not for quadrature.
pub fn extremal_test_function(formula: &DifferenceFormula, d: f64, p0: f64) -> TestFunction {
    let (f0, f1, f2) = (formula.clone(), formula.clone(), formula.clone());
    TestFunction::new(
        "extremal",
        move |x| extremal_function(&f0, x) + d * (-x).exp() + p0,
        move |x| extremal_derivative(&f1, x) - d * (-x).exp(),
        move |x| {
            let h = f2.h();
            let values: f64 = f2
                .c()
                .iter()
                .enumerate()
                .map(|(b, c)| c * g2_double_prime(x - h * b as f64))
                .sum();
            let slopes: f64 = f2
                .c1()
                .iter()
                .enumerate()
                .map(|(b, c)| {
                    let t = x - h * b as f64;
                    // G₂''' = sgn(t) cosh(t)/2
                    c * 0.5 * t.signum() * t.cosh()
                })
                .sum();
            values + h * slopes + d * (-x).exp()
        },
    )
}

/// Number of Simpson panels used by [`sobolev_norm`].
pub const SIMPSON_PANELS: usize = 10_000;

/// `‖φ‖ = (∫₀¹ (φ'' + φ')² dx)^{1/2}` by composite Simpson.
pub fn sobolev_norm(phi: &TestFunction) -> f64 {
    let integrand = |x: f64| {
        let v = phi.second_derivative(x) + phi.first_derivative(x);
        v * v
    };
    simpson(integrand, 0.0, 1.0, SIMPSON_PANELS).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let step = (b - a) / n as f64;
    let interior: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + step * i as f64)
        })
        .sum();
    (f(a) + interior + f(b)) * step / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{closed_form, DifferenceFormula};

    fn poly2() -> TestFunction {
        TestFunction::new("x^2", |x| x * x, |x| 2.0 * x, |_| 2.0)
    }

    fn one() -> TestFunction {
        TestFunction::new("1", |_| 1.0, |_| 0.0, |_| 0.0)
    }

    fn decay() -> TestFunction {
        TestFunction::new("exp(-x)", |x| (-x).exp(), |x| -(-x).exp(), |x| (-x).exp())
    }

    fn zero_formula(kind: FormulaKind, k: usize, h: f64) -> DifferenceFormula {
        DifferenceFormula::new(kind, k, h, vec![0.0; k + 1], vec![0.0; kind.c1_len(k)]).unwrap()
    }

    // literal closed forms
    fn literal(kind: FormulaKind, h: f64) -> f64 {
        let e = h.exp();
        match kind {
            FormulaKind::Explicit => h - (e - 1.0) * (3.0 * e - 1.0) / (2.0 * e * e),
            FormulaKind::Implicit => h - 2.0 * (e - 1.0) / (e + 1.0),
        }
    }

    #[test]
    fn functional_annihilates_null_space() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 1..=10 {
                let f = closed_form(kind, k, 0.1).unwrap();
                assert!(apply_functional(&f, &one()).unwrap().abs() < 1e-13);
                assert!(apply_functional(&f, &decay()).unwrap().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn functional_on_quadratic_matches_direct_sum() {
        let h = 0.1;
        let f = closed_form(FormulaKind::Explicit, 1, h).unwrap();
        // C = [-1, 1], C1[0] = (1 − e^{−h})/h: h² − 0 − h·C1·0
        let got = apply_functional(&f, &poly2()).unwrap();
        assert!((got - 0.01).abs() < 1e-15);
        let f3 = closed_form(FormulaKind::Explicit, 3, h).unwrap();
        let got = apply_functional(&f3, &poly2()).unwrap();
        assert!((got - 0.011_934_967_214_383_83).abs() < 1e-15);
    }

    #[test]
    fn functional_rejects_nodes_past_one() {
        let f = closed_form(FormulaKind::Explicit, 11, 0.1).unwrap();
        assert!(matches!(
            apply_functional(&f, &one()),
            Err(NormError::NodeOutOfRange { .. })
        ));
        let edge = closed_form(FormulaKind::Explicit, 10, 0.1).unwrap();
        assert!(apply_functional(&edge, &one()).is_ok());
    }

    #[test]
    fn closed_norm_values() {
        let ex = norm_sq_closed(FormulaKind::Explicit, 0.1);
        assert!((ex - 3.094_595_329_282_17e-4).abs() < 1e-18);
        let im = norm_sq_closed(FormulaKind::Implicit, 0.1);
        assert!((im - 8.325_008_424_005_561e-5).abs() < 1e-18);
        for &h in &[0.5, 0.2, 0.1, 0.05, 0.01] {
            for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
                // the literal forms carry rounding of e^h − 1, about eps each
                let a = norm_sq_closed(kind, h);
                assert!((a - literal(kind, h)).abs() <= 1e-15, "{kind} h={h}");
            }
            let t = h - 2.0 * (0.5 * h).tanh();
            assert!((norm_sq_closed(FormulaKind::Implicit, h) - t).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_norm_asymptotics() {
        // Taylor: h³/3 − h⁴/4 + … and h³/12 − h⁵/120 + …
        let h = 1e-3;
        let ex = norm_sq_closed(FormulaKind::Explicit, h) / h.powi(3);
        let im = norm_sq_closed(FormulaKind::Implicit, h) / h.powi(3);
        assert!((ex - 0.333_083_449_958_345_66).abs() < 1e-12);
        assert!((im - 0.083_333_325_000_000_85).abs() < 1e-12);
    }

    #[test]
    fn quadratic_form_matches_closed_form() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for &h in &[0.2, 0.1, 0.01] {
                let closed = norm_sq_closed(kind, h);
                for k in 1..=10 {
                    let f = closed_form(kind, k, h).unwrap();
                    let q = norm_sq_quadratic(&f);
                    assert!(
                        (q - closed).abs() <= 1e-12 * (1.0 + h),
                        "{kind} k={k} h={h}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_formula_has_zero_norm_and_extremal() {
        let z = zero_formula(FormulaKind::Implicit, 3, 0.1);
        assert_eq!(norm_sq_quadratic(&z), 0.0);
        for i in 0..=10 {
            assert_eq!(extremal_function(&z, i as f64 / 10.0), 0.0);
        }
    }

    #[test]
    fn riesz_pairing_equals_squared_norm() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in [1, 3, 7] {
                let f = closed_form(kind, k, 0.1).unwrap();
                let psi = extremal_test_function(&f, 0.0, 0.0);
                let pairing = apply_functional(&f, &psi).unwrap();
                assert!((pairing - norm_sq_quadratic(&f)).abs() < 1e-12);
                // null-space shifts do not change the pairing
                let shifted = extremal_test_function(&f, 2.5, -1.25);
                let p2 = apply_functional(&f, &shifted).unwrap();
                assert!((p2 - pairing).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sobolev_norm_basics() {
        assert_eq!(sobolev_norm(&one()), 0.0);
        assert!(sobolev_norm(&decay()) < 1e-12);
        let x = TestFunction::new("x", |x| x, |_| 1.0, |_| 0.0);
        assert!((sobolev_norm(&x) - 1.0).abs() < 1e-12);
        // φ = x²: ∫(2 + 2x)² = 28/3
        assert!((sobolev_norm(&poly2()) - (28.0f64 / 3.0).sqrt()).abs() < 1e-10);
        // φ = sin x: ∫(cos x − sin x)² = 1 − sin²(1)
        let s = TestFunction::new("sin", f64::sin, f64::cos, |x| -x.sin());
        let want = (1.0 - 1.0f64.sin().powi(2)).sqrt();
        assert!((sobolev_norm(&s) - want).abs() < 1e-10);
    }

    #[test]
    fn extremal_function_squared_semi_norm_matches() {
        // ψ'' + ψ' vanishes outside the node span, so the semi-norm of ψ on
        // [0,1] reproduces ‖ℓ‖². Integrate panel-wise between nodes to avoid
        // the jumps of ψ''.
        let f = closed_form(FormulaKind::Implicit, 3, 0.1).unwrap();
        let psi = extremal_test_function(&f, 0.0, 0.0);
        let mut total = 0.0;
        for i in 0..10 {
            let (a, b) = (i as f64 / 10.0, (i + 1) as f64 / 10.0);
            let shrink = 1e-12;
            total += simpson(
                |x| (psi.second_derivative(x) + psi.first_derivative(x)).powi(2),
                a + shrink,
                b - shrink,
                200,
            );
        }
        assert!((total - norm_sq_quadratic(&f)).abs() < 1e-12);
    }

    fn smooth_suite() -> Vec<TestFunction> {
        vec![
            TestFunction::new("x", |x| x, |_| 1.0, |_| 0.0),
            poly2(),
            TestFunction::new("x^3", |x| x.powi(3), |x| 3.0 * x * x, |x| 6.0 * x),
            TestFunction::new("sin", f64::sin, f64::cos, |x| -x.sin()),
            TestFunction::new("cos", f64::cos, |x| -x.sin(), |x| -x.cos()),
            TestFunction::new("exp", f64::exp, f64::exp, f64::exp),
            TestFunction::new(
                "exp2",
                |x| (2.0 * x).exp(),
                |x| 2.0 * (2.0 * x).exp(),
                |x| 4.0 * (2.0 * x).exp(),
            ),
            TestFunction::new(
                "sin3",
                |x| (3.0 * x).sin(),
                |x| 3.0 * (3.0 * x).cos(),
                |x| -9.0 * (3.0 * x).sin(),
            ),
            TestFunction::new(
                "ln1p",
                f64::ln_1p,
                |x| 1.0 / (1.0 + x),
                |x| -1.0 / (1.0 + x).powi(2),
            ),
            TestFunction::new(
                "xexp",
                |x| x * (-x).exp(),
                |x| (1.0 - x) * (-x).exp(),
                |x| (x - 2.0) * (-x).exp(),
            ),
        ]
    }

    #[test]
    fn suite_derivatives_consistent() {
        for phi in smooth_suite() {
            assert!(phi.derivative_mismatch(25, 1e-6) < 1e-5, "{}", phi.name());
        }
    }

    #[test]
    fn cauchy_schwarz_on_smooth_suite() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for (k, h) in [(1, 0.2), (3, 0.1), (10, 0.1), (5, 0.01)] {
                let f = closed_form(kind, k, h).unwrap();
                let norm = norm_sq_quadratic(&f).sqrt();
                for phi in smooth_suite() {
                    let lhs = apply_functional(&f, &phi).unwrap().abs();
                    assert!(
                        lhs <= norm * sobolev_norm(&phi),
                        "{kind} k={k} {}",
                        phi.name()
                    );
                }
            }
        }
    }

    #[test]
    fn single_coefficient_perturbations_do_not_lower_norm() {
        let (h, eps) = (0.1, 1e-3);
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 2..=5 {
                let opt = closed_form(kind, k, h).unwrap();
                let base = norm_sq_quadratic(&opt);
                let last = opt.c1().len() - 1;
                for beta in 0..last {
                    for sign in [1.0, -1.0] {
                        let mut c1 = opt.c1().to_vec();
                        c1[beta] += sign * eps;
                        // keep Σ C₁[β] e^{−hβ} fixed
                        c1[last] -= sign * eps * (h * (last - beta) as f64).exp();
                        let g = opt.with_c1(c1).unwrap();
                        assert!(g.constraint_residuals().1.abs() < 1e-12);
                        assert!(norm_sq_quadratic(&g) >= base, "{kind} k={k} beta={beta}");
                    }
                }
            }
        }
    }

    #[test]
    fn implicit_norm_below_explicit() {
        for h in [0.2, 0.1, 0.01] {
            assert!(
                norm_sq_closed(FormulaKind::Implicit, h) < norm_sq_closed(FormulaKind::Explicit, h)
            );
            let im = norm_sq_quadratic(&closed_form(FormulaKind::Implicit, 3, h).unwrap());
            let ex = norm_sq_quadratic(&closed_form(FormulaKind::Explicit, 3, h).unwrap());
            assert!(im < ex);
        }
    }

    #[test]
    fn norm_independent_of_k() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            let first = norm_sq_quadratic(&closed_form(kind, 1, 0.1).unwrap());
            for k in 2..=10 {
                let q = norm_sq_quadratic(&closed_form(kind, k, 0.1).unwrap());
                assert!((q - first).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn derivative_spot_check() {
        assert!(poly2().derivative_mismatch(20, 1e-6) < 1e-5);
        let bad = TestFunction::new("bad", |x| x * x, |x| x, |_| 2.0);
        assert!(bad.derivative_mismatch(20, 1e-6) > 1e-2);
    }
}
