//! Optimal coefficients of Adams-type difference formulas
//!
//! ```text
//! Σ_{β=0}^{k} C[β] φ(hβ) − h Σ_β C₁[β] φ'(hβ) ≅ 0
//! ```
//!
//! with the Adams skeleton `C[k] = 1, C[k−1] = −1`, all other `C[β] = 0`.
//! Explicit formulas carry `C₁[0..k−1]`, implicit ones `C₁[0..k]`.
//!
//! Two independent routes are provided:
//!
//! * [`closed_form`]: only the last (explicit) or the last two (implicit)
//!   weights are nonzero, `(e^h − 1)/(h e^h)` resp. `(e^h − 1)/(h(e^h + 1))`;
//! * [`solve_optimal`]: assembles the Lagrange system that minimizes the
//!   error-functional norm subject to exactness on `e^{−x}` and solves it
//!   densely.
//!
//! The U-sequence helpers expose the convolution structure of that system, so
//! that `h⁻¹ D₁ * U` can be checked to reproduce the coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{self, DenseSystem, SolveError};
use crate::kernel::{self, g2_double_prime, g2_prime, DiscreteSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error("step count k must be at least 1, got {0}")]
    InvalidStepCount(usize),
    #[error("grid step h must satisfy 0 < h <= 1, got {0}")]
    InvalidStep(f64),
    #[error("index {beta} is outside 0..={max} for a {kind} formula")]
    IndexOutOfRange {
        kind: FormulaKind,
        beta: i64,
        max: i64,
    },
    #[error("malformed formula: {0}")]
    Malformed(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulaKind {
    /// Adams-Bashforth type, `C₁` indexed `0..=k−1`.
    Explicit,
    /// Adams-Moulton type, `C₁` indexed `0..=k`.
    Implicit,
}

impl FormulaKind {
    /// Number of `C₁` weights for step count `k`.
    pub fn c1_len(self, k: usize) -> usize {
        match self {
            FormulaKind::Explicit => k,
            FormulaKind::Implicit => k + 1,
        }
    }
}

impl fmt::Display for FormulaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormulaKind::Explicit => "explicit",
            FormulaKind::Implicit => "implicit",
        })
    }
}

impl FromStr for FormulaKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "explicit" => Ok(FormulaKind::Explicit),
            "implicit" => Ok(FormulaKind::Implicit),
            other => Err(format!(
                "unknown formula kind '{other}' (expected explicit|implicit)"
            )),
        }
    }
}

fn check_inputs(k: usize, h: f64) -> Result<(), CoeffError> {
    if k < 1 {
        return Err(CoeffError::InvalidStepCount(k));
    }
    if !(h.is_finite() && h > 0.0 && h <= 1.0) {
        return Err(CoeffError::InvalidStep(h));
    }
    Ok(())
}

/// A difference formula: node weights `c` (length `k+1`) and derivative
/// weights `c1` (length `k` or `k+1` by kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFormula")]
pub struct DifferenceFormula {
    kind: FormulaKind,
    k: usize,
    h: f64,
    c: Vec<f64>,
    c1: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFormula {
    kind: FormulaKind,
    k: usize,
    h: f64,
    c: Vec<f64>,
    c1: Vec<f64>,
}

impl TryFrom<RawFormula> for DifferenceFormula {
    type Error = CoeffError;
    fn try_from(raw: RawFormula) -> Result<Self, Self::Error> {
        DifferenceFormula::new(raw.kind, raw.k, raw.h, raw.c, raw.c1)
    }
}

/// `C[k] = 1, C[k−1] = −1`, zero elsewhere.
pub fn adams_node_weights(k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    c[k - 1] = -1.0;
    c
}

impl DifferenceFormula {
    /// Checks shapes and finiteness only. The constraint equations are
    /// properties of optimal formulas, see [`DifferenceFormula::constraint_residuals`].
    pub fn new(
        kind: FormulaKind,
        k: usize,
        h: f64,
        c: Vec<f64>,
        c1: Vec<f64>,
    ) -> Result<Self, CoeffError> {
        if k < 1 {
            return Err(CoeffError::InvalidStepCount(k));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(CoeffError::InvalidStep(h));
        }
        if c.len() != k + 1 {
            return Err(CoeffError::Malformed(format!(
                "expected {} node weights, got {}",
                k + 1,
                c.len()
            )));
        }
        if c1.len() != kind.c1_len(k) {
            return Err(CoeffError::Malformed(format!(
                "expected {} derivative weights for a {kind} formula, got {}",
                kind.c1_len(k),
                c1.len()
            )));
        }
        if c.iter().chain(&c1).any(|v| !v.is_finite()) {
            return Err(CoeffError::Malformed("non-finite weight".into()));
        }
        Ok(DifferenceFormula { kind, k, h, c, c1 })
    }

    pub fn kind(&self) -> FormulaKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn c1(&self) -> &[f64] {
        &self.c1
    }

    /// Same formula with replaced derivative weights.
    pub fn with_c1(&self, c1: Vec<f64>) -> Result<Self, CoeffError> {
        DifferenceFormula::new(self.kind, self.k, self.h, self.c.clone(), c1)
    }

    /// Residuals of exactness on `1` and on `e^{−x}`:
    /// `Σ C[β]` and `Σ C[β] e^{−hβ} + h Σ C₁[β] e^{−hβ}`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let on_one: f64 = self.c.iter().sum();
        let decay = |b: usize| (-self.h * b as f64).exp();
        let on_exp: f64 = self
            .c
            .iter()
            .enumerate()
            .map(|(b, c)| c * decay(b))
            .sum::<f64>()
            + self.h
                * self
                    .c1
                    .iter()
                    .enumerate()
                    .map(|(b, c)| c * decay(b))
                    .sum::<f64>();
        (on_one, on_exp)
    }

    /// One-step weights `(w_new, w_old)` of `y_{n+1} = y_n + w_new f_{n+1} + w_old f_n`,
    /// i.e. `h·C₁[k]` (zero for explicit formulas) and `h·C₁[k−1]`.
    pub fn step_weights(&self) -> (f64, f64) {
        match self.kind {
            FormulaKind::Explicit => (0.0, self.h * self.c1[self.k - 1]),
            FormulaKind::Implicit => (self.h * self.c1[self.k], self.h * self.c1[self.k - 1]),
        }
    }

    /// Largest `|C₁[β]|` over the weights a one-step recurrence ignores
    /// (everything before `k−1`).
    pub fn max_interior_weight(&self) -> f64 {
        self.c1[..self.k - 1]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Optimal explicit weight `(e^h − 1)/(h e^h) = (1 − e^{−h})/h`.
pub fn explicit_weight(h: f64) -> f64 {
    -(-h).exp_m1() / h
}

/// Optimal implicit weight `(e^h − 1)/(h(e^h + 1)) = tanh(h/2)/h`.
pub fn implicit_weight(h: f64) -> f64 {
    (0.5 * h).tanh() / h
}

/// Closed-form optimal formula.
pub fn closed_form(kind: FormulaKind, k: usize, h: f64) -> Result<DifferenceFormula, CoeffError> {
    check_inputs(k, h)?;
    let mut c1 = vec![0.0; kind.c1_len(k)];
    match kind {
        FormulaKind::Explicit => c1[k - 1] = explicit_weight(h),
        FormulaKind::Implicit => {
            let w = implicit_weight(h);
            c1[k - 1] = w;
            c1[k] = w;
        }
    }
    DifferenceFormula::new(kind, k, h, adams_node_weights(k), c1)
}

/// Right-hand side `f[β] = G₂'(hβ − hk + h) − G₂'(hβ − hk)` of the Lagrange rows:
///
/// ```text
/// f[β] = (1 − e^h)/4 · (e^{hβ−hk} − e^{−hβ+hk−h})   β ≤ k−1
/// f[k] = (e^h + e^{−h} − 2)/4                        (implicit only)
/// ```
///
/// evaluated as `sinh(h(k−β) − h/2)·sinh(h/2)` resp. `sinh²(h/2)`.
pub fn rhs_f(kind: FormulaKind, beta: i64, k: usize, h: f64) -> Result<f64, CoeffError> {
    check_inputs(k, h)?;
    let max = kind.c1_len(k) as i64 - 1;
    if beta < 0 || beta > max {
        return Err(CoeffError::IndexOutOfRange { kind, beta, max });
    }
    let half = (0.5 * h).sinh();
    if beta == k as i64 {
        Ok(half * half)
    } else {
        Ok((h * (k as i64 - beta) as f64 - 0.5 * h).sinh() * half)
    }
}

/// Right-hand side of the exactness row, `g = e^{−hk+h} − e^{−hk} = e^{−hk}(e^h − 1)`.
pub fn rhs_g(k: usize, h: f64) -> Result<f64, CoeffError> {
    check_inputs(k, h)?;
    Ok((-h * k as f64).exp() * h.exp_m1())
}

/// Solved coefficients together with the auxiliary constants of the
/// convolution form of the Lagrange system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    #[serde(flatten)]
    pub formula: DifferenceFormula,
    /// Lagrange multiplier of the `e^{−x}` exactness constraint.
    pub d: f64,
    /// Coefficient of `e^{−hβ}` in `U[β]` for `β < 0`.
    pub d_plus: f64,
    /// Coefficient of `e^{−hβ}` in `U[β]` beyond the coefficient support.
    pub d_minus: f64,
    /// `(d_plus − d_minus)/2 = (h/4) Σ C₁[γ] e^{hγ}`.
    pub b: f64,
    /// Max-norm residual of the Lagrange system at the reported solution.
    pub residual: f64,
}

impl SolverReport {
    fn assemble(formula: DifferenceFormula, d: f64) -> Result<SolverReport, CoeffError> {
        let h = formula.h;
        let b = 0.25
            * h
            * formula
                .c1
                .iter()
                .enumerate()
                .map(|(g, c)| c * (h * g as f64).exp())
                .sum::<f64>();
        let sys = lagrange_system(formula.kind, formula.k, h)?;
        let mut x = formula.c1.clone();
        x.push(d);
        let residual = sys.residual(&x);
        Ok(SolverReport {
            formula,
            d,
            d_plus: d + b,
            d_minus: d - b,
            b,
            residual,
        })
    }

    /// Last index of the `C₁` support.
    fn support_end(&self) -> i64 {
        self.formula.c1.len() as i64 - 1
    }
}

/// The `(m+1)×(m+1)` Lagrange system in the unknowns `(C₁[0..m], d)`:
///
/// ```text
/// h Σ_γ C₁[γ] G₂''(hβ − hγ) + d e^{−hβ} = f[β],   β = 0..m−1
/// h Σ_γ C₁[γ] e^{−hγ}                    = g
/// ```
pub fn lagrange_system(kind: FormulaKind, k: usize, h: f64) -> Result<DenseSystem, CoeffError> {
    check_inputs(k, h)?;
    let m = kind.c1_len(k);
    let n = m + 1;
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for beta in 0..m {
        for gamma in 0..m {
            a[beta * n + gamma] = h * g2_double_prime(h * (beta as f64 - gamma as f64));
        }
        a[beta * n + m] = (-h * beta as f64).exp();
        rhs[beta] = rhs_f(kind, beta as i64, k, h)?;
    }
    for gamma in 0..m {
        a[m * n + gamma] = h * (-h * gamma as f64).exp();
    }
    rhs[m] = rhs_g(k, h)?;
    Ok(DenseSystem::new(n, a, rhs)?)
}

/// Optimal coefficients by solving the Lagrange system directly.
pub fn solve_optimal(kind: FormulaKind, k: usize, h: f64) -> Result<SolverReport, CoeffError> {
    let sys = lagrange_system(kind, k, h)?;
    let mut x = dense::solve(&sys)?;
    let d = x.pop().expect("system has at least two unknowns");
    let formula = DifferenceFormula::new(kind, k, h, adams_node_weights(k), x)?;
    SolverReport::assemble(formula, d)
}

/// Closed-form coefficients with the closed-form multiplier
/// (`d = e^{hk−2h}(e^h − 1)²/4` explicit, `d = 0` implicit); the residual is
/// that of the closed form inside the Lagrange system.
pub fn closed_form_report(kind: FormulaKind, k: usize, h: f64) -> Result<SolverReport, CoeffError> {
    let formula = closed_form(kind, k, h)?;
    let d = match kind {
        FormulaKind::Explicit => {
            let em1 = h.exp_m1();
            0.25 * (h * (k as f64 - 2.0)).exp() * em1 * em1
        }
        FormulaKind::Implicit => 0.0,
    };
    SolverReport::assemble(formula, d)
}

/// `U[β]` from its piecewise description:
///
/// ```text
/// U[β] = −e^{hβ} g/4 + e^{−hβ} d⁺   β < 0
///        f[β]                      0 ≤ β ≤ last C₁ index
///        e^{hβ} g/4 + e^{−hβ} d⁻    beyond the support
/// ```
pub fn u_sequence(report: &SolverReport, beta: i64) -> f64 {
    let f = &report.formula;
    let (h, k) = (f.h, f.k);
    let g = rhs_g(k, h).expect("report holds a validated formula");
    let hb = h * beta as f64;
    if beta < 0 {
        -0.25 * hb.exp() * g + (-hb).exp() * report.d_plus
    } else if beta > report.support_end() {
        0.25 * hb.exp() * g + (-hb).exp() * report.d_minus
    } else {
        rhs_f(f.kind, beta, k, h).expect("index within support")
    }
}

/// `U[β]` from its definition `h (C₁ * G₂''(h·))[β] + d e^{−hβ}`.
pub fn u_convolution(report: &SolverReport, beta: i64) -> f64 {
    let f = &report.formula;
    let h = f.h;
    let c1 = DiscreteSequence::new(0, f.c1.iter().map(|c| h * c).collect());
    let conv = kernel::convolve(&c1, |m| g2_double_prime(h * m as f64), beta..=beta);
    conv.get(beta) + report.d * (-h * beta as f64).exp()
}

/// `h⁻¹ (D₁ * U)[β]` on the piecewise `U`; equals `C₁[β]` inside the support
/// and vanishes outside it.
pub fn reconstruct_c1(report: &SolverReport, beta: i64) -> f64 {
    let h = report.formula.h;
    let stencil = DiscreteSequence::d1_stencil(h).expect("report holds a positive step");
    let conv = kernel::convolve(&stencil, |i| u_sequence(report, i), beta..=beta);
    conv.get(beta) / h
}

/// `f[β]` straight from its definition through `G₂'`, for cross-checks.
pub fn rhs_f_from_kernel(beta: i64, k: usize, h: f64) -> f64 {
    let t = h * (beta - k as i64) as f64;
    g2_prime(t + h) - g2_prime(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID_H: [f64; 4] = [0.2, 0.1, 0.05, 0.01];

    fn max_dev(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn closed_form_explicit_k3() {
        let f = closed_form(FormulaKind::Explicit, 3, 0.1).unwrap();
        assert_eq!(f.c(), &[0.0, 0.0, -1.0, 1.0]);
        assert_eq!(f.c1()[0], 0.0);
        assert_eq!(f.c1()[1], 0.0);
        assert!((f.c1()[2] - 0.951_625_819_640_404_3).abs() < 1e-15);
    }

    #[test]
    fn closed_form_implicit_k2() {
        let f = closed_form(FormulaKind::Implicit, 2, 0.1).unwrap();
        assert_eq!(f.c1().len(), 3);
        assert_eq!(f.c1()[0], 0.0);
        let want = 0.499_583_749_578_799_7;
        assert!((f.c1()[1] - want).abs() < 1e-15);
        assert!((f.c1()[2] - want).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_literal_exponential_expressions() {
        for &h in &GRID_H {
            let e = h.exp();
            assert!((explicit_weight(h) - (e - 1.0) / (h * e)).abs() < 1e-13);
            assert!((implicit_weight(h) - (e - 1.0) / (h * (e + 1.0))).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_rejects_bad_input() {
        assert_eq!(
            closed_form(FormulaKind::Explicit, 0, 0.1),
            Err(CoeffError::InvalidStepCount(0))
        );
        assert!(closed_form(FormulaKind::Implicit, 2, 0.0).is_err());
        assert!(closed_form(FormulaKind::Implicit, 2, -0.5).is_err());
        assert!(closed_form(FormulaKind::Implicit, 2, 1.5).is_err());
    }

    #[test]
    fn node_weights_sum_to_zero() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 1..=10 {
                let f = closed_form(kind, k, 0.1).unwrap();
                assert_eq!(f.c().iter().sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn rhs_f_values() {
        let h = 0.1;
        let want = 0.002_502_084_027_901_799_7;
        assert!((rhs_f(FormulaKind::Implicit, 4, 4, h).unwrap() - want).abs() < 1e-17);
        // β = k−1 reduces to (e^h − 1)(1 − e^{−h})/4
        let e = h.exp();
        let last = (e - 1.0) * (1.0 - 1.0 / e) / 4.0;
        assert!((rhs_f(FormulaKind::Explicit, 2, 3, h).unwrap() - last).abs() < 1e-16);
        for k in 1..=6 {
            for beta in 0..k as i64 {
                let ex = rhs_f(FormulaKind::Explicit, beta, k, h).unwrap();
                let im = rhs_f(FormulaKind::Implicit, beta, k, h).unwrap();
                assert_eq!(ex, im);
                // literal formula and kernel definition
                let bf = beta as f64;
                let kf = k as f64;
                let literal =
                    (1.0 - e) / 4.0 * ((h * bf - h * kf).exp() - (-h * bf + h * kf - h).exp());
                assert!((ex - literal).abs() < 1e-15);
                assert!((ex - rhs_f_from_kernel(beta, k, h)).abs() < 1e-15);
            }
            let top = rhs_f(FormulaKind::Implicit, k as i64, k, h).unwrap();
            assert!((top - rhs_f_from_kernel(k as i64, k, h)).abs() < 1e-16);
        }
    }

    #[test]
    fn rhs_f_index_errors() {
        assert!(rhs_f(FormulaKind::Explicit, 3, 3, 0.1).is_err());
        assert!(rhs_f(FormulaKind::Explicit, -1, 3, 0.1).is_err());
        assert!(rhs_f(FormulaKind::Implicit, 3, 3, 0.1).is_ok());
        assert!(rhs_f(FormulaKind::Implicit, 4, 3, 0.1).is_err());
    }

    #[test]
    fn rhs_g_values() {
        let want = 0.095_162_581_964_040_43;
        assert!((rhs_g(1, 0.1).unwrap() - want).abs() < 1e-16);
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let g = rhs_g(k, 0.1).unwrap();
            assert!(g > 0.0 && g < prev);
            prev = g;
        }
    }

    #[test]
    fn solver_matches_closed_form_on_grid() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 1..=10 {
                for &h in &GRID_H {
                    let solved = solve_optimal(kind, k, h).unwrap();
                    let closed = closed_form(kind, k, h).unwrap();
                    let dev = max_dev(solved.formula.c1(), closed.c1());
                    assert!(dev <= 1e-11, "{kind} k={k} h={h} dev={dev:e}");
                    assert!(solved.residual <= 1e-10);
                    let reference = closed_form_report(kind, k, h).unwrap();
                    assert!(
                        (solved.d - reference.d).abs() <= 1e-12,
                        "{kind} k={k} h={h}"
                    );
                    assert!(reference.residual <= 1e-14, "{kind} k={k} h={h}");
                }
            }
        }
    }

    #[test]
    fn explicit_multiplier_and_shifts() {
        let h = 0.1;
        let k = 5;
        let r = solve_optimal(FormulaKind::Explicit, k, h).unwrap();
        let hk = h * k as f64;
        let d = ((hk).exp() - 2.0 * (hk - h).exp() + (hk - 2.0 * h).exp()) / 4.0;
        assert!((r.d - d).abs() < 1e-12);
        assert!((r.d - 0.003_732_670_748_397_653_7).abs() < 1e-12);
        let d_plus = ((hk).exp() - (hk - h).exp()) / 4.0;
        let d_minus = ((hk).exp() - 3.0 * (hk - h).exp() + 2.0 * (hk - 2.0 * h).exp()) / 4.0;
        let b = ((hk - h).exp() - (hk - 2.0 * h).exp()) / 4.0;
        assert!((r.d_plus - d_plus).abs() < 1e-12);
        assert!((r.d_minus - d_minus).abs() < 1e-12);
        assert!((r.b - b).abs() < 1e-12);
        assert!((r.d - 0.5 * (r.d_plus + r.d_minus)).abs() < 1e-12);
    }

    #[test]
    fn implicit_multiplier_vanishes() {
        for k in 1..=10 {
            for &h in &GRID_H {
                let r = solve_optimal(FormulaKind::Implicit, k, h).unwrap();
                assert!(r.d.abs() < 1e-12, "k={k} h={h} d={}", r.d);
                let hk = h * k as f64;
                let d_plus = ((hk).exp() - (hk - h).exp()) / 4.0;
                assert!((r.d_plus - d_plus).abs() < 1e-12);
                assert!((r.d_minus + d_plus).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optimal_formulas_satisfy_constraints() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 1..=10 {
                for &h in &GRID_H {
                    for f in [
                        closed_form(kind, k, h).unwrap(),
                        solve_optimal(kind, k, h).unwrap().formula,
                    ] {
                        let (r5, r6) = f.constraint_residuals();
                        assert!(r5.abs() <= 1e-12 && r6.abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn k1_edge_cases() {
        let h = 0.1;
        let ex = solve_optimal(FormulaKind::Explicit, 1, h).unwrap();
        assert_eq!(ex.formula.c1().len(), 1);
        assert!((ex.formula.c1()[0] - explicit_weight(h)).abs() < 1e-13);
        let im = solve_optimal(FormulaKind::Implicit, 1, h).unwrap();
        assert_eq!(im.formula.c1().len(), 2);
        for &w in im.formula.c1() {
            assert!((w - implicit_weight(h)).abs() < 1e-13);
        }
        assert_eq!(im.formula.max_interior_weight(), 0.0);
    }

    #[test]
    fn u_sequence_routes_agree() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in [1, 2, 3, 6] {
                for &h in &[0.2, 0.1, 0.01] {
                    let r = solve_optimal(kind, k, h).unwrap();
                    for beta in -6..=(k as i64 + 6) {
                        let a = u_sequence(&r, beta);
                        let b = u_convolution(&r, beta);
                        assert!(
                            (a - b).abs() <= 1e-13,
                            "{kind} k={k} h={h} beta={beta}: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn d1_reconstructs_coefficients() {
        for kind in [FormulaKind::Explicit, FormulaKind::Implicit] {
            for k in 1..=8 {
                for &h in &GRID_H {
                    let r = closed_form_report(kind, k, h).unwrap();
                    for beta in -5..=(k as i64 + 5) {
                        let want = if (0..r.formula.c1().len() as i64).contains(&beta) {
                            r.formula.c1()[beta as usize]
                        } else {
                            0.0
                        };
                        let got = reconstruct_c1(&r, beta);
                        assert!(
                            (got - want).abs() <= 1e-11,
                            "{kind} k={k} h={h} beta={beta}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_last_weight_from_reconstruction() {
        let h = 0.1;
        let r = solve_optimal(FormulaKind::Explicit, 4, h).unwrap();
        let want = (h.exp() - 1.0) / (h * h.exp());
        assert!((reconstruct_c1(&r, 3) - want).abs() < 1e-11);
    }

    #[test]
    fn small_step_limits() {
        for &h in &[0.1, 0.05, 0.01, 1e-3, 1e-4, 1e-7] {
            let ex = h * explicit_weight(h);
            assert!((ex - h).abs() <= h * h / 2.0);
            let im = h * implicit_weight(h);
            assert!((im - 0.5 * h).abs() <= h * h * h / 4.0);
            assert!((implicit_weight(h) - 0.5).abs() <= h * h / 4.0);
        }
        // relative accuracy survives tiny steps
        let h = 1e-8;
        assert!((explicit_weight(h) - (1.0 - h / 2.0)).abs() < 1e-15);
        assert!((implicit_weight(h) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn formula_shape_validation() {
        assert!(
            DifferenceFormula::new(FormulaKind::Explicit, 2, 0.1, vec![0.0; 3], vec![0.0; 2])
                .is_ok()
        );
        assert!(
            DifferenceFormula::new(FormulaKind::Explicit, 2, 0.1, vec![0.0; 3], vec![0.0; 3])
                .is_err()
        );
        assert!(
            DifferenceFormula::new(FormulaKind::Implicit, 2, 0.1, vec![0.0; 2], vec![0.0; 3])
                .is_err()
        );
        assert!(DifferenceFormula::new(
            FormulaKind::Implicit,
            2,
            0.1,
            vec![0.0; 3],
            vec![f64::NAN; 3]
        )
        .is_err());
    }

    #[test]
    fn report_serializes_flat() {
        let r = solve_optimal(FormulaKind::Explicit, 3, 0.1).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        for key in [
            "kind", "k", "h", "c", "c1", "d", "d_plus", "d_minus", "b", "residual",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["kind"], "explicit");
        let back: SolverReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
