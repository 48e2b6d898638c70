//! Self-checks of the core identities, shared by the `verify` command.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::{closed_form, solve_optimal, FormulaKind};
use crate::error_norm::{
    apply_functional, extremal_test_function, norm_sq_closed, norm_sq_quadratic,
};
use crate::integrate::{integrate, ImplicitSolveConfig, IvpProblem, Scheme};
use crate::kernel::d1_g2pp_convolution;

pub const KINDS: [FormulaKind; 2] = [FormulaKind::Explicit, FormulaKind::Implicit];
pub const COEFF_STEPS: [f64; 4] = [0.2, 0.1, 0.05, 0.01];
pub const DELTA_STEPS: [f64; 3] = [0.2, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn failure(name: &'static str, err: impl std::fmt::Display) -> CheckResult {
    outcome(name, false, err.to_string())
}

/// Solved coefficients against the closed forms on `k = 1..10` and
/// [`COEFF_STEPS`].
pub fn check_coefficients() -> CheckResult {
    const NAME: &str = "coefficients";
    let start = Instant::now();
    let (mut dev, mut interior, mut constraint) = (0.0f64, 0.0f64, 0.0f64);
    for kind in KINDS {
        for k in 1..=10 {
            for h in COEFF_STEPS {
                let (solved, closed) = match (solve_optimal(kind, k, h), closed_form(kind, k, h)) {
                    (Ok(s), Ok(c)) => (s.formula, c),
                    (Err(e), _) | (_, Err(e)) => return failure(NAME, e),
                };
                for (a, b) in solved.c1().iter().zip(closed.c1()) {
                    dev = dev.max((a - b).abs());
                }
                interior = interior.max(solved.max_interior_weight());
                let (r5, r6) = solved.constraint_residuals();
                constraint = constraint.max(r5.abs()).max(r6.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        NAME,
        dev <= 1e-11 && interior <= 1e-11 && constraint <= 1e-12 && secs < 1.0,
        format!(
            "max deviation {dev:.2e}, max interior {interior:.2e}, max constraint residual {constraint:.2e}, {secs:.3}s"
        ),
    )
}

/// Quadratic-form norms against the closed forms, the two literal
/// expressions at `h = 0.1`, and the `h³` asymptotics.
pub fn check_norms() -> CheckResult {
    const NAME: &str = "norm identities";
    let mut worst = 0.0f64;
    for kind in KINDS {
        for k in 1..=10 {
            for h in COEFF_STEPS {
                let f = match closed_form(kind, k, h) {
                    Ok(f) => f,
                    Err(e) => return failure(NAME, e),
                };
                let gap = (norm_sq_quadratic(&f) - norm_sq_closed(kind, h)).abs() / (1.0 + h);
                worst = worst.max(gap);
            }
        }
    }
    let e = 0.1f64.exp();
    let literal_ex = 0.1 - (e - 1.0) * (3.0 * e - 1.0) / (2.0 * e * e);
    let literal_im = 0.1 - 2.0 * (e - 1.0) / (e + 1.0);
    let lit_gap = (norm_sq_closed(FormulaKind::Explicit, 0.1) - literal_ex)
        .abs()
        .max((norm_sq_closed(FormulaKind::Implicit, 0.1) - literal_im).abs());
    let h = 1e-3;
    let ratio_ex = norm_sq_closed(FormulaKind::Explicit, h) / h.powi(3) * 3.0;
    let ratio_im = norm_sq_closed(FormulaKind::Implicit, h) / h.powi(3) * 12.0;
    let asym = (ratio_ex - 1.0).abs().max((ratio_im - 1.0).abs());
    outcome(
        NAME,
        worst <= 1e-12 && lit_gap <= 1e-15 && asym <= 0.05,
        format!(
            "max |quadratic - closed|/(1+h) {worst:.2e}, literal gap {lit_gap:.2e}, asymptotic ratios {ratio_ex:.5}/{ratio_im:.5} of 1/3 and 1/12"
        ),
    )
}

/// `Σ_γ D₁[γ] G₂''(h(β−γ)) = δ_{β0}` for `|β| ≤ 50`.
pub fn check_discrete_delta() -> CheckResult {
    const NAME: &str = "discrete delta";
    let mut worst = 0.0f64;
    for h in DELTA_STEPS {
        for beta in -50..=50 {
            let v = match d1_g2pp_convolution(beta, h) {
                Ok(v) => v,
                Err(e) => return failure(NAME, e),
            };
            let want = if beta == 0 { 1.0 } else { 0.0 };
            worst = worst.max((v - want).abs());
        }
    }
    outcome(
        NAME,
        worst <= 1e-12,
        format!("max deviation {worst:.2e} over |beta| <= 50"),
    )
}

/// Both optimal schemes reproduce `e^{−x}`; Euler's final error at `N = 10`.
pub fn check_exactness() -> CheckResult {
    const NAME: &str = "exactness on y' = -y";
    let p = IvpProblem::new("p1", |_, y| -y, 1.0).with_exact(|x| (-x).exp());
    let cfg = ImplicitSolveConfig::default();
    let mut worst = 0.0f64;
    for scheme in [Scheme::OptimalExplicit, Scheme::OptimalImplicit] {
        for n in [5, 10, 100] {
            let t = match integrate(&p, scheme, n, &cfg) {
                Ok(t) => t,
                Err(e) => return failure(NAME, e),
            };
            let err = t
                .errors_against(|x| (-x).exp())
                .into_iter()
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let euler = match integrate(&p, Scheme::Euler, 10, &cfg) {
        Ok(t) => t.errors_against(|x| (-x).exp())[10],
        Err(e) => return failure(NAME, e),
    };
    outcome(
        NAME,
        worst <= 1e-12 && (euler - 1.9201e-2).abs() <= 1e-6,
        format!("optimal max error {worst:.2e}, Euler final error at N=10 {euler:.6e}"),
    )
}

/// `(ℓ, ψ_ℓ)` against the quadratic form at `k = 3`, `h = 0.1`.
pub fn check_riesz() -> CheckResult {
    const NAME: &str = "Riesz identity";
    let mut worst = 0.0f64;
    for kind in KINDS {
        let f = match closed_form(kind, 3, 0.1) {
            Ok(f) => f,
            Err(e) => return failure(NAME, e),
        };
        let psi = extremal_test_function(&f, 0.0, 0.0);
        match apply_functional(&f, &psi) {
            Ok(pairing) => worst = worst.max((pairing - norm_sq_quadratic(&f)).abs()),
            Err(e) => return failure(NAME, e),
        }
    }
    outcome(
        NAME,
        worst <= 1e-10,
        format!("max |(l, psi) - norm^2| {worst:.2e}"),
    )
}

pub const PERTURBATION_SEED: u64 = 0x5eed_0ada;
pub const PERTURBATIONS: usize = 200;

/// Random perturbations of the optimal `C₁` (max-norm `ε = 1e−3`) projected to
/// keep `Σ C₁[β] e^{−hβ}` fixed; none may lower the norm.
pub fn check_minimum_norm(seed: u64) -> CheckResult {
    const NAME: &str = "minimum norm";
    let (k, h, eps) = (3, 0.1, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lowered = 0;
    let mut smallest_gain = f64::INFINITY;
    let mut constraint = 0.0f64;
    for kind in KINDS {
        let opt = match closed_form(kind, k, h) {
            Ok(f) => f,
            Err(e) => return failure(NAME, e),
        };
        let base = norm_sq_quadratic(&opt);
        let weights: Vec<f64> = (0..opt.c1().len()).map(|b| (-h * b as f64).exp()).collect();
        let ww: f64 = weights.iter().map(|w| w * w).sum();
        for _ in 0..PERTURBATIONS {
            let mut dir: Vec<f64> = weights.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let along = dir.iter().zip(&weights).map(|(d, w)| d * w).sum::<f64>() / ww;
            for (d, w) in dir.iter_mut().zip(&weights) {
                *d -= along * w;
            }
            let scale = eps / dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let c1: Vec<f64> = opt
                .c1()
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + scale * d)
                .collect();
            let g = match opt.with_c1(c1) {
                Ok(g) => g,
                Err(e) => return failure(NAME, e),
            };
            constraint = constraint.max(g.constraint_residuals().1.abs());
            let gain = norm_sq_quadratic(&g) - base;
            smallest_gain = smallest_gain.min(gain);
            if gain < 0.0 {
                lowered += 1;
            }
        }
    }
    outcome(
        NAME,
        lowered == 0 && constraint <= 1e-12,
        format!(
            "{} perturbations, {lowered} lowered the norm, smallest increase {smallest_gain:.2e}, max constraint residual {constraint:.2e}",
            2 * PERTURBATIONS
        ),
    )
}

/// All checks run by the `verify` command.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_coefficients(),
        check_norms(),
        check_discrete_delta(),
        check_exactness(),
        check_riesz(),
        check_minimum_norm(PERTURBATION_SEED),
    ]
}
