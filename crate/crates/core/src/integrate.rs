//! One-step integrators for `y' = f(x, y)`, `y(0) = y₀` on `[0, 1]`.
//!
//! The optimal k-step formulas keep only the weights at `n+k−1` (explicit) or
//! `n+k−1, n+k` (implicit), so they run as one-step recurrences without any
//! startup values:
//!
//! ```text
//! optimal explicit:  y_{n+1} = y_n + (1 − e^{−h}) f_n
//! optimal implicit:  y_{n+1} = y_n + tanh(h/2) (f_{n+1} + f_n)
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::DifferenceFormula;
use crate::numfmt;

pub type RhsFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("non-finite state {value} at x = {x}")]
    NonFiniteState { x: f64, value: f64 },
    #[error("implicit solve did not converge after {iterations} iterations (last update {last_update:e})")]
    NoConvergence { iterations: u32, last_update: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("number of steps must be at least 1")]
    InvalidSteps,
    #[error("invalid implicit solver configuration: {0}")]
    InvalidConfig(String),
    #[error("formula does not define a one-step recurrence on [0, 1]: {0}")]
    UnsupportedFormula(String),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: StepError,
    },
}

/// Scalar initial-value problem on `[0, 1]`.
#[derive(Clone)]
pub struct IvpProblem {
    pub name: String,
    pub rhs: RhsFn,
    pub y0: f64,
    pub exact: Option<ExactFn>,
}

impl fmt::Debug for IvpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpProblem")
            .field("name", &self.name)
            .field("y0", &self.y0)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl IvpProblem {
    pub fn new(
        name: impl Into<String>,
        rhs: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        y0: f64,
    ) -> Self {
        IvpProblem {
            name: name.into(),
            rhs: Arc::new(rhs),
            y0,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn exact_at(&self, x: f64) -> Option<f64> {
        self.exact.as_ref().map(|e| e(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    OptimalExplicit,
    OptimalImplicit,
    Trapezoid,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Euler,
        Scheme::OptimalExplicit,
        Scheme::OptimalImplicit,
        Scheme::Trapezoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::OptimalExplicit => "optimal_explicit",
            Scheme::OptimalImplicit => "optimal_implicit",
            Scheme::Trapezoid => "trapezoid",
        }
    }

    pub fn is_implicit(self) -> bool {
        matches!(self, Scheme::OptimalImplicit | Scheme::Trapezoid)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!("unknown scheme '{s}' (expected euler, optimal_explicit, optimal_implicit or trapezoid)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStrategy {
    /// Fixed-point iteration only.
    FixedPoint,
    /// Fixed-point iteration, switching to Newton with a finite-difference
    /// derivative when the iteration stalls or grows.
    NewtonFallback,
}

impl FromStr for SolveStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed_point" | "fixed-point" => Ok(SolveStrategy::FixedPoint),
            "newton_fallback" | "newton-fallback" | "newton" => Ok(SolveStrategy::NewtonFallback),
            other => Err(format!(
                "unknown strategy '{other}' (expected fixed_point or newton_fallback)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSolveConfig {
    /// Update threshold, scaled by `max(1, |z|)`.
    pub tolerance: f64,
    pub max_iterations: u32,
    pub strategy: SolveStrategy,
}

impl Default for ImplicitSolveConfig {
    fn default() -> Self {
        ImplicitSolveConfig {
            tolerance: 1e-13,
            max_iterations: 50,
            strategy: SolveStrategy::NewtonFallback,
        }
    }
}

impl ImplicitSolveConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(IntegrateError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(IntegrateError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn converged(&self, update: f64, z: f64) -> bool {
        update <= self.tolerance * z.abs().max(1.0)
    }
}

fn finite(x: f64, value: f64) -> Result<f64, StepError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(StepError::NonFiniteState { x, value })
    }
}

/// `y + h f(x, y)`.
pub fn step_euler(x: f64, y: f64, h: f64, rhs: &dyn Fn(f64, f64) -> f64) -> Result<f64, StepError> {
    finite(x + h, y + h * rhs(x, y))
}

/// `y + (1 − e^{−h}) f(x, y)`.
pub fn step_optimal_explicit(
    x: f64,
    y: f64,
    h: f64,
    rhs: &dyn Fn(f64, f64) -> f64,
) -> Result<f64, StepError> {
    finite(x + h, y + -(-h).exp_m1() * rhs(x, y))
}

/// Solves `z = y + c (f(x+h, z) + f(x, y))` with `c = tanh(h/2)`.
pub fn step_optimal_implicit(
    x: f64,
    y: f64,
    h: f64,
    rhs: &dyn Fn(f64, f64) -> f64,
    cfg: &ImplicitSolveConfig,
) -> Result<(f64, u32), StepError> {
    let c = (0.5 * h).tanh();
    step_implicit(x, y, h, c, c, rhs, cfg)
}

/// Solves `z = y + (h/2) (f(x+h, z) + f(x, y))`.
pub fn step_trapezoid(
    x: f64,
    y: f64,
    h: f64,
    rhs: &dyn Fn(f64, f64) -> f64,
    cfg: &ImplicitSolveConfig,
) -> Result<(f64, u32), StepError> {
    step_implicit(x, y, h, 0.5 * h, 0.5 * h, rhs, cfg)
}

/// Solves `z = y + w_new f(x+h, z) + w_old f(x, y)`, seeded with the explicit
/// predictor `y + (w_new + w_old) f(x, y)`. Returns `z` and the number of
/// iterations spent.
pub fn step_implicit(
    x: f64,
    y: f64,
    h: f64,
    w_new: f64,
    w_old: f64,
    rhs: &dyn Fn(f64, f64) -> f64,
    cfg: &ImplicitSolveConfig,
) -> Result<(f64, u32), StepError> {
    let x_new = x + h;
    let f_old = finite(x, rhs(x, y))?;
    let base = y + w_old * f_old;
    let predictor = finite(x_new, y + (w_new + w_old) * f_old)?;

    let mut z = predictor;
    let mut last_update = f64::INFINITY;
    let mut spent = 0;
    for it in 1..=cfg.max_iterations {
        spent = it;
        let next = base + w_new * rhs(x_new, z);
        let update = (next - z).abs();
        if !next.is_finite() || (it > 2 && update > last_update) {
            debug!("fixed-point iteration diverging at x = {x_new} (iteration {it})");
            break;
        }
        z = next;
        if cfg.converged(update, z) {
            return Ok((z, it));
        }
        last_update = update;
    }

    match cfg.strategy {
        SolveStrategy::FixedPoint => {
            if !z.is_finite() || !last_update.is_finite() {
                return Err(StepError::NonFiniteState { x: x_new, value: z });
            }
            Err(StepError::NoConvergence {
                iterations: spent,
                last_update,
            })
        }
        SolveStrategy::NewtonFallback => {
            let (z, its) = newton_solve(x_new, base, w_new, predictor, rhs, cfg)?;
            Ok((z, spent + its))
        }
    }
}

/// Newton iteration on `z − base − w f(x, z) = 0` with a central-difference
/// derivative of step `max(1e−7, 1e−7 |z|)`.
pub fn newton_solve(
    x: f64,
    base: f64,
    w: f64,
    start: f64,
    rhs: &dyn Fn(f64, f64) -> f64,
    cfg: &ImplicitSolveConfig,
) -> Result<(f64, u32), StepError> {
    let mut z = start;
    let mut update = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let residual = z - base - w * rhs(x, z);
        let delta = (1e-7 * z.abs()).max(1e-7);
        let slope = (rhs(x, z + delta) - rhs(x, z - delta)) / (2.0 * delta);
        let jac = 1.0 - w * slope;
        if !(residual.is_finite() && jac.is_finite()) || jac == 0.0 {
            return Err(StepError::NonFiniteState { x, value: z });
        }
        let next = z - residual / jac;
        update = (next - z).abs();
        z = finite(x, next)?;
        if cfg.converged(update, z) {
            return Ok((z, it));
        }
    }
    Err(StepError::NoConvergence {
        iterations: cfg.max_iterations,
        last_update: update,
    })
}

/// Node values `y_0..y_N` of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scheme: String,
    pub n_steps: usize,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub implicit_iterations: Option<Vec<u32>>,
}

impl Trajectory {
    pub fn h(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// `x_n = n h`.
    pub fn x(&self, n: usize) -> f64 {
        n as f64 * self.h()
    }

    /// `|y_n − exact(x_n)|` for every node.
    pub fn errors_against(&self, exact: impl Fn(f64) -> f64) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(n, y)| (y - exact(self.x(n))).abs())
            .collect()
    }

    /// CSV with header `n,x,y,exact,abs_error`; the last two columns stay
    /// empty when the problem has no exact solution.
    pub fn to_csv(&self, problem: &IvpProblem) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "x", "y", "exact", "abs_error"])
            .expect("in-memory write");
        for (n, y) in self.values.iter().enumerate() {
            let x = self.x(n);
            let (exact, err) = match problem.exact_at(x) {
                Some(e) => (numfmt::real(e), numfmt::real((y - e).abs())),
                None => (String::new(), String::new()),
            };
            w.write_record([n.to_string(), numfmt::real(x), numfmt::real(*y), exact, err])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Runs `scheme` over `N` uniform steps of `[0, 1]`.
pub fn integrate(
    problem: &IvpProblem,
    scheme: Scheme,
    n_steps: usize,
    cfg: &ImplicitSolveConfig,
) -> Result<Trajectory, IntegrateError> {
    if n_steps == 0 {
        return Err(IntegrateError::InvalidSteps);
    }
    let h = 1.0 / n_steps as f64;
    let (w_new, w_old) = match scheme {
        Scheme::Euler => (0.0, h),
        Scheme::OptimalExplicit => (0.0, -(-h).exp_m1()),
        Scheme::OptimalImplicit => ((0.5 * h).tanh(), (0.5 * h).tanh()),
        Scheme::Trapezoid => (0.5 * h, 0.5 * h),
    };
    run(
        problem,
        scheme.name(),
        n_steps,
        w_new,
        w_old,
        scheme.is_implicit(),
        cfg,
    )
}

/// Runs the one-step recurrence defined by a difference formula's weights.
/// The formula's step must be `1/N` for an integer `N`, and every weight other
/// than the last one (explicit) or last two (implicit) must vanish.
pub fn integrate_formula(
    problem: &IvpProblem,
    formula: &DifferenceFormula,
    cfg: &ImplicitSolveConfig,
) -> Result<Trajectory, IntegrateError> {
    let n = (1.0 / formula.h()).round();
    if n < 1.0 || (n * formula.h() - 1.0).abs() > 1e-12 {
        return Err(IntegrateError::UnsupportedFormula(format!(
            "step {} is not 1/N",
            formula.h()
        )));
    }
    let interior = formula.max_interior_weight();
    if interior > 1e-10 {
        return Err(IntegrateError::UnsupportedFormula(format!(
            "interior weight {interior:e} is not negligible"
        )));
    }
    let (w_new, w_old) = formula.step_weights();
    let name = format!("formula_{}", formula.kind());
    let implicit = w_new != 0.0;
    run(problem, &name, n as usize, w_new, w_old, implicit, cfg)
}

fn run(
    problem: &IvpProblem,
    name: &str,
    n_steps: usize,
    w_new: f64,
    w_old: f64,
    implicit: bool,
    cfg: &ImplicitSolveConfig,
) -> Result<Trajectory, IntegrateError> {
    if implicit {
        cfg.validate()?;
    }
    let h = 1.0 / n_steps as f64;
    let rhs = problem.rhs.as_ref();
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut iterations = implicit.then(|| Vec::with_capacity(n_steps));
    let mut y = problem.y0;
    values.push(y);
    for n in 0..n_steps {
        let x = n as f64 * h;
        let step = if let Some(its) = iterations.as_mut() {
            step_implicit(x, y, h, w_new, w_old, rhs, cfg).map(|(z, it)| {
                its.push(it);
                z
            })
        } else {
            finite(x + h, y + w_old * rhs(x, y))
        };
        y = step.map_err(|source| IntegrateError::Step {
            step: n + 1,
            source,
        })?;
        values.push(y);
    }
    Ok(Trajectory {
        scheme: name.to_string(),
        n_steps,
        values,
        implicit_iterations: iterations,
    })
}
