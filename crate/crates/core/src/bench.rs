//! Scheme comparisons over a fixed problem suite: per-node error tables,
//! empirical orders of convergence and CSV/JSON emission.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::integrate::{
    integrate, ImplicitSolveConfig, IntegrateError, IvpProblem, Scheme, SolveStrategy,
};
use crate::numfmt;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("grid must be strictly increasing with at least two entries")]
    InvalidGrid,
    #[error("{problem}/{scheme}/N={n}: {source}")]
    Integration {
        problem: String,
        scheme: Scheme,
        n: usize,
        #[source]
        source: IntegrateError,
    },
}

/// Fine-grid size used for reference solutions of problems without a closed form.
pub const REFERENCE_STEPS: usize = 1 << 16;

/// Errors below this are treated as exact when estimating orders.
pub const EXACT_THRESHOLD: f64 = 1e-14;

/// Problem suite:
///
/// * `p1`: `y' = −y`, `y(0) = 1`, `y = e^{−x}`
/// * `p2`: `y' = −y + sin x`, `y(0) = 1`, `y = (sin x − cos x)/2 + 1.5 e^{−x}`
/// * `p3`: `y' = y − x² + 1`, `y(0) = 0.5`, `y = (x + 1)² − 0.5 eˣ`
/// * `p4`: `y' = −50 (y − cos x)`, `y(0) = 0`, fine-grid trapezoid reference
pub fn builtin_problems() -> Vec<IvpProblem> {
    vec![
        IvpProblem::new("p1", |_, y| -y, 1.0).with_exact(|x| (-x).exp()),
        IvpProblem::new("p2", |x: f64, y| -y + x.sin(), 1.0)
            .with_exact(|x: f64| 0.5 * (x.sin() - x.cos()) + 1.5 * (-x).exp()),
        IvpProblem::new("p3", |x: f64, y| y - x * x + 1.0, 0.5)
            .with_exact(|x: f64| (x + 1.0).powi(2) - 0.5 * x.exp()),
        IvpProblem::new("p4", |x: f64, y| -50.0 * (y - x.cos()), 0.0),
    ]
}

pub fn find_problem(name: &str) -> Result<IvpProblem, BenchError> {
    builtin_problems()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| BenchError::UnknownProblem(name.to_string()))
}

/// Per-node errors of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub problem: String,
    pub scheme: Scheme,
    #[serde(rename = "N")]
    pub n: usize,
    pub per_node_error: Vec<f64>,
    pub max_error: f64,
    pub final_error: f64,
    /// Computed node values `y_n`.
    pub values: Vec<f64>,
    /// Exact or reference values at the nodes.
    pub reference: Vec<f64>,
}

impl ErrorTable {
    pub fn x(&self, n: usize) -> f64 {
        n as f64 / self.n as f64
    }
}

/// Reference values at `x_n = n/N`: the exact solution when known, otherwise
/// a Newton-solved trapezoid run on a refinement of the grid with at least
/// [`REFERENCE_STEPS`] steps.
pub fn reference_values(problem: &IvpProblem, n: usize) -> Result<Vec<f64>, BenchError> {
    if let Some(exact) = &problem.exact {
        return Ok((0..=n).map(|i| exact(i as f64 / n as f64)).collect());
    }
    let stride = REFERENCE_STEPS.div_ceil(n);
    let cfg = ImplicitSolveConfig {
        strategy: SolveStrategy::NewtonFallback,
        ..Default::default()
    };
    let fine = integrate(problem, Scheme::Trapezoid, n * stride, &cfg).map_err(|source| {
        BenchError::Integration {
            problem: problem.name.clone(),
            scheme: Scheme::Trapezoid,
            n: n * stride,
            source,
        }
    })?;
    Ok(fine.values.iter().step_by(stride).copied().collect())
}

pub fn run_case(
    problem: &IvpProblem,
    scheme: Scheme,
    n: usize,
    cfg: &ImplicitSolveConfig,
) -> Result<ErrorTable, BenchError> {
    let traj = integrate(problem, scheme, n, cfg).map_err(|source| BenchError::Integration {
        problem: problem.name.clone(),
        scheme,
        n,
        source,
    })?;
    let reference = reference_values(problem, n)?;
    let per_node_error: Vec<f64> = traj
        .values
        .iter()
        .zip(&reference)
        .map(|(y, r)| (y - r).abs())
        .collect();
    Ok(ErrorTable {
        problem: problem.name.clone(),
        scheme,
        n,
        max_error: per_node_error.iter().copied().fold(0.0, f64::max),
        final_error: per_node_error[n],
        per_node_error,
        values: traj.values,
        reference,
    })
}

/// Every problem × scheme × grid combination, sorted by (problem, scheme, N).
pub fn run_suite(
    problems: &[IvpProblem],
    schemes: &[Scheme],
    grid: &[usize],
    cfg: &ImplicitSolveConfig,
) -> Result<Vec<ErrorTable>, BenchError> {
    let mut out = Vec::new();
    for p in problems {
        for &s in schemes {
            for &n in grid {
                out.push(run_case(p, s, n, cfg)?);
            }
        }
    }
    out.sort_by(|a, b| (&a.problem, a.scheme, a.n).cmp(&(&b.problem, b.scheme, b.n)));
    Ok(out)
}

/// Empirical order between two grid levels, or [`Order::Exact`] when either
/// error is at rounding level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Measured(f64),
    Exact,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Measured(v) => f.write_str(&numfmt::real(*v)),
            Order::Exact => f.write_str("exact"),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Order::Measured(v) => s.serialize_f64(*v),
            Order::Exact => s.serialize_str("exact"),
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct OrderVisitor;

        impl Visitor<'_> for OrderVisitor {
            type Value = Order;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"exact\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Order, E> {
                Ok(Order::Measured(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Order, E> {
                Ok(Order::Measured(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Order, E> {
                Ok(Order::Measured(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Order, E> {
                if v == "exact" {
                    Ok(Order::Exact)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(OrderVisitor)
    }
}

impl Order {
    pub fn value(self) -> Option<f64> {
        match self {
            Order::Measured(v) => Some(v),
            Order::Exact => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocReport {
    pub problem: String,
    pub scheme: Scheme,
    pub grid: Vec<usize>,
    /// Final-node errors.
    pub errors: Vec<f64>,
    pub orders: Vec<Order>,
}

/// `orders[i] = log(e_i/e_{i+1}) / log(N_{i+1}/N_i)` from final-node errors.
pub fn eoc(
    problem: &IvpProblem,
    scheme: Scheme,
    grid: &[usize],
    cfg: &ImplicitSolveConfig,
) -> Result<EocReport, BenchError> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(BenchError::InvalidGrid);
    }
    let errors = grid
        .iter()
        .map(|&n| run_case(problem, scheme, n, cfg).map(|t| t.final_error))
        .collect::<Result<Vec<_>, _>>()?;
    let orders = grid
        .windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| {
            if e[0] < EXACT_THRESHOLD || e[1] < EXACT_THRESHOLD {
                Order::Exact
            } else {
                Order::Measured((e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
            }
        })
        .collect();
    Ok(EocReport {
        problem: problem.name.clone(),
        scheme,
        grid: grid.to_vec(),
        errors,
        orders,
    })
}

pub fn eoc_suite(
    problems: &[IvpProblem],
    schemes: &[Scheme],
    grid: &[usize],
    cfg: &ImplicitSolveConfig,
) -> Result<Vec<EocReport>, BenchError> {
    let mut out = Vec::new();
    for p in problems {
        for &s in schemes {
            out.push(eoc(p, s, grid, cfg)?);
        }
    }
    out.sort_by(|a, b| (&a.problem, a.scheme, &a.grid).cmp(&(&b.problem, b.scheme, &b.grid)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Row layout shared by the emitted table types.
pub trait Tabular: Serialize + Clone {
    const HEADER: &'static [&'static str];
    fn sort_key(&self) -> (&str, Scheme, usize);
    fn rows(&self) -> Vec<Vec<String>>;
}

impl Tabular for ErrorTable {
    const HEADER: &'static [&'static str] = &[
        "problem",
        "scheme",
        "N",
        "n",
        "x",
        "y",
        "exact",
        "abs_error",
    ];

    fn sort_key(&self) -> (&str, Scheme, usize) {
        (&self.problem, self.scheme, self.n)
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..=self.n)
            .map(|i| {
                vec![
                    self.problem.clone(),
                    self.scheme.to_string(),
                    self.n.to_string(),
                    i.to_string(),
                    numfmt::real(self.x(i)),
                    numfmt::real(self.values[i]),
                    numfmt::real(self.reference[i]),
                    numfmt::real(self.per_node_error[i]),
                ]
            })
            .collect()
    }
}

impl Tabular for EocReport {
    const HEADER: &'static [&'static str] = &["problem", "scheme", "N", "final_error", "order"];

    fn sort_key(&self) -> (&str, Scheme, usize) {
        (
            &self.problem,
            self.scheme,
            self.grid.first().copied().unwrap_or(0),
        )
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.grid
            .iter()
            .zip(&self.errors)
            .enumerate()
            .map(|(i, (n, e))| {
                let order = if i == 0 {
                    String::new()
                } else {
                    self.orders[i - 1].to_string()
                };
                vec![
                    self.problem.clone(),
                    self.scheme.to_string(),
                    n.to_string(),
                    numfmt::real(*e),
                    order,
                ]
            })
            .collect()
    }
}

/// Serializes `items` after a stable sort by (problem, scheme, N).
pub fn emit<T: Tabular>(items: &[T], format: Format) -> Vec<u8> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(&sorted).expect("tables serialize");
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(T::HEADER).expect("in-memory write");
            for row in sorted.iter().flat_map(Tabular::rows) {
                w.write_record(&row).expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}
