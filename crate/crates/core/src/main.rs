use std::error::Error;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use optadams::bench::{self, builtin_problems, find_problem, Format};
use optadams::coefficients::{closed_form_report, solve_optimal, FormulaKind};
use optadams::integrate::{integrate, ImplicitSolveConfig, Scheme, SolveStrategy};
use optadams::report::{coefficients_csv, norm_csv, norm_report};
use optadams::verify;

#[derive(Parser)]
#[command(
    name = "optadams",
    version,
    about = "Optimal Adams-type difference formulas and ODE steppers"
)]
struct Cli {
    /// Write output to PATH instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print optimal coefficients.
    Coeffs {
        #[command(flatten)]
        formula: FormulaArgs,
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
    },
    /// Print quadratic-form and closed-form squared norms.
    Norm {
        #[command(flatten)]
        formula: FormulaArgs,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
    },
    /// Integrate one problem and print the trajectory as CSV.
    Integrate {
        #[arg(long, value_parser = parse_problem)]
        problem: String,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the scheme comparison over the problem suite.
    Bench {
        #[arg(long, value_delimiter = ',', value_parser = parse_problem)]
        problems: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
        schemes: Option<Vec<Scheme>>,
        #[arg(long, value_delimiter = ',', default_value = "40,80,160", value_parser = clap::value_parser!(u64).range(1..))]
        grids: Vec<u64>,
        #[arg(long, value_enum)]
        format: OutFormat,
        /// Per-node error tables or convergence orders.
        #[arg(long, value_enum, default_value_t = ReportKind::Errors)]
        report: ReportKind,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Check the core identities; one line per check.
    Verify,
}

#[derive(Args)]
struct FormulaArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: FormulaKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Step size in (0, 1].
    #[arg(long, value_parser = parse_step, conflicts_with = "n", required_unless_present = "n")]
    h: Option<f64>,
    /// Number of steps; sets h = 1/N.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
}

impl FormulaArgs {
    fn step(&self) -> f64 {
        match (self.h, self.n) {
            (Some(h), _) => h,
            (None, Some(n)) => 1.0 / n as f64,
            (None, None) => unreachable!("clap requires --h or --n"),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Implicit solver tolerance.
    #[arg(long, default_value_t = 1e-13, value_parser = parse_positive)]
    tol: f64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    max_iterations: u32,
    #[arg(long, value_enum, default_value_t = Strategy::NewtonFallback)]
    strategy: Strategy,
}

impl SolverArgs {
    fn config(&self) -> ImplicitSolveConfig {
        ImplicitSolveConfig {
            tolerance: self.tol,
            max_iterations: self.max_iterations,
            strategy: match self.strategy {
                Strategy::FixedPoint => SolveStrategy::FixedPoint,
                Strategy::NewtonFallback => SolveStrategy::NewtonFallback,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Closed,
    Solve,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Format {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Errors,
    Eoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    FixedPoint,
    NewtonFallback,
}

fn parse_kind(s: &str) -> Result<FormulaKind, String> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn parse_problem(s: &str) -> Result<String, String> {
    find_problem(s).map(|p| p.name).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn parse_step(s: &str) -> Result<f64, String> {
    match parse_positive(s)? {
        h if h <= 1.0 => Ok(h),
        h => Err(format!("step must lie in (0, 1], got {h}")),
    }
}

type Outcome = Result<(Vec<u8>, bool), Box<dyn Error>>;

fn json(value: &impl serde::Serialize) -> Result<Vec<u8>, Box<dyn Error>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn run(command: Command) -> Outcome {
    let bytes = match command {
        Command::Coeffs {
            formula,
            method,
            format,
        } => {
            let (kind, k, h) = (formula.kind, formula.k as usize, formula.step());
            let report = match method {
                Method::Closed => closed_form_report(kind, k, h)?,
                Method::Solve => solve_optimal(kind, k, h)?,
            };
            match format {
                OutFormat::Json => json(&report)?,
                OutFormat::Csv => coefficients_csv(&report).into_bytes(),
            }
        }
        Command::Norm { formula, format } => {
            let report = norm_report(formula.kind, formula.k as usize, formula.step())?;
            match format {
                OutFormat::Json => json(&report)?,
                OutFormat::Csv => norm_csv(&report).into_bytes(),
            }
        }
        Command::Integrate {
            problem,
            scheme,
            n,
            solver,
        } => {
            let p = find_problem(&problem)?;
            let traj = integrate(&p, scheme, n as usize, &solver.config())?;
            traj.to_csv(&p).into_bytes()
        }
        Command::Bench {
            problems,
            schemes,
            grids,
            format,
            report,
            solver,
        } => {
            let problems = match problems {
                Some(names) => names
                    .iter()
                    .map(|n| find_problem(n))
                    .collect::<Result<_, _>>()?,
                None => builtin_problems(),
            };
            let schemes = schemes.unwrap_or_else(|| Scheme::ALL.to_vec());
            let grid: Vec<usize> = grids.iter().map(|&n| n as usize).collect();
            let cfg = solver.config();
            match report {
                ReportKind::Errors => bench::emit(
                    &bench::run_suite(&problems, &schemes, &grid, &cfg)?,
                    format.into(),
                ),
                ReportKind::Eoc => bench::emit(
                    &bench::eoc_suite(&problems, &schemes, &grid, &cfg)?,
                    format.into(),
                ),
            }
        }
        Command::Verify => {
            let results = verify::run_all();
            let mut out = String::new();
            for r in &results {
                out.push_str(&r.line());
                out.push('\n');
            }
            return Ok((out.into_bytes(), results.iter().all(|r| r.passed)));
        }
    };
    Ok((bytes, true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line: Vec<&str> = text
                .lines()
                .map(str::trim)
                .skip_while(|l| l.is_empty())
                .take_while(|l| !l.is_empty())
                .collect();
            eprintln!("{}", line.join(" "));
            return ExitCode::from(2);
        }
    };

    let (bytes, passed) = match run(cli.command) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &bytes),
        None => io::stdout().lock().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(1);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
