//! Command-line runner for the built-in problems.
//!
//! ```text
//! ascent-kit --problem hs071 --algorithm auglag --local-algorithm mma --xtol-rel 1e-7 --maxeval 1000
//! ```
//!
//! Exit codes: 0 when the solver reports a positive status, 1 on solver
//! failure, 2 on usage errors.

use std::io::Write;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gradcheck::check_derivatives;
use crate::numfmt::format_significant;
use crate::options::{Algorithm, SolverOptions};
use crate::problems::{find_spec, make_problem, ProblemParams, PROBLEM_NAMES};
use crate::result::{SolveResult, StatusCode};
use crate::{minimize, Error, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const CHECK_POINTS: usize = 20;
const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "ascent-kit", version, about = "Solve a built-in optimization problem")]
struct Args {
    /// Problem name: rosenbrock, tutorial_sqrt, hs071 or multi_ineq_2d.
    #[arg(long)]
    problem: String,
    /// Solver; defaults to the problem's documented choice.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    xtol_rel: Option<f64>,
    #[arg(long)]
    xtol_abs: Option<f64>,
    #[arg(long)]
    maxeval: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Local solver for auglag (default mma).
    #[arg(long)]
    local_algorithm: Option<String>,
    #[arg(long)]
    local_xtol_rel: Option<f64>,
    /// Starting point as comma-separated reals.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    /// Problem parameter, `name=v1,v2`; repeatable.
    #[arg(long = "param", allow_hyphen_values = true)]
    params: Vec<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    #[arg(long, default_value_t = 0)]
    print_level: u32,
    /// Compare analytic derivatives with finite differences instead of solving.
    #[arg(long)]
    check_derivatives: bool,
}

/// A fully resolved command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub params: ProblemParams,
    pub algorithm: Algorithm,
    pub xtol_rel: Option<f64>,
    pub xtol_abs: Option<f64>,
    pub maxeval: Option<usize>,
    pub seed: u64,
    pub print_level: u32,
    /// Always set when `algorithm` is auglag.
    pub local_algorithm: Option<Algorithm>,
    pub local_xtol_rel: Option<f64>,
    pub x0_override: Option<Vec<f64>>,
    pub format: OutputFormat,
    pub check_derivatives: bool,
}

/// Rejected command line. `exit_code` is 0 for `--help` and `--version`.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub message: String,
    pub exit_code: i32,
}

impl UsageError {
    fn new(message: impl Into<String>) -> Self {
        UsageError { message: message.into(), exit_code: EXIT_USAGE }
    }
}

fn parse_algorithm(token: &str) -> Result<Algorithm, UsageError> {
    token.parse().map_err(|_| {
        let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
        UsageError::new(format!("unknown algorithm '{token}' (expected one of {})", known.join(", ")))
    })
}

fn parse_param(raw: &str) -> Result<(String, Vec<f64>), UsageError> {
    let (name, values) = raw
        .split_once('=')
        .ok_or_else(|| UsageError::new(format!("parameter '{raw}' is not of the form name=v1,v2")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| UsageError::new(format!("invalid number '{v}' in parameter '{name}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), values))
}

/// Parses `argv` (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| UsageError {
        message: e.to_string(),
        exit_code: if e.use_stderr() { EXIT_USAGE } else { EXIT_OK },
    })?;
    let spec = find_spec(&args.problem).ok_or_else(|| {
        UsageError::new(format!("unknown problem '{}' (expected one of {})", args.problem, PROBLEM_NAMES.join(", ")))
    })?;
    let algorithm = match &args.algorithm {
        Some(a) => parse_algorithm(a)?,
        None => spec.default_algorithm,
    };
    let local_algorithm = match (&args.local_algorithm, algorithm) {
        (Some(a), _) => Some(parse_algorithm(a)?),
        (None, Algorithm::Auglag) => Some(
            spec.default_options()
                .local_opts
                .map(|l| l.algorithm)
                .unwrap_or(Algorithm::Mma),
        ),
        (None, _) => None,
    };
    if let Some(x0) = &args.x0 {
        if x0.len() != spec.dimension {
            return Err(UsageError::new(format!(
                "--x0 has {} components, problem '{}' has dimension {}",
                x0.len(),
                spec.name,
                spec.dimension
            )));
        }
    }
    let mut params = ProblemParams::new();
    for raw in &args.params {
        let (name, values) = parse_param(raw)?;
        params.insert(name, values);
    }
    if !params.is_empty() {
        make_problem(spec.name, Some(&params)).map_err(|e| UsageError::new(e.to_string()))?;
    }
    Ok(RunConfig {
        problem: spec.name.to_string(),
        params,
        algorithm,
        xtol_rel: args.xtol_rel,
        xtol_abs: args.xtol_abs,
        maxeval: args.maxeval,
        seed: args.seed.unwrap_or(0),
        print_level: args.print_level,
        local_algorithm,
        local_xtol_rel: args.local_xtol_rel,
        x0_override: args.x0,
        format: args.format,
        check_derivatives: args.check_derivatives,
    })
}

/// Inverse of [`parse_args`], without the program name.
pub fn render_args(config: &RunConfig) -> Vec<String> {
    let mut out = vec!["--problem".to_string(), config.problem.clone()];
    let mut push = |flag: &str, value: String| {
        out.push(flag.to_string());
        out.push(value);
    };
    push("--algorithm", config.algorithm.id().to_string());
    if let Some(v) = config.xtol_rel {
        push("--xtol-rel", v.to_string());
    }
    if let Some(v) = config.xtol_abs {
        push("--xtol-abs", v.to_string());
    }
    if let Some(v) = config.maxeval {
        push("--maxeval", v.to_string());
    }
    push("--seed", config.seed.to_string());
    if let Some(a) = config.local_algorithm {
        push("--local-algorithm", a.id().to_string());
    }
    if let Some(v) = config.local_xtol_rel {
        push("--local-xtol-rel", v.to_string());
    }
    if let Some(x0) = &config.x0_override {
        push("--x0", join(x0));
    }
    for (name, values) in &config.params {
        push("--param", format!("{name}={}", join(values)));
    }
    let format = match config.format {
        OutputFormat::Text => "text",
        OutputFormat::Json => "json",
    };
    push("--format", format.to_string());
    push("--print-level", config.print_level.to_string());
    if config.check_derivatives {
        out.push("--check-derivatives".to_string());
    }
    out
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Options for the configured run: the problem's documented options, switched
/// to another algorithm if requested, then the explicit overrides.
pub fn solver_options(config: &RunConfig) -> SolverOptions {
    let spec = find_spec(&config.problem).expect("validated problem name");
    let mut opts = spec.default_options();
    if opts.algorithm != config.algorithm {
        opts.algorithm = config.algorithm;
        opts.local_opts = None;
    }
    if let Some(local_alg) = config.local_algorithm.filter(|_| config.algorithm == Algorithm::Auglag) {
        let mut local = opts.local_opts.take().map(|l| *l).unwrap_or_else(|| SolverOptions::new(local_alg).xtol_rel(opts.xtol_rel));
        local.algorithm = local_alg;
        if let Some(t) = config.local_xtol_rel {
            local.xtol_rel = t;
        }
        opts.local_opts = Some(Box::new(local));
    }
    if let Some(v) = config.xtol_rel {
        opts.xtol_rel = v;
    }
    if let Some(v) = config.xtol_abs {
        opts.xtol_abs = v;
    }
    if config.maxeval.is_some() {
        opts.maxeval = config.maxeval;
    }
    opts.seed = config.seed;
    opts.print_level = config.print_level;
    opts
}

/// The report in the documented text layout.
pub fn format_report(result: &SolveResult, _config: &RunConfig, solver_version: &str) -> String {
    let controls: Vec<String> = result.x_opt.iter().map(|v| format_significant(*v, 7)).collect();
    format!(
        "\nMinimization using ascent-kit version {solver_version}\n\n\
         Solver status: {}\n\n\
         Number of Iterations....: {}\n\
         Termination conditions: {}\n\
         Number of inequality constraints: {}\n\
         Number of equality constraints: {}\n\
         Optimal value of objective function: {}\n\
         Optimal value of controls: {}\n",
        result.status,
        result.evaluations,
        result.termination,
        result.m_ineq,
        result.m_eq,
        format_significant(result.f_opt, 15),
        controls.join(" "),
    )
}

/// Structured form of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub status_code: i32,
    pub status_name: String,
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: String,
    pub m_ineq: usize,
    pub m_eq: usize,
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
}

impl JsonReport {
    pub fn new(result: &SolveResult, config: &RunConfig) -> Self {
        JsonReport {
            status_code: result.status.code(),
            status_name: result.status.name().to_string(),
            x_opt: result.x_opt.clone(),
            f_opt: result.f_opt,
            iterations: result.iterations,
            evaluations: result.evaluations,
            termination: result.termination.clone(),
            m_ineq: result.m_ineq,
            m_eq: result.m_eq,
            problem: config.problem.clone(),
            algorithm: config.algorithm.id().to_string(),
            seed: config.seed,
        }
    }

    /// The solver result the report was made from.
    pub fn to_result(&self) -> Option<SolveResult> {
        Some(SolveResult {
            status: StatusCode::from_code(self.status_code)?,
            x_opt: self.x_opt.clone(),
            f_opt: self.f_opt,
            iterations: self.iterations,
            evaluations: self.evaluations,
            termination: self.termination.clone(),
            m_ineq: self.m_ineq,
            m_eq: self.m_eq,
        })
    }
}

pub fn format_json(result: &SolveResult, config: &RunConfig) -> String {
    serde_json::to_string_pretty(&JsonReport::new(result, config)).expect("report serializes") + "\n"
}

/// Uniform points in the problem's sampling box, seeded by the run seed.
fn sample_points(config: &RunConfig) -> Vec<Vec<f64>> {
    let spec = find_spec(&config.problem).expect("validated problem name");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..CHECK_POINTS)
        .map(|_| {
            spec.sample_lower
                .iter()
                .zip(&spec.sample_upper)
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect()
        })
        .collect()
}

/// Executes a parsed configuration and returns the exit code.
pub fn run(config: &RunConfig, out: &mut impl Write, err: &mut impl Write) -> i32 {
    let params = (!config.params.is_empty()).then_some(&config.params);
    let mut problem = match make_problem(&config.problem, params) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(x0) = &config.x0_override {
        problem = problem.with_x0(x0.clone());
    }

    if config.check_derivatives {
        return match check_derivatives(&problem, &sample_points(config), CHECK_TOL) {
            Ok(report) => {
                let written = match config.format {
                    OutputFormat::Text => write!(out, "{report}"),
                    OutputFormat::Json => writeln!(
                        out,
                        "{}",
                        serde_json::json!({
                            "passed": report.passed,
                            "max_abs_error": report.max_abs_error,
                            "max_rel_error": report.max_rel_error,
                            "points_checked": report.points_checked,
                            "tolerance": report.tolerance,
                        })
                    ),
                };
                if written.is_err() {
                    return EXIT_SOLVER_FAILURE;
                }
                if report.passed { EXIT_OK } else { EXIT_SOLVER_FAILURE }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_SOLVER_FAILURE
            }
        };
    }

    let result = match minimize(&problem, &solver_options(config)) {
        Ok(r) => r,
        Err(e) => {
            report_error(err, &e);
            return EXIT_SOLVER_FAILURE;
        }
    };
    let text = match config.format {
        OutputFormat::Text => format_report(&result, config, VERSION),
        OutputFormat::Json => format_json(&result, config),
    };
    if out.write_all(text.as_bytes()).is_err() {
        return EXIT_SOLVER_FAILURE;
    }
    if result.status.is_success() { EXIT_OK } else { EXIT_SOLVER_FAILURE }
}

fn report_error(err: &mut impl Write, e: &Error) {
    let _ = writeln!(err, "Solver status: {}\nerror: {e}", e.status());
}

/// Parses and runs; what the binary calls.
pub fn main_with<I, T>(argv: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(config) => run(&config, out, err),
        Err(usage) => {
            let sink: &mut dyn Write = if usage.exit_code == EXIT_OK { out } else { err };
            let _ = write!(sink, "{}", usage.message);
            if !usage.message.ends_with('\n') {
                let _ = writeln!(sink);
            }
            usage.exit_code
        }
    }
}
