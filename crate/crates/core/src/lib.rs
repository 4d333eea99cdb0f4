//! Constrained nonlinear optimization.
//!
//! Minimize `f(x)` subject to `g(x) <= 0`, `h(x) = 0` and box bounds with one
//! of five solvers: L-BFGS, COBYLA, MMA, an augmented Lagrangian wrapper and
//! ISRES. Problems are described once with [`Problem`] and solved with
//! [`minimize`].
//!
//! ```
//! use ascent_kit::{minimize, Algorithm, Problem, SolverOptions, StatusCode};
//!
//! let problem = Problem::new(vec![0.0], |x| (x[0] - 3.0).powi(2))
//!     .with_gradient(|x| vec![2.0 * (x[0] - 3.0)]);
//! let result = minimize(&problem, &SolverOptions::new(Algorithm::Lbfgs)).unwrap();
//! assert!((result.x_opt[0] - 3.0).abs() < 1e-8);
//! assert!(result.status.is_success());
//! # let _ = StatusCode::Success;
//! ```

pub mod auglag;
pub mod cli;
pub mod cobyla;
pub mod error;
pub mod gradcheck;
pub mod isres;
pub mod lbfgs;
pub mod ledger;
pub mod mma;
pub mod numfmt;
pub mod options;
pub mod problem;
pub mod problems;
pub mod result;

pub use error::{Error, Result};
pub use gradcheck::{check_derivatives, DerivativeReport};
pub use ledger::{should_stop, EvaluationLedger};
pub use options::{Algorithm, SolverOptions};
pub use problem::{validate_problem, ConstraintBlock, Problem};
pub use problems::{list_problems, make_problem, ProblemSpec};
pub use result::{SolveResult, StatusCode};

/// Crate version printed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Solves `problem` with the algorithm named in `opts`.
pub fn minimize(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    match opts.algorithm {
        Algorithm::Lbfgs => lbfgs::minimize_lbfgs(problem, opts),
        Algorithm::Cobyla => cobyla::minimize_cobyla(problem, opts),
        Algorithm::Mma => mma::minimize_mma(problem, opts),
        Algorithm::Auglag => auglag::minimize_auglag(problem, opts),
        Algorithm::Isres => isres::minimize_isres(problem, opts),
    }
}

/// Validates under the given algorithm, runs `body` with a fresh ledger and
/// turns budget exhaustion into a result.
pub(crate) fn run_solver(
    problem: &Problem,
    opts: &SolverOptions,
    algorithm: Algorithm,
    body: impl FnOnce(&Problem, &SolverOptions, &mut EvaluationLedger) -> Result<SolveResult>,
) -> Result<SolveResult> {
    let mut opts = opts.clone();
    opts.algorithm = algorithm;
    let (problem, opts) = validate_problem(problem, &opts)?;
    let mut ledger = EvaluationLedger::new(opts.maxeval);
    body(&problem, &opts, &mut ledger)
}

/// Assembles a result, clamping `x` into the box so rounding never leaks out.
pub(crate) fn finish(
    problem: &Problem,
    opts: &SolverOptions,
    status: StatusCode,
    mut x: Vec<f64>,
    f: f64,
    iterations: usize,
    ledger: &EvaluationLedger,
) -> SolveResult {
    problem.clamp_into_bounds(&mut x);
    SolveResult {
        status,
        x_opt: x,
        f_opt: f,
        iterations,
        evaluations: ledger.n_obj,
        termination: opts.termination_summary(),
        m_ineq: problem.m_ineq(),
        m_eq: problem.m_eq(),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
