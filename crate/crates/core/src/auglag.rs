//! Augmented Lagrangian outer loop around a local solver.
//!
//! Equality constraints always go into the penalty. Inequalities are handed to
//! the local solver unchanged when it can handle them (MMA, COBYLA) and are
//! penalized otherwise.

use crate::error::{Error, Result};
use crate::ledger::{xtol_satisfied, EvaluationLedger};
use crate::options::{Algorithm, SolverOptions};
use crate::problem::{validate_problem, Problem};
use crate::result::{SolveResult, StatusCode};
use crate::{cobyla, finish, lbfgs, mma, run_solver};

const STALL_FACTOR: f64 = 0.25;
const RHO_MAX: f64 = 1e12;
const FIRST_INNER_TOL: f64 = 1e-3;

/// Multipliers and penalty weight of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    /// One per equality constraint.
    pub lambda: Vec<f64>,
    /// One per inequality constraint, never negative.
    pub mu: Vec<f64>,
    pub rho: f64,
    /// Violation norm after the previous update, used by the stall test.
    pub last_violation: Option<f64>,
}

impl MultiplierState {
    pub fn new(m_eq: usize, m_ineq: usize, rho: f64) -> Self {
        MultiplierState {
            lambda: vec![0.0; m_eq],
            mu: vec![0.0; m_ineq],
            rho,
            last_violation: None,
        }
    }
}

fn penalty_terms(h: &[f64], g: &[f64], state: &MultiplierState) -> f64 {
    let rho = state.rho;
    let eq: f64 = h.iter().zip(&state.lambda).map(|(h, l)| l * h + 0.5 * rho * h * h).sum();
    let ineq: f64 = g
        .iter()
        .zip(&state.mu)
        .map(|(g, m)| (m + rho * g).max(0.0).powi(2) - m * m)
        .sum::<f64>()
        / (2.0 * rho);
    eq + ineq
}

fn violation_norm(h: &[f64], g: &[f64]) -> f64 {
    let s: f64 = h.iter().map(|v| v * v).sum::<f64>() + g.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>();
    s.sqrt()
}

/// Value of `f + sum lambda h + rho/2 h^2 + 1/(2 rho) sum (max(0, mu + rho g)^2 - mu^2)`
/// and, when the problem has derivatives, its gradient.
///
/// Pass an empty `mu` to leave the inequalities out of the merit function.
pub fn augmented_value(problem: &Problem, x: &[f64], state: &MultiplierState) -> Result<(f64, Option<Vec<f64>>)> {
    let value = augmented_objective(problem, x, state);
    if value.is_nan() {
        return Err(Error::callback("augmented objective is NaN"));
    }
    let grad = if problem.has_gradient() { augmented_gradient(problem, x, state) } else { None };
    Ok((value, grad))
}

fn constraint_values(problem: &Problem, x: &[f64], state: &MultiplierState) -> (Vec<f64>, Vec<f64>) {
    let h = if state.lambda.is_empty() { Vec::new() } else { problem.eval_equalities(x) };
    let g = if state.mu.is_empty() { Vec::new() } else { problem.eval_inequalities(x) };
    (h, g)
}

fn augmented_objective(problem: &Problem, x: &[f64], state: &MultiplierState) -> f64 {
    let (h, g) = constraint_values(problem, x, state);
    problem.eval_objective(x) + penalty_terms(&h, &g, state)
}

fn augmented_gradient(problem: &Problem, x: &[f64], state: &MultiplierState) -> Option<Vec<f64>> {
    let mut grad = problem.eval_gradient(x)?;
    let (h, g) = constraint_values(problem, x, state);
    let mut add_rows = |block: Option<&crate::problem::ConstraintBlock>, weights: Vec<f64>| -> Option<()> {
        if weights.is_empty() {
            return Some(());
        }
        let rows = (block?.jacobian.as_ref()?)(x);
        for (row, w) in rows.iter().zip(weights) {
            for (gj, rj) in grad.iter_mut().zip(row) {
                *gj += w * rj;
            }
        }
        Some(())
    };
    let eq_w = h.iter().zip(&state.lambda).map(|(h, l)| l + state.rho * h).collect();
    add_rows(problem.equalities(), eq_w)?;
    let ineq_w = g.iter().zip(&state.mu).map(|(g, m)| (m + state.rho * g).max(0.0)).collect();
    add_rows(problem.inequalities(), ineq_w)?;
    Some(grad)
}

/// First-order update: `lambda += rho h`, `mu = max(0, mu + rho g)`, and the
/// penalty doubles (up to 1e12) unless the violation shrank by a factor 0.25.
pub fn update_multipliers(state: &MultiplierState, h_values: &[f64], g_values: &[f64]) -> MultiplierState {
    let rho = state.rho;
    let lambda = state.lambda.iter().zip(h_values).map(|(l, h)| l + rho * h).collect();
    let mu = state.mu.iter().zip(g_values).map(|(m, g)| (m + rho * g).max(0.0)).collect();
    let violation = violation_norm(h_values, g_values);
    let stalled = state.last_violation.is_some_and(|prev| violation > STALL_FACTOR * prev);
    MultiplierState {
        lambda,
        mu,
        rho: if stalled { (2.0 * rho).min(RHO_MAX) } else { rho },
        last_violation: Some(violation),
    }
}

pub fn minimize_auglag(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    minimize_auglag_with_multipliers(problem, opts).map(|(r, _)| r)
}

/// Like [`minimize_auglag`] but also returns the final multipliers.
pub fn minimize_auglag_with_multipliers(problem: &Problem, opts: &SolverOptions) -> Result<(SolveResult, MultiplierState)> {
    let mut state = None;
    let result = run_solver(problem, opts, Algorithm::Auglag, |p, o, ledger| {
        let (r, s) = solve(p, o, ledger)?;
        state = Some(s);
        Ok(r)
    })?;
    Ok((result, state.expect("solve sets the state")))
}

/// Runs a local solver on an already built subproblem with its own ledger.
fn local_solve(problem: &Problem, opts: &SolverOptions) -> Result<(SolveResult, EvaluationLedger)> {
    let (problem, opts) = validate_problem(problem, opts)?;
    let mut ledger = EvaluationLedger::new(opts.maxeval);
    let r = match opts.algorithm {
        Algorithm::Lbfgs => lbfgs::solve(&problem, &opts, &mut ledger),
        Algorithm::Cobyla => cobyla::solve(&problem, &opts, &mut ledger),
        Algorithm::Mma => mma::solve(&problem, &opts, &mut ledger),
        other => Err(Error::invalid(format!("{other} cannot serve as the auglag local solver"))),
    }?;
    Ok((r, ledger))
}

/// The subproblem for fixed multipliers: same box and x0, augmented objective,
/// and the inequalities themselves when they are not penalized.
fn subproblem(problem: &Problem, x0: &[f64], state: &MultiplierState, pass_ineq: bool) -> Problem {
    let (pf, ps) = (problem.clone(), state.clone());
    let mut sub = Problem::new(x0.to_vec(), move |x| augmented_objective(&pf, x, &ps))
        .with_bounds(problem.lower().to_vec(), problem.upper().to_vec());
    if problem.has_gradient() {
        let (pg, sg) = (problem.clone(), state.clone());
        sub = sub.with_gradient(move |x| augmented_gradient(&pg, x, &sg).unwrap_or_else(|| vec![f64::NAN; x.len()]));
    }
    if pass_ineq {
        if let Some(block) = problem.inequalities() {
            sub = sub.with_inequalities(block.clone());
        }
    }
    sub
}

fn solve(problem: &Problem, opts: &SolverOptions, ledger: &mut EvaluationLedger) -> Result<(SolveResult, MultiplierState)> {
    let local = opts.local_opts.as_deref().expect("validated auglag has local options").clone();
    let (m_ineq, m_eq) = (problem.m_ineq(), problem.m_eq());

    if m_ineq == 0 && m_eq == 0 {
        let mut direct = local.clone();
        if opts.maxeval.is_some() {
            direct.maxeval = match direct.maxeval {
                Some(m) => opts.maxeval.map(|o| o.min(m)),
                None => opts.maxeval,
            };
        }
        let (r, inner) = local_solve(problem, &direct).map_err(|e| e.context("auglag local solve"))?;
        ledger.absorb(&inner);
        return Ok((r, MultiplierState::new(0, 0, 1.0)));
    }

    let pass_ineq = local.algorithm.supports_inequalities();
    let penalized_ineq = if pass_ineq { 0 } else { m_ineq };

    let mut x = problem.x0().to_vec();
    let f0 = match ledger.objective(problem, &x) {
        Ok(f) => f,
        Err(Error::BudgetExhausted) => unreachable!("validated budget is positive"),
        Err(e) => return Err(e.context("auglag")),
    };
    let h0 = problem.eval_equalities(&x);
    let g0 = problem.eval_inequalities(&x);
    let v0 = violation_norm(&h0, &g0);
    let rho0 = (10.0 * f0.abs() / (v0 * v0).max(1.0)).max(1.0);
    let mut state = MultiplierState::new(m_eq, penalized_ineq, rho0);

    let mut f = f0;
    let mut inner_tol = FIRST_INNER_TOL.max(opts.xtol_rel);
    let mut iterations = 0;
    let status = loop {
        let remaining = ledger.remaining();
        if remaining.is_some_and(|r| r < 2) {
            break StatusCode::MaxevalReached;
        }
        let mut inner_opts = local.clone();
        inner_opts.xtol_rel = inner_tol.max(local.xtol_rel);
        inner_opts.maxeval = match (remaining.map(|r| r - 1), local.maxeval) {
            (Some(r), Some(l)) => Some(r.min(l)),
            (r, l) => r.or(l),
        };
        inner_opts.tol_constraints_ineq = if pass_ineq { opts.tol_constraints_ineq.clone() } else { Vec::new() };
        inner_opts.tol_constraints_eq = Vec::new();

        let sub = subproblem(problem, &x, &state, pass_ineq);
        let (r, inner) = local_solve(&sub, &inner_opts).map_err(|e| e.context("auglag local solve"))?;
        ledger.absorb(&inner);
        iterations += 1;

        let x_new = r.x_opt;
        f = ledger.objective(problem, &x_new).map_err(|e| e.context("auglag"))?;
        let h = problem.eval_equalities(&x_new);
        let g = problem.eval_inequalities(&x_new);
        let g_pen = if pass_ineq { Vec::new() } else { g.clone() };
        state = update_multipliers(&state, &h, &g_pen);

        let feasible = h.iter().zip(&opts.tol_constraints_eq).all(|(h, t)| h.abs() <= *t)
            && g.iter().zip(&opts.tol_constraints_ineq).all(|(g, t)| *g <= *t);
        let settled = xtol_satisfied(&x, &x_new, opts.xtol_rel, opts.xtol_abs);
        if opts.print_level > 0 {
            eprintln!(
                "auglag round {iterations}: f = {f}, violation = {}, rho = {}",
                violation_norm(&h, &g),
                state.rho
            );
        }
        x = x_new;
        if ledger.exhausted() {
            break StatusCode::MaxevalReached;
        }
        if settled && (feasible || state.rho >= RHO_MAX) && inner_tol <= local.xtol_rel {
            break StatusCode::XtolReached;
        }
        inner_tol /= 10.0;
    };
    Ok((finish(problem, opts, status, x, f, iterations, ledger), state))
}
