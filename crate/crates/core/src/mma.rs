//! Method of moving asymptotes, globally convergent (conservative) variant.
//!
//! Each outer iteration replaces the objective and the inequality constraints
//! by convex separable approximations
//! `r_i + sum_j p_ij / (U_j - x_j) + q_ij / (x_j - L_j)` around the current
//! iterate and minimizes them through the dual. A candidate is accepted once
//! every approximation is conservative there; otherwise the offending
//! curvature terms `rho_i` grow and the subproblem is solved again.

use crate::error::{Error, Result};
use crate::ledger::{should_stop, EvaluationLedger};
use crate::options::{Algorithm, SolverOptions};
use crate::problem::Problem;
use crate::result::{SolveResult, StatusCode};
use crate::{finish, run_solver};

/// Stand-in for infinite bounds in the asymptote arithmetic.
pub const INFINITE_BOUND: f64 = 1e6;
const SHRINK: f64 = 0.7;
const GROW: f64 = 1.2;
const MIN_WIDTH: f64 = 0.01;
const MAX_WIDTH: f64 = 10.0;
/// Penalty on the artificial variables `y_i` that keep the subproblem feasible,
/// per unit of the largest objective partial derivative.
const ARTIFICIAL_COST: f64 = 1000.0;
const DUAL_TOL: f64 = 1e-12;
const CONSERVATIVE_SLACK: f64 = 1e-10;
const MAX_INNER: usize = 20;
const RHO_MIN: f64 = 1e-6;

/// Asymptotes and the iterate history that drives them.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoteState {
    pub lower_asym: Vec<f64>,
    pub upper_asym: Vec<f64>,
    /// Most recent iterate first.
    pub x_prevs: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl AsymptoteState {
    pub fn new() -> Self {
        AsymptoteState {
            lower_asym: Vec::new(),
            upper_asym: Vec::new(),
            x_prevs: Vec::new(),
            iteration: 0,
        }
    }
}

impl Default for AsymptoteState {
    fn default() -> Self {
        Self::new()
    }
}

fn finite_bounds(lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = lower.iter().map(|v| if v.is_finite() { *v } else { -INFINITE_BOUND }).collect();
    let hi = upper.iter().map(|v| if v.is_finite() { *v } else { INFINITE_BOUND }).collect();
    (lo, hi)
}

/// Advances the asymptotes to the new iterate `x_new`.
///
/// The first two iterations place them half a box width away. Later, a
/// component whose last two moves changed sign has its interval shrunk by 0.7,
/// one that kept moving the same way is widened by 1.2, and a stalled one is
/// kept. Distances from `x_new` stay within `[0.01, 10]` box widths.
pub fn mma_update_asymptotes(state: &AsymptoteState, x_new: &[f64], lower: &[f64], upper: &[f64]) -> AsymptoteState {
    let (lower, upper) = finite_bounds(lower, upper);
    let iteration = state.iteration + 1;
    let n = x_new.len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for j in 0..n {
        let w = upper[j] - lower[j];
        if iteration <= 2 || state.x_prevs.len() < 2 {
            lo[j] = x_new[j] - 0.5 * w;
            hi[j] = x_new[j] + 0.5 * w;
            continue;
        }
        let (x1, x2) = (state.x_prevs[0][j], state.x_prevs[1][j]);
        let prod = (x_new[j] - x1) * (x1 - x2);
        let gamma = if prod < 0.0 {
            SHRINK
        } else if prod > 0.0 {
            GROW
        } else {
            1.0
        };
        lo[j] = x_new[j] - gamma * (x1 - state.lower_asym[j]);
        hi[j] = x_new[j] + gamma * (state.upper_asym[j] - x1);
        lo[j] = lo[j].clamp(x_new[j] - MAX_WIDTH * w, x_new[j] - MIN_WIDTH * w);
        hi[j] = hi[j].clamp(x_new[j] + MIN_WIDTH * w, x_new[j] + MAX_WIDTH * w);
    }
    let mut x_prevs = vec![x_new.to_vec()];
    x_prevs.extend(state.x_prevs.first().cloned());
    AsymptoteState {
        lower_asym: lo,
        upper_asym: hi,
        x_prevs,
        iteration,
    }
}

/// Separable approximation of the objective (row 0) and the constraints.
struct Approximation {
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
    lower_asym: Vec<f64>,
    upper_asym: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    cost: f64,
}

impl Approximation {
    fn build(
        x: &[f64],
        values: &[f64],
        grads: &[Vec<f64>],
        rho: &[f64],
        asym: &AsymptoteState,
        lower: &[f64],
        upper: &[f64],
    ) -> Self {
        let n = x.len();
        let (l, u) = (&asym.lower_asym, &asym.upper_asym);
        let mut p = Vec::with_capacity(values.len());
        let mut q = Vec::with_capacity(values.len());
        let mut r = Vec::with_capacity(values.len());
        for (i, grad) in grads.iter().enumerate() {
            let mut pi = vec![0.0; n];
            let mut qi = vec![0.0; n];
            let mut ri = values[i];
            for j in 0..n {
                let w = upper[j] - lower[j];
                let (gp, gm) = (grad[j].max(0.0), (-grad[j]).max(0.0));
                let extra = rho[i] / w;
                pi[j] = (u[j] - x[j]).powi(2) * (1.001 * gp + 0.001 * gm + extra);
                qi[j] = (x[j] - l[j]).powi(2) * (0.001 * gp + 1.001 * gm + extra);
                ri -= pi[j] / (u[j] - x[j]) + qi[j] / (x[j] - l[j]);
            }
            p.push(pi);
            q.push(qi);
            r.push(ri);
        }
        let alpha = (0..n)
            .map(|j| lower[j].max(0.9 * l[j] + 0.1 * x[j]).max(x[j] - 0.5 * (upper[j] - lower[j])))
            .collect();
        let beta = (0..n)
            .map(|j| upper[j].min(0.9 * u[j] + 0.1 * x[j]).min(x[j] + 0.5 * (upper[j] - lower[j])))
            .collect();
        let steepest = grads[0].iter().fold(1.0f64, |a, g| a.max(g.abs()));
        Approximation {
            cost: ARTIFICIAL_COST * steepest,
            p,
            q,
            r,
            lower_asym: l.clone(),
            upper_asym: u.clone(),
            alpha,
            beta,
        }
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let mut v = self.r[i];
        for (j, xj) in x.iter().enumerate() {
            v += self.p[i][j] / (self.upper_asym[j] - xj) + self.q[i][j] / (xj - self.lower_asym[j]);
        }
        v
    }

    /// Minimizer over the move-limit box of the Lagrangian for multipliers `lam`.
    fn primal(&self, lam: &[f64]) -> Vec<f64> {
        let n = self.alpha.len();
        (0..n)
            .map(|j| {
                let mut pj = self.p[0][j];
                let mut qj = self.q[0][j];
                for (i, l) in lam.iter().enumerate() {
                    pj += l * self.p[i + 1][j];
                    qj += l * self.q[i + 1][j];
                }
                let (sp, sq) = (pj.sqrt(), qj.sqrt());
                let x = (sp * self.lower_asym[j] + sq * self.upper_asym[j]) / (sp + sq);
                x.clamp(self.alpha[j], self.beta[j])
            })
            .collect()
    }

    /// Partial derivative of the dual function in `lam[i]`.
    fn dual_slope(&self, lam: &[f64], i: usize) -> f64 {
        let x = self.primal(lam);
        self.value(i + 1, &x) - (lam[i] - self.cost).max(0.0)
    }

    /// Maximizes the concave dual by cyclic coordinate ascent, each coordinate
    /// located by bisection on its slope.
    fn solve_dual(&self, lam: &mut [f64]) {
        let m = lam.len();
        for _ in 0..1000 {
            let mut change = 0.0f64;
            for i in 0..m {
                let old = lam[i];
                lam[i] = 0.0;
                if self.dual_slope(lam, i) > 0.0 {
                    let mut lo = 0.0;
                    let mut hi = old.max(1.0);
                    lam[i] = hi;
                    while self.dual_slope(lam, i) > 0.0 && hi < 1e30 {
                        lo = hi;
                        hi *= 2.0;
                        lam[i] = hi;
                    }
                    while hi - lo > DUAL_TOL * hi.max(1.0) {
                        let mid = 0.5 * (lo + hi);
                        lam[i] = mid;
                        if self.dual_slope(lam, i) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lam[i] = 0.5 * (lo + hi);
                }
                change = change.max((lam[i] - old).abs());
            }
            let scale = lam.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if change <= DUAL_TOL * scale {
                break;
            }
        }
    }

    /// Allowed excess of the true value over the approximation: `1e-10`,
    /// tightened to relative size for functions below unit magnitude, but never
    /// below the rounding noise of the approximation's terms.
    fn slack(&self, i: usize, x: &[f64], value: f64) -> f64 {
        let terms: f64 = (0..x.len())
            .map(|j| (self.p[i][j] / (self.upper_asym[j] - x[j])).abs() + (self.q[i][j] / (x[j] - self.lower_asym[j])).abs())
            .sum();
        CONSERVATIVE_SLACK.min(CONSERVATIVE_SLACK * value.abs() + 8.0 * f64::EPSILON * (terms + self.r[i].abs()))
    }

    /// Growth of every approximation per unit of `rho` at `x_hat`.
    fn rho_weight(&self, x: &[f64], x_hat: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
        (0..x.len())
            .map(|j| {
                let (l, u) = (self.lower_asym[j], self.upper_asym[j]);
                (u - l) * (x_hat[j] - x[j]).powi(2) / ((u - x_hat[j]) * (x_hat[j] - l) * (upper[j] - lower[j]))
            })
            .sum()
    }
}

struct Evaluated {
    x: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

fn evaluate(problem: &Problem, x: Vec<f64>, ledger: &mut EvaluationLedger) -> Result<Evaluated> {
    let (f, g) = ledger.objective_and_gradient(problem, &x)?;
    let c = ledger.inequalities(problem, &x)?;
    let jac = ledger.inequality_jacobian(problem, &x)?;
    if c.iter().chain(jac.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::callback("inequality constraint or Jacobian is not finite"));
    }
    let mut values = vec![f];
    values.extend(c);
    let mut grads = vec![g];
    grads.extend(jac);
    Ok(Evaluated { x, values, grads })
}

pub fn minimize_mma(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    run_solver(problem, opts, Algorithm::Mma, solve)
}

pub(crate) fn solve(problem: &Problem, opts: &SolverOptions, ledger: &mut EvaluationLedger) -> Result<SolveResult> {
    let mut iterations = 0;
    let mut best: Option<Evaluated> = None;
    let status = match iterate(problem, opts, ledger, &mut iterations, &mut best) {
        Ok(status) => status,
        Err(Error::BudgetExhausted) => StatusCode::MaxevalReached,
        Err(e) => return Err(e.context("mma")),
    };
    let (x, f) = match best {
        Some(e) => (e.x, e.values[0]),
        None => (problem.x0().to_vec(), f64::NAN),
    };
    Ok(finish(problem, opts, status, x, f, iterations, ledger))
}

fn infeasibility(e: &Evaluated, tol: &[f64]) -> f64 {
    e.values[1..].iter().zip(tol).fold(0.0f64, |m, (g, t)| m.max(g - t))
}

fn better(a: &Evaluated, b: &Evaluated, tol: &[f64]) -> bool {
    let (va, vb) = (infeasibility(a, tol), infeasibility(b, tol));
    match (va <= 0.0, vb <= 0.0) {
        (true, true) => a.values[0] < b.values[0],
        (true, false) => true,
        (false, true) => false,
        (false, false) => va < vb,
    }
}

fn iterate(
    problem: &Problem,
    opts: &SolverOptions,
    ledger: &mut EvaluationLedger,
    iterations: &mut usize,
    best: &mut Option<Evaluated>,
) -> Result<StatusCode> {
    let n = problem.dimension();
    let m = problem.m_ineq();
    let (lower, upper) = finite_bounds(problem.lower(), problem.upper());
    let tol = &opts.tol_constraints_ineq;
    let keep_best = |best: &mut Option<Evaluated>, e: &Evaluated| {
        if best.as_ref().is_none_or(|b| better(e, b, tol)) {
            *best = Some(Evaluated { x: e.x.clone(), values: e.values.clone(), grads: Vec::new() });
        }
    };

    let mut current = evaluate(problem, problem.x0().to_vec(), ledger)?;
    keep_best(best, &current);
    let mut asym = mma_update_asymptotes(&AsymptoteState::new(), &current.x, problem.lower(), problem.upper());
    let mut lam = vec![0.0; m];

    let mut rho: Vec<f64> = current
        .grads
        .iter()
        .map(|g| {
            let s: f64 = (0..n).map(|j| g[j].abs() * (upper[j] - lower[j])).sum();
            (0.1 / n as f64 * s).max(RHO_MIN)
        })
        .collect();

    loop {

        let mut candidate = None;
        for _ in 0..MAX_INNER {
            let approx = Approximation::build(&current.x, &current.values, &current.grads, &rho, &asym, &lower, &upper);
            approx.solve_dual(&mut lam);
            let x_hat = approx.primal(&lam);
            let trial = evaluate(problem, x_hat, ledger)?;
            keep_best(best, &trial);
            let weight = approx.rho_weight(&current.x, &trial.x, &lower, &upper);
            let mut conservative = true;
            for i in 0..=m {
                let model = approx.value(i, &trial.x);
                if trial.values[i] > model + approx.slack(i, &current.x, current.values[i]) {
                    conservative = false;
                    let delta = if weight > 0.0 { (trial.values[i] - model) / weight } else { rho[i] };
                    rho[i] = (10.0 * rho[i]).min((2.0 * rho[i]).max(1.1 * (rho[i] + delta)));
                }
            }
            candidate = Some(trial);
            if conservative {
                break;
            }
        }
        let next = candidate.expect("at least one inner round");
        *iterations += 1;
        for j in 0..n {
            debug_assert!(asym.lower_asym[j] < next.x[j] && next.x[j] < asym.upper_asym[j]);
        }
        for r in rho.iter_mut() {
            *r = (0.1 * *r).max(RHO_MIN);
        }
        let stop = should_stop(&current.x, &next.x, opts, ledger);
        asym = mma_update_asymptotes(&asym, &next.x, problem.lower(), problem.upper());
        current = next;
        if let Some(status) = stop {
            return Ok(status);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ConstraintBlock;
    use crate::problems::tutorial_sqrt;

    #[test]
    fn first_iteration_asymptotes() {
        let s = mma_update_asymptotes(&AsymptoteState::new(), &[2.0, 2.0], &[0.0; 2], &[4.0; 2]);
        assert_eq!(s.lower_asym, vec![0.0, 0.0]);
        assert_eq!(s.upper_asym, vec![4.0, 4.0]);
        assert_eq!(s.iteration, 1);
    }

    fn third_iteration(steps: [f64; 2]) -> (AsymptoteState, AsymptoteState) {
        let (lo, hi) = ([0.0], [100.0]);
        let s1 = mma_update_asymptotes(&AsymptoteState::new(), &[50.0], &lo, &hi);
        let s2 = mma_update_asymptotes(&s1, &[50.0 + steps[0]], &lo, &hi);
        let s3 = mma_update_asymptotes(&s2, &[50.0 + steps[0] + steps[1]], &lo, &hi);
        (s2, s3)
    }

    #[test]
    fn oscillation_shrinks_interval() {
        let (s2, s3) = third_iteration([1.0, -1.0]);
        let w2 = s2.upper_asym[0] - s2.lower_asym[0];
        let w3 = s3.upper_asym[0] - s3.lower_asym[0];
        assert!((w3 - 0.7 * w2).abs() < 1e-12, "{w2} {w3}");
    }

    #[test]
    fn monotone_movement_widens_interval() {
        let (lo, hi) = ([0.0], [100.0]);
        let (s2, s3) = third_iteration([1.0, 1.0]);
        let w2 = s2.upper_asym[0] - s2.lower_asym[0];
        let w3 = s3.upper_asym[0] - s3.lower_asym[0];
        assert!((w3 - 1.2 * w2).abs() < 1e-12, "{w2} {w3}");
        // Repeated widening is capped at 10 box widths on either side.
        let mut s = s3;
        let mut x = s.x_prevs[0][0];
        for _ in 0..40 {
            x += 0.01;
            s = mma_update_asymptotes(&s, &[x], &lo, &hi);
        }
        assert!((s.upper_asym[0] - x - 1000.0).abs() < 1e-9);
        assert!((x - s.lower_asym[0] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn stalled_component_keeps_interval() {
        let (s2, s3) = third_iteration([1.0, 0.0]);
        let w2 = s2.upper_asym[0] - s2.lower_asym[0];
        let w3 = s3.upper_asym[0] - s3.lower_asym[0];
        assert!((w3 - w2).abs() < 1e-12);
    }

    fn square_with_floor() -> Problem {
        Problem::new(vec![4.0], |x| x[0] * x[0])
            .with_gradient(|x| vec![2.0 * x[0]])
            .with_bounds(vec![0.0], vec![5.0])
            .with_inequalities(ConstraintBlock::new(|x| vec![1.0 - x[0]]).with_jacobian(|_| vec![vec![-1.0]]))
    }

    #[test]
    fn active_constraint_in_one_dimension() {
        let r = minimize_mma(&square_with_floor(), &SolverOptions::new(Algorithm::Mma).xtol_rel(1e-10)).unwrap();
        assert!((r.x_opt[0] - 1.0).abs() <= 1e-6, "{r:?}");
        assert!((r.f_opt - 1.0).abs() <= 1e-6, "{r:?}");
    }

    #[test]
    fn interior_minimum() {
        let p = Problem::new(vec![0.5, 4.5, 3.0], |x| x.iter().map(|v| (v - 2.0).powi(2)).sum())
            .with_gradient(|x| x.iter().map(|v| 2.0 * (v - 2.0)).collect())
            .with_bounds(vec![0.0; 3], vec![5.0; 3]);
        let r = minimize_mma(&p, &SolverOptions::new(Algorithm::Mma).xtol_rel(1e-10)).unwrap();
        assert!(r.x_opt.iter().all(|v| (v - 2.0).abs() <= 1e-6), "{r:?}");
    }

    #[test]
    fn tutorial_problem_with_gradients() {
        let p = tutorial_sqrt([2.0, -1.0], [0.0, 1.0])
            .with_bounds(vec![-5.0, 1e-12], vec![f64::INFINITY; 2]);
        let r = minimize_mma(&p, &SolverOptions::new(Algorithm::Mma).xtol_rel(1e-8)).unwrap();
        assert!((r.f_opt - 0.544331054).abs() <= 1e-5, "{r:?}");
    }

    #[test]
    fn linear_constraints_match_grid_search() {
        // min (x0 - 3)^2 + 2 (x1 - 2)^2 + x0 x1 s.t. x0 + x1 <= 2, x0 - 2 x1 <= 0.5 on [0, 4]^2
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] - 2.0).powi(2) + x[0] * x[1];
        let g = |x: &[f64]| vec![x[0] + x[1] - 2.0, x[0] - 2.0 * x[1] - 0.5];
        let p = Problem::new(vec![0.5, 0.5], f)
            .with_gradient(|x| vec![2.0 * (x[0] - 3.0) + x[1], 4.0 * (x[1] - 2.0) + x[0]])
            .with_bounds(vec![0.0; 2], vec![4.0; 2])
            .with_inequalities(ConstraintBlock::new(g).with_jacobian(|_| vec![vec![1.0, 1.0], vec![1.0, -2.0]]));
        let r = minimize_mma(&p, &SolverOptions::new(Algorithm::Mma).xtol_rel(1e-10)).unwrap();

        // Grid search over the feasible set, refined around the incumbent.
        let (mut c0, mut c1, mut half) = (2.0, 2.0, 2.0);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for _ in 0..30 {
            for a in 0..=40 {
                for b in 0..=40 {
                    let x = [c0 - half + half * a as f64 / 20.0, c1 - half + half * b as f64 / 20.0];
                    if x.iter().any(|v| !(0.0..=4.0).contains(v)) || g(&x).iter().any(|v| *v > 0.0) {
                        continue;
                    }
                    if f(&x) < best.0 {
                        best = (f(&x), x[0], x[1]);
                    }
                }
            }
            (c0, c1, half) = (best.1, best.2, half * 0.3);
        }
        assert!((r.x_opt[0] - best.1).abs() <= 1e-4 && (r.x_opt[1] - best.2).abs() <= 1e-4, "{r:?} vs {best:?}");
    }

    #[test]
    fn missing_jacobian_is_invalid() {
        let p = Problem::new(vec![1.0], |x| x[0])
            .with_gradient(|_| vec![1.0])
            .with_bounds(vec![0.0], vec![2.0])
            .with_inequalities(ConstraintBlock::new(|x| vec![x[0] - 1.0]));
        assert!(matches!(minimize_mma(&p, &SolverOptions::new(Algorithm::Mma)), Err(Error::InvalidArgs(_))));
    }

    #[test]
    fn accepted_iterates_are_conservative() {
        // Rebuild one outer step by hand and check the accepted candidate.
        let p = square_with_floor();
        let (p, _) = crate::problem::validate_problem(&p, &SolverOptions::new(Algorithm::Mma)).unwrap();
        let mut ledger = EvaluationLedger::new(None);
        let (lower, upper) = finite_bounds(p.lower(), p.upper());
        let current = evaluate(&p, p.x0().to_vec(), &mut ledger).unwrap();
        let asym = mma_update_asymptotes(&AsymptoteState::new(), &current.x, p.lower(), p.upper());
        let mut rho = vec![1e-6; 2];
        let mut lam = vec![0.0];
        for _ in 0..MAX_INNER {
            let approx = Approximation::build(&current.x, &current.values, &current.grads, &rho, &asym, &lower, &upper);
            approx.solve_dual(&mut lam);
            let x_hat = approx.primal(&lam);
            let trial = evaluate(&p, x_hat, &mut ledger).unwrap();
            let w = approx.rho_weight(&current.x, &trial.x, &lower, &upper);
            let bad: Vec<usize> = (0..2)
                .filter(|&i| trial.values[i] > approx.value(i, &trial.x) + approx.slack(i, &current.x, current.values[i]))
                .collect();
            if bad.is_empty() {
                assert!(trial.values[0] <= current.values[0]);
                return;
            }
            for i in bad {
                let delta = (trial.values[i] - approx.value(i, &trial.x)) / w;
                rho[i] = (10.0 * rho[i]).min((2.0 * rho[i]).max(1.1 * (rho[i] + delta)));
            }
        }
        panic!("no conservative candidate within {MAX_INNER} rounds");
    }
}
