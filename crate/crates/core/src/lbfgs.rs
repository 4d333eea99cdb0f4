//! Limited-memory BFGS for unconstrained problems with analytic gradients.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::ledger::{should_stop, EvaluationLedger};
use crate::options::{Algorithm, SolverOptions};
use crate::problem::Problem;
use crate::result::{SolveResult, StatusCode};
use crate::{dot, finish, norm, run_solver};

pub const DEFAULT_HISTORY: usize = 10;
pub const ARMIJO_C1: f64 = 1e-4;
pub const MAX_BACKTRACKS: usize = 60;
/// Gradient norm below `GRAD_TOL * max(1, |f|)` counts as a stationary point.
pub const GRAD_TOL: f64 = 1e-14;
/// Doublings tried when an accepted step leaves the slope as steep as before.
pub const MAX_EXTENSIONS: usize = 30;

/// Curvature pairs `(s, y)` of the most recent iterations.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
}

impl Default for LbfgsState {
    fn default() -> Self {
        LbfgsState::new(DEFAULT_HISTORY)
    }
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        LbfgsState {
            history: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    /// Stores a pair unless it violates `s.y > 0`. Returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 0.0) || !sy.is_finite() {
            return false;
        }
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((s, y));
        true
    }

    /// `s.y / y.y` of the newest pair, 1 with no history.
    pub fn gamma(&self) -> f64 {
        self.history
            .back()
            .map(|(s, y)| dot(s, y) / dot(y, y))
            .unwrap_or(1.0)
    }
}

/// Two-loop recursion: returns `-H grad`.
pub fn lbfgs_direction(state: &LbfgsState, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(state.len());
    for (s, y) in state.history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = state.gamma();
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for ((s, y), a) in state.history.iter().zip(alphas.iter().rev()) {
        let rho = 1.0 / dot(y, s);
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += si * (a - b);
        }
    }
    r.iter().map(|v| -v).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchStep {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
}

fn trial_point(x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

/// Minimizer of the parabola through `f(0) = f0`, `f'(0) = slope` and
/// `f(alpha) = fa`, when it has positive curvature.
fn parabola_min(f0: f64, slope: f64, alpha: f64, fa: f64) -> Option<f64> {
    let curvature = fa - f0 - slope * alpha;
    (curvature > 0.0).then(|| -slope * alpha * alpha / (2.0 * curvature))
}

/// Armijo backtracking from `alpha = 1`.
///
/// Each rejected step is replaced by the minimizer of the interpolating
/// parabola, kept within `[0.1, 0.5]` of the rejected step (plain halving when
/// the parabola is concave). After acceptance one more parabola step is tried
/// and kept if it also satisfies the Armijo condition and lowers `f`; on a
/// quadratic this lands on the exact line minimizer.
pub fn line_search(
    problem: &Problem,
    x: &[f64],
    direction: &[f64],
    f_x: f64,
    grad_x: &[f64],
    ledger: &mut EvaluationLedger,
) -> Result<LineSearchStep> {
    let slope = dot(direction, grad_x);
    if !(slope < 0.0) {
        return Err(Error::invalid(format!(
            "line search needs a descent direction, got d.g = {slope}"
        )));
    }
    let armijo = |alpha: f64, f: f64| f <= f_x + ARMIJO_C1 * alpha * slope;

    let mut alpha = 1.0;
    let mut accepted = None;
    for _ in 0..=MAX_BACKTRACKS {
        let xt = trial_point(x, direction, alpha);
        let ft = ledger.objective(problem, &xt)?;
        if armijo(alpha, ft) {
            accepted = Some(LineSearchStep { alpha, x: xt, f: ft });
            break;
        }
        let halved = 0.5 * alpha;
        alpha = match parabola_min(f_x, slope, alpha, ft) {
            Some(a) if ft.is_finite() => a.clamp(0.1 * alpha, halved),
            _ => halved,
        };
    }
    let step = accepted.ok_or(Error::LineSearchFailure(MAX_BACKTRACKS))?;

    let Some(refined) = parabola_min(f_x, slope, step.alpha, step.f) else {
        return Ok(step);
    };
    if !(refined > 0.0) || (refined - step.alpha).abs() <= 1e-3 * step.alpha || refined > 1e3 * step.alpha {
        return Ok(step);
    }
    let xr = trial_point(x, direction, refined);
    match ledger.objective(problem, &xr) {
        Ok(fr) if fr < step.f && armijo(refined, fr) => Ok(LineSearchStep { alpha: refined, x: xr, f: fr }),
        Ok(_) | Err(Error::BudgetExhausted) => Ok(step),
        Err(e) => Err(e),
    }
}

fn gradient_at(problem: &Problem, x: &[f64], ledger: &mut EvaluationLedger) -> Result<Vec<f64>> {
    ledger.n_grad += 1;
    match problem.eval_gradient(x) {
        Some(v) if v.len() == x.len() && v.iter().all(|c| c.is_finite()) => Ok(v),
        _ => Err(Error::callback("gradient is not finite")),
    }
}

/// Doubles an accepted step while the slope at its end is no shallower than
/// at `x` (so the pair would fail `s.y > 0`), as long as the Armijo condition
/// holds and `f` keeps falling. Returns the final step and its gradient.
fn extend_step(
    problem: &Problem,
    x: &[f64],
    direction: &[f64],
    f_x: f64,
    grad_x: &[f64],
    mut step: LineSearchStep,
    ledger: &mut EvaluationLedger,
) -> Result<(LineSearchStep, Vec<f64>)> {
    let slope = dot(direction, grad_x);
    let mut grad = gradient_at(problem, &step.x, ledger)?;
    for _ in 0..MAX_EXTENSIONS {
        if dot(direction, &grad) > slope {
            break;
        }
        let alpha = 2.0 * step.alpha;
        let xt = trial_point(x, direction, alpha);
        let ft = match ledger.objective(problem, &xt) {
            Ok(v) => v,
            Err(Error::BudgetExhausted) => break,
            Err(e) => return Err(e),
        };
        if !(ft < step.f && ft <= f_x + ARMIJO_C1 * alpha * slope) {
            break;
        }
        grad = gradient_at(problem, &xt, ledger)?;
        step = LineSearchStep { alpha, x: xt, f: ft };
    }
    Ok((step, grad))
}

pub fn minimize_lbfgs(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    run_solver(problem, opts, Algorithm::Lbfgs, solve)
}

pub(crate) fn solve(problem: &Problem, opts: &SolverOptions, ledger: &mut EvaluationLedger) -> Result<SolveResult> {
    let mut x = problem.x0().to_vec();
    let (mut f, mut g) = match ledger.objective_and_gradient(problem, &x) {
        Ok(v) => v,
        Err(Error::BudgetExhausted) => {
            return Ok(finish(problem, opts, StatusCode::MaxevalReached, x, f64::NAN, 0, ledger))
        }
        Err(e) => return Err(e),
    };
    let mut state = LbfgsState::default();
    let mut iterations = 0;

    let status = loop {
        if norm(&g) <= GRAD_TOL * f.abs().max(1.0) {
            break StatusCode::Success;
        }
        if ledger.exhausted() {
            break StatusCode::MaxevalReached;
        }
        let mut d = lbfgs_direction(&state, &g);
        if !(dot(&d, &g) < 0.0) {
            state.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let step = match line_search(problem, &x, &d, f, &g, ledger) {
            Ok(step) => step,
            Err(Error::LineSearchFailure(_)) if !state.is_empty() => {
                state.clear();
                let sd: Vec<f64> = g.iter().map(|v| -v).collect();
                match line_search(problem, &x, &sd, f, &g, ledger) {
                    Ok(step) => step,
                    Err(Error::BudgetExhausted) => break StatusCode::MaxevalReached,
                    Err(e) => return Err(e.context("lbfgs")),
                }
            }
            Err(Error::BudgetExhausted) => break StatusCode::MaxevalReached,
            Err(e) => return Err(e.context("lbfgs")),
        };
        let (step, g_new) = match extend_step(problem, &x, &d, f, &g, step, ledger) {
            Ok(v) => v,
            Err(Error::BudgetExhausted) => break StatusCode::MaxevalReached,
            Err(e) => return Err(e.context("lbfgs")),
        };
        iterations += 1;

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y);
        let stop = should_stop(&x, &step.x, opts, ledger);
        x = step.x;
        f = step.f;
        g = g_new;
        if let Some(status) = stop {
            break status;
        }
    };
    Ok(finish(problem, opts, status, x, f, iterations, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_problem;

    fn quad_1d() -> Problem {
        Problem::new(vec![0.0], |x| (x[0] - 3.0).powi(2)).with_gradient(|x| vec![2.0 * (x[0] - 3.0)])
    }

    #[test]
    fn empty_history_gives_steepest_descent() {
        assert_eq!(lbfgs_direction(&LbfgsState::default(), &[2.0, -3.0]), vec![-2.0, 3.0]);
    }

    #[test]
    fn one_pair_two_loop() {
        let mut st = LbfgsState::default();
        assert!(st.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert_eq!(lbfgs_direction(&st, &[2.0, 0.0]), vec![-1.0, 0.0]);
    }

    #[test]
    fn curvature_violating_pairs_are_dropped() {
        let mut st = LbfgsState::default();
        assert!(!st.push(vec![1.0, 0.0], vec![-2.0, 0.0]));
        assert!(!st.push(vec![1.0, 0.0], vec![0.0, 5.0]));
        assert!(st.is_empty());
    }

    #[test]
    fn history_is_capped() {
        let mut st = LbfgsState::new(3);
        for k in 1..=5 {
            st.push(vec![k as f64], vec![1.0]);
        }
        assert_eq!(st.len(), 3);
    }

    #[test]
    fn backtracking_on_parabola() {
        let p = Problem::new(vec![1.0], |x| x[0] * x[0]).with_gradient(|x| vec![2.0 * x[0]]);
        let mut ledger = EvaluationLedger::new(None);
        let step = line_search(&p, &[1.0], &[-2.0], 1.0, &[2.0], &mut ledger).unwrap();
        assert_eq!(step.alpha, 0.5);
        assert_eq!(step.x, vec![0.0]);
        assert_eq!(step.f, 0.0);
    }

    #[test]
    fn linear_function_accepts_full_step() {
        let p = Problem::new(vec![0.0], |x| -x[0]).with_gradient(|_| vec![-1.0]);
        let mut ledger = EvaluationLedger::new(None);
        let step = line_search(&p, &[0.0], &[1.0], 0.0, &[-1.0], &mut ledger).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert_eq!(ledger.n_obj, 1);
    }

    #[test]
    fn non_descent_direction_is_rejected() {
        let p = quad_1d();
        let mut ledger = EvaluationLedger::new(None);
        let r = line_search(&p, &[0.0], &[0.0], 9.0, &[-6.0], &mut ledger);
        assert!(matches!(r, Err(Error::InvalidArgs(_))));
    }

    #[test]
    fn line_search_gives_up_on_flat_increase() {
        // Objective increases in every direction, but the gradient lies.
        let p = Problem::new(vec![0.0], |x| x[0].abs().sqrt()).with_gradient(|_| vec![1.0]);
        let mut ledger = EvaluationLedger::new(None);
        let r = line_search(&p, &[0.0], &[-1.0], 0.0, &[1.0], &mut ledger);
        assert_eq!(r, Err(Error::LineSearchFailure(MAX_BACKTRACKS)));
    }

    #[test]
    fn one_dimensional_quadratic() {
        let r = minimize_lbfgs(&quad_1d(), &SolverOptions::new(Algorithm::Lbfgs)).unwrap();
        assert!((r.x_opt[0] - 3.0).abs() <= 1e-8, "{r:?}");
        assert!(r.iterations <= 5, "{r:?}");
        assert!(r.status.is_success());
    }

    #[test]
    fn sphere_from_arbitrary_start() {
        let p = Problem::new(vec![3.0, -7.5, 0.25, 11.0], |x| x.iter().map(|v| v * v).sum())
            .with_gradient(|x| x.iter().map(|v| 2.0 * v).collect());
        let r = minimize_lbfgs(&p, &SolverOptions::new(Algorithm::Lbfgs)).unwrap();
        assert!(r.x_opt.iter().all(|v| v.abs() <= 1e-8), "{r:?}");
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let p = make_problem("rosenbrock", None).unwrap();
        let r = minimize_lbfgs(&p, &SolverOptions::new(Algorithm::Lbfgs).xtol_rel(1e-8)).unwrap();
        assert!(r.x_opt.iter().all(|v| (v - 1.0).abs() <= 1e-6), "{r:?}");
        assert!(r.f_opt <= 1e-12, "{r:?}");
        assert_eq!(r.f_opt, p.eval_objective(&r.x_opt));
    }

    #[test]
    fn budget_is_respected() {
        let p = make_problem("rosenbrock", None).unwrap();
        let r = minimize_lbfgs(&p, &SolverOptions::new(Algorithm::Lbfgs).maxeval(7)).unwrap();
        assert_eq!(r.status, StatusCode::MaxevalReached);
        assert!(r.evaluations <= 7);
    }

    #[test]
    fn nan_objective_fails() {
        let p = Problem::new(vec![1.0], |_| f64::NAN).with_gradient(|_| vec![1.0]);
        let r = minimize_lbfgs(&p, &SolverOptions::new(Algorithm::Lbfgs));
        assert!(matches!(r, Err(Error::CallbackFailure(_))));
    }

    fn quadratic(a: Vec<Vec<f64>>, b: Vec<f64>) -> Problem {
        let a2 = a.clone();
        let b2 = b.clone();
        let n = b.len();
        Problem::new(vec![0.0; n], move |x| {
            let ax: Vec<f64> = a.iter().map(|r| dot(r, x)).collect();
            0.5 * dot(x, &ax) - dot(&b, x)
        })
        .with_gradient(move |x| a2.iter().zip(&b2).map(|(r, bi)| dot(r, x) - bi).collect())
    }

    #[test]
    fn convex_quadratic_terminates_in_n_plus_two() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.5],
            vec![0.0, 0.5, 2.0],
        ];
        let b = vec![1.0, -2.0, 0.5];
        // Solution of A x = b by Cramer's rule.
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let am = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let d = det(&am);
        let xs: Vec<f64> = (0..3)
            .map(|k| {
                let mut m = am;
                for (r, row) in m.iter_mut().enumerate() {
                    row[k] = b[r];
                }
                det(&m) / d
            })
            .collect();
        let p = quadratic(a, b);
        let opts = SolverOptions::new(Algorithm::Lbfgs).xtol_rel(0.0).xtol_abs(1e-14).maxeval(500);
        let mut ledger = EvaluationLedger::new(opts.maxeval);
        let (p, opts) = crate::problem::validate_problem(&p, &opts).unwrap();
        let r = solve(&p, &opts, &mut ledger).unwrap();
        for (xi, ei) in r.x_opt.iter().zip(&xs) {
            assert!((xi - ei).abs() <= 1e-10, "{:?} vs {xs:?}", r.x_opt);
        }
        // The iterate after n + 2 steps must already be exact.
        let mut state = LbfgsState::default();
        let mut x = p.x0().to_vec();
        let mut ledger = EvaluationLedger::new(None);
        let (mut f, mut g) = ledger.objective_and_gradient(&p, &x).unwrap();
        for _ in 0..5 {
            if norm(&g) < 1e-13 {
                break;
            }
            let dir = lbfgs_direction(&state, &g);
            let step = line_search(&p, &x, &dir, f, &g, &mut ledger).unwrap();
            let gn = p.eval_gradient(&step.x).unwrap();
            state.push(
                step.x.iter().zip(&x).map(|(a, b)| a - b).collect(),
                gn.iter().zip(&g).map(|(a, b)| a - b).collect(),
            );
            x = step.x;
            f = step.f;
            g = gn;
        }
        for (xi, ei) in x.iter().zip(&xs) {
            assert!((xi - ei).abs() <= 1e-10, "{x:?} vs {xs:?}");
        }
    }

    #[test]
    fn accepted_values_never_increase() {
        let p = make_problem("rosenbrock", None).unwrap();
        let mut state = LbfgsState::default();
        let mut x = p.x0().to_vec();
        let mut ledger = EvaluationLedger::new(None);
        let (mut f, mut g) = ledger.objective_and_gradient(&p, &x).unwrap();
        for _ in 0..30 {
            let dir = lbfgs_direction(&state, &g);
            assert!(dot(&dir, &g) < 0.0);
            let step = line_search(&p, &x, &dir, f, &g, &mut ledger).unwrap();
            assert!(step.f <= f);
            let gn = p.eval_gradient(&step.x).unwrap();
            state.push(
                step.x.iter().zip(&x).map(|(a, b)| a - b).collect(),
                gn.iter().zip(&g).map(|(a, b)| a - b).collect(),
            );
            x = step.x;
            f = step.f;
            g = gn;
        }
    }
}
