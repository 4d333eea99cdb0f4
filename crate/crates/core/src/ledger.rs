//! Counted callback evaluation and the shared stopping rule.

use crate::error::{Error, Result};
use crate::options::SolverOptions;
use crate::problem::Problem;
use crate::result::StatusCode;

/// What a non-finite objective value turns into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NanPolicy {
    /// Gradient-based and model-based solvers cannot continue from NaN.
    #[default]
    Fail,
    /// Ranking solvers treat NaN as the worst possible value.
    RankAsInfinite,
}

/// Counts callback invocations and enforces the objective budget.
#[derive(Debug, Clone, Default)]
pub struct EvaluationLedger {
    pub n_obj: usize,
    pub n_grad: usize,
    pub n_ineq: usize,
    pub n_eq: usize,
    budget: Option<usize>,
    nan_policy: NanPolicy,
}

impl EvaluationLedger {
    pub fn new(budget: Option<usize>) -> Self {
        EvaluationLedger {
            budget,
            ..Default::default()
        }
    }

    pub fn with_nan_policy(mut self, policy: NanPolicy) -> Self {
        self.nan_policy = policy;
        self
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// Objective evaluations left, `None` when unbounded.
    pub fn remaining(&self) -> Option<usize> {
        self.budget.map(|b| b.saturating_sub(self.n_obj))
    }

    pub fn exhausted(&self) -> bool {
        self.budget.is_some_and(|b| self.n_obj >= b)
    }

    /// Folds the counters of a nested solve into this ledger.
    pub fn absorb(&mut self, inner: &EvaluationLedger) {
        self.n_obj += inner.n_obj;
        self.n_grad += inner.n_grad;
        self.n_ineq += inner.n_ineq;
        self.n_eq += inner.n_eq;
    }

    fn check_x(problem: &Problem, x: &[f64]) -> Result<()> {
        if x.len() != problem.dimension() {
            return Err(Error::invalid(format!(
                "point has length {}, expected {}",
                x.len(),
                problem.dimension()
            )));
        }
        Ok(())
    }

    fn screen_value(&self, f: f64) -> Result<f64> {
        match (f.is_nan(), self.nan_policy) {
            (false, _) => Ok(f),
            (true, NanPolicy::RankAsInfinite) => Ok(f64::INFINITY),
            (true, NanPolicy::Fail) => Err(Error::callback("objective returned NaN")),
        }
    }

    pub fn objective(&mut self, problem: &Problem, x: &[f64]) -> Result<f64> {
        Self::check_x(problem, x)?;
        if self.exhausted() {
            return Err(Error::BudgetExhausted);
        }
        self.n_obj += 1;
        self.screen_value((problem.objective)(x))
    }

    /// Objective and gradient together; counts as one objective evaluation.
    pub fn objective_and_gradient(&mut self, problem: &Problem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let grad_fn = problem
            .gradient
            .as_ref()
            .ok_or_else(|| Error::invalid("problem has no objective gradient"))?;
        let f = self.objective(problem, x)?;
        self.n_grad += 1;
        let g = grad_fn(x);
        if g.len() != x.len() {
            return Err(Error::callback(format!(
                "gradient has length {}, expected {}",
                g.len(),
                x.len()
            )));
        }
        if self.nan_policy == NanPolicy::Fail && g.iter().any(|v| !v.is_finite()) {
            return Err(Error::callback("gradient is not finite"));
        }
        Ok((f, g))
    }

    pub fn inequalities(&mut self, problem: &Problem, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_x(problem, x)?;
        let Some(block) = &problem.ineq else {
            return Ok(Vec::new());
        };
        self.n_ineq += 1;
        let v = (block.values)(x);
        expect_len(&v, problem.m_ineq, "inequality constraints")?;
        Ok(v)
    }

    pub fn equalities(&mut self, problem: &Problem, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_x(problem, x)?;
        let Some(block) = &problem.eq else {
            return Ok(Vec::new());
        };
        self.n_eq += 1;
        let v = (block.values)(x);
        expect_len(&v, problem.m_eq, "equality constraints")?;
        Ok(v)
    }

    pub fn inequality_jacobian(&mut self, problem: &Problem, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        jacobian(problem.ineq.as_ref(), problem.m_ineq, x, "inequality")
    }

    pub fn equality_jacobian(&mut self, problem: &Problem, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        jacobian(problem.eq.as_ref(), problem.m_eq, x, "equality")
    }
}

fn expect_len(v: &[f64], m: usize, what: &str) -> Result<()> {
    if v.len() != m {
        return Err(Error::callback(format!(
            "{what} returned {} values, expected {m}",
            v.len()
        )));
    }
    Ok(())
}

fn jacobian(
    block: Option<&crate::problem::ConstraintBlock>,
    m: usize,
    x: &[f64],
    kind: &str,
) -> Result<Vec<Vec<f64>>> {
    let Some(block) = block else {
        return Ok(Vec::new());
    };
    let jac = block
        .jacobian
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("problem has no {kind} Jacobian")))?;
    let rows = jac(x);
    if rows.len() != m || rows.iter().any(|r| r.len() != x.len()) {
        return Err(Error::callback(format!("{kind} Jacobian has the wrong shape")));
    }
    Ok(rows)
}

/// True when every component moved by at most `xtol_rel * |x_new| + xtol_abs`.
pub fn xtol_satisfied(x_prev: &[f64], x_new: &[f64], xtol_rel: f64, xtol_abs: f64) -> bool {
    x_prev
        .iter()
        .zip(x_new)
        .all(|(a, b)| (b - a).abs() <= xtol_rel * b.abs() + xtol_abs)
}

/// Shared stopping rule. The budget check wins when both conditions hold.
pub fn should_stop(
    x_prev: &[f64],
    x_new: &[f64],
    opts: &SolverOptions,
    ledger: &EvaluationLedger,
) -> Option<StatusCode> {
    if ledger.exhausted() {
        return Some(StatusCode::MaxevalReached);
    }
    if xtol_satisfied(x_prev, x_new, opts.xtol_rel, opts.xtol_abs) {
        return Some(StatusCode::XtolReached);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::Algorithm;
    use crate::problems::make_problem;
    use proptest::prelude::*;

    #[test]
    fn objective_call_is_counted() {
        let p = make_problem("rosenbrock", None).unwrap();
        let mut ledger = EvaluationLedger::new(Some(1000));
        assert_eq!(ledger.objective(&p, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ledger.n_obj, 1);
    }

    #[test]
    fn exhausted_budget_is_signalled() {
        let p = make_problem("rosenbrock", None).unwrap();
        let mut ledger = EvaluationLedger::new(Some(1000));
        ledger.n_obj = 1000;
        assert_eq!(ledger.objective(&p, &[1.0, 1.0]), Err(Error::BudgetExhausted));
        assert_eq!(ledger.n_obj, 1000);
    }

    #[test]
    fn hs071_objective_at_start() {
        let p = make_problem("hs071", None).unwrap();
        let mut ledger = EvaluationLedger::new(None);
        assert_eq!(ledger.objective(&p, &[1.0, 5.0, 5.0, 1.0]).unwrap(), 16.0);
    }

    #[test]
    fn nan_objective_depends_on_policy() {
        let p = Problem::new(vec![0.0], |_| f64::NAN);
        let mut strict = EvaluationLedger::new(None);
        assert!(matches!(strict.objective(&p, &[0.0]), Err(Error::CallbackFailure(_))));
        let mut ranking = EvaluationLedger::new(None).with_nan_policy(NanPolicy::RankAsInfinite);
        assert_eq!(ranking.objective(&p, &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn wrong_length_constraint_output_is_a_callback_failure() {
        let p = make_problem("hs071", None).unwrap();
        let opts = SolverOptions::new(Algorithm::Isres).maxeval(10);
        let (mut p, _) = crate::problem::validate_problem(&p, &opts).unwrap();
        p.ineq = Some(crate::problem::ConstraintBlock::new(|_| vec![1.0, 2.0]));
        let mut ledger = EvaluationLedger::new(None);
        assert!(matches!(ledger.inequalities(&p, &[1.0; 4]), Err(Error::CallbackFailure(_))));
    }

    #[test]
    fn stop_rule_examples() {
        let opts = SolverOptions::new(Algorithm::Lbfgs).xtol_rel(1e-8);
        let ledger = EvaluationLedger::new(Some(10));
        assert_eq!(
            should_stop(&[1.0, 1.0], &[1.0 + 1e-9, 1.0], &opts, &ledger),
            Some(StatusCode::XtolReached)
        );
        assert_eq!(should_stop(&[1.0, 1.0], &[1.1, 1.0], &opts, &ledger), None);
        let mut spent = ledger.clone();
        spent.n_obj = 10;
        assert_eq!(
            should_stop(&[1.0, 1.0], &[50.0, -3.0], &opts, &spent),
            Some(StatusCode::MaxevalReached)
        );
        assert_eq!(
            should_stop(&[1.0, 1.0], &[1.0, 1.0], &opts, &spent),
            Some(StatusCode::MaxevalReached)
        );
    }

    proptest! {
        #[test]
        fn larger_xtol_never_undoes_convergence(
            prev in prop::collection::vec(-10.0f64..10.0, 1..5),
            delta in prop::collection::vec(-1e-3f64..1e-3, 5),
            tol in 1e-9f64..1e-2,
            factor in 1.0f64..100.0,
        ) {
            let new: Vec<f64> = prev.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let ledger = EvaluationLedger::new(None);
            let small = SolverOptions::new(Algorithm::Lbfgs).xtol_rel(tol);
            let large = SolverOptions::new(Algorithm::Lbfgs).xtol_rel(tol * factor);
            if should_stop(&prev, &new, &small, &ledger) == Some(StatusCode::XtolReached) {
                prop_assert_eq!(should_stop(&prev, &new, &large, &ledger), Some(StatusCode::XtolReached));
            }
        }
    }
}
