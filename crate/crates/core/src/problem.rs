//! Problem definition: minimize f(x) subject to g(x) <= 0, h(x) = 0 and
//! lower <= x <= upper.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::options::{Algorithm, SolverOptions, DEFAULT_CONSTRAINT_TOL};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Jacobian callback returning one row per constraint.
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A block of constraints sharing one callback (all inequalities, or all
/// equalities), with an optional analytic Jacobian.
#[derive(Clone)]
pub struct ConstraintBlock {
    pub(crate) values: VectorFn,
    pub(crate) jacobian: Option<MatrixFn>,
}

impl ConstraintBlock {
    pub fn new(values: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        ConstraintBlock {
            values: Arc::new(values),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }
}

/// An optimization problem.
///
/// Callbacks are shared (`Arc`) so cloning a problem is cheap; they must be
/// reentrant when a problem is solved from several threads. Constraint counts
/// are discovered by [`validate_problem`], which probes the callbacks once.
#[derive(Clone)]
pub struct Problem {
    pub(crate) objective: ScalarFn,
    pub(crate) gradient: Option<VectorFn>,
    pub(crate) ineq: Option<ConstraintBlock>,
    pub(crate) eq: Option<ConstraintBlock>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) x0: Vec<f64>,
    pub(crate) m_ineq: usize,
    pub(crate) m_eq: usize,
}

impl Problem {
    /// Creates an unconstrained, unbounded problem of dimension `x0.len()`.
    pub fn new(x0: Vec<f64>, objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let n = x0.len();
        Problem {
            objective: Arc::new(objective),
            gradient: None,
            ineq: None,
            eq: None,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            x0,
            m_ineq: 0,
            m_eq: 0,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_inequalities(mut self, block: ConstraintBlock) -> Self {
        self.ineq = Some(block);
        self
    }

    pub fn with_equalities(mut self, block: ConstraintBlock) -> Self {
        self.eq = Some(block);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn dimension(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn inequalities(&self) -> Option<&ConstraintBlock> {
        self.ineq.as_ref()
    }

    pub fn equalities(&self) -> Option<&ConstraintBlock> {
        self.eq.as_ref()
    }

    /// Number of inequality constraints (known after validation).
    pub fn m_ineq(&self) -> usize {
        self.m_ineq
    }

    /// Number of equality constraints (known after validation).
    pub fn m_eq(&self) -> usize {
        self.m_eq
    }

    pub fn has_finite_bounds(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|b| b.is_finite())
    }

    pub fn all_bounds_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| b.is_finite())
    }

    /// Uncounted evaluation of the objective, for tests and reporting.
    pub fn eval_objective(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    pub fn eval_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn eval_inequalities(&self, x: &[f64]) -> Vec<f64> {
        self.ineq.as_ref().map(|b| (b.values)(x)).unwrap_or_default()
    }

    pub fn eval_equalities(&self, x: &[f64]) -> Vec<f64> {
        self.eq.as_ref().map(|b| (b.values)(x)).unwrap_or_default()
    }

    /// Projects `x` onto the box in place.
    pub fn clamp_into_bounds(&self, x: &mut [f64]) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.max(lo).min(hi);
        }
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("n", &self.dimension())
            .field("has_gradient", &self.has_gradient())
            .field("m_ineq", &self.m_ineq)
            .field("m_eq", &self.m_eq)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("x0", &self.x0)
            .finish()
    }
}

fn probe_block(block: &ConstraintBlock, x: &[f64], kind: &str) -> Result<usize> {
    let m = (block.values)(x).len();
    if let Some(jac) = &block.jacobian {
        let rows = jac(x);
        if rows.len() != m || rows.iter().any(|r| r.len() != x.len()) {
            return Err(Error::callback(format!(
                "{kind} Jacobian has shape inconsistent with {m} constraints in {} variables",
                x.len()
            )));
        }
    }
    Ok(m)
}

fn resize_tolerances(tol: &[f64], m: usize, kind: &str) -> Result<Vec<f64>> {
    if tol.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid(format!("{kind} tolerances must be nonnegative")));
    }
    match tol.len() {
        0 => Ok(vec![DEFAULT_CONSTRAINT_TOL; m]),
        len if len == m => Ok(tol.to_vec()),
        1 => Ok(vec![tol[0]; m]),
        len => Err(Error::invalid(format!(
            "{len} {kind} tolerances given for {m} constraints"
        ))),
    }
}

fn check_algorithm_fit(problem: &Problem, opts: &SolverOptions) -> Result<()> {
    let alg = opts.algorithm;
    let need_jacobians = |what: &str| -> Result<()> {
        if problem.m_ineq > 0 && !problem.ineq.as_ref().is_some_and(|b| b.has_jacobian()) {
            return Err(Error::invalid(format!("{what} requires the inequality Jacobian")));
        }
        if problem.m_eq > 0 && !problem.eq.as_ref().is_some_and(|b| b.has_jacobian()) {
            return Err(Error::invalid(format!("{what} requires the equality Jacobian")));
        }
        Ok(())
    };

    if alg.uses_gradient() {
        if !problem.has_gradient() {
            return Err(Error::invalid(format!("{alg} requires an objective gradient")));
        }
        need_jacobians(alg.id())?;
    }
    if problem.m_eq > 0 && !alg.supports_equalities() {
        return Err(Error::invalid(format!(
            "{alg} does not handle equality constraints"
        )));
    }
    if problem.m_ineq > 0 && !alg.supports_inequalities() {
        return Err(Error::invalid(format!(
            "{alg} does not handle inequality constraints"
        )));
    }

    match alg {
        Algorithm::Lbfgs if problem.has_finite_bounds() => {
            Err(Error::invalid("lbfgs does not handle finite bounds"))
        }
        Algorithm::Isres if !problem.all_bounds_finite() => {
            Err(Error::invalid("isres requires finite bounds on every variable"))
        }
        Algorithm::Isres if opts.maxeval.is_none() => {
            Err(Error::invalid("isres requires maxeval"))
        }
        Algorithm::Auglag => {
            let local = opts
                .local_opts
                .as_ref()
                .ok_or_else(|| Error::invalid("auglag requires local_opts"))?;
            match local.algorithm {
                Algorithm::Auglag | Algorithm::Isres => Err(Error::invalid(format!(
                    "{} cannot serve as the auglag local solver",
                    local.algorithm
                ))),
                Algorithm::Lbfgs if problem.has_finite_bounds() => Err(Error::invalid(
                    "lbfgs as auglag local solver does not handle finite bounds",
                )),
                local_alg if local_alg.uses_gradient() => {
                    if !problem.has_gradient() {
                        return Err(Error::invalid(format!(
                            "auglag with local {local_alg} requires an objective gradient"
                        )));
                    }
                    need_jacobians("auglag with a gradient-based local solver")
                }
                _ => Ok(()),
            }
        }
        _ if opts.local_opts.is_some() => {
            Err(Error::invalid(format!("local_opts is only meaningful for auglag, not {alg}")))
        }
        _ => Ok(()),
    }
}

/// Checks a problem against the chosen options.
///
/// Returns a copy of the problem with `x0` clamped into the bounds and the
/// constraint counts filled in, plus options whose tolerance vectors have one
/// entry per constraint. Validating an already validated pair is a no-op.
pub fn validate_problem(problem: &Problem, opts: &SolverOptions) -> Result<(Problem, SolverOptions)> {
    let n = problem.dimension();
    if n == 0 {
        return Err(Error::invalid("problem dimension must be positive"));
    }
    if problem.lower.len() != n || problem.upper.len() != n {
        return Err(Error::invalid(format!(
            "bounds have lengths {} and {}, expected {n}",
            problem.lower.len(),
            problem.upper.len()
        )));
    }
    for (i, (&lo, &hi)) in problem.lower.iter().zip(&problem.upper).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid(format!("bounds at index {i} are inconsistent: [{lo}, {hi}]")));
        }
    }
    if problem.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0 must be finite"));
    }
    if !(opts.xtol_rel >= 0.0) || !(opts.xtol_abs >= 0.0) {
        return Err(Error::invalid("xtol_rel and xtol_abs must be nonnegative"));
    }
    if opts.maxeval == Some(0) {
        return Err(Error::invalid("maxeval must be positive"));
    }
    if opts.maxeval.is_none() && opts.xtol_rel == 0.0 && opts.xtol_abs == 0.0 {
        return Err(Error::invalid("no stopping condition: set xtol_rel, xtol_abs or maxeval"));
    }

    let mut validated = problem.clone();
    let mut x0 = problem.x0.clone();
    problem.clamp_into_bounds(&mut x0);
    validated.x0 = x0;
    validated.m_ineq = match &problem.ineq {
        Some(block) => probe_block(block, &validated.x0, "inequality")?,
        None => 0,
    };
    validated.m_eq = match &problem.eq {
        Some(block) => probe_block(block, &validated.x0, "equality")?,
        None => 0,
    };

    check_algorithm_fit(&validated, opts)?;

    let mut opts = opts.clone();
    opts.tol_constraints_ineq =
        resize_tolerances(&opts.tol_constraints_ineq, validated.m_ineq, "inequality")?;
    opts.tol_constraints_eq =
        resize_tolerances(&opts.tol_constraints_eq, validated.m_eq, "equality")?;
    Ok((validated, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_problem;

    fn sum_sq(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn hs071_is_accepted_unchanged_under_auglag() {
        let p = make_problem("hs071", None).unwrap();
        let opts = SolverOptions::new(Algorithm::Auglag)
            .xtol_rel(1e-7)
            .maxeval(1000)
            .local_opts(SolverOptions::new(Algorithm::Mma).xtol_rel(1e-7));
        let (v, o) = validate_problem(&p, &opts).unwrap();
        assert_eq!(v.x0(), &[1.0, 5.0, 5.0, 1.0]);
        assert_eq!((v.m_ineq(), v.m_eq()), (1, 1));
        assert_eq!(o.tol_constraints_ineq, vec![1e-8]);
        assert_eq!(o.tol_constraints_eq, vec![1e-8]);
    }

    #[test]
    fn x0_outside_bounds_is_clamped() {
        let p = Problem::new(vec![0.0, 0.0], sum_sq).with_bounds(vec![1.0, 1.0], vec![5.0, 5.0]);
        let (v, _) = validate_problem(&p, &SolverOptions::new(Algorithm::Cobyla)).unwrap();
        assert_eq!(v.x0(), &[1.0, 1.0]);
    }

    #[test]
    fn infinite_bounds_leave_x0_alone() {
        let p = Problem::new(vec![-7.0, 3.0], sum_sq)
            .with_bounds(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY; 2]);
        let (v, _) = validate_problem(&p, &SolverOptions::new(Algorithm::Cobyla)).unwrap();
        assert_eq!(v.x0(), &[-7.0, 3.0]);
    }

    #[test]
    fn equality_constraints_rejected_for_lbfgs() {
        let p = make_problem("rosenbrock", None)
            .unwrap()
            .with_equalities(ConstraintBlock::new(|x| vec![x[0] - x[1]]));
        let err = validate_problem(&p, &SolverOptions::new(Algorithm::Lbfgs)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgs(_)), "{err:?}");
    }

    #[test]
    fn dimension_mismatch_and_crossed_bounds_rejected() {
        let opts = SolverOptions::new(Algorithm::Cobyla);
        let p = Problem::new(vec![0.0, 0.0], sum_sq).with_bounds(vec![0.0], vec![1.0, 1.0]);
        assert!(matches!(validate_problem(&p, &opts), Err(Error::InvalidArgs(_))));
        let p = Problem::new(vec![0.0], sum_sq).with_bounds(vec![2.0], vec![1.0]);
        assert!(matches!(validate_problem(&p, &opts), Err(Error::InvalidArgs(_))));
    }

    #[test]
    fn gradient_based_algorithms_need_gradients() {
        let p = Problem::new(vec![1.0], sum_sq);
        for alg in [Algorithm::Lbfgs, Algorithm::Mma] {
            assert!(matches!(
                validate_problem(&p, &SolverOptions::new(alg)),
                Err(Error::InvalidArgs(_))
            ));
        }
        let auglag = SolverOptions::new(Algorithm::Auglag).local_opts(SolverOptions::new(Algorithm::Mma));
        assert!(validate_problem(&p, &auglag).is_err());
        let auglag = SolverOptions::new(Algorithm::Auglag).local_opts(SolverOptions::new(Algorithm::Cobyla));
        assert!(validate_problem(&p, &auglag).is_ok());
    }

    #[test]
    fn local_opts_present_iff_auglag() {
        let p = Problem::new(vec![1.0], sum_sq);
        assert!(validate_problem(&p, &SolverOptions::new(Algorithm::Auglag)).is_err());
        let cobyla = SolverOptions::new(Algorithm::Cobyla).local_opts(SolverOptions::new(Algorithm::Cobyla));
        assert!(validate_problem(&p, &cobyla).is_err());
    }

    #[test]
    fn tolerance_vectors_are_resized() {
        let p = make_problem("multi_ineq_2d", None).unwrap();
        let opts = SolverOptions::new(Algorithm::Isres).maxeval(10).tol_constraints_ineq(vec![1e-10]);
        let (_, o) = validate_problem(&p, &opts).unwrap();
        assert_eq!(o.tol_constraints_ineq, vec![1e-10; 5]);
        let bad = opts.clone().tol_constraints_ineq(vec![1e-10; 3]);
        assert!(validate_problem(&p, &bad).is_err());
    }

    #[test]
    fn isres_rejects_unbounded_variables() {
        let p = Problem::new(vec![1.0], sum_sq);
        let err = validate_problem(&p, &SolverOptions::new(Algorithm::Isres).maxeval(100)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgs(_)));
    }

    #[test]
    fn validation_is_idempotent() {
        for name in ["rosenbrock", "tutorial_sqrt", "hs071", "multi_ineq_2d"] {
            let spec = crate::problems::find_spec(name).unwrap();
            let p = make_problem(name, None).unwrap().with_x0(vec![-100.0; spec.dimension]);
            let opts = spec.default_options();
            let Ok((once, o1)) = validate_problem(&p, &opts) else { continue };
            let (twice, o2) = validate_problem(&once, &o1).unwrap();
            assert_eq!(once.x0(), twice.x0());
            assert_eq!((once.m_ineq(), once.m_eq()), (twice.m_ineq(), twice.m_eq()));
            assert_eq!(o1, o2);
        }
    }
}
