//! Finite-difference verification of analytic gradients and Jacobians.

use std::fmt;

use crate::error::{Error, Result};
use crate::problem::Problem;

pub const DEFAULT_STEP: f64 = 1e-6;

/// Below this magnitude errors are compared absolutely instead of relatively.
const ABSOLUTE_SCALE: f64 = 1e-8;

/// Central differences `[f(x + h_i e_i) - f(x - h_i e_i)] / (2 h_i)` with
/// `h_i = h * max(1, |x_i|)`.
pub fn central_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::callback(format!(
                "non-finite value while differencing component {i}"
            )));
        }
        // Use the realized step so rounding in x +/- step cancels.
        grad.push((fp - fm) / ((x[i] + step) - (x[i] - step)));
    }
    Ok(grad)
}

/// Which function a derivative row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionRow {
    Objective,
    Inequality(usize),
    Equality(usize),
}

impl fmt::Display for FunctionRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionRow::Objective => write!(f, "objective"),
            FunctionRow::Inequality(i) => write!(f, "inequality[{i}]"),
            FunctionRow::Equality(i) => write!(f, "equality[{i}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Function row and variable index of the worst entry.
    pub worst_component: Option<(FunctionRow, usize)>,
    pub points_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for DerivativeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Derivative check: {}", if self.passed { "passed" } else { "FAILED" })?;
        writeln!(f, "Points checked: {}", self.points_checked)?;
        writeln!(f, "Tolerance: {:e}", self.tolerance)?;
        writeln!(f, "Max absolute error: {:e}", self.max_abs_error)?;
        writeln!(f, "Max relative error: {:e}", self.max_rel_error)?;
        match self.worst_component {
            Some((row, j)) => writeln!(f, "Worst component: {row} / x[{j}]"),
            None => writeln!(f, "Worst component: none"),
        }
    }
}

fn entry_error(analytic: f64, numeric: f64) -> (f64, f64) {
    let abs = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    let rel = if scale < ABSOLUTE_SCALE { abs } else { abs / scale };
    (abs, rel)
}

struct Accumulator {
    max_abs: f64,
    max_rel: f64,
    worst: Option<(FunctionRow, usize)>,
}

impl Accumulator {
    fn record(&mut self, row: FunctionRow, analytic: &[f64], numeric: &[f64]) {
        for (j, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let (abs, rel) = entry_error(a, n);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            self.max_abs = self.max_abs.max(abs);
            if rel > self.max_rel || self.worst.is_none() {
                self.max_rel = rel.max(self.max_rel);
                self.worst = Some((row, j));
            }
        }
    }
}

/// Compares every analytic derivative the problem supplies against central
/// differences at each point.
pub fn check_derivatives(problem: &Problem, points: &[Vec<f64>], tol: f64) -> Result<DerivativeReport> {
    let n = problem.dimension();
    let mut acc = Accumulator {
        max_abs: 0.0,
        max_rel: 0.0,
        worst: None,
    };
    let has_any = problem.has_gradient()
        || problem.inequalities().is_some_and(|b| b.has_jacobian())
        || problem.equalities().is_some_and(|b| b.has_jacobian());
    if !has_any {
        return Err(Error::invalid("problem supplies no analytic derivatives to check"));
    }

    for x in points {
        if x.len() != n {
            return Err(Error::invalid(format!("check point has length {}, expected {n}", x.len())));
        }
        if let Some(grad) = problem.eval_gradient(x) {
            let numeric = central_diff_gradient(|p| problem.eval_objective(p), x, DEFAULT_STEP)?;
            acc.record(FunctionRow::Objective, &grad, &numeric);
        }
        for (block, is_eq) in [(problem.inequalities(), false), (problem.equalities(), true)] {
            let Some(block) = block else { continue };
            let Some(jac) = &block.jacobian else { continue };
            let rows = jac(x);
            for (i, row) in rows.iter().enumerate() {
                let numeric =
                    central_diff_gradient(|p| (block.values)(p).get(i).copied().unwrap_or(f64::NAN), x, DEFAULT_STEP)?;
                let which = if is_eq { FunctionRow::Equality(i) } else { FunctionRow::Inequality(i) };
                acc.record(which, row, &numeric);
            }
        }
    }

    Ok(DerivativeReport {
        max_abs_error: acc.max_abs,
        max_rel_error: acc.max_rel,
        worst_component: acc.worst,
        points_checked: points.len(),
        tolerance: tol,
        passed: acc.max_rel <= tol,
    })
}
