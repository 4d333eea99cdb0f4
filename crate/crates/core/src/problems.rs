//! Built-in benchmark problems.
//!
//! | name            | n | m_ineq | m_eq | default solver |
//! |-----------------|---|--------|------|----------------|
//! | `rosenbrock`    | 2 | 0      | 0    | lbfgs          |
//! | `tutorial_sqrt` | 2 | 2      | 0    | cobyla         |
//! | `hs071`         | 4 | 1      | 1    | auglag + mma   |
//! | `multi_ineq_2d` | 2 | 5      | 0    | isres          |
//!
//! Every problem carries analytic derivatives so each can be run under any
//! solver whose structural requirements it meets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::options::{Algorithm, SolverOptions};
use crate::problem::{ConstraintBlock, Problem};

/// Named parameter overrides, e.g. `a -> [2, -1]`.
pub type ProblemParams = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub f: f64,
    pub note: &'static str,
}

/// Registry entry describing a built-in problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub dimension: usize,
    pub m_ineq: usize,
    pub m_eq: usize,
    pub default_algorithm: Algorithm,
    pub reference_solution: Option<ReferenceSolution>,
    /// Box sampled when checking derivatives; stays clear of singularities.
    pub sample_lower: Vec<f64>,
    pub sample_upper: Vec<f64>,
}

impl ProblemSpec {
    /// Options that reproduce the documented run for this problem.
    pub fn default_options(&self) -> SolverOptions {
        match self.name {
            "rosenbrock" => SolverOptions::new(Algorithm::Lbfgs).xtol_rel(1e-8),
            "tutorial_sqrt" => SolverOptions::new(Algorithm::Cobyla).xtol_rel(1e-8),
            "hs071" => SolverOptions::new(Algorithm::Auglag)
                .xtol_rel(1e-7)
                .maxeval(1000)
                .local_opts(SolverOptions::new(Algorithm::Mma).xtol_rel(1e-7)),
            "multi_ineq_2d" => SolverOptions::new(Algorithm::Isres)
                .xtol_rel(1e-15)
                .maxeval(160_000)
                .tol_constraints_ineq(vec![1e-10; 5]),
            _ => SolverOptions::new(self.default_algorithm),
        }
    }
}

pub const PROBLEM_NAMES: [&str; 4] = ["rosenbrock", "tutorial_sqrt", "hs071", "multi_ineq_2d"];

pub fn list_problems() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec {
            name: "rosenbrock",
            description: "Rosenbrock banana function, unconstrained",
            dimension: 2,
            m_ineq: 0,
            m_eq: 0,
            default_algorithm: Algorithm::Lbfgs,
            reference_solution: Some(ReferenceSolution {
                x: vec![1.0, 1.0],
                f: 0.0,
                note: "global minimum",
            }),
            sample_lower: vec![-2.0, -2.0],
            sample_upper: vec![2.0, 2.0],
        },
        ProblemSpec {
            name: "tutorial_sqrt",
            description: "sqrt(x2) subject to two cubic inequality constraints",
            dimension: 2,
            m_ineq: 2,
            m_eq: 0,
            default_algorithm: Algorithm::Cobyla,
            reference_solution: Some(ReferenceSolution {
                x: vec![1.0 / 3.0, 8.0 / 27.0],
                f: (8.0f64 / 27.0).sqrt(),
                note: "intersection of both constraints, (2/3)^3 = 8/27",
            }),
            sample_lower: vec![-2.0, 0.1],
            sample_upper: vec![2.0, 10.0],
        },
        ProblemSpec {
            name: "hs071",
            description: "Hock-Schittkowski problem 71: one inequality, one equality, box [1,5]^4",
            dimension: 4,
            m_ineq: 1,
            m_eq: 1,
            default_algorithm: Algorithm::Auglag,
            reference_solution: Some(ReferenceSolution {
                x: vec![1.0, 4.742_999_637_264_417, 3.821_149_984_184_874, 1.379_408_293_172_672_4],
                f: 17.014_017_289_156_3,
                note: "KKT system solved to 40 digits with x1 at its lower bound",
            }),
            sample_lower: vec![1.0; 4],
            sample_upper: vec![5.0; 4],
        },
        ProblemSpec {
            name: "multi_ineq_2d",
            description: "x1^2 + x2^2 subject to five nonlinear inequality constraints",
            dimension: 2,
            m_ineq: 5,
            m_eq: 0,
            default_algorithm: Algorithm::Isres,
            reference_solution: Some(ReferenceSolution {
                x: vec![1.0, 1.0],
                f: 2.0,
                note: "tip of the feasible cusp between x2 <= x1^2 and x1 <= x2^2",
            }),
            sample_lower: vec![-5.0, -5.0],
            sample_upper: vec![5.0, 5.0],
        },
    ]
}

pub fn find_spec(name: &str) -> Option<ProblemSpec> {
    list_problems().into_iter().find(|s| s.name == name)
}

/// Builds a registered problem. Only `tutorial_sqrt` takes parameters
/// (`a` and `b`, two entries each).
pub fn make_problem(name: &str, params: Option<&ProblemParams>) -> Result<Problem> {
    let params_given = params.is_some_and(|p| !p.is_empty());
    match name {
        "tutorial_sqrt" => {
            let (a, b) = tutorial_params(params)?;
            Ok(tutorial_sqrt(a, b))
        }
        "rosenbrock" | "hs071" | "multi_ineq_2d" if params_given => {
            Err(Error::invalid(format!("problem '{name}' takes no parameters")))
        }
        "rosenbrock" => Ok(rosenbrock()),
        "hs071" => Ok(hs071()),
        "multi_ineq_2d" => Ok(multi_ineq_2d()),
        other => Err(Error::invalid(format!("unknown problem '{other}'"))),
    }
}

fn tutorial_params(params: Option<&ProblemParams>) -> Result<([f64; 2], [f64; 2])> {
    let mut a = [2.0, -1.0];
    let mut b = [0.0, 1.0];
    if let Some(params) = params {
        for (key, value) in params {
            let target = match key.as_str() {
                "a" => &mut a,
                "b" => &mut b,
                other => return Err(Error::invalid(format!("unknown parameter '{other}'"))),
            };
            if value.len() != 2 || value.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "parameter '{key}' needs two finite values, got {value:?}"
                )));
            }
            target.copy_from_slice(value);
        }
    }
    Ok((a, b))
}

pub fn rosenbrock() -> Problem {
    Problem::new(vec![-1.2, 1.0], |x| {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    })
    .with_gradient(|x| {
        vec![
            -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ]
    })
}

/// `sqrt(x2)` subject to `(a_k x1 + b_k)^3 - x2 <= 0`, `x2 >= 0`.
pub fn tutorial_sqrt(a: [f64; 2], b: [f64; 2]) -> Problem {
    let constraints = ConstraintBlock::new(move |x| {
        (0..2).map(|k| (a[k] * x[0] + b[k]).powi(3) - x[1]).collect()
    })
    .with_jacobian(move |x| {
        (0..2)
            .map(|k| vec![3.0 * a[k] * (a[k] * x[0] + b[k]).powi(2), -1.0])
            .collect()
    });
    // sqrt of a negative x2 is NaN; the lower bound keeps solvers away from it.
    Problem::new(vec![1.234, 5.678], |x| x[1].sqrt())
        .with_gradient(|x| vec![0.0, 0.5 / x[1].sqrt()])
        .with_bounds(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY; 2])
        .with_inequalities(constraints)
}

pub fn hs071() -> Problem {
    let ineq = ConstraintBlock::new(|x| vec![25.0 - x[0] * x[1] * x[2] * x[3]]).with_jacobian(|x| {
        vec![vec![
            -x[1] * x[2] * x[3],
            -x[0] * x[2] * x[3],
            -x[0] * x[1] * x[3],
            -x[0] * x[1] * x[2],
        ]]
    });
    let eq = ConstraintBlock::new(|x| vec![x.iter().map(|v| v * v).sum::<f64>() - 40.0])
        .with_jacobian(|x| vec![x.iter().map(|v| 2.0 * v).collect()]);
    Problem::new(vec![1.0, 5.0, 5.0, 1.0], |x| {
        x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
    })
    .with_gradient(|x| {
        vec![
            x[0] * x[3] + x[3] * (x[0] + x[1] + x[2]),
            x[0] * x[3],
            x[0] * x[3] + 1.0,
            x[0] * (x[0] + x[1] + x[2]),
        ]
    })
    .with_bounds(vec![1.0; 4], vec![5.0; 4])
    .with_inequalities(ineq)
    .with_equalities(eq)
}

pub fn multi_ineq_2d() -> Problem {
    let ineq = ConstraintBlock::new(|x| {
        vec![
            1.0 - x[0] - x[1],
            1.0 - x[0] * x[0] - x[1] * x[1],
            9.0 - 9.0 * x[0] * x[0] - x[1] * x[1],
            x[1] - x[0] * x[0],
            x[0] - x[1] * x[1],
        ]
    })
    .with_jacobian(|x| {
        vec![
            vec![-1.0, -1.0],
            vec![-2.0 * x[0], -2.0 * x[1]],
            vec![-18.0 * x[0], -2.0 * x[1]],
            vec![-2.0 * x[0], 1.0],
            vec![1.0, -2.0 * x[1]],
        ]
    });
    Problem::new(vec![3.0, 1.0], |x| x[0] * x[0] + x[1] * x[1])
        .with_gradient(|x| vec![2.0 * x[0], 2.0 * x[1]])
        .with_bounds(vec![-50.0; 2], vec![50.0; 2])
        .with_inequalities(ineq)
}
