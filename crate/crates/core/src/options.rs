//! Solver selection and stopping options.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::numfmt::format_significant;

/// Default feasibility tolerance applied to every constraint the caller does
/// not give an explicit tolerance for.
pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Lbfgs,
    Cobyla,
    Mma,
    Auglag,
    Isres,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Lbfgs,
        Algorithm::Cobyla,
        Algorithm::Mma,
        Algorithm::Auglag,
        Algorithm::Isres,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Lbfgs => "lbfgs",
            Algorithm::Cobyla => "cobyla",
            Algorithm::Mma => "mma",
            Algorithm::Auglag => "auglag",
            Algorithm::Isres => "isres",
        }
    }

    /// Whether the algorithm evaluates the objective gradient.
    pub fn uses_gradient(self) -> bool {
        matches!(self, Algorithm::Lbfgs | Algorithm::Mma)
    }

    pub fn supports_inequalities(self) -> bool {
        !matches!(self, Algorithm::Lbfgs)
    }

    pub fn supports_equalities(self) -> bool {
        matches!(self, Algorithm::Auglag | Algorithm::Isres)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgs(format!("unknown algorithm '{s}'")))
    }
}

/// Options controlling a solve.
///
/// `tol_constraints_ineq` / `tol_constraints_eq` may be left empty, in which
/// case every constraint gets [`DEFAULT_CONSTRAINT_TOL`]; a single entry is
/// broadcast to all constraints of that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    pub xtol_rel: f64,
    pub xtol_abs: f64,
    /// Objective-evaluation budget; `None` is unbounded.
    pub maxeval: Option<usize>,
    pub tol_constraints_ineq: Vec<f64>,
    pub tol_constraints_eq: Vec<f64>,
    /// Nested options for the local solver of the augmented Lagrangian.
    pub local_opts: Option<Box<SolverOptions>>,
    pub print_level: u32,
    /// Seed for the stochastic solver.
    pub seed: u64,
}

impl SolverOptions {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverOptions {
            algorithm,
            xtol_rel: 1e-8,
            xtol_abs: 0.0,
            maxeval: None,
            tol_constraints_ineq: Vec::new(),
            tol_constraints_eq: Vec::new(),
            local_opts: None,
            print_level: 0,
            seed: 0,
        }
    }

    pub fn xtol_rel(mut self, tol: f64) -> Self {
        self.xtol_rel = tol;
        self
    }

    pub fn xtol_abs(mut self, tol: f64) -> Self {
        self.xtol_abs = tol;
        self
    }

    pub fn maxeval(mut self, budget: usize) -> Self {
        self.maxeval = Some(budget);
        self
    }

    pub fn tol_constraints_ineq(mut self, tol: Vec<f64>) -> Self {
        self.tol_constraints_ineq = tol;
        self
    }

    pub fn tol_constraints_eq(mut self, tol: Vec<f64>) -> Self {
        self.tol_constraints_eq = tol;
        self
    }

    pub fn local_opts(mut self, local: SolverOptions) -> Self {
        self.local_opts = Some(Box::new(local));
        self
    }

    pub fn print_level(mut self, level: u32) -> Self {
        self.print_level = level;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The stopping conditions in report form, e.g. `xtol_rel: 1e-07 maxeval: 1000`.
    pub fn termination_summary(&self) -> String {
        let mut parts = Vec::new();
        if self.xtol_rel > 0.0 {
            parts.push(format!("xtol_rel: {}", format_significant(self.xtol_rel, 7)));
        }
        if self.xtol_abs > 0.0 {
            parts.push(format!("xtol_abs: {}", format_significant(self.xtol_abs, 7)));
        }
        if let Some(m) = self.maxeval {
            parts.push(format!("maxeval: {m}"));
        }
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn termination_summary_matches_report_layout() {
        let o = SolverOptions::new(Algorithm::Lbfgs).xtol_rel(1e-8);
        assert_eq!(o.termination_summary(), "xtol_rel: 1e-08");
        let o = SolverOptions::new(Algorithm::Auglag).xtol_rel(1e-7).maxeval(1000);
        assert_eq!(o.termination_summary(), "xtol_rel: 1e-07 maxeval: 1000");
    }

    #[test]
    fn algorithm_ids_parse_back() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
        assert!("direct".parse::<Algorithm>().is_err());
    }
}
