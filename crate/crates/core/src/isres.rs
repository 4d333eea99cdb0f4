//! Improved stochastic ranking evolution strategy.
//!
//! A (mu, lambda) strategy with self-adaptive log-normal step sizes. Parents
//! are chosen by stochastic ranking, which balances objective value against
//! constraint violation. The best-ranked parents also take a differential
//! step toward the current leader.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::ledger::{EvaluationLedger, NanPolicy};
use crate::options::{Algorithm, SolverOptions};
use crate::problem::Problem;
use crate::result::{SolveResult, StatusCode};
use crate::{finish, run_solver};

/// Weight of the differential step.
const GAMMA: f64 = 0.85;
/// Smoothing of the mutated step sizes toward the parent's.
const SIGMA_SMOOTHING: f64 = 0.2;
const MAX_REFLECTIONS: usize = 8;
/// Step sizes never drop below this fraction of the box width.
const MIN_SIGMA_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub f: f64,
    pub phi: f64,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub mu_pop: usize,
    pub generation: usize,
    pub rng: ChaCha8Rng,
}

impl Population {
    /// Offspring count `20 (n + 1)`.
    pub fn default_size(n: usize) -> usize {
        20 * (n + 1)
    }

    /// Parent count `lambda / 7`, at least one.
    pub fn default_parents(lambda: usize) -> usize {
        ((lambda as f64 / 7.0).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingParams {
    /// Probability of comparing an infeasible pair by objective.
    pub pf: f64,
}

impl Default for RankingParams {
    fn default() -> Self {
        RankingParams { pf: 0.45 }
    }
}

/// `sum max(0, g_i - tol_i) + sum max(0, |h_j| - tol_j)`.
pub fn constraint_violation(g_values: &[f64], h_values: &[f64], tol_ineq: &[f64], tol_eq: &[f64]) -> f64 {
    let excess = |v: f64| if v.is_nan() { f64::INFINITY } else { v.max(0.0) };
    let ineq: f64 = g_values.iter().zip(tol_ineq).map(|(g, t)| excess(g - t)).sum();
    let eq: f64 = h_values.iter().zip(tol_eq).map(|(h, t)| excess(h.abs() - t)).sum();
    ineq + eq
}

/// Orders members best first by stochastic bubble sweeps.
///
/// Each adjacent pair draws one uniform number. The pair is compared by `f`
/// when both members are feasible or the draw falls below `pf`, and by `phi`
/// otherwise. At most `len` sweeps; stops after a sweep without swaps.
pub fn stochastic_rank(f: &[f64], phi: &[f64], params: RankingParams, rng: &mut impl Rng) -> Vec<usize> {
    let len = f.len();
    let mut order: Vec<usize> = (0..len).collect();
    for _ in 0..len {
        let mut swapped = false;
        for j in 0..len.saturating_sub(1) {
            let (a, b) = (order[j], order[j + 1]);
            let u: f64 = rng.random();
            let by_objective = (phi[a] == 0.0 && phi[b] == 0.0) || u < params.pf;
            let out_of_order = if by_objective { f[a] > f[b] } else { phi[a] > phi[b] };
            if out_of_order {
                order.swap(j, j + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    order
}

/// Maps `v` back into `[lo, hi]` by mirroring at the bounds.
fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..MAX_REFLECTIONS {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
    v.clamp(lo, hi)
}

/// Lexicographic key: feasible before infeasible, then `f` or `phi`.
fn better(a: &Individual, b: &Individual) -> bool {
    match (a.phi == 0.0, b.phi == 0.0) {
        (true, true) => a.f < b.f,
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.phi < b.phi,
    }
}

pub fn minimize_isres(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    run_solver(problem, opts, Algorithm::Isres, |p, o, ledger| {
        let mut ledger_nan = std::mem::take(ledger).with_nan_policy(NanPolicy::RankAsInfinite);
        let r = solve(p, o, &mut ledger_nan);
        *ledger = ledger_nan;
        r
    })
}

struct Run<'a> {
    problem: &'a Problem,
    opts: &'a SolverOptions,
    best: Option<Individual>,
}

impl Run<'_> {
    /// Evaluates a member; `None` once the budget is spent.
    fn evaluate(&mut self, x: Vec<f64>, sigma: Vec<f64>, ledger: &mut EvaluationLedger) -> Result<Option<Individual>> {
        let f = match ledger.objective(self.problem, &x) {
            Ok(f) => f,
            Err(crate::Error::BudgetExhausted) => return Ok(None),
            Err(e) => return Err(e.context("isres")),
        };
        let g = ledger.inequalities(self.problem, &x)?;
        let h = ledger.equalities(self.problem, &x)?;
        let phi = constraint_violation(&g, &h, &self.opts.tol_constraints_ineq, &self.opts.tol_constraints_eq);
        let member = Individual { x, sigma, f, phi };
        if self.best.as_ref().is_none_or(|b| better(&member, b)) {
            self.best = Some(member.clone());
        }
        Ok(Some(member))
    }

    fn collapsed(&self, parents: &[&Individual]) -> bool {
        let lead = &parents[0].x;
        let tol = |j: usize| self.opts.xtol_rel * lead[j].abs() + self.opts.xtol_abs;
        parents.iter().all(|p| {
            (0..lead.len()).all(|j| (p.x[j] - lead[j]).abs() <= tol(j) && p.sigma[j] <= tol(j))
        })
    }
}

fn solve(problem: &Problem, opts: &SolverOptions, ledger: &mut EvaluationLedger) -> Result<SolveResult> {
    let n = problem.dimension();
    let (lower, upper) = (problem.lower(), problem.upper());
    let lambda = Population::default_size(n);
    let mu = Population::default_parents(lambda);
    let tau = 1.0 / (2.0 * (n as f64).sqrt()).sqrt();
    let tau_prime = 1.0 / (2.0 * n as f64).sqrt();
    let params = RankingParams::default();

    let mut run = Run { problem, opts, best: None };
    let mut pop = Population {
        individuals: Vec::with_capacity(lambda),
        mu_pop: mu,
        generation: 0,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
    };
    let sigma0: Vec<f64> = (0..n).map(|j| (upper[j] - lower[j]) / (n as f64).sqrt()).collect();

    let mut status = None;
    for k in 0..lambda {
        let x = if k == 0 {
            problem.x0().to_vec()
        } else {
            (0..n).map(|j| pop.rng.random_range(lower[j]..=upper[j])).collect()
        };
        match run.evaluate(x, sigma0.clone(), ledger)? {
            Some(m) => pop.individuals.push(m),
            None => {
                status = Some(StatusCode::MaxevalReached);
                break;
            }
        }
    }

    while status.is_none() {
        let f: Vec<f64> = pop.individuals.iter().map(|m| m.f).collect();
        let phi: Vec<f64> = pop.individuals.iter().map(|m| m.phi).collect();
        let order = stochastic_rank(&f, &phi, params, &mut pop.rng);
        let parents: Vec<&Individual> = order.iter().take(pop.mu_pop).map(|&i| &pop.individuals[i]).collect();
        if run.collapsed(&parents) {
            status = Some(StatusCode::XtolReached);
            break;
        }

        let mut offspring = Vec::with_capacity(lambda);
        for k in 0..lambda {
            let i = k % parents.len();
            let parent = parents[i];
            let (x, sigma) = if k + 1 < parents.len() {
                let x = (0..n)
                    .map(|j| parent.x[j] + GAMMA * (parents[0].x[j] - parents[i + 1].x[j]))
                    .collect();
                (x, parent.sigma.clone())
            } else {
                let shared: f64 = pop.rng.sample(StandardNormal);
                let mut x = Vec::with_capacity(n);
                let mut sigma = Vec::with_capacity(n);
                for j in 0..n {
                    let own: f64 = pop.rng.sample(StandardNormal);
                    let s = parent.sigma[j] * (tau_prime * shared + tau * own).exp();
                    let step: f64 = pop.rng.sample(StandardNormal);
                    x.push(parent.x[j] + s * step);
                    let smoothed = parent.sigma[j] + SIGMA_SMOOTHING * (s - parent.sigma[j]);
                    sigma.push(smoothed.max(MIN_SIGMA_FRACTION * (upper[j] - lower[j])));
                }
                (x, sigma)
            };
            let x: Vec<f64> = x.iter().enumerate().map(|(j, v)| reflect(*v, lower[j], upper[j])).collect();
            match run.evaluate(x, sigma, ledger)? {
                Some(m) => offspring.push(m),
                None => {
                    status = Some(StatusCode::MaxevalReached);
                    break;
                }
            }
        }
        pop.individuals = offspring;
        pop.generation += 1;
        if opts.print_level > 0 {
            if let Some(b) = &run.best {
                eprintln!("isres generation {}: f = {}, phi = {}", pop.generation, b.f, b.phi);
            }
        }
    }

    let best = run.best.expect("budget covers at least one evaluation");
    Ok(finish(problem, opts, status.expect("loop exits with a status"), best.x, best.f, pop.generation, ledger))
}
