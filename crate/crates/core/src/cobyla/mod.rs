//! Derivative-free optimization by linear approximations on a simplex.
//!
//! The objective and each inequality constraint are modelled by the linear
//! function interpolating them at the `n + 1` simplex vertices. Each step
//! minimizes the model objective inside a trust region of radius `rho`,
//! subject to the model constraints. Progress is judged by the merit function
//! `f + parmu * max(0, max_k g_k)`. The radius only shrinks, down to a final
//! value derived from the x-tolerances. Box bounds enter the step computation
//! as exact linear constraints and every evaluated point is clamped into the
//! box.

mod lp;

use nalgebra::DMatrix;

pub use lp::{solve_lp, LpOutcome};

use crate::error::{Error, Result};
use crate::ledger::EvaluationLedger;
use crate::options::{Algorithm, SolverOptions};
use crate::problem::Problem;
use crate::result::{SolveResult, StatusCode};
use crate::{dot, finish, norm, run_solver};

/// A vertex is too close to the opposite face below `ALPHA * rho`.
const ALPHA: f64 = 0.25;
/// A vertex is too far from the base above `BETA * rho`.
const BETA: f64 = 2.1;
/// Length of a geometry-repair step, as a fraction of `rho`.
const GAMMA: f64 = 0.5;
/// Replacement threshold on vertex distance after a trust-region step.
const DELTA: f64 = 1.1;

/// `constant + gradient . (x - x_base)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub constant: f64,
    pub gradient: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, d: &[f64]) -> f64 {
        self.constant + dot(&self.gradient, d)
    }
}

/// Inverse of the displacement matrix plus the shape measures used to judge
/// the simplex.
struct Geometry {
    /// Row `j` is orthogonal to every displacement except the `j`-th.
    inverse: DMatrix<f64>,
    /// Distance of each vertex from the opposite face.
    vsig: Vec<f64>,
    /// Distance of each vertex from the base.
    veta: Vec<f64>,
}

fn geometry_of(displacements: &[Vec<f64>]) -> Result<Geometry> {
    let n = displacements.len();
    let s = DMatrix::from_fn(n, n, |i, j| displacements[j][i]);
    let inverse = s.clone().try_inverse().ok_or(Error::DegenerateSimplex)?;
    let err = (&inverse * &s - DMatrix::<f64>::identity(n, n)).amax();
    if !(err <= 0.1) {
        return Err(Error::DegenerateSimplex);
    }
    let vsig = (0..n).map(|j| 1.0 / inverse.row(j).norm()).collect();
    let veta = displacements.iter().map(|d| norm(d)).collect();
    Ok(Geometry { inverse, vsig, veta })
}

/// Gradient of the linear function taking value `delta[j]` at displacement `j`.
fn interpolate(geo: &Geometry, delta: &[f64]) -> Vec<f64> {
    let n = delta.len();
    (0..n)
        .map(|i| (0..n).map(|j| geo.inverse[(j, i)] * delta[j]).sum())
        .collect()
}

/// Linear interpolation models through `n + 1` vertices, relative to the
/// first vertex. `values[v][k]` is function `k` at vertex `v`.
pub fn build_linear_models(vertices: &[Vec<f64>], values: &[Vec<f64>]) -> Result<Vec<LinearModel>> {
    let n = vertices.first().map_or(0, |v| v.len());
    if n == 0 || vertices.len() != n + 1 || values.len() != n + 1 {
        return Err(Error::invalid("need n + 1 vertices in n dimensions with one value row each"));
    }
    let base = &vertices[0];
    let displacements: Vec<Vec<f64>> = vertices[1..]
        .iter()
        .map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    let geo = geometry_of(&displacements)?;
    let k = values[0].len();
    Ok((0..k)
        .map(|fi| {
            let delta: Vec<f64> = values[1..].iter().map(|row| row[fi] - values[0][fi]).collect();
            LinearModel {
                constant: values[0][fi],
                gradient: interpolate(&geo, &delta),
            }
        })
        .collect())
}

/// Trust-region step: minimize `objective . d` subject to
/// `c_k + a_k . d <= 0` and `|d_i| <= rho`.
///
/// When the model constraints cannot all be met inside the box the step first
/// minimizes their largest value `t*`, then minimizes the objective among
/// steps that keep every constraint at or below `t*`.
pub fn trust_region_step(objective: &[f64], constraints: &[LinearModel], rho: f64) -> Vec<f64> {
    let n = objective.len();
    // Work in u = d / rho + 1, so 0 <= u <= 2.
    let scale = constraints
        .iter()
        .map(|c| c.constant.abs().max(rho * c.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        .fold(f64::MIN_POSITIVE, f64::max);
    let box_rows = (0..n).map(|i| {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        row
    });

    // Phase A over (u, t'), with t = scale * t'.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for c in constraints {
        let mut row: Vec<f64> = c.gradient.iter().map(|g| rho * g / scale).collect();
        row.push(-1.0);
        a.push(row);
        b.push((-c.constant + rho * c.gradient.iter().sum::<f64>()) / scale);
    }
    for mut row in box_rows.clone() {
        row.push(0.0);
        a.push(row);
        b.push(2.0);
    }
    let mut cost = vec![0.0; n];
    cost.push(1.0);
    let (u_a, t_star) = match solve_lp(&cost, &a, &b) {
        LpOutcome::Optimal(sol) => (sol[..n].to_vec(), sol[n] * scale),
        _ => return vec![0.0; n],
    };
    let to_step = |u: &[f64]| -> Vec<f64> { u.iter().map(|ui| rho * (ui - 1.0)).collect() };

    let obj_scale = rho * objective.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(obj_scale > 0.0) || !obj_scale.is_finite() {
        return to_step(&u_a);
    }
    let bound = t_star.max(0.0) + 1e-12 * scale;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for c in constraints {
        a.push(c.gradient.iter().map(|g| rho * g / scale).collect::<Vec<_>>());
        b.push((bound - c.constant + rho * c.gradient.iter().sum::<f64>()) / scale);
    }
    for row in box_rows {
        a.push(row);
        b.push(2.0);
    }
    let cost: Vec<f64> = objective.iter().map(|g| rho * g / obj_scale).collect();
    match solve_lp(&cost, &a, &b) {
        LpOutcome::Optimal(u) => to_step(&u),
        _ => to_step(&u_a),
    }
}

#[derive(Debug, Clone)]
struct Vertex {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    /// Largest constraint value, floored at zero.
    viol: f64,
}

struct Run<'a> {
    problem: &'a Problem,
    opts: &'a SolverOptions,
    ledger: &'a mut EvaluationLedger,
    n: usize,
    base: Vertex,
    others: Vec<Vertex>,
    rho: f64,
    rho_end: f64,
    parmu: f64,
    iterations: usize,
    best: Option<Vertex>,
}

fn initial_radius(problem: &Problem) -> f64 {
    let w = problem
        .lower()
        .iter()
        .zip(problem.upper())
        .map(|(l, u)| u - l)
        .filter(|w| w.is_finite())
        .fold(f64::INFINITY, f64::min);
    if w.is_finite() && w > 0.0 {
        0.5 * w
    } else {
        1.0
    }
}

fn final_radius(x0: &[f64], opts: &SolverOptions) -> f64 {
    (opts.xtol_rel * norm(x0)).max(opts.xtol_abs).max(1e-12)
}

impl<'a> Run<'a> {
    fn evaluate(&mut self, mut x: Vec<f64>) -> Result<Vertex> {
        self.problem.clamp_into_bounds(&mut x);
        let f = self.ledger.objective(self.problem, &x)?;
        if !f.is_finite() {
            return Err(Error::callback("objective is not finite"));
        }
        let g = self.ledger.inequalities(self.problem, &x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::callback("inequality constraint is not finite"));
        }
        let viol = g.iter().fold(0.0f64, |m, v| m.max(*v));
        let v = Vertex { x, f, g, viol };
        if self.best.as_ref().is_none_or(|b| self.key(&v) < self.key(b)) {
            self.best = Some(v.clone());
        }
        Ok(v)
    }

    /// Feasible points (within tolerance) first, then by objective; infeasible
    /// points by their largest excess.
    fn key(&self, v: &Vertex) -> (bool, f64) {
        let excess = v
            .g
            .iter()
            .zip(&self.opts.tol_constraints_ineq)
            .fold(0.0f64, |m, (g, t)| m.max(g - t));
        if excess <= 0.0 {
            (false, v.f)
        } else {
            (true, excess)
        }
    }

    fn merit(&self, v: &Vertex) -> f64 {
        v.f + self.parmu * v.viol
    }

    fn displacements(&self) -> Vec<Vec<f64>> {
        self.others
            .iter()
            .map(|v| v.x.iter().zip(&self.base.x).map(|(a, b)| a - b).collect())
            .collect()
    }

    /// Point `base + rho e_j`, stepping the other way when that leaves the box.
    fn coordinate_vertex(&self, j: usize) -> Vec<f64> {
        let mut x = self.base.x.clone();
        let up = x[j] + self.rho;
        x[j] = if up <= self.problem.upper()[j] { up } else { x[j] - self.rho };
        x
    }

    /// Rebuilds the simplex around the base along the coordinate directions.
    fn respan(&mut self) -> Result<()> {
        self.others.clear();
        for j in 0..self.n {
            let x = self.coordinate_vertex(j);
            let v = self.evaluate(x)?;
            self.others.push(v);
        }
        Ok(())
    }

    /// Moves the vertex with the lowest merit into the base position. Returns
    /// whether the base changed.
    fn select_best(&mut self) -> bool {
        let mut best = None;
        let mut phimin = self.merit(&self.base);
        let mut best_viol = self.base.viol;
        for (j, v) in self.others.iter().enumerate() {
            let phi = self.merit(v);
            if phi < phimin || (phi == phimin && self.parmu == 0.0 && v.viol < best_viol) {
                best = Some(j);
                phimin = phi;
                best_viol = v.viol;
            }
        }
        match best {
            Some(j) => {
                std::mem::swap(&mut self.base, &mut self.others[j]);
                true
            }
            None => false,
        }
    }

    /// Objective model gradient plus constraint models (user constraints, then
    /// finite bounds), all relative to the base.
    fn models(&self, geo: &Geometry) -> (Vec<f64>, Vec<LinearModel>) {
        let df: Vec<f64> = self.others.iter().map(|v| v.f - self.base.f).collect();
        let b = interpolate(geo, &df);
        let mut cons = Vec::new();
        for k in 0..self.base.g.len() {
            let dg: Vec<f64> = self.others.iter().map(|v| v.g[k] - self.base.g[k]).collect();
            cons.push(LinearModel {
                constant: self.base.g[k],
                gradient: interpolate(geo, &dg),
            });
        }
        for i in 0..self.n {
            let (lo, hi) = (self.problem.lower()[i], self.problem.upper()[i]);
            let mut e = vec![0.0; self.n];
            if lo.is_finite() {
                e[i] = -1.0;
                cons.push(LinearModel { constant: lo - self.base.x[i], gradient: e.clone() });
            }
            if hi.is_finite() {
                e[i] = 1.0;
                cons.push(LinearModel { constant: self.base.x[i] - hi, gradient: e });
            }
        }
        (b, cons)
    }

    fn inside_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.problem.lower().iter().zip(self.problem.upper()))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Replaces the worst-shaped vertex by a point `GAMMA * rho` from the base
    /// along the normal of its opposite face.
    fn geometry_step(&mut self, geo: &Geometry, b: &[f64], cons: &[LinearModel]) -> Result<()> {
        let jdrop = if geo.veta.iter().any(|&e| e > BETA * self.rho) {
            argmax(&geo.veta)
        } else {
            argmin(&geo.vsig)
        };
        let scale = GAMMA * self.rho * geo.vsig[jdrop];
        let dx: Vec<f64> = (0..self.n).map(|i| scale * geo.inverse[(jdrop, i)]).collect();
        let sf = dot(b, &dx);
        let (mut plus, mut minus) = (0.0f64, 0.0f64);
        for c in cons {
            let s = dot(&c.gradient, &dx);
            plus = plus.max(c.constant + s);
            minus = minus.max(c.constant - s);
        }
        let mut sign = if self.parmu * (plus - minus) > 2.0 * sf { -1.0 } else { 1.0 };
        let point = |s: f64| -> Vec<f64> { self.base.x.iter().zip(&dx).map(|(x, d)| x + s * d).collect() };
        if !self.inside_box(&point(sign)) && self.inside_box(&point(-sign)) {
            sign = -sign;
        }
        let v = self.evaluate(point(sign))?;
        self.others[jdrop] = v;
        self.iterations += 1;
        Ok(())
    }

    /// Lowers `parmu` after a radius reduction when the constraint values
    /// across the simplex allow it.
    fn reduce_penalty(&mut self) {
        if self.parmu <= 0.0 {
            return;
        }
        let all: Vec<&Vertex> = std::iter::once(&self.base).chain(&self.others).collect();
        let mut denom = 0.0f64;
        for k in 0..self.base.g.len() {
            // In terms of c = -g >= 0 feasible.
            let cmin = -all.iter().map(|v| v.g[k]).fold(f64::NEG_INFINITY, f64::max);
            let cmax = -all.iter().map(|v| v.g[k]).fold(f64::INFINITY, f64::min);
            if cmin < 0.5 * cmax {
                let t = cmax.max(0.0) - cmin;
                denom = if denom <= 0.0 { t } else { denom.min(t) };
            }
        }
        let fmin = all.iter().map(|v| v.f).fold(f64::INFINITY, f64::min);
        let fmax = all.iter().map(|v| v.f).fold(f64::NEG_INFINITY, f64::max);
        if denom == 0.0 {
            self.parmu = 0.0;
        } else if fmax - fmin < self.parmu * denom {
            self.parmu = (fmax - fmin) / denom;
        }
    }

    fn iterate(&mut self) -> Result<StatusCode> {
        self.respan()?;
        let mut trust_mode = true;
        loop {
            self.select_best();
            let geo = match geometry_of(&self.displacements()) {
                Ok(geo) => geo,
                Err(Error::DegenerateSimplex) => {
                    self.respan()?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let acceptable = geo.vsig.iter().all(|&s| s >= ALPHA * self.rho)
                && geo.veta.iter().all(|&e| e <= BETA * self.rho);
            let (b, cons) = self.models(&geo);
            if !acceptable && !trust_mode {
                self.geometry_step(&geo, &b, &cons)?;
                continue;
            }

            let d = trust_region_step(&b, &cons, self.rho);
            if norm(&d) >= 0.5 * self.rho {
                let user = self.base.g.len();
                let resnew = cons[..user].iter().fold(0.0f64, |m, c| m.max(c.predict(&d)));
                let prerec = self.base.viol - resnew;
                let pred_f = dot(&b, &d);
                let barmu = if prerec > 0.0 { pred_f / prerec } else { 0.0 };
                if self.parmu < 1.5 * barmu {
                    self.parmu = 2.0 * barmu;
                    let phi_base = self.merit(&self.base);
                    if self.others.iter().any(|v| self.merit(v) < phi_base) {
                        continue;
                    }
                }
                let mut prerem = self.parmu * prerec - pred_f;

                let x: Vec<f64> = self.base.x.iter().zip(&d).map(|(a, b)| a + b).collect();
                let new = self.evaluate(x)?;
                self.iterations += 1;
                let trured = if self.parmu == 0.0 && new.f == self.base.f {
                    prerem = prerec;
                    self.base.viol - new.viol
                } else {
                    self.merit(&self.base) - self.merit(&new)
                };

                let dx: Vec<f64> = new.x.iter().zip(&self.base.x).map(|(a, b)| a - b).collect();
                let mut jdrop = None;
                let mut ratio = if trured <= 0.0 { 1.0 } else { 0.0 };
                let mut sigbar = vec![0.0; self.n];
                for j in 0..self.n {
                    let t = (0..self.n).map(|i| geo.inverse[(j, i)] * dx[i]).sum::<f64>().abs();
                    if t > ratio {
                        jdrop = Some(j);
                        ratio = t;
                    }
                    sigbar[j] = t * geo.vsig[j];
                }
                let mut edgmax = DELTA * self.rho;
                let displacements = self.displacements();
                for j in 0..self.n {
                    if sigbar[j] >= ALPHA * self.rho || sigbar[j] >= geo.vsig[j] {
                        let t = if trured > 0.0 {
                            norm(&dx.iter().zip(&displacements[j]).map(|(a, b)| a - b).collect::<Vec<_>>())
                        } else {
                            geo.veta[j]
                        };
                        if t > edgmax {
                            jdrop = Some(j);
                            edgmax = t;
                        }
                    }
                }
                if let Some(j) = jdrop {
                    self.others[j] = new;
                }
                if trured > 0.0 && trured >= 0.1 * prerem {
                    trust_mode = true;
                    continue;
                }
            }

            if !acceptable {
                trust_mode = false;
                continue;
            }
            if self.rho <= self.rho_end {
                return Ok(StatusCode::XtolReached);
            }
            self.rho *= 0.5;
            if self.rho <= 1.5 * self.rho_end {
                self.rho = self.rho_end;
            }
            self.reduce_penalty();
            trust_mode = true;
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, j| if v[j] > v[b] { j } else { b })
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, j| if v[j] < v[b] { j } else { b })
}

pub fn minimize_cobyla(problem: &Problem, opts: &SolverOptions) -> Result<SolveResult> {
    run_solver(problem, opts, Algorithm::Cobyla, solve)
}

pub(crate) fn solve(problem: &Problem, opts: &SolverOptions, ledger: &mut EvaluationLedger) -> Result<SolveResult> {
    let n = problem.dimension();
    let rho = initial_radius(problem);
    let rho_end = final_radius(problem.x0(), opts).min(rho);
    let placeholder = Vertex { x: problem.x0().to_vec(), f: f64::NAN, g: Vec::new(), viol: 0.0 };
    let mut run = Run {
        problem,
        opts,
        ledger,
        n,
        base: placeholder,
        others: Vec::with_capacity(n),
        rho,
        rho_end,
        parmu: 0.0,
        iterations: 0,
        best: None,
    };
    let outcome = run
        .evaluate(problem.x0().to_vec())
        .and_then(|v| {
            run.base = v;
            run.iterate()
        });
    let status = match outcome {
        Ok(status) => status,
        Err(Error::BudgetExhausted) => StatusCode::MaxevalReached,
        Err(e) => return Err(e.context("cobyla")),
    };
    let iterations = run.iterations;
    let (x, f) = match run.best.take() {
        Some(v) => (v.x, v.f),
        None => (problem.x0().to_vec(), f64::NAN),
    };
    Ok(finish(problem, opts, status, x, f, iterations, ledger))
}
