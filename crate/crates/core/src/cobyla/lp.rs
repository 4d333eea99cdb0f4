//! Dense two-phase simplex for the small LPs of the trust-region step.
//!
//! Solves `min c.x  s.t.  A x <= b, x >= 0` with Bland's rule, which is slow
//! but cannot cycle. Rows should be scaled to coefficients of order one.

const PIVOT_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations for `cost` over columns `< allowed`.
    /// Returns false when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.rows[i][j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS
            });
            let Some(c) = entering else { return true };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - PIVOT_EPS
                                || (ratio <= best + PIVOT_EPS && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
        true
    }
}

pub fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = b.len();
    let n_art = b.iter().filter(|v| **v < 0.0).count();
    let width = n + m + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n + m;
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[width] = sign * b[i];
        if b[i] < 0.0 {
            row[next_art] = 1.0;
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, width };

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for v in phase1.iter_mut().skip(n + m) {
            *v = 1.0;
        }
        tab.optimize(&phase1, width);
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > FEAS_EPS {
            return LpOutcome::Infeasible;
        }
        for i in 0..m {
            if tab.basis[i] >= n + m {
                if let Some(c) = (0..n + m).find(|&j| tab.rows[i][j].abs() > PIVOT_EPS && !tab.basis.contains(&j)) {
                    tab.pivot(i, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(c);
    if !tab.optimize(&cost, n + m) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bcol) in tab.basis.iter().enumerate() {
        if bcol < n {
            x[bcol] = tab.rhs(i).max(0.0);
        }
    }
    LpOutcome::Optimal(x)
}
