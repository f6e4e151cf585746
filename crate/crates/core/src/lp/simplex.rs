//! Revised simplex with Bland's rule on 0/1 column systems.

use nalgebra::DMatrix;

use super::polytope::{RowSystem, NO_ROW};
use crate::error::{Error, Result};
use crate::par::Exec;

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const PHASE1_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Debug)]
pub(crate) struct BasicSolution {
    /// Value of every structural column.
    pub x: Vec<f64>,
    /// Row duals of the final basis.
    pub y: Vec<f64>,
    /// Structural columns in the final basis.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

struct Tableau<'a> {
    sys: &'a RowSystem,
    m: usize,
    n: usize,
    /// Variable ids; `>= n` are artificials for row `id - n`.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    exec: Exec,
}

impl<'a> Tableau<'a> {
    fn new(sys: &'a RowSystem, exec: Exec) -> Self {
        let m = sys.m;
        let n = sys.n();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Tableau {
            sys,
            m,
            n,
            basis: (n..n + m).collect(),
            in_basis: vec![false; n],
            binv,
            xb: sys.rhs.clone(),
            since_refactor: 0,
            iterations: 0,
            exec,
        }
    }

    fn column_into(&self, var: usize, d: &mut [f64]) {
        let m = self.m;
        d.iter_mut().for_each(|v| *v = 0.0);
        if var >= self.n {
            let r = var - self.n;
            for i in 0..m {
                d[i] = self.binv[i * m + r];
            }
            return;
        }
        for &r in self.sys.rows(var) {
            if r == NO_ROW {
                continue;
            }
            let r = r as usize;
            for i in 0..m {
                d[i] += self.binv[i * m + r];
            }
        }
    }

    fn duals(&self, cost_b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &c) in cost_b.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, b) in y.iter_mut().zip(row) {
                    *yr += c * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: f64, y: &[f64]) -> f64 {
        let mut rc = cost;
        for &r in self.sys.rows(j) {
            if r != NO_ROW {
                rc -= y[r as usize];
            }
        }
        rc
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (pos, &var) in self.basis.iter().enumerate() {
            if var >= self.n {
                b[(var - self.n, pos)] = 1.0;
            } else {
                for &r in self.sys.rows(var) {
                    if r != NO_ROW {
                        b[(r as usize, pos)] = 1.0;
                    }
                }
            }
        }
        let inv = b
            .try_inverse()
            .ok_or_else(|| Error::Solver("basis matrix became singular".into()))?;
        for i in 0..m {
            for r in 0..m {
                self.binv[i * m + r] = inv[(i, r)];
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|r| self.binv[i * m + r] * self.sys.rhs[r]).sum();
            self.xb[i] = if v.abs() < 1e-14 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, p: usize, entering: usize, d: &[f64]) -> Result<()> {
        let m = self.m;
        let dp = d[p];
        {
            let row = &mut self.binv[p * m..(p + 1) * m];
            row.iter_mut().for_each(|v| *v /= dp);
        }
        self.xb[p] /= dp;
        let prow: Vec<f64> = self.binv[p * m..(p + 1) * m].to_vec();
        let xp = self.xb[p];
        for i in 0..m {
            if i == p || d[i] == 0.0 {
                continue;
            }
            let f = d[i];
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (v, pr) in row.iter_mut().zip(&prow) {
                *v -= f * pr;
            }
            self.xb[i] -= f * xp;
            if self.xb[i] < 0.0 && self.xb[i] > -1e-12 {
                self.xb[i] = 0.0;
            }
        }
        let leaving = self.basis[p];
        if leaving < self.n {
            self.in_basis[leaving] = false;
        }
        self.basis[p] = entering;
        if entering < self.n {
            self.in_basis[entering] = true;
        }
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Runs Bland iterations for the given structural costs. Artificial
    /// variables never re-enter; their cost is `art_cost`.
    fn optimize(&mut self, cost: &(dyn Fn(usize) -> f64 + Sync), art_cost: f64, tol: f64, limit: usize) -> Result<()> {
        let mut d = vec![0.0; self.m];
        let mut verified = false;
        loop {
            if self.iterations > limit {
                return Err(Error::Solver(format!("iteration limit {limit} reached")));
            }
            let cb: Vec<f64> = self
                .basis
                .iter()
                .map(|&v| if v >= self.n { art_cost } else { cost(v) })
                .collect();
            let y = self.duals(&cb);
            let this = &*self;
            let entering = self.exec.find_first(self.n, |j| {
                !this.in_basis[j] && this.reduced_cost(j, cost(j), &y) < -tol
            });
            let Some(q) = entering else {
                if verified || self.since_refactor == 0 {
                    return Ok(());
                }
                self.refactor()?;
                verified = true;
                continue;
            };
            verified = false;
            self.column_into(q, &mut d);
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if d[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / d[i];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - RATIO_TIE
                                || (ratio <= br + RATIO_TIE && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((p, _)) = best else {
                return Err(Error::Solver("unbounded direction in a bounded polytope".into()));
            };
            self.pivot(p, q, &d)?;
        }
    }

    /// Pivots basic artificials out wherever a structural column allows it.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        let mut d = vec![0.0; m];
        for p in 0..m {
            if self.basis[p] < self.n {
                continue;
            }
            self.xb[p] = 0.0;
            let row = &self.binv[p * m..(p + 1) * m];
            let found = (0..self.n).find(|&j| {
                if self.in_basis[j] {
                    return false;
                }
                let v: f64 = self
                    .sys
                    .rows(j)
                    .iter()
                    .filter(|&&r| r != NO_ROW)
                    .map(|&r| row[r as usize])
                    .sum();
                v.abs() > PIVOT_TOL
            });
            if let Some(j) = found {
                self.column_into(j, &mut d);
                self.pivot(p, j, &d)?;
            }
        }
        self.refactor()
    }
}

/// Minimizes `cost · x` over `{A x = b, x ≥ 0}`. `tol` is the reduced-cost
/// optimality tolerance.
pub(crate) fn minimize(sys: &RowSystem, cost: &[f64], tol: f64, exec: Exec) -> Result<BasicSolution> {
    let mut t = Tableau::new(sys, exec);
    let limit = 100_000 + 50 * (sys.m + sys.n());
    t.optimize(&|_| 0.0, 1.0, 1e-11, limit)?;
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&v, _)| v >= t.n)
        .map(|(_, x)| x.abs())
        .sum();
    if infeas > PHASE1_TOL {
        return Err(Error::Solver(format!("constraints infeasible (phase one residual {infeas:e})")));
    }
    t.drive_out_artificials()?;
    t.optimize(&|j| cost[j], 0.0, tol, limit)?;
    let cb: Vec<f64> = t
        .basis
        .iter()
        .map(|&v| if v >= t.n { 0.0 } else { cost[v] })
        .collect();
    let y = t.duals(&cb);
    let mut x = vec![0.0; t.n];
    let mut basis = Vec::new();
    for (&v, &val) in t.basis.iter().zip(&t.xb) {
        if v < t.n {
            x[v] = val.max(0.0);
            basis.push(v);
        }
    }
    basis.sort_unstable();
    Ok(BasicSolution {
        x,
        y,
        basis,
        iterations: t.iterations,
    })
}

/// A feasible basis of structural columns for a full-row-rank system.
pub(crate) fn feasible_basis(sys: &RowSystem) -> Result<Vec<usize>> {
    let zeros = vec![0.0; sys.n()];
    let sol = minimize(sys, &zeros, 1e-11, Exec::Sequential)?;
    if sol.basis.len() != sys.m {
        return Err(Error::Solver("system is not of full row rank".into()));
    }
    Ok(sol.basis)
}

#[cfg(test)]
mod tests {
    use super::super::polytope::{Polytope, RowReduction};
    use super::*;

    #[test]
    fn assignment_two_by_two() {
        let p = Polytope::transport(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let sys = RowSystem::build(&p, (0..4).collect(), RowReduction::DropLastPerBlock);
        let sol = minimize(&sys, &[0.0, 1.0, 1.0, 0.0], 1e-11, Exec::Sequential).unwrap();
        assert_eq!(sol.x, vec![0.5, 0.0, 0.0, 0.5]);
        let sol = minimize(&sys, &[1.0, 0.0, 0.0, 1.0], 1e-11, Exec::Parallel).unwrap();
        assert_eq!(sol.x, vec![0.0, 0.5, 0.5, 0.0]);
    }
}
