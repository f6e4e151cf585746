//! Exhaustive vertex enumeration for tiny polytopes.
//!
//! Walks the graph of lexicographically feasible bases from one feasible
//! basis. The lexicographic perturbation makes every pivot well defined, so
//! the walk reaches every basis of the perturbed (simple) polytope and hence
//! every vertex of the original one.

use std::collections::{btree_map::Entry, BTreeMap, HashSet, VecDeque};

use nalgebra::DMatrix;

use super::polytope::{Polytope, RowReduction, RowSystem, NO_ROW};
use super::simplex::feasible_basis;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::measure::Coupling;

/// Cap on `∏ n_k`.
pub const ORACLE_MAX_CELLS: usize = 81;
/// Cap on `Σ n_k`.
pub const ORACLE_MAX_ATOMS: usize = 10;
const MAX_BASES: usize = 2_000_000;
const LEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleVertex {
    pub plan: Coupling,
    pub value: f64,
}

/// True when exhaustive enumeration is attempted for these arities.
pub fn within_oracle_caps(arities: &[usize]) -> bool {
    arities.iter().product::<usize>() <= ORACLE_MAX_CELLS && arities.iter().sum::<usize>() <= ORACLE_MAX_ATOMS
}

fn check_caps(arities: &[usize]) -> Result<()> {
    let cells: usize = arities.iter().product();
    if cells > ORACLE_MAX_CELLS {
        return Err(Error::InstanceTooLarge {
            cells,
            cap: ORACLE_MAX_CELLS,
        });
    }
    let atoms: usize = arities.iter().sum();
    if atoms > ORACLE_MAX_ATOMS {
        return Err(Error::InstanceTooLarge {
            cells: atoms,
            cap: ORACLE_MAX_ATOMS,
        });
    }
    Ok(())
}

/// All vertices of the transport polytope of `instance` with their costs,
/// ordered by support pattern.
pub fn oracle_enumerate(instance: &Instance) -> Result<Vec<OracleVertex>> {
    let poly = Polytope::transport(&instance.weight_slices());
    let verts = enumerate_vertices(&poly)?;
    Ok(verts
        .into_iter()
        .map(|plan| {
            let value = plan.integrate(instance.table());
            OracleVertex { plan, value }
        })
        .collect())
}

/// Best value over an oracle listing for the given sense.
pub fn oracle_optimum(vertices: &[OracleVertex], sense: crate::costs::Sense) -> Option<f64> {
    vertices
        .iter()
        .map(|v| v.value)
        .reduce(|a, b| if sense.better(b, a, 0.0) { b } else { a })
}

/// All vertices of a general marginal-constrained polytope.
pub fn enumerate_vertices(poly: &Polytope) -> Result<Vec<Coupling>> {
    check_caps(poly.arities())?;
    let columns: Vec<usize> = (0..poly.grid().len()).filter(|&c| poly.admissible(c)).collect();
    let sys = RowSystem::build(poly, columns, RowReduction::Eliminate);
    let m = sys.m;
    let n = sys.n();
    let dense = |cols: &[usize]| {
        let mut b = DMatrix::<f64>::zeros(m, cols.len());
        for (pos, &c) in cols.iter().enumerate() {
            for &r in sys.rows(c) {
                if r != NO_ROW {
                    b[(r as usize, pos)] = 1.0;
                }
            }
        }
        b
    };
    let start = feasible_basis(&sys)?;
    let b0 = dense(&start);
    let rhs = nalgebra::DVector::from_column_slice(&sys.rhs);

    let mut found: BTreeMap<Vec<usize>, Coupling> = BTreeMap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    let grid = poly.grid();
    while let Some(basis) = queue.pop_front() {
        if seen.len() > MAX_BASES {
            return Err(Error::Solver("vertex enumeration exceeded its basis budget".into()));
        }
        let binv = dense(&basis)
            .try_inverse()
            .ok_or_else(|| Error::Solver("singular basis during enumeration".into()))?;
        let xb = &binv * &rhs;
        let w = &binv * &b0;
        let mut support = Vec::new();
        let mut entries = Vec::new();
        for (pos, &c) in basis.iter().enumerate() {
            if xb[pos] > 1e-12 {
                support.push(c);
                entries.push((grid.unravel(sys.columns[c]), xb[pos]));
            }
        }
        if let Entry::Vacant(e) = found.entry(support) {
            e.insert(Coupling::unchecked(poly.arities().to_vec(), entries)?);
        }
        let in_basis: HashSet<usize> = basis.iter().copied().collect();
        for j in (0..n).filter(|j| !in_basis.contains(j)) {
            let aj = dense(&[j]);
            let d = &binv * aj;
            let mut best: Option<usize> = None;
            for i in 0..m {
                if d[i] <= LEX_TOL {
                    continue;
                }
                best = Some(match best {
                    None => i,
                    Some(b) => {
                        if lex_less(i, b, &xb, &w, &d) {
                            i
                        } else {
                            b
                        }
                    }
                });
            }
            let Some(p) = best else { continue };
            let mut next = basis.clone();
            next[p] = j;
            next.sort_unstable();
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    Ok(found.into_values().collect())
}

/// Compares rows `a` and `b` of `[x | W] / d` lexicographically.
fn lex_less(a: usize, b: usize, x: &nalgebra::DVector<f64>, w: &DMatrix<f64>, d: &DMatrix<f64>) -> bool {
    let (da, db) = (d[a], d[b]);
    let ra = x[a] / da;
    let rb = x[b] / db;
    if (ra - rb).abs() > LEX_TOL {
        return ra < rb;
    }
    for c in 0..w.ncols() {
        let va = w[(a, c)] / da;
        let vb = w[(b, c)] / db;
        if (va - vb).abs() > LEX_TOL {
            return va < vb;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn birkhoff_two_has_two_vertices() {
        let p = Polytope::transport(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let v = enumerate_vertices(&p).unwrap();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn birkhoff_three_has_six_vertices() {
        let w = [1.0 / 3.0; 3];
        let p = Polytope::transport(&[&w, &w]);
        assert_eq!(enumerate_vertices(&p).unwrap().len(), 6);
    }

    #[test]
    fn singleton_polytope() {
        let p = Polytope::transport(&[&[1.0], &[1.0], &[1.0]]);
        assert_eq!(enumerate_vertices(&p).unwrap().len(), 1);
    }

    #[test]
    fn caps() {
        let w = [0.25; 4];
        let p = Polytope::transport(&[&w, &w, &w, &w]);
        assert!(matches!(enumerate_vertices(&p), Err(Error::InstanceTooLarge { .. })));
    }
}
