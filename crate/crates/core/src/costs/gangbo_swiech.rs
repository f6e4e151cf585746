//! Transport maps `T_j(x_1) = Du*_j(x_1 + Dφ_1(x_1)) − x_1` for the
//! surplus cost, with `u_j(t) = ½|t|² + ψ_j(t)` and
//! `ψ_j(t) = max_{x_k, k ∉ {1,j}} ⟨t, Σ x_k⟩ + Σ_{i<k} ⟨x_i, x_k⟩ − Σ φ_k(x_k)`.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{dot, legendre_conjugate, sq_dist, ConjugateTable, Sense};
use crate::error::{Error, Result};
use crate::grid::{Grid, MultiIndex};
use crate::instance::Instance;
use crate::lp::{MinimizingSet, Potentials, ACTIVE_TOL};
use crate::measure::Coupling;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GangboSwiechReport {
    /// `maps[j][x]`: atom of axis `j` nearest to `T_j(x)`; `maps[0]` is the identity.
    pub maps: Vec<Vec<usize>>,
    /// `T_j(x)` as points.
    pub points: Vec<Vec<Vec<f64>>>,
    /// Atoms of axis 0 whose support fiber yields several subgradients.
    pub tied_atoms: Vec<usize>,
    /// Conjugate evaluations with more than one maximizing sample.
    pub conjugate_ties: usize,
    /// Fraction of (untied atom, axis) pairs whose image matches the plan.
    pub agreement: f64,
    /// Largest distance between `T_j(x)` and the plan's atom on axis `j`.
    pub max_point_distance: f64,
}

fn require_surplus(instance: &Instance) -> Result<()> {
    if !instance.cost().kind.is_surplus() || instance.sense() != Sense::Max {
        return Err(Error::NotSurplusCost);
    }
    if instance.n_axes() < 3 {
        return Err(Error::InvalidConfig("the map formula needs at least 3 marginals".into()));
    }
    Ok(())
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `ψ_j(t)` by enumeration of the axes other than `0` and `j`.
fn psi(instance: &Instance, potentials: &Potentials, j: usize, t: &[f64]) -> f64 {
    let others: Vec<usize> = (1..instance.n_axes()).filter(|&k| k != j).collect();
    let grid = Grid::new(&others.iter().map(|&k| instance.arities()[k]).collect::<Vec<_>>());
    let mut best = f64::NEG_INFINITY;
    for idx in grid.iter() {
        let pts: Vec<&[f64]> = others.iter().zip(&idx).map(|(&k, &i)| instance.point(k, i)).collect();
        let mut v = 0.0;
        for (a, p) in pts.iter().enumerate() {
            v += dot(t, p) - potentials.vectors[others[a]][idx[a]];
            for q in &pts[a + 1..] {
                v += dot(p, q);
            }
        }
        best = best.max(v);
    }
    best
}

/// Conjugate tables of `u_j` for the axes `j = 1..N` (element `j − 1`).
/// Samples are the atoms of axes 0 and `j` and the sums `x_1 + x_j` on the
/// support of `plan`.
pub fn gangbo_swiech_conjugates(
    instance: &Instance,
    potentials: &Potentials,
    plan: &Coupling,
) -> Result<Vec<ConjugateTable>> {
    require_surplus(instance)?;
    let n = instance.n_axes();
    let mut tables = Vec::with_capacity(n - 1);
    for j in 1..n {
        let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
        let mut samples = Vec::new();
        let mut push = |p: Vec<f64>| {
            if seen.insert(p.iter().map(|v| v.to_bits()).collect()) {
                samples.push(p);
            }
        };
        for i in 0..instance.arities()[0] {
            push(instance.point(0, i).to_vec());
        }
        for i in 0..instance.arities()[j] {
            push(instance.point(j, i).to_vec());
        }
        for idx in plan.support() {
            push(add(instance.point(0, idx[0]), instance.point(j, idx[j])));
        }
        let table = ConjugateTable::from_fn(samples, |t| 0.5 * dot(t, t) + psi(instance, potentials, j, t))?;
        tables.push(table);
    }
    Ok(tables)
}

/// Evaluates the map formula at every atom of axis 0 and compares the
/// images with the support of `plan`.
pub fn gangbo_swiech_maps(
    instance: &Instance,
    potentials: &Potentials,
    plan: &Coupling,
    conjugates: &[ConjugateTable],
) -> Result<GangboSwiechReport> {
    require_surplus(instance)?;
    let n = instance.n_axes();
    if conjugates.len() != n - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} conjugate tables for {n} axes",
            conjugates.len()
        )));
    }
    let set = MinimizingSet::new(instance, potentials, ACTIVE_TOL * instance.cost_scale());
    let n0 = instance.arities()[0];
    let mut tied_atoms = Vec::new();
    let mut subgradients: Vec<Option<(Vec<f64>, MultiIndex)>> = vec![None; n0];
    for x in 0..n0 {
        let tuples_on_support: Vec<&MultiIndex> = plan.support().filter(|i| i[0] == x).collect();
        let sum_of = |idx: &MultiIndex| {
            let mut g = vec![0.0; instance.point(0, 0).len()];
            for k in 1..n {
                for (a, b) in g.iter_mut().zip(instance.point(k, idx[k])) {
                    *a += b;
                }
            }
            g
        };
        let distinct: BTreeSet<Vec<u64>> = tuples_on_support
            .iter()
            .map(|i| sum_of(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        if distinct.len() > 1 {
            tied_atoms.push(x);
        }
        let chosen = tuples_on_support
            .first()
            .copied()
            .or_else(|| set.indices.iter().find(|i| i[0] == x));
        subgradients[x] = chosen.map(|i| (sum_of(i), i.clone()));
    }
    let mut maps = vec![(0..n0).collect::<Vec<usize>>()];
    let mut points = vec![(0..n0).map(|x| instance.point(0, x).to_vec()).collect::<Vec<_>>()];
    let mut conjugate_ties = 0;
    let mut checked = 0usize;
    let mut agree = 0usize;
    let mut max_dist: f64 = 0.0;
    for j in 1..n {
        let mut map_j = Vec::with_capacity(n0);
        let mut pts_j = Vec::with_capacity(n0);
        for x in 0..n0 {
            let x1 = instance.point(0, x);
            let Some((g, tuple)) = &subgradients[x] else {
                return Err(Error::MapDomainGap(vec![x]));
            };
            let s = add(x1, g);
            let c = legendre_conjugate(&conjugates[j - 1], &s)?;
            if !c.ties.is_empty() {
                conjugate_ties += 1;
            }
            let t = &conjugates[j - 1].samples()[c.argmax];
            let image: Vec<f64> = t.iter().zip(x1).map(|(a, b)| a - b).collect();
            let nearest = (0..instance.arities()[j])
                .min_by(|&a, &b| {
                    sq_dist(instance.point(j, a), &image).total_cmp(&sq_dist(instance.point(j, b), &image))
                })
                .expect("axis has atoms");
            if !tied_atoms.contains(&x) && plan.support().any(|i| i[0] == x) {
                checked += 1;
                if nearest == tuple[j] {
                    agree += 1;
                }
                max_dist = max_dist.max(sq_dist(instance.point(j, tuple[j]), &image).sqrt());
            }
            map_j.push(nearest);
            pts_j.push(image);
        }
        maps.push(map_j);
        points.push(pts_j);
    }
    Ok(GangboSwiechReport {
        maps,
        points,
        tied_atoms,
        conjugate_ties,
        agreement: if checked == 0 { 1.0 } else { agree as f64 / checked as f64 },
        max_point_distance: max_dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostKind, CostSpec};
    use crate::lp::solve;
    use crate::measure::{DiscreteMeasure, Space};

    #[test]
    fn single_atom_is_a_fixed_point() {
        let a = DiscreteMeasure::uniform(Space::new("X", vec![vec![0.5, -1.0]]).unwrap());
        let spec = CostSpec::new(CostKind::Surplus, Sense::Max).unwrap();
        let inst = Instance::new(vec![a.clone(), a.clone(), a], spec).unwrap();
        let sol = solve(&inst).unwrap();
        let conj = gangbo_swiech_conjugates(&inst, &sol.potentials, &sol.plan).unwrap();
        let rep = gangbo_swiech_maps(&inst, &sol.potentials, &sol.plan, &conj).unwrap();
        assert_eq!(rep.maps, vec![vec![0]; 3]);
        assert!(rep.points[1][0].iter().zip([0.5, -1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(rep.agreement, 1.0);
    }

    #[test]
    fn other_costs_are_rejected() {
        let a = DiscreteMeasure::uniform(Space::new("X", vec![vec![0.0]]).unwrap());
        let spec = CostSpec::new(CostKind::Attractive, Sense::Min).unwrap();
        let inst = Instance::new(vec![a.clone(), a.clone(), a], spec).unwrap();
        let sol = solve(&inst).unwrap();
        assert_eq!(
            gangbo_swiech_conjugates(&inst, &sol.potentials, &sol.plan).unwrap_err(),
            Error::NotSurplusCost
        );
    }
}
