//! Reduced lower-marginal problems built from dual potentials.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::costs::Sense;
use crate::error::{Error, Result};
use crate::grid::{complement, project, Grid, MultiIndex};
use crate::instance::Instance;
use crate::lp::{self, Potentials, Polytope, FEAS_TOL};
use crate::measure::{
    assemble_product_conditional, check_axes, disintegrate, pushforward, BlockMap, Coupling,
    Residual,
};
use crate::par::Exec;

/// Dual feasibility slack accepted on input potentials (relative to cost scale).
pub const POTENTIAL_TOL: f64 = 1e-9;
/// Tolerance of the nesting identity along the chain.
pub const NESTING_TOL: f64 = 1e-10;
/// Gap below which a reduction or reconstruction counts as optimal.
pub const OPTIMALITY_TOL: f64 = 1e-8;

/// A strictly increasing set of axes `P`, with its complement `Q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndexSubset {
    indices: Vec<usize>,
    complement: Vec<usize>,
}

impl IndexSubset {
    /// Validates `indices` as a proper subset of `0..rank` with at least two axes.
    pub fn new(indices: &[usize], rank: usize) -> Result<Self> {
        check_axes(indices, rank)?;
        if indices.len() < 2 {
            return Err(Error::SubsetTooSmall(indices.len()));
        }
        if indices.len() >= rank {
            return Err(Error::SubsetNotProper);
        }
        Ok(IndexSubset {
            indices: indices.to_vec(),
            complement: complement(rank, indices),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }
}

/// The reduced cost `c_P` tabulated over the `P` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedProblem {
    pub subset: IndexSubset,
    pub sense: Sense,
    pub grid: Grid,
    pub reduced_cost: Vec<f64>,
    /// `φ_k` for `k ∈ P`.
    pub inherited: Potentials,
    /// Optimizing complement multi-index per `P` cell.
    pub argmin_witness: Vec<MultiIndex>,
}

impl ReducedProblem {
    pub fn cost_at(&self, idx: &[usize]) -> f64 {
        self.reduced_cost[self.grid.linear(idx)]
    }

    /// The reduced problem as a standalone instance on the `P` marginals.
    pub fn to_instance(&self, parent: &Instance) -> Result<Instance> {
        let marginals = self
            .subset
            .indices()
            .iter()
            .map(|&k| parent.marginal(k).clone())
            .collect();
        Instance::from_table(marginals, self.reduced_cost.clone(), self.sense)
    }

    /// Largest amount by which the inherited potentials violate dual
    /// feasibility for `c_P`; `≤ 0` means feasible.
    pub fn inherited_violation(&self) -> f64 {
        let s = self.sense.sign();
        self.grid
            .iter()
            .zip(&self.reduced_cost)
            .map(|(idx, c)| s * (self.inherited.sum_at(&idx) - c))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn reduce(instance: &Instance, potentials: &Potentials, subset: &[usize]) -> Result<ReducedProblem> {
    reduce_with(instance, potentials, subset, Exec::default())
}

/// `c_P(x_P) = min_{x_Q} (c − Σ_{k∈Q} φ_k)` (max for maximization), ties
/// broken by the lexicographically smallest complement index.
pub fn reduce_with(
    instance: &Instance,
    potentials: &Potentials,
    subset: &[usize],
    exec: Exec,
) -> Result<ReducedProblem> {
    let n = instance.n_axes();
    let subset = IndexSubset::new(subset, n)?;
    check_potentials(instance, potentials)?;
    let arities = instance.arities();
    let p_arities: Vec<usize> = subset.indices.iter().map(|&k| arities[k]).collect();
    let q_arities: Vec<usize> = subset.complement.iter().map(|&k| arities[k]).collect();
    let p_grid = Grid::new(&p_arities);
    let q_grid = Grid::new(&q_arities);
    let sense = instance.sense();
    let q_axes = &subset.complement;
    let p_axes = &subset.indices;
    let cells = exec.map_range(p_grid.len(), |lin| {
        let p_idx = p_grid.unravel(lin);
        let mut full = vec![0; n];
        for (k, &a) in p_axes.iter().enumerate() {
            full[a] = p_idx[k];
        }
        let mut best: Option<(f64, MultiIndex)> = None;
        for q_idx in q_grid.iter() {
            let mut shift = 0.0;
            for (k, &a) in q_axes.iter().enumerate() {
                full[a] = q_idx[k];
                shift += potentials.vectors[a][q_idx[k]];
            }
            let v = instance.cost_at(&full) - shift;
            let better = match &best {
                None => true,
                Some((b, _)) => match sense {
                    Sense::Min => v < *b,
                    Sense::Max => v > *b,
                },
            };
            if better {
                best = Some((v, q_idx));
            }
        }
        best.expect("complement grid is nonempty")
    });
    let (reduced_cost, argmin_witness) = cells.into_iter().unzip();
    let inherited = Potentials::new(
        subset
            .indices
            .iter()
            .map(|&k| potentials.vectors[k].clone())
            .collect(),
    );
    Ok(ReducedProblem {
        subset,
        sense,
        grid: p_grid,
        reduced_cost,
        inherited,
        argmin_witness,
    })
}

fn check_potentials(instance: &Instance, potentials: &Potentials) -> Result<()> {
    if potentials.len() != instance.n_axes()
        || potentials
            .vectors
            .iter()
            .zip(instance.arities())
            .any(|(v, &n)| v.len() != n)
    {
        return Err(Error::DimensionMismatch("potentials do not match the instance".into()));
    }
    let v = potentials.max_violation(instance);
    if v > POTENTIAL_TOL * instance.cost_scale() {
        return Err(Error::InfeasiblePotentials(v));
    }
    Ok(())
}

/// Outcome of checking that the pushforward of an optimal plan is optimal
/// for the reduced problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionReport {
    pub subset: Vec<usize>,
    pub reduced_optimum: f64,
    pub pushforward_value: f64,
    pub gap: f64,
    /// Dual value of the inherited potentials on the reduced problem.
    pub inherited_dual_value: f64,
    /// `reduced optimum + Σ_{k∈Q} ⟨φ_k, μ_k⟩ − full optimum`.
    pub split_residual: f64,
    pub pass: bool,
}

pub fn verify_reduction_optimality(
    instance: &Instance,
    plan: &Coupling,
    potentials: &Potentials,
    subset: &[usize],
) -> Result<ReductionReport> {
    let reduced = reduce(instance, potentials, subset)?;
    let sub = reduced.to_instance(instance)?;
    let opt = lp::solve(&sub)?;
    let pushed = pushforward(plan, reduced.subset.indices())?;
    let pushforward_value = pushed.integrate(&reduced.reduced_cost);
    let gap = (pushforward_value - opt.value).abs();
    let weights = instance.weight_slices();
    let q_dual: f64 = reduced
        .subset
        .complement()
        .iter()
        .map(|&k| {
            potentials.vectors[k]
                .iter()
                .zip(weights[k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    let p_weights: Vec<&[f64]> = reduced.subset.indices().iter().map(|&k| weights[k]).collect();
    let full_value = plan.integrate(instance.table());
    let tol = OPTIMALITY_TOL * instance.cost_scale();
    Ok(ReductionReport {
        subset: reduced.subset.indices().to_vec(),
        reduced_optimum: opt.value,
        pushforward_value,
        gap,
        inherited_dual_value: reduced.inherited.dual_value(&p_weights),
        split_residual: opt.value + q_dual - full_value,
        pass: gap <= tol,
    })
}

/// The chain `c_j` over `{1,…,j}` for `j = 2..N−1`, with the largest
/// deviation from the nesting identity.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedChain {
    pub problems: Vec<ReducedProblem>,
    pub nesting_residual: f64,
}

pub fn reduce_chain(instance: &Instance, potentials: &Potentials) -> Result<ReducedChain> {
    let n = instance.n_axes();
    let mut problems = Vec::new();
    for j in 2..n {
        let subset: Vec<usize> = (0..j).collect();
        problems.push(reduce(instance, potentials, &subset)?);
    }
    let sense = instance.sense();
    let mut residual: f64 = 0.0;
    for (pos, prob) in problems.iter().enumerate() {
        let j = prob.subset.indices().len();
        // c_{j+1} is the next element, or the full cost at the top.
        let next: Box<dyn Fn(&[usize]) -> f64> = match problems.get(pos + 1) {
            Some(p) => Box::new(move |idx: &[usize]| p.cost_at(idx)),
            None => Box::new(|idx: &[usize]| instance.cost_at(idx)),
        };
        let phi = &potentials.vectors[j];
        for (idx, &c) in prob.grid.iter().zip(&prob.reduced_cost) {
            let mut ext = idx.clone();
            ext.push(0);
            let mut best = f64::NAN;
            for (x, &p) in phi.iter().enumerate() {
                ext[j] = x;
                let v = next(&ext) - p;
                if best.is_nan()
                    || match sense {
                        Sense::Min => v < best,
                        Sense::Max => v > best,
                    }
                {
                    best = v;
                }
            }
            residual = residual.max((best - c).abs());
        }
    }
    if residual > NESTING_TOL * instance.cost_scale() {
        return Err(Error::InvariantViolation(format!(
            "nesting identity off by {residual:e}"
        )));
    }
    Ok(ReducedChain {
        problems,
        nesting_residual: residual,
    })
}

/// Result of assembling an N-marginal plan from two-marginal reduced maps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub j0: usize,
    /// `T_j` per axis `j ∉ {0, j0}`: atom of axis 0 ↦ atom of axis `j`.
    pub maps: BTreeMap<usize, Vec<usize>>,
    pub value: f64,
    pub direct_value: f64,
    pub gap: f64,
    pub feasible: bool,
    pub optimal: bool,
}

/// Solves every reduced `c_{1j}` problem, requires graphs for `j ≠ j0`, and
/// assembles `(∏_j δ_{T_j(x)} × ρ^x) ⊗ μ_1` with `ρ^x` the conditional of
/// the `c_{1,j0}` plan.
pub fn reconstruct_bigth(
    instance: &Instance,
    potentials: &Potentials,
    j0: usize,
) -> Result<(Coupling, ReconstructionReport)> {
    let n = instance.n_axes();
    if j0 == 0 || j0 >= n {
        return Err(Error::IndexOutOfRange { index: j0, rank: n });
    }
    let arities = instance.arities().to_vec();
    let mu = instance.weights(0);
    let base = Coupling::new(vec![arities[0]], mu.iter().enumerate().map(|(i, &m)| (vec![i], m)))?;
    let mut block_maps = Vec::new();
    let mut maps = BTreeMap::new();
    let mut residual_plan = None;
    for j in 1..n {
        let plan = if n == 2 {
            lp::solve(instance)?.plan
        } else {
            let red = reduce(instance, potentials, &[0, j])?;
            lp::solve(&red.to_instance(instance)?)?.plan
        };
        if j == j0 {
            residual_plan = Some(plan);
            continue;
        }
        let dis = disintegrate(&plan, &[0])?;
        let mut images = BTreeMap::new();
        let mut t = vec![0; arities[0]];
        for (x, cond) in dis.conditionals() {
            if cond.support_len() != 1 {
                return Err(Error::NotAGraph(j));
            }
            let y = cond.support().next().expect("nonempty")[0];
            t[x[0]] = y;
            images.insert(x.clone(), vec![y]);
        }
        maps.insert(j, t);
        block_maps.push(BlockMap {
            axes: vec![j],
            images,
        });
    }
    let residual_plan = residual_plan.expect("j0 is in range");
    let dis = disintegrate(&residual_plan, &[0])?;
    let axes = [j0];
    let plan = assemble_product_conditional(
        &arities,
        &[0],
        &base,
        &block_maps,
        Some(Residual {
            axes: &axes,
            disintegration: &dis,
        }),
    )?;
    let feasible = Polytope::transport(&instance.weight_slices())
        .check_feasible(&plan, FEAS_TOL)
        .is_ok();
    let value = plan.integrate(instance.table());
    let direct_value = lp::solve(instance)?.value;
    let gap = (value - direct_value).abs();
    let report = ReconstructionReport {
        j0,
        maps,
        value,
        direct_value,
        gap,
        feasible,
        optimal: feasible && gap <= OPTIMALITY_TOL * instance.cost_scale(),
    };
    Ok((plan, report))
}

/// Projection of a full multi-index onto the subset axes.
pub fn restrict(idx: &[usize], subset: &IndexSubset) -> MultiIndex {
    project(idx, subset.indices())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostKind, CostSpec};
    use crate::measure::{DiscreteMeasure, Space};

    fn uniform(name: &str, pts: &[f64]) -> DiscreteMeasure {
        let s = Space::new(name, pts.iter().map(|x| vec![*x]).collect()).unwrap();
        DiscreteMeasure::uniform(s)
    }

    #[test]
    fn subset_validation() {
        assert_eq!(IndexSubset::new(&[0], 3), Err(Error::SubsetTooSmall(1)));
        assert_eq!(IndexSubset::new(&[0, 1, 2], 3), Err(Error::SubsetNotProper));
        assert_eq!(IndexSubset::new(&[1, 2], 3).unwrap().complement(), &[0]);
    }

    #[test]
    fn separable_cost_reduces_to_its_head() {
        let m = uniform("X", &[0.0, 1.0]);
        let a = [1.0, 2.0];
        let b = [0.5, -1.0];
        let g = [3.0, 7.0];
        let mut table = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    table.push(a[x] + b[y] + g[z]);
                }
            }
        }
        let inst = Instance::from_table(vec![m.clone(), m.clone(), m], table, Sense::Min).unwrap();
        let pot = Potentials::new(vec![a.to_vec(), b.to_vec(), g.to_vec()]);
        let red = reduce(&inst, &pot, &[0, 1]).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(red.cost_at(&[x, y]), a[x] + b[y]);
            }
        }
        assert_eq!(red.argmin_witness[0], vec![0]);
    }

    #[test]
    fn infeasible_potentials_are_rejected() {
        let m = uniform("X", &[0.0, 1.0]);
        let spec = CostSpec::new(CostKind::Surplus, Sense::Min).unwrap();
        let inst = Instance::new(vec![m.clone(), m.clone(), m], spec).unwrap();
        let pot = Potentials::new(vec![vec![5.0; 2], vec![0.0; 2], vec![0.0; 2]]);
        assert!(matches!(
            reduce(&inst, &pot, &[0, 1]),
            Err(Error::InfeasiblePotentials(_))
        ));
    }

    #[test]
    fn singleton_reconstruction() {
        let m = uniform("X", &[0.0]);
        let spec = CostSpec::new(CostKind::Surplus, Sense::Max).unwrap();
        let inst = Instance::new(vec![m.clone(), m.clone(), m], spec).unwrap();
        let sol = lp::solve(&inst).unwrap();
        let (plan, report) = reconstruct_bigth(&inst, &sol.potentials, 2).unwrap();
        assert_eq!(plan.mass(&[0, 0, 0]), 1.0);
        assert!(report.optimal);
        let v = verify_reduction_optimality(&inst, &sol.plan, &sol.potentials, &[0, 2]).unwrap();
        assert_eq!(v.gap, 0.0);
        assert!(v.pass);
    }
}
