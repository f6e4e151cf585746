//! Primal/dual solver for the discrete multi-marginal Kantorovich problem.

mod oracle;
mod polytope;
mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{CostKind, CostSpec, Sense};
use crate::error::{Error, Result};
use crate::grid::MultiIndex;
use crate::instance::{Instance, DEFAULT_MAX_CELLS};
use crate::measure::Coupling;
use crate::par::Exec;

pub use oracle::{
    enumerate_vertices, oracle_enumerate, oracle_optimum, OracleVertex, ORACLE_MAX_ATOMS,
    ORACLE_MAX_CELLS, within_oracle_caps,
};
pub use polytope::{MarginalBlock, Polytope, FEAS_TOL};
use polytope::{column_rank, RowReduction, RowSystem};

/// Tolerance on `|c − Σφ_k|` for membership in the minimizing set.
pub const ACTIVE_TOL: f64 = 1e-7;
/// Pivot tolerance of the vertex rank test.
pub const RANK_TOL: f64 = 1e-10;
/// Total-variation distance below which two plans are the same.
pub const SAME_PLAN_TOL: f64 = 1e-8;
/// Total-variation distance a non-uniqueness witness must exceed.
pub const WITNESS_TOL: f64 = 1e-6;

/// Dual potentials `(φ_1, …, φ_N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub vectors: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        Potentials { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `Σ_k φ_k(i_k)`.
    pub fn sum_at(&self, idx: &[usize]) -> f64 {
        idx.iter().zip(&self.vectors).map(|(&i, v)| v[i]).sum()
    }

    /// `Σ_k ⟨φ_k, μ_k⟩`.
    pub fn dual_value(&self, weights: &[&[f64]]) -> f64 {
        self.vectors
            .iter()
            .zip(weights)
            .map(|(v, w)| v.iter().zip(*w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Shifts every `φ_k`, `k ≥ 2`, to zero weighted mean, moving the
    /// constants into `φ_1`.
    pub fn normalize(&mut self, weights: &[&[f64]]) {
        let mut shift = 0.0;
        for (v, w) in self.vectors.iter_mut().zip(weights).skip(1) {
            let mean: f64 = v.iter().zip(*w).map(|(a, b)| a * b).sum();
            v.iter_mut().for_each(|a| *a -= mean);
            shift += mean;
        }
        if let Some(first) = self.vectors.first_mut() {
            first.iter_mut().for_each(|a| *a += shift);
        }
    }

    /// Worst violation of `Σφ_k ≤ c` (`≥` for maximization) over the whole
    /// grid; `≤ 0` means feasible.
    pub fn max_violation(&self, instance: &Instance) -> f64 {
        let s = instance.sense().sign();
        instance
            .cells()
            .map(|(idx, c)| s * (self.sum_at(&idx) - c))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cells where `|c − Σφ_k| ≤ tol`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizingSet {
    pub tolerance: f64,
    pub indices: Vec<MultiIndex>,
}

impl MinimizingSet {
    pub fn new(instance: &Instance, potentials: &Potentials, tol: f64) -> Self {
        let indices = instance
            .cells()
            .filter(|(idx, c)| (c - potentials.sum_at(idx)).abs() <= tol)
            .map(|(idx, _)| idx)
            .collect();
        MinimizingSet {
            tolerance: tol,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.indices
            .binary_search_by(|probe| probe.as_slice().cmp(idx))
            .is_ok()
    }

    /// Support atoms of `plan` outside the set.
    pub fn missing(&self, plan: &Coupling) -> Vec<MultiIndex> {
        plan.support().filter(|i| !self.contains(i)).cloned().collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub max_cells: usize,
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_cells: DEFAULT_MAX_CELLS,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub plan: Coupling,
    pub potentials: Potentials,
    pub value: f64,
    pub dual_value: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn duality_gap(&self) -> f64 {
        (self.value - self.dual_value).abs()
    }

    pub fn minimizing_set(&self, instance: &Instance) -> MinimizingSet {
        MinimizingSet::new(instance, &self.potentials, ACTIVE_TOL)
    }
}

pub fn solve(instance: &Instance) -> Result<Solution> {
    solve_with(instance, SolveOptions::default())
}

/// Optimal vertex plan, gauge-normalized potentials and value.
pub fn solve_with(instance: &Instance, opts: SolveOptions) -> Result<Solution> {
    let cells = instance.grid().len();
    if cells > opts.max_cells {
        return Err(Error::InstanceTooLarge {
            cells,
            cap: opts.max_cells,
        });
    }
    if let Some((idx, _)) = instance.cells().find(|(_, c)| !c.is_finite()) {
        return Err(Error::NonFiniteCost(idx));
    }
    let weights = instance.weight_slices();
    let poly = Polytope::transport(&weights);
    let sys = RowSystem::build(&poly, (0..cells).collect(), RowReduction::DropLastPerBlock);
    let sign = instance.sense().sign();
    let cost: Vec<f64> = instance.table().iter().map(|c| sign * c).collect();
    let tol = 1e-11 * instance.cost_scale();
    let sol = simplex::minimize(&sys, &cost, tol, opts.exec)?;

    let mut vectors: Vec<Vec<f64>> = sys
        .row_of
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|&r| if r == polytope::NO_ROW { 0.0 } else { sign * sol.y[r as usize] })
                .collect()
        })
        .collect();
    vectors.iter_mut().flatten().for_each(|v| {
        if *v == 0.0 {
            *v = 0.0;
        }
    });
    let mut potentials = Potentials::new(vectors);
    potentials.normalize(&weights);

    let grid = instance.grid();
    let entries = sol
        .basis
        .iter()
        .map(|&c| (grid.unravel(sys.columns[c]), sol.x[c]));
    let plan = Coupling::new(instance.arities().to_vec(), entries)?;
    let value = plan.integrate(instance.table());
    let dual_value = potentials.dual_value(&weights);
    Ok(Solution {
        plan,
        potentials,
        value,
        dual_value,
        iterations: sol.iterations,
    })
}

const STRICT_SLACKS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// Optimal potentials with `|c − Σφ_k| ≥ ε` off the support of `sol.plan`.
///
/// The problem is re-solved with the cost moved by `ε` toward the optimum
/// off the support; when the optimal plan stays put its potentials are
/// optimal for the original cost and strictly slack elsewhere. Falls back
/// to `sol.potentials` when every trial `ε` moves the plan.
pub fn strictly_complementary(instance: &Instance, sol: &Solution, opts: SolveOptions) -> Result<Potentials> {
    let grid = instance.grid();
    let s = instance.sense().sign();
    let scale = instance.cost_scale();
    let mut on_support = vec![false; grid.len()];
    for idx in sol.plan.support() {
        on_support[grid.linear(idx)] = true;
    }
    for eps in STRICT_SLACKS {
        let shift = eps * scale;
        let table: Vec<f64> = instance
            .table()
            .iter()
            .zip(&on_support)
            .map(|(&c, &on)| if on { c } else { c - s * shift })
            .collect();
        let perturbed = Instance::build(
            instance.marginals().to_vec(),
            CostSpec::new(CostKind::Tensor(table), instance.sense())?,
            opts.max_cells,
            opts.exec,
        )?;
        let alt = solve_with(&perturbed, opts)?;
        if alt.plan.total_variation(&sol.plan) <= SAME_PLAN_TOL
            && alt.potentials.max_violation(instance) <= ACTIVE_TOL * scale
        {
            return Ok(alt.potentials);
        }
    }
    Ok(sol.potentials.clone())
}

/// Rank test: the support columns of `plan` are linearly independent in
/// the constraint matrix of `poly`.
pub fn is_vertex(plan: &Coupling, poly: &Polytope) -> Result<bool> {
    poly.check_feasible(plan, FEAS_TOL)?;
    let grid = poly.grid();
    let cols: Vec<usize> = plan.support().map(|i| grid.linear(i)).collect();
    Ok(column_rank(poly, &cols, RANK_TOL) == cols.len())
}

/// [`is_vertex`] against the plain transport polytope of `marginals`.
pub fn is_transport_vertex(plan: &Coupling, marginals: &[&[f64]]) -> Result<bool> {
    is_vertex(plan, &Polytope::transport(marginals))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniquenessStatus {
    Unique,
    NonUnique,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessCertificate {
    pub status: UniquenessStatus,
    pub witness: Option<Coupling>,
    /// Largest spread `max − min` of a probe functional over the face.
    pub face_probe_value_gap: f64,
    /// Number of cells spanning the optimal face.
    pub face_cells: usize,
}

const PROBE_SEEDS: [u64; 2] = [0x5eed_0001, 0x5eed_0002];

/// Probes the optimal face with two seeded random functionals, minimizing
/// and maximizing each. The optimum is unique iff all probes return the
/// primal plan.
pub fn uniqueness_certificate(
    instance: &Instance,
    primal: &Coupling,
    potentials: &Potentials,
    value: f64,
) -> Result<UniquenessCertificate> {
    let weights = instance.weight_slices();
    let poly = Polytope::transport(&weights);
    let grid = instance.grid();
    let set = MinimizingSet::new(instance, potentials, ACTIVE_TOL);
    let mut face: Vec<usize> = set.indices.iter().map(|i| grid.linear(i)).collect();
    for idx in primal.support() {
        let lin = grid.linear(idx);
        if let Err(pos) = face.binary_search(&lin) {
            face.insert(pos, lin);
        }
    }
    let sys = RowSystem::build(&poly, face.clone(), RowReduction::DropLastPerBlock);
    let value_tol = SAME_PLAN_TOL * instance.cost_scale();
    let mut gap: f64 = 0.0;
    let mut first_diff: Option<Coupling> = None;
    for seed in PROBE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..face.len()).map(|_| rng.gen::<f64>()).collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut probe_vals = [0.0; 2];
        for (slot, obj) in [&r, &neg].into_iter().enumerate() {
            let sol = simplex::minimize(&sys, obj, 1e-11, Exec::Sequential)?;
            let entries = sol
                .basis
                .iter()
                .map(|&c| (grid.unravel(sys.columns[c]), sol.x[c]));
            let plan = Coupling::new(instance.arities().to_vec(), entries)?;
            probe_vals[slot] = sol.x.iter().zip(&r).map(|(x, w)| x * w).sum();
            if first_diff.is_none() && plan.total_variation(primal) > SAME_PLAN_TOL {
                first_diff = Some(plan);
            }
        }
        gap = gap.max(probe_vals[1] - probe_vals[0]);
    }
    let Some(other) = first_diff else {
        return Ok(UniquenessCertificate {
            status: UniquenessStatus::Unique,
            witness: None,
            face_probe_value_gap: gap.max(0.0),
            face_cells: face.len(),
        });
    };
    let status = if other.total_variation(primal) > WITNESS_TOL
        && (other.integrate(instance.table()) - value).abs() <= value_tol
    {
        UniquenessStatus::NonUnique
    } else {
        UniquenessStatus::Inconclusive
    };
    Ok(UniquenessCertificate {
        witness: (status == UniquenessStatus::NonUnique).then_some(other),
        status,
        face_probe_value_gap: gap.max(0.0),
        face_cells: face.len(),
    })
}

/// Certifies non-uniqueness from a known candidate: feasible, optimal to
/// `1e-8` and far from `primal`. Otherwise the result is inconclusive.
pub fn certificate_from_witness(
    instance: &Instance,
    primal: &Coupling,
    value: f64,
    candidate: Coupling,
) -> UniquenessCertificate {
    let weights = instance.weight_slices();
    let feasible = Polytope::transport(&weights)
        .check_feasible(&candidate, FEAS_TOL)
        .is_ok();
    let optimal = (candidate.integrate(instance.table()) - value).abs()
        <= SAME_PLAN_TOL * instance.cost_scale();
    let far = candidate.total_variation(primal) > WITNESS_TOL;
    let ok = feasible && optimal && far;
    UniquenessCertificate {
        status: if ok {
            UniquenessStatus::NonUnique
        } else {
            UniquenessStatus::Inconclusive
        },
        witness: ok.then_some(candidate),
        face_probe_value_gap: f64::NAN,
        face_cells: 0,
    }
}

/// True when `a` is at least as good as `b` for `sense`, up to `tol`.
pub fn no_worse(sense: Sense, a: f64, b: f64, tol: f64) -> bool {
    match sense {
        Sense::Min => a <= b + tol,
        Sense::Max => a >= b - tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DiscreteMeasure, Space};

    fn uniform(name: &str, n: usize) -> DiscreteMeasure {
        let s = Space::new(name, (0..n).map(|i| vec![i as f64]).collect()).unwrap();
        DiscreteMeasure::uniform(s)
    }

    #[test]
    fn diagonal_plan_for_swap_cost() {
        let inst = Instance::from_table(
            vec![uniform("X", 2), uniform("Y", 2)],
            vec![0.0, 1.0, 1.0, 0.0],
            Sense::Min,
        )
        .unwrap();
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.plan.mass(&[0, 0]), 0.5);
        assert!(sol.duality_gap() < 1e-12);
        assert!(sol.potentials.max_violation(&inst) <= 1e-9);
        let cert = uniqueness_certificate(&inst, &sol.plan, &sol.potentials, sol.value).unwrap();
        assert_eq!(cert.status, UniquenessStatus::Unique);
    }

    #[test]
    fn zero_cost_is_not_unique() {
        let inst = Instance::from_table(
            vec![uniform("X", 2), uniform("Y", 2)],
            vec![0.0; 4],
            Sense::Min,
        )
        .unwrap();
        let sol = solve(&inst).unwrap();
        let cert = uniqueness_certificate(&inst, &sol.plan, &sol.potentials, sol.value).unwrap();
        assert_eq!(cert.status, UniquenessStatus::NonUnique);
        assert!(cert.witness.unwrap().total_variation(&sol.plan) > WITNESS_TOL);
        assert!(cert.face_probe_value_gap > 0.0);
    }

    #[test]
    fn maximization_restores_the_sense() {
        let inst = Instance::from_table(
            vec![uniform("X", 2), uniform("Y", 2)],
            vec![0.0, 1.0, 1.0, 0.0],
            Sense::Max,
        )
        .unwrap();
        let sol = solve(&inst).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!(sol.duality_gap() < 1e-12);
        assert!(sol.potentials.max_violation(&inst) <= 1e-9);
    }

    #[test]
    fn vertex_test() {
        let w: &[f64] = &[0.5, 0.5];
        let prod = Coupling::product(&[w, w]).unwrap();
        assert!(!is_transport_vertex(&prod, &[w, w]).unwrap());
        let diag = Coupling::graph(w, &[2], &[vec![0], vec![1]]).unwrap();
        assert!(is_transport_vertex(&diag, &[w, w]).unwrap());
        assert!(matches!(
            is_transport_vertex(&diag, &[w, &[0.25, 0.75]]),
            Err(Error::MarginalMismatch { axis: 1, .. })
        ));
    }
}
