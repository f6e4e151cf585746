//! The problem statement: N weighted point clouds plus a cost.

use crate::costs::{evaluate_kind, CostKind, CostSpec, Sense};
use crate::error::{Error, Result};
use crate::grid::{Grid, MultiIndex};
use crate::measure::DiscreteMeasure;
use crate::par::Exec;

/// Default cap on the number of grid cells `∏ n_k`.
pub const DEFAULT_MAX_CELLS: usize = 200_000;

/// A discrete multi-marginal transport problem with a tabulated cost.
#[derive(Clone, Debug)]
pub struct Instance {
    marginals: Vec<DiscreteMeasure>,
    cost: CostSpec,
    grid: Grid,
    table: Vec<f64>,
    /// For each axis, the original atom index of each kept atom.
    kept: Vec<Vec<usize>>,
}

impl Instance {
    pub fn new(marginals: Vec<DiscreteMeasure>, cost: CostSpec) -> Result<Self> {
        Self::build(marginals, cost, DEFAULT_MAX_CELLS, Exec::default())
    }

    /// Drops zero-weight atoms (reindexing tensor costs) and tabulates the
    /// cost over the grid.
    pub fn build(
        marginals: Vec<DiscreteMeasure>,
        cost: CostSpec,
        max_cells: usize,
        exec: Exec,
    ) -> Result<Self> {
        if marginals.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "need at least 2 marginals, got {}",
                marginals.len()
            )));
        }
        let full_arities: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
        let full_grid = Grid::new(&full_arities);
        let mut kept = Vec::with_capacity(marginals.len());
        let mut reduced = Vec::with_capacity(marginals.len());
        for m in &marginals {
            let (r, k) = m.drop_null_atoms();
            reduced.push(r);
            kept.push(k);
        }
        let arities: Vec<usize> = reduced.iter().map(|m| m.len()).collect();
        let grid = Grid::new(&arities);
        if grid.len() > max_cells {
            return Err(Error::InstanceTooLarge {
                cells: grid.len(),
                cap: max_cells,
            });
        }
        let table = match &cost.kind {
            CostKind::Tensor(values) => {
                if values.len() != full_grid.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "cost tensor has {} entries, grid has {}",
                        values.len(),
                        full_grid.len()
                    )));
                }
                exec.map_range(grid.len(), |lin| {
                    let idx = grid.unravel(lin);
                    let orig: Vec<usize> =
                        idx.iter().enumerate().map(|(k, &i)| kept[k][i]).collect();
                    values[full_grid.linear(&orig)]
                })
            }
            kind => {
                let d = reduced[0].space().dim();
                if reduced.iter().any(|m| m.space().dim() != d) {
                    return Err(Error::DimensionMismatch(
                        "builtin costs need all spaces in the same dimension".into(),
                    ));
                }
                // Surface arity/dimension errors once before the parallel sweep.
                let first: Vec<&[f64]> = reduced.iter().map(|m| m.space().point(0)).collect();
                evaluate_kind(kind, &first)?;
                exec.map_range(grid.len(), |lin| {
                    let idx = grid.unravel(lin);
                    let pts: Vec<&[f64]> = idx
                        .iter()
                        .zip(&reduced)
                        .map(|(&i, m)| m.space().point(i))
                        .collect();
                    evaluate_kind(kind, &pts).unwrap_or(f64::NAN)
                })
            }
        };
        if let Some(lin) = table.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost(grid.unravel(lin)));
        }
        Ok(Instance {
            marginals: reduced,
            cost,
            grid,
            table,
            kept,
        })
    }

    /// An instance with an explicit cost table over the given marginals.
    pub fn from_table(marginals: Vec<DiscreteMeasure>, table: Vec<f64>, sense: Sense) -> Result<Self> {
        Self::new(marginals, CostSpec::new(CostKind::Tensor(table), sense)?)
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn marginal(&self, k: usize) -> &DiscreteMeasure {
        &self.marginals[k]
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        self.marginals[k].weights()
    }

    pub fn weight_slices(&self) -> Vec<&[f64]> {
        self.marginals.iter().map(|m| m.weights()).collect()
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn sense(&self) -> Sense {
        self.cost.sense
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn arities(&self) -> &[usize] {
        self.grid.arities()
    }

    pub fn n_axes(&self) -> usize {
        self.marginals.len()
    }

    /// Dense row-major cost table.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn cost_at(&self, idx: &[usize]) -> f64 {
        self.table[self.grid.linear(idx)]
    }

    pub fn point(&self, axis: usize, atom: usize) -> &[f64] {
        self.marginals[axis].space().point(atom)
    }

    /// Original atom indices that survived null-atom removal, per axis.
    pub fn kept_atoms(&self) -> &[Vec<usize>] {
        &self.kept
    }

    /// Largest |c| over the grid, at least 1. Used to scale tolerances.
    pub fn cost_scale(&self) -> f64 {
        self.table.iter().fold(1.0, |m, c| m.max(c.abs()))
    }

    /// Iterates the grid as `(multi-index, cost)`.
    pub fn cells(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.grid.iter().zip(self.table.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Space;

    fn line(name: &str, xs: &[f64], w: &[f64]) -> DiscreteMeasure {
        let s = Space::new(name, xs.iter().map(|x| vec![*x]).collect()).unwrap();
        DiscreteMeasure::new(s, w.to_vec()).unwrap()
    }

    #[test]
    fn zero_weight_atoms_are_dropped_and_tensors_reindexed() {
        let a = line("X", &[0.0, 1.0, 2.0], &[0.5, 0.0, 0.5]);
        let b = line("Y", &[0.0, 1.0], &[0.5, 0.5]);
        let table: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let inst = Instance::from_table(vec![a, b], table, Sense::Min).unwrap();
        assert_eq!(inst.arities(), &[2, 2]);
        assert_eq!(inst.table(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(inst.kept_atoms()[0], vec![0, 2]);
    }

    #[test]
    fn cap_and_finiteness_are_enforced() {
        let a = line("X", &[0.0, 1.0], &[0.5, 0.5]);
        let spec = CostSpec::new(CostKind::Surplus, Sense::Max).unwrap();
        let err = Instance::build(vec![a.clone(), a.clone()], spec, 3, Exec::Sequential).unwrap_err();
        assert_eq!(err, Error::InstanceTooLarge { cells: 4, cap: 3 });
        let err = Instance::from_table(vec![a.clone(), a], vec![0.0, 1.0, f64::NAN, 0.0], Sense::Min)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost(_)));
    }

    #[test]
    fn tabulation_is_mode_independent() {
        let a = line("X", &[0.0, 1.0, 2.5], &[0.2, 0.3, 0.5]);
        let spec = CostSpec::new(CostKind::Attractive, Sense::Min).unwrap();
        let marg = vec![a.clone(), a.clone(), a];
        let s = Instance::build(marg.clone(), spec.clone(), 1000, Exec::Sequential).unwrap();
        let p = Instance::build(marg, spec, 1000, Exec::Parallel).unwrap();
        assert_eq!(s.table(), p.table());
    }
}
