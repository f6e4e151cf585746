//! Polytopes of couplings with prescribed marginals on groups of axes.

use crate::error::{Error, Result};
use crate::grid::{project, Grid};
use crate::measure::Coupling;

/// Feasibility tolerance for marginal constraints.
pub const FEAS_TOL: f64 = 1e-9;

/// A prescribed marginal on a group of axes, as a dense table over the
/// product of those axes.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalBlock {
    pub axes: Vec<usize>,
    pub target: Vec<f64>,
}

/// `{λ ≥ 0 on the grid : π_B # λ = target_B for every block B}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    grid: Grid,
    blocks: Vec<MarginalBlock>,
    block_grids: Vec<Grid>,
}

impl Polytope {
    pub fn new(arities: &[usize], blocks: Vec<MarginalBlock>) -> Result<Self> {
        let grid = Grid::new(arities);
        let mut block_grids = Vec::with_capacity(blocks.len());
        for b in &blocks {
            crate::measure::check_axes(&b.axes, arities.len())?;
            let g = Grid::new(&b.axes.iter().map(|&a| arities[a]).collect::<Vec<_>>());
            if g.len() != b.target.len() {
                return Err(Error::DimensionMismatch(format!(
                    "block on axes {:?} has {} targets for {} cells",
                    b.axes,
                    b.target.len(),
                    g.len()
                )));
            }
            if b.target.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::InvalidWeights {
                    space: format!("block {:?}", b.axes),
                    reason: "negative or non-finite target".into(),
                });
            }
            block_grids.push(g);
        }
        Ok(Polytope {
            grid,
            blocks,
            block_grids,
        })
    }

    /// The classical multi-marginal transport polytope `Π(μ_1, …, μ_N)`.
    pub fn transport(weights: &[&[f64]]) -> Self {
        let arities: Vec<usize> = weights.iter().map(|w| w.len()).collect();
        let blocks = weights
            .iter()
            .enumerate()
            .map(|(k, w)| MarginalBlock {
                axes: vec![k],
                target: w.to_vec(),
            })
            .collect();
        Self::new(&arities, blocks).expect("transport blocks are well formed")
    }

    /// Constraints given as couplings on axis groups, e.g. `Π(λ^{XY}, γ)`.
    pub fn from_couplings(arities: &[usize], constraints: &[(Vec<usize>, &Coupling)]) -> Result<Self> {
        let blocks = constraints
            .iter()
            .map(|(axes, c)| {
                let expect: Vec<usize> = axes.iter().map(|&a| arities[a]).collect();
                if c.arities() != expect.as_slice() {
                    return Err(Error::DimensionMismatch(format!(
                        "constraint on {axes:?} has arities {:?}, expected {expect:?}",
                        c.arities()
                    )));
                }
                Ok(MarginalBlock {
                    axes: axes.clone(),
                    target: c.to_dense(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(arities, blocks)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn arities(&self) -> &[usize] {
        self.grid.arities()
    }

    pub fn blocks(&self) -> &[MarginalBlock] {
        &self.blocks
    }

    /// True when every block is a single distinct axis.
    pub fn is_plain_transport(&self) -> bool {
        self.blocks.iter().all(|b| b.axes.len() == 1)
    }

    /// Cell index of the projection of `idx` in each block.
    pub(crate) fn block_cells(&self, idx: &[usize], out: &mut Vec<usize>) {
        out.clear();
        for (b, g) in self.blocks.iter().zip(&self.block_grids) {
            out.push(g.linear(&project(idx, &b.axes)));
        }
    }

    pub(crate) fn block_len(&self, b: usize) -> usize {
        self.block_grids[b].len()
    }

    /// Checks every block marginal of `plan`; reports the worst block.
    pub fn check_feasible(&self, plan: &Coupling, tol: f64) -> Result<()> {
        if plan.arities() != self.arities() {
            return Err(Error::DimensionMismatch(format!(
                "plan arities {:?} vs polytope {:?}",
                plan.arities(),
                self.arities()
            )));
        }
        let mut cells = Vec::new();
        let mut sums: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.target.len()]).collect();
        for (idx, m) in plan.iter() {
            self.block_cells(idx, &mut cells);
            for (b, &c) in cells.iter().enumerate() {
                sums[b][c] += m;
            }
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let dev = sums[b]
                .iter()
                .zip(&block.target)
                .map(|(a, t)| (a - t).abs())
                .fold(0.0, f64::max);
            if dev > tol {
                return Err(Error::MarginalMismatch {
                    axis: block.axes[0],
                    max_deviation: dev,
                });
            }
        }
        Ok(())
    }

    /// Columns that are not forced to zero by a zero target cell.
    pub(crate) fn admissible(&self, lin: usize) -> bool {
        let idx = self.grid.unravel(lin);
        self.blocks
            .iter()
            .zip(&self.block_grids)
            .all(|(b, g)| b.target[g.linear(&project(&idx, &b.axes))] > 0.0)
    }
}

/// How structurally redundant equality rows are removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowReduction {
    /// Drop the last cell of every block after the first (exact for plain
    /// transport polytopes over all columns).
    DropLastPerBlock,
    /// Keep a maximal linearly independent subset of rows.
    Eliminate,
}

pub(crate) const NO_ROW: u32 = u32::MAX;

/// Equality system `A x = b` over a column subset, with 0/1 columns stored
/// as row lists.
#[derive(Clone, Debug)]
pub(crate) struct RowSystem {
    pub m: usize,
    pub rhs: Vec<f64>,
    /// Grid linear index of each column.
    pub columns: Vec<usize>,
    /// `k` row ids per column (`NO_ROW` where the row was dropped).
    pub col_rows: Vec<u32>,
    pub k: usize,
    /// For each (block, cell): its row id or `NO_ROW`.
    pub row_of: Vec<Vec<u32>>,
}

impl RowSystem {
    pub fn build(poly: &Polytope, columns: Vec<usize>, mode: RowReduction) -> RowSystem {
        let k = poly.blocks.len();
        let mut keep: Vec<Vec<bool>> = poly
            .blocks
            .iter()
            .map(|b| b.target.iter().map(|_| true).collect())
            .collect();
        let mut col_cells = Vec::with_capacity(columns.len() * k);
        let mut cells = Vec::with_capacity(k);
        for &lin in &columns {
            poly.block_cells(&poly.grid.unravel(lin), &mut cells);
            col_cells.extend_from_slice(&cells);
        }
        match mode {
            RowReduction::DropLastPerBlock => {
                for row in keep.iter_mut().skip(1) {
                    if let Some(last) = row.last_mut() {
                        *last = false;
                    }
                }
            }
            RowReduction::Eliminate => {
                // Rows touched by no column must have zero target; drop them.
                let mut touched: Vec<Vec<bool>> =
                    poly.blocks.iter().map(|b| vec![false; b.target.len()]).collect();
                for c in 0..columns.len() {
                    for b in 0..k {
                        touched[b][col_cells[c * k + b]] = true;
                    }
                }
                let n = columns.len();
                let mut basis_rows: Vec<Vec<f64>> = Vec::new();
                let mut pivots: Vec<usize> = Vec::new();
                for b in 0..k {
                    for cell in 0..poly.block_len(b) {
                        if !touched[b][cell] {
                            keep[b][cell] = false;
                            continue;
                        }
                        let mut row: Vec<f64> = (0..n)
                            .map(|c| if col_cells[c * k + b] == cell { 1.0 } else { 0.0 })
                            .collect();
                        for (r, &p) in basis_rows.iter().zip(&pivots) {
                            let f = row[p];
                            if f != 0.0 {
                                for (x, y) in row.iter_mut().zip(r) {
                                    *x -= f * y;
                                }
                            }
                        }
                        let piv = (0..n).max_by(|&a, &b2| row[a].abs().total_cmp(&row[b2].abs()));
                        match piv {
                            Some(p) if row[p].abs() > 1e-9 => {
                                let s = row[p];
                                row.iter_mut().for_each(|x| *x /= s);
                                basis_rows.push(row);
                                pivots.push(p);
                            }
                            _ => keep[b][cell] = false,
                        }
                    }
                }
            }
        }
        let mut row_of: Vec<Vec<u32>> = Vec::with_capacity(k);
        let mut rhs = Vec::new();
        for (b, block) in poly.blocks.iter().enumerate() {
            let mut ids = Vec::with_capacity(block.target.len());
            for (cell, &t) in block.target.iter().enumerate() {
                if keep[b][cell] {
                    ids.push(rhs.len() as u32);
                    rhs.push(t);
                } else {
                    ids.push(NO_ROW);
                }
            }
            row_of.push(ids);
        }
        let col_rows = col_cells
            .chunks(k.max(1))
            .flat_map(|cells| cells.iter().enumerate().map(|(b, &c)| row_of[b][c]).collect::<Vec<_>>())
            .collect();
        RowSystem {
            m: rhs.len(),
            rhs,
            columns,
            col_rows,
            k,
            row_of,
        }
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self, col: usize) -> &[u32] {
        &self.col_rows[col * self.k..(col + 1) * self.k]
    }
}

/// Rank of a set of grid columns in the constraint matrix of `poly`.
pub(crate) fn column_rank(poly: &Polytope, columns: &[usize], pivot_tol: f64) -> usize {
    let k = poly.blocks.len();
    let offsets: Vec<usize> = (0..k)
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += poly.block_len(b);
            Some(o)
        })
        .collect();
    let total_rows: usize = (0..k).map(|b| poly.block_len(b)).sum();
    let mut cells = Vec::new();
    // Columns as dense vectors, eliminated one at a time.
    let mut reduced: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut rank = 0;
    for &lin in columns {
        let mut v = vec![0.0; total_rows];
        poly.block_cells(&poly.grid.unravel(lin), &mut cells);
        for (b, &c) in cells.iter().enumerate() {
            v[offsets[b] + c] = 1.0;
        }
        for (r, p) in &reduced {
            let f = v[*p];
            if f != 0.0 {
                for (x, y) in v.iter_mut().zip(r) {
                    *x -= f * y;
                }
            }
        }
        let piv = (0..total_rows).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()));
        if let Some(p) = piv {
            if v[p].abs() > pivot_tol {
                let s = v[p];
                v.iter_mut().for_each(|x| *x /= s);
                reduced.push((v, p));
                rank += 1;
            }
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transport_rows_drop_one_per_extra_block() {
        let p = Polytope::transport(&[&[0.5, 0.5], &[0.2, 0.8], &[1.0 / 3.0; 3]]);
        let all: Vec<usize> = (0..p.grid().len()).collect();
        let sys = RowSystem::build(&p, all.clone(), RowReduction::DropLastPerBlock);
        assert_eq!(sys.m, 2 + 2 + 3 - 2);
        let elim = RowSystem::build(&p, all, RowReduction::Eliminate);
        assert_eq!(elim.m, sys.m);
    }

    #[test]
    fn feasibility_reports_the_offending_axis() {
        let p = Polytope::transport(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let plan = Coupling::new(vec![2, 2], [(vec![0, 0], 0.5), (vec![0, 1], 0.5)]).unwrap();
        assert!(matches!(
            p.check_feasible(&plan, FEAS_TOL),
            Err(Error::MarginalMismatch { axis: 0, .. })
        ));
    }
}
