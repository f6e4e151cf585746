//! Structure of optimal supports: cyclical monotonicity, fiber maps,
//! c-extremality, map decompositions and the Gromov-Wasserstein twist count.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::costs::{dot, invert, Sense};
use crate::error::{Error, Result};
use crate::grid::{complement, project, Grid, MultiIndex};
use crate::measure::{check_axes, disintegrate, Coupling};
use crate::par::Exec;

/// Relative tolerance for cost comparisons (cycle sums, argmax ties).
pub const COST_TOL: f64 = 1e-9;
/// Residual tolerance of the twist fixed-point equation.
pub const TWIST_TOL: f64 = 1e-8;

/// A cost tabulated on a grid.
#[derive(Clone, Copy, Debug)]
pub struct CostTable<'a> {
    pub grid: &'a Grid,
    pub values: &'a [f64],
}

impl<'a> CostTable<'a> {
    pub fn new(grid: &'a Grid, values: &'a [f64]) -> Self {
        CostTable { grid, values }
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.linear(idx)]
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(1.0, |m, c| m.max(c.abs()))
    }
}

impl<'a> From<&'a crate::instance::Instance> for CostTable<'a> {
    fn from(inst: &'a crate::instance::Instance) -> Self {
        CostTable::new(inst.grid(), inst.table())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleOptions {
    pub max_cycle: usize,
    /// Random larger subsets tested after the exhaustive pass.
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            max_cycle: 3,
            samples: 200,
            seed: 0xc1c1e,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleViolation {
    pub points: Vec<MultiIndex>,
    /// `σ_2, …, σ_N`; axis 1 is never permuted.
    pub permutations: Vec<Vec<usize>>,
    pub original: f64,
    pub permuted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleReport {
    pub pass: bool,
    pub cycles_tested: usize,
    pub violation: Option<CycleViolation>,
}

/// Tests `Σ_m c(s^m) ≤ Σ_m c(s^m_1, s^{σ_2(m)}_2, …)` (reversed for
/// maximization) on all subsets of at most `max_cycle` support points and
/// all permutation tuples, then on seeded random larger subsets.
pub fn check_cyclical_monotonicity(
    support: &[MultiIndex],
    cost: CostTable<'_>,
    sense: Sense,
    opts: CycleOptions,
) -> Result<CycleReport> {
    if opts.max_cycle < 2 {
        return Err(Error::InvalidConfig(format!("max cycle {} < 2", opts.max_cycle)));
    }
    let tol = COST_TOL * cost.scale();
    let n_axes = cost.grid.rank();
    let mut tested = 0usize;
    for m in 2..=opts.max_cycle.min(support.len()) {
        let perms = permutations(m);
        let combos = combinations(support.len(), m);
        let tuples = perms.len().pow(n_axes as u32 - 1);
        tested += combos.len() * tuples;
        let hit = opts.exec.find_first(combos.len(), |c| {
            let pts: Vec<&MultiIndex> = combos[c].iter().map(|&i| &support[i]).collect();
            first_violation(&pts, &perms, cost, sense, tol).is_some()
        });
        if let Some(c) = hit {
            let pts: Vec<&MultiIndex> = combos[c].iter().map(|&i| &support[i]).collect();
            let v = first_violation(&pts, &perms, cost, sense, tol).expect("violation found above");
            return Ok(CycleReport {
                pass: false,
                cycles_tested: tested,
                violation: Some(v),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let lo = opts.max_cycle + 1;
    let hi = support.len().min(opts.max_cycle + 4);
    if lo <= hi {
        let mut order: Vec<usize> = (0..support.len()).collect();
        for _ in 0..opts.samples {
            let m = rng.gen_range(lo..=hi);
            order.shuffle(&mut rng);
            let pts: Vec<&MultiIndex> = order[..m].iter().map(|&i| &support[i]).collect();
            let sigmas: Vec<Vec<usize>> = (1..n_axes)
                .map(|_| {
                    let mut p: Vec<usize> = (0..m).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            tested += 1;
            if let Some(v) = evaluate_tuple(&pts, &sigmas, cost, sense, tol) {
                return Ok(CycleReport {
                    pass: false,
                    cycles_tested: tested,
                    violation: Some(v),
                });
            }
        }
    }
    Ok(CycleReport {
        pass: true,
        cycles_tested: tested,
        violation: None,
    })
}

fn first_violation(
    pts: &[&MultiIndex],
    perms: &[Vec<usize>],
    cost: CostTable<'_>,
    sense: Sense,
    tol: f64,
) -> Option<CycleViolation> {
    let n_axes = pts[0].len();
    let mut odo = vec![0usize; n_axes - 1];
    loop {
        let sigmas: Vec<Vec<usize>> = odo.iter().map(|&p| perms[p].clone()).collect();
        if let Some(v) = evaluate_tuple(pts, &sigmas, cost, sense, tol) {
            return Some(v);
        }
        let mut k = 0;
        loop {
            if k == odo.len() {
                return None;
            }
            odo[k] += 1;
            if odo[k] < perms.len() {
                break;
            }
            odo[k] = 0;
            k += 1;
        }
    }
}

fn evaluate_tuple(
    pts: &[&MultiIndex],
    sigmas: &[Vec<usize>],
    cost: CostTable<'_>,
    sense: Sense,
    tol: f64,
) -> Option<CycleViolation> {
    let original: f64 = pts.iter().map(|p| cost.at(p)).sum();
    let mut idx = vec![0; pts[0].len()];
    let mut permuted = 0.0;
    for m in 0..pts.len() {
        idx[0] = pts[m][0];
        for (k, s) in sigmas.iter().enumerate() {
            idx[k + 1] = pts[s[m]][k + 1];
        }
        permuted += cost.at(&idx);
    }
    let violated = match sense {
        Sense::Min => permuted < original - tol,
        Sense::Max => permuted > original + tol,
    };
    violated.then(|| CycleViolation {
        points: pts.iter().map(|p| (*p).clone()).collect(),
        permutations: sigmas.to_vec(),
        original,
        permuted,
    })
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..m).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..m).rev().find(|&i| cur[i] != i + n - m) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..m {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// An ordered partition of the second space, by linear index in the
/// second-block grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderedPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl OrderedPartition {
    /// Blocks must be disjoint and cover `0..size`.
    pub fn new(blocks: Vec<Vec<usize>>, size: usize) -> Result<Self> {
        let mut block_of = vec![usize::MAX; size];
        for (b, block) in blocks.iter().enumerate() {
            for &a in block {
                if a >= size {
                    return Err(Error::InvalidPartition(format!("atom {a} out of range {size}")));
                }
                if block_of[a] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("atom {a} in two blocks")));
                }
                block_of[a] = b;
            }
        }
        if let Some(a) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidPartition(format!("atom {a} not covered")));
        }
        Ok(OrderedPartition { blocks, block_of })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, atom: usize) -> usize {
        self.block_of[atom]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberEntry {
    /// `F(x)`, second-block multi-indices in lexicographic order.
    pub fiber: Vec<MultiIndex>,
    /// `f(x)`: argmax of `c(x, ·)` over the fiber (restricted to block
    /// `ι(x)` under a partition), ties kept.
    pub argmax: Vec<MultiIndex>,
    /// `ι(x)`, the least partition block meeting the fiber.
    pub block: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberReport {
    pub first_axes: Vec<usize>,
    pub second_axes: Vec<usize>,
    pub per_atom: BTreeMap<MultiIndex, FiberEntry>,
}

impl FiberReport {
    pub fn max_fiber(&self) -> usize {
        self.per_atom.values().map(|e| e.fiber.len()).max().unwrap_or(0)
    }
}

/// Fibers `F(x) = {y : (x, y) ∈ S}` and argmax sets for the split of the
/// axes into `first_axes` and their complement.
pub fn fiber_report(
    support: &[MultiIndex],
    cost: CostTable<'_>,
    first_axes: &[usize],
    partition: Option<&OrderedPartition>,
) -> Result<FiberReport> {
    let rank = cost.grid.rank();
    check_axes(first_axes, rank)?;
    if first_axes.len() == rank {
        return Err(Error::SubsetNotProper);
    }
    let second_axes = complement(rank, first_axes);
    let second_grid = Grid::new(&second_axes.iter().map(|&a| cost.grid.arities()[a]).collect::<Vec<_>>());
    if let Some(p) = partition {
        if p.block_of.len() != second_grid.len() {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} atoms, second space has {}",
                p.block_of.len(),
                second_grid.len()
            )));
        }
    }
    let mut fibers: BTreeMap<MultiIndex, BTreeSet<MultiIndex>> = BTreeMap::new();
    for idx in support {
        fibers
            .entry(project(idx, first_axes))
            .or_default()
            .insert(project(idx, &second_axes));
    }
    let tol = COST_TOL * cost.scale();
    let mut full = vec![0; rank];
    let mut per_atom = BTreeMap::new();
    for (x, ys) in fibers {
        let block = partition.map(|p| {
            ys.iter()
                .map(|y| p.block_of(second_grid.linear(y)))
                .min()
                .expect("fiber nonempty")
        });
        let candidates: Vec<&MultiIndex> = ys
            .iter()
            .filter(|y| match (partition, block) {
                (Some(p), Some(b)) => p.block_of(second_grid.linear(y)) == b,
                _ => true,
            })
            .collect();
        let values: Vec<f64> = candidates
            .iter()
            .map(|y| {
                for (k, &a) in first_axes.iter().enumerate() {
                    full[a] = x[k];
                }
                for (k, &a) in second_axes.iter().enumerate() {
                    full[a] = y[k];
                }
                cost.at(&full)
            })
            .collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let argmax = candidates
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v >= best - tol)
            .map(|(y, _)| (*y).clone())
            .collect();
        per_atom.insert(
            x,
            FiberEntry {
                fiber: ys.into_iter().collect(),
                argmax,
                block,
            },
        );
    }
    Ok(FiberReport {
        first_axes: first_axes.to_vec(),
        second_axes,
        per_atom,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremeViolation {
    pub x1: MultiIndex,
    pub x2: MultiIndex,
    pub shared: MultiIndex,
}

/// Condition (ii): for all `x_1 ≠ x_2` and all `y_i ∈ f(x_i)`,
/// `(F(x_1) \ {y_1}) ∩ (F(x_2) \ {y_2}) = ∅`. Returns the first violation.
pub fn check_c_extreme(report: &FiberReport) -> Option<ExtremeViolation> {
    // Condition (i): every nonempty fiber has a nonempty argmax.
    debug_assert!(report
        .per_atom
        .values()
        .all(|e| e.fiber.is_empty() || !e.argmax.is_empty()));
    // Owners of each second atom, in atom order.
    let mut owners: BTreeMap<&MultiIndex, Vec<&MultiIndex>> = BTreeMap::new();
    for (x, e) in &report.per_atom {
        for y in &e.fiber {
            owners.entry(y).or_default().push(x);
        }
    }
    for (y, xs) in owners {
        for (i, x1) in xs.iter().enumerate() {
            for x2 in &xs[i + 1..] {
                let e1 = &report.per_atom[*x1];
                let e2 = &report.per_atom[*x2];
                // Some selection y_1 ∈ f(x_1), y_2 ∈ f(x_2) avoids y on both sides.
                let avoid1 = e1.argmax.iter().any(|a| a != y);
                let avoid2 = e2.argmax.iter().any(|a| a != y);
                if avoid1 && avoid2 {
                    return Some(ExtremeViolation {
                        x1: (*x1).clone(),
                        x2: (*x2).clone(),
                        shared: y.clone(),
                    });
                }
            }
        }
    }
    None
}

/// A coupling written as `Σ_k α_k(x) δ_{T_k(x)} ⊗ μ` over one axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapDecomposition {
    pub first_axis: usize,
    /// `maps[k][x]`: complement multi-index of the `k`-th map at atom `x`.
    pub maps: Vec<Vec<MultiIndex>>,
    /// `weights[k][x] = α_k(x)`.
    pub weights: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    arities: Vec<usize>,
}

impl MapDecomposition {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn recombine(&self) -> Result<Coupling> {
        let rest = complement(self.arities.len(), &[self.first_axis]);
        let mut entries = Vec::new();
        for (map, w) in self.maps.iter().zip(&self.weights) {
            for (x, &m) in self.mu.iter().enumerate() {
                if m <= 0.0 || w[x] <= 0.0 {
                    continue;
                }
                let mut idx = vec![0; self.arities.len()];
                idx[self.first_axis] = x;
                for (k, &a) in rest.iter().enumerate() {
                    idx[a] = map[x][k];
                }
                entries.push((idx, m * w[x]));
            }
        }
        Coupling::new(self.arities.clone(), entries)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decomposition {
    Maps(MapDecomposition),
    NotDecomposable { max_fiber: usize },
}

/// Per-atom fibers ordered by decreasing conditional weight (ties by
/// index) become the maps `T_1, T_2, …`. Shorter fibers are padded with
/// zero weight.
pub fn detect_map_decomposition(plan: &Coupling, first_axis: usize, cap: Option<usize>) -> Result<Decomposition> {
    check_axes(&[first_axis], plan.rank())?;
    let dis = disintegrate(plan, &[first_axis])?;
    let n = plan.arities()[first_axis];
    let mut fibers: Vec<Vec<(MultiIndex, f64)>> = vec![Vec::new(); n];
    for (x, cond) in dis.conditionals() {
        let mut f: Vec<(MultiIndex, f64)> = cond.iter().map(|(y, w)| (y.clone(), w)).collect();
        f.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        fibers[x[0]] = f;
    }
    let m = fibers.iter().map(|f| f.len()).max().unwrap_or(0);
    if let Some(c) = cap {
        if m > c {
            return Ok(Decomposition::NotDecomposable { max_fiber: m });
        }
    }
    let rest_len = plan.rank() - 1;
    let mut maps = vec![vec![vec![0; rest_len]; n]; m];
    let mut weights = vec![vec![0.0; n]; m];
    for (x, f) in fibers.iter().enumerate() {
        for k in 0..m {
            match f.get(k) {
                Some((y, w)) => {
                    maps[k][x] = y.clone();
                    weights[k][x] = *w;
                }
                None => {
                    if let Some((y, _)) = f.first() {
                        maps[k][x] = y.clone();
                    }
                }
            }
        }
    }
    Ok(Decomposition::Maps(MapDecomposition {
        first_axis,
        maps,
        weights,
        mu: plan.marginal(first_axis),
        arities: plan.arities().to_vec(),
    }))
}

fn gw_direction(x0: &[f64], a: &[Vec<f64>], xi: f64) -> Result<Vec<f64>> {
    if xi == 0.0 {
        return Err(Error::ZeroXi);
    }
    let d = x0.len();
    if a.len() != d || a.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!("matrix must be {d}x{d}")));
    }
    let inv = invert(a)?;
    // (Aᵀ)⁻¹ = (A⁻¹)ᵀ
    Ok((0..d)
        .map(|i| (2.0 / xi) * (0..d).map(|j| inv[j][i] * x0[j]).sum::<f64>())
        .collect())
}

/// Number of candidates `y` with
/// `y = (2/ξ)(Aᵀ)⁻¹ x_0 (|y_0|² − |y|²) + y_0` within `1e-8`.
pub fn gw_twist_count(x0: &[f64], y0: &[f64], a: &[Vec<f64>], xi: f64, candidates: &[Vec<f64>]) -> Result<usize> {
    let v = gw_direction(x0, a, xi)?;
    if y0.len() != v.len() {
        return Err(Error::DimensionMismatch("y0 dimension".into()));
    }
    let n0 = dot(y0, y0);
    Ok(candidates
        .iter()
        .filter(|y| {
            y.len() == v.len() && {
                let s = n0 - dot(y, y);
                let r: f64 = y
                    .iter()
                    .zip(&v)
                    .zip(y0)
                    .map(|((yi, vi), y0i)| (yi - (vi * s + y0i)).powi(2))
                    .sum();
                r.sqrt() <= TWIST_TOL
            }
        })
        .count())
}

/// The solutions of the twist equation: `y_0` and, when `x_0 ≠ 0`, the
/// second point on the line `y_0 + s v`.
pub fn gw_twist_roots(x0: &[f64], y0: &[f64], a: &[Vec<f64>], xi: f64) -> Result<Vec<Vec<f64>>> {
    let v = gw_direction(x0, a, xi)?;
    let vv = dot(&v, &v);
    let mut roots = vec![y0.to_vec()];
    if vv > 0.0 {
        let s = -(1.0 + 2.0 * dot(y0, &v)) / vv;
        if s.abs() > 0.0 {
            roots.push(y0.iter().zip(&v).map(|(y, vi)| y + s * vi).collect());
        }
    }
    Ok(roots)
}
