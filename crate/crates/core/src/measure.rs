//! Discrete measures, couplings, marginalization, disintegration and gluing.
//!
//! Axes are 0-based throughout the library. Couplings are sparse: only
//! atoms with mass above [`PRUNE_FLOOR`] are stored, keyed by multi-index in
//! lexicographic order so iteration is deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{complement, project, Grid, MultiIndex};

/// Total-mass tolerance for probability vectors and couplings.
pub const MASS_TOL: f64 = 1e-12;
/// Masses at or below this are treated as solver dust and dropped.
pub const PRUNE_FLOOR: f64 = 1e-15;
/// Tolerance when checking that two couplings share a marginal.
pub const MARGINAL_MATCH_TOL: f64 = 1e-10;
/// Two atoms closer than this are considered the same point.
pub const POINT_TOL: f64 = 1e-12;

/// A finite set of atom locations in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Space {
    name: String,
    points: Vec<Vec<f64>>,
}

impl Space {
    pub fn new(name: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        let bad = |reason: String| Error::InvalidSpace {
            space: name.clone(),
            reason,
        };
        let Some(first) = points.first() else {
            return Err(bad("no points".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(bad("points must have dimension >= 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(bad(format!("point {i} has dimension {} != {dim}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("point {i} is not finite")));
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if dist(&points[i], &points[j]) <= POINT_TOL {
                    return Err(bad(format!("points {j} and {i} coincide")));
                }
            }
        }
        Ok(Space { name, points })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A probability vector attached to a [`Space`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    space: Space,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(space: Space, weights: Vec<f64>) -> Result<Self> {
        check_probability(space.name(), &weights, space.len())?;
        Ok(DiscreteMeasure { space, weights })
    }

    pub fn uniform(space: Space) -> Self {
        let n = space.len();
        DiscreteMeasure {
            space,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Keeps only positive-mass atoms; returns the kept original indices.
    pub fn drop_null_atoms(&self) -> (DiscreteMeasure, Vec<usize>) {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        let points = keep.iter().map(|&i| self.space.points[i].clone()).collect();
        let weights = keep.iter().map(|&i| self.weights[i]).collect();
        let space = Space {
            name: self.space.name.clone(),
            points,
        };
        (DiscreteMeasure { space, weights }, keep)
    }
}

pub(crate) fn check_probability(name: &str, weights: &[f64], len: usize) -> Result<()> {
    let bad = |reason: String| Error::InvalidWeights {
        space: name.to_string(),
        reason,
    };
    if weights.len() != len {
        return Err(bad(format!("{} weights for {len} atoms", weights.len())));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(bad(format!("weight {i} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(bad(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Validates an axis list: nonempty, strictly increasing, in range.
pub fn check_axes(axes: &[usize], rank: usize) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&index) = axes.iter().find(|&&a| a >= rank) {
        return Err(Error::IndexOutOfRange { index, rank });
    }
    if axes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnorderedSubset);
    }
    Ok(())
}

/// A sparse probability measure on a product of finite atom sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    arities: Vec<usize>,
    #[serde(with = "entry_list")]
    entries: BTreeMap<MultiIndex, f64>,
}

/// Entries as `[{"index": [..], "mass": m}, ..]`.
mod entry_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::grid::MultiIndex;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        index: MultiIndex,
        mass: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<MultiIndex, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(i, &m)| Entry { index: i.clone(), mass: m }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<MultiIndex, f64>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.index, e.mass)).collect())
    }
}

impl Coupling {
    /// Builds a coupling, summing duplicate indices and pruning dust.
    pub fn new(
        arities: Vec<usize>,
        entries: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<Self> {
        let c = Self::unchecked(arities, entries)?;
        let total = c.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidCoupling(format!("total mass {total}, expected 1")));
        }
        Ok(c)
    }

    /// Like [`Coupling::new`] without the unit-mass check. Used for
    /// intermediate sub-probability pieces.
    pub(crate) fn unchecked(
        arities: Vec<usize>,
        entries: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<Self> {
        let grid = Grid::new(&arities);
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (idx, mass) in entries {
            if !grid.contains(&idx) {
                return Err(Error::InvalidCoupling(format!(
                    "index {idx:?} outside arities {arities:?}"
                )));
            }
            if !mass.is_finite() || mass < -MASS_TOL {
                return Err(Error::InvalidCoupling(format!("mass {mass} at {idx:?}")));
            }
            *map.entry(idx).or_insert(0.0) += mass;
        }
        map.retain(|_, m| *m > PRUNE_FLOOR);
        Ok(Coupling {
            arities,
            entries: map,
        })
    }

    pub fn from_dense(arities: Vec<usize>, masses: &[f64]) -> Result<Self> {
        let grid = Grid::new(&arities);
        if masses.len() != grid.len() {
            return Err(Error::InvalidCoupling(format!(
                "{} dense entries for grid of {}",
                masses.len(),
                grid.len()
            )));
        }
        Self::new(
            arities,
            masses
                .iter()
                .enumerate()
                .filter(|(_, m)| **m > PRUNE_FLOOR)
                .map(|(lin, m)| (grid.unravel(lin), *m)),
        )
    }

    /// Product measure `w_1 ⊗ … ⊗ w_N`.
    pub fn product(weights: &[&[f64]]) -> Result<Self> {
        let arities: Vec<usize> = weights.iter().map(|w| w.len()).collect();
        let grid = Grid::new(&arities);
        let entries = grid.iter().map(|idx| {
            let m = idx.iter().zip(weights).map(|(&i, w)| w[i]).product::<f64>();
            (idx, m)
        });
        Self::new(arities, entries)
    }

    pub fn dirac(arities: Vec<usize>, idx: MultiIndex) -> Result<Self> {
        Self::new(arities, [(idx, 1.0)])
    }

    /// `(id × T)#μ`: mass `μ(x)` at `(x, T(x)...)`.
    pub fn graph(mu: &[f64], image_arities: &[usize], map: &[MultiIndex]) -> Result<Self> {
        let mut arities = vec![mu.len()];
        arities.extend_from_slice(image_arities);
        let entries = mu.iter().enumerate().map(|(x, &m)| {
            let mut idx = vec![x];
            idx.extend_from_slice(&map[x]);
            (idx, m)
        });
        Self::new(arities, entries)
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn rank(&self) -> usize {
        self.arities.len()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(&self.arities)
    }

    pub fn entries(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn support(&self) -> impl Iterator<Item = &MultiIndex> + '_ {
        self.entries.keys()
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn mass(&self, idx: &[usize]) -> f64 {
        self.entries.get(idx).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.arities[axis]];
        for (idx, m) in &self.entries {
            out[idx[axis]] += m;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let grid = self.grid();
        let mut out = vec![0.0; grid.len()];
        for (idx, m) in &self.entries {
            out[grid.linear(idx)] = *m;
        }
        out
    }

    /// `Σ λ(i) · table[i]` for a dense row-major table over the same grid.
    pub fn integrate(&self, table: &[f64]) -> f64 {
        let grid = self.grid();
        self.entries
            .iter()
            .map(|(idx, m)| m * table[grid.linear(idx)])
            .sum()
    }

    /// Total-variation distance `½ Σ |λ − τ|`.
    pub fn total_variation(&self, other: &Coupling) -> f64 {
        let mut sum = 0.0;
        for (idx, m) in &self.entries {
            sum += (m - other.mass(idx)).abs();
        }
        for (idx, m) in &other.entries {
            if !self.entries.contains_key(idx) {
                sum += m;
            }
        }
        0.5 * sum
    }

    /// Largest deviation of each axis-marginal from the expected vectors.
    pub fn marginal_deviation(&self, expected: &[&[f64]]) -> Option<(usize, f64)> {
        (0..self.rank())
            .map(|k| {
                let got = self.marginal(k);
                let dev = got
                    .iter()
                    .zip(expected[k])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                (k, dev)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// `θ·self + (1−θ)·other` on a common grid.
    pub fn mix(&self, other: &Coupling, theta: f64) -> Result<Coupling> {
        if self.arities != other.arities {
            return Err(Error::InvalidCoupling("arity mismatch in mixture".into()));
        }
        let entries = self
            .iter()
            .map(|(i, m)| (i.clone(), theta * m))
            .chain(other.iter().map(|(i, m)| (i.clone(), (1.0 - theta) * m)));
        Coupling::new(self.arities.clone(), entries)
    }

    /// Relabels atoms on one axis through `perm` (which must be a bijection).
    pub fn relabel_axis(&self, axis: usize, perm: &[usize]) -> Result<Coupling> {
        let entries = self.iter().map(|(idx, m)| {
            let mut j = idx.clone();
            j[axis] = perm[idx[axis]];
            (j, m)
        });
        Coupling::new(self.arities.clone(), entries)
    }
}

/// Projects a coupling onto a strictly increasing subset of its axes.
pub fn pushforward(plan: &Coupling, subset: &[usize]) -> Result<Coupling> {
    check_axes(subset, plan.rank())?;
    let arities = subset.iter().map(|&a| plan.arities[a]).collect();
    Coupling::new(arities, plan.iter().map(|(idx, m)| (project(idx, subset), m)))
}

/// A coupling split into a base marginal on the conditioning axes and one
/// conditional probability per positive-mass base atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Disintegration {
    conditioning: Vec<usize>,
    complement: Vec<usize>,
    base: Coupling,
    conditionals: BTreeMap<MultiIndex, Coupling>,
}

impl Disintegration {
    pub fn conditioning(&self) -> &[usize] {
        &self.conditioning
    }

    /// Axes of the source coupling carried by the conditionals.
    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn base(&self) -> &Coupling {
        &self.base
    }

    pub fn conditionals(&self) -> &BTreeMap<MultiIndex, Coupling> {
        &self.conditionals
    }

    /// Conditional at a base atom; `None` on zero-mass atoms.
    pub fn conditional(&self, base_atom: &[usize]) -> Option<&Coupling> {
        self.conditionals.get(base_atom)
    }

    /// Multiplies the conditionals back against the base.
    pub fn recombine(&self) -> Result<Coupling> {
        let rank = self.conditioning.len() + self.complement.len();
        let mut arities = vec![0; rank];
        for (k, &a) in self.conditioning.iter().enumerate() {
            arities[a] = self.base.arities[k];
        }
        let any = self.conditionals.values().next();
        for (k, &a) in self.complement.iter().enumerate() {
            arities[a] = any.map(|c| c.arities[k]).unwrap_or(1);
        }
        let mut entries = Vec::new();
        for (b, bm) in self.base.iter() {
            let cond = &self.conditionals[b];
            for (r, rm) in cond.iter() {
                let mut idx = vec![0; rank];
                for (k, &a) in self.conditioning.iter().enumerate() {
                    idx[a] = b[k];
                }
                for (k, &a) in self.complement.iter().enumerate() {
                    idx[a] = r[k];
                }
                entries.push((idx, bm * rm));
            }
        }
        Coupling::new(arities, entries)
    }
}

/// Disintegrates `plan` with respect to a proper subset of its axes.
pub fn disintegrate(plan: &Coupling, conditioning: &[usize]) -> Result<Disintegration> {
    check_axes(conditioning, plan.rank())?;
    if conditioning.len() == plan.rank() {
        return Err(Error::SubsetNotProper);
    }
    let complement = complement(plan.rank(), conditioning);
    let base = pushforward(plan, conditioning)?;
    let mut grouped: BTreeMap<MultiIndex, Vec<(MultiIndex, f64)>> = BTreeMap::new();
    for (idx, m) in plan.iter() {
        grouped
            .entry(project(idx, conditioning))
            .or_default()
            .push((project(idx, &complement), m));
    }
    let cond_arities: Vec<usize> = complement.iter().map(|&a| plan.arities[a]).collect();
    let mut conditionals = BTreeMap::new();
    for (b, bm) in base.iter() {
        let Some(items) = grouped.remove(b) else {
            continue;
        };
        let cond = Coupling::unchecked(
            cond_arities.clone(),
            items.into_iter().map(|(r, m)| (r, m / bm)),
        )?;
        conditionals.insert(b.clone(), renormalize(cond));
    }
    Ok(Disintegration {
        conditioning: conditioning.to_vec(),
        complement,
        base,
        conditionals,
    })
}

fn renormalize(mut c: Coupling) -> Coupling {
    let total = c.total_mass();
    if total > 0.0 {
        for m in c.entries.values_mut() {
            *m /= total;
        }
    }
    c
}

/// Glues `left` on `X × Y` and `right` on `X × Z` along their common first
/// axis: the conditional over each `x` is the product of the two input
/// conditionals. Output axes are `(x, left tail…, right tail…)`.
pub fn glue(left: &Coupling, right: &Coupling) -> Result<Coupling> {
    if left.rank() < 2 || right.rank() < 2 {
        return Err(Error::InvalidCoupling("gluing needs couplings with >= 2 axes".into()));
    }
    let mu_l = left.marginal(0);
    let mu_r = right.marginal(0);
    if mu_l.len() != mu_r.len() {
        return Err(Error::MarginalMismatch {
            axis: 0,
            max_deviation: f64::INFINITY,
        });
    }
    let dev = mu_l
        .iter()
        .zip(&mu_r)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if dev > MARGINAL_MATCH_TOL {
        return Err(Error::MarginalMismatch {
            axis: 0,
            max_deviation: dev,
        });
    }
    let dl = disintegrate(left, &[0])?;
    let dr = disintegrate(right, &[0])?;
    let mut arities = left.arities.clone();
    arities.extend_from_slice(&right.arities[1..]);
    let mut entries = Vec::new();
    for (b, m) in dl.base.iter() {
        let (Some(cl), Some(cr)) = (dl.conditional(b), dr.conditional(b)) else {
            continue;
        };
        for (y, my) in cl.iter() {
            for (z, mz) in cr.iter() {
                let mut idx = b.clone();
                idx.extend_from_slice(y);
                idx.extend_from_slice(z);
                entries.push((idx, m * my * mz));
            }
        }
    }
    Coupling::new(arities, entries)
}

/// A deterministic block of axes whose values are a function of the base atom.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMap {
    /// Global axes filled by this map, in order.
    pub axes: Vec<usize>,
    /// Base atom → image multi-index over `axes`.
    pub images: BTreeMap<MultiIndex, MultiIndex>,
}

/// A residual random block: the conditionals of `disintegration`, placed on
/// `axes` of the assembled coupling.
#[derive(Clone, Copy, Debug)]
pub struct Residual<'a> {
    pub axes: &'a [usize],
    pub disintegration: &'a Disintegration,
}

/// Builds `(∏ δ_{T_j(b)} × ρ^b) ⊗ base` over `arities`.
pub fn assemble_product_conditional(
    arities: &[usize],
    base_axes: &[usize],
    base: &Coupling,
    maps: &[BlockMap],
    residual: Option<Residual<'_>>,
) -> Result<Coupling> {
    let rank = arities.len();
    let mut covered = vec![false; rank];
    let mut mark = |axes: &[usize]| -> Result<()> {
        for &a in axes {
            if a >= rank {
                return Err(Error::IndexOutOfRange { index: a, rank });
            }
            if covered[a] {
                return Err(Error::InvariantViolation(format!("axis {a} assigned twice")));
            }
            covered[a] = true;
        }
        Ok(())
    };
    mark(base_axes)?;
    for m in maps {
        mark(&m.axes)?;
    }
    if let Some(r) = residual {
        mark(r.axes)?;
        let rb = r.disintegration.base();
        if rb.arities() != base.arities() {
            return Err(Error::MarginalMismatch {
                axis: base_axes[0],
                max_deviation: f64::INFINITY,
            });
        }
        let dev = base.total_variation(rb) * 2.0;
        if dev > MARGINAL_MATCH_TOL {
            return Err(Error::MarginalMismatch {
                axis: base_axes[0],
                max_deviation: dev,
            });
        }
    }
    if let Some(a) = covered.iter().position(|c| !c) {
        return Err(Error::InvariantViolation(format!("axis {a} not assigned")));
    }
    let mut entries = Vec::new();
    for (b, bm) in base.iter() {
        let mut idx = vec![0; rank];
        for (k, &a) in base_axes.iter().enumerate() {
            idx[a] = b[k];
        }
        for m in maps {
            let img = m
                .images
                .get(b)
                .ok_or_else(|| Error::MapDomainGap(b.clone()))?;
            for (k, &a) in m.axes.iter().enumerate() {
                idx[a] = img[k];
            }
        }
        match residual {
            None => entries.push((idx, bm)),
            Some(r) => {
                let cond = r
                    .disintegration
                    .conditional(b)
                    .ok_or_else(|| Error::MapDomainGap(b.clone()))?;
                for (rest, rm) in cond.iter() {
                    let mut full = idx.clone();
                    for (k, &a) in r.axes.iter().enumerate() {
                        full[a] = rest[k];
                    }
                    entries.push((full, bm * rm));
                }
            }
        }
    }
    Coupling::new(arities.to_vec(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn space_rejects_duplicates_and_ragged_points() {
        assert!(Space::new("X", vec![vec![0.0], vec![0.0]]).is_err());
        assert!(Space::new("X", vec![vec![0.0], vec![1.0, 2.0]]).is_err());
        assert!(Space::new("X", vec![]).is_err());
        assert!(Space::new("X", vec![vec![0.0], vec![1.0]]).is_ok());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let s = Space::new("X", vec![vec![0.0], vec![1.0]]).unwrap();
        let err = DiscreteMeasure::new(s.clone(), vec![0.5, 0.4]).unwrap_err();
        assert!(err.to_string().contains("weights sum"));
        assert!(DiscreteMeasure::new(s.clone(), vec![-0.5, 1.5]).is_err());
        let m = DiscreteMeasure::new(s, vec![0.0, 1.0]).unwrap();
        let (kept, idx) = m.drop_null_atoms();
        assert_eq!(idx, vec![1]);
        assert_eq!(kept.weights(), &[1.0]);
    }

    #[test]
    fn coupling_prunes_dust_and_checks_mass() {
        let c = Coupling::new(vec![2, 2], [(vec![0, 0], 1.0), (vec![1, 1], 1e-16)]).unwrap();
        assert_eq!(c.support_len(), 1);
        assert!(Coupling::new(vec![2, 2], [(vec![0, 0], 0.9)]).is_err());
        assert!(Coupling::new(vec![2, 2], [(vec![2, 0], 1.0)]).is_err());
    }

    #[test]
    fn pushforward_of_product_is_product() {
        let h = [0.5, 0.5];
        let p = Coupling::product(&[&h, &h, &h]).unwrap();
        let q = pushforward(&p, &[0, 2]).unwrap();
        assert_eq!(q, Coupling::product(&[&h, &h]).unwrap());
    }

    #[test]
    fn pushforward_of_dirac() {
        let d = Coupling::dirac(vec![2, 2, 2], vec![0, 1, 1]).unwrap();
        let q = pushforward(&d, &[1, 2]).unwrap();
        assert_eq!(q, Coupling::dirac(vec![2, 2], vec![1, 1]).unwrap());
    }

    #[test]
    fn pushforward_errors() {
        let d = Coupling::dirac(vec![2, 2, 2], vec![0, 1, 1]).unwrap();
        assert_eq!(pushforward(&d, &[]), Err(Error::EmptySubset));
        assert!(matches!(
            pushforward(&d, &[0, 3]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert_eq!(pushforward(&d, &[1, 0]), Err(Error::UnorderedSubset));
    }

    #[test]
    fn disintegrating_a_product_gives_the_other_factor() {
        let mu = [0.25, 0.75];
        let nu = [0.1, 0.2, 0.7];
        let p = Coupling::product(&[&mu, &nu]).unwrap();
        let d = disintegrate(&p, &[0]).unwrap();
        for c in d.conditionals().values() {
            assert!(close(&c.marginal(0), &nu, 1e-15));
        }
    }

    #[test]
    fn disintegrating_a_graph_gives_diracs() {
        let mu = [0.2, 0.3, 0.5];
        let t = vec![vec![2], vec![0], vec![1]];
        let g = Coupling::graph(&mu, &[3], &t).unwrap();
        let d = disintegrate(&g, &[0]).unwrap();
        for (x, c) in d.conditionals() {
            assert_eq!(c.support_len(), 1);
            assert_eq!(c.mass(&t[x[0]]), 1.0);
        }
    }

    #[test]
    fn disintegrate_rejects_full_subset() {
        let d = Coupling::dirac(vec![2, 2], vec![0, 1]).unwrap();
        assert_eq!(disintegrate(&d, &[0, 1]).unwrap_err(), Error::SubsetNotProper);
        assert_eq!(disintegrate(&d, &[]).unwrap_err(), Error::EmptySubset);
    }

    #[test]
    fn zero_mass_atoms_have_no_conditional() {
        let c = Coupling::new(vec![3, 2], [(vec![0, 0], 0.5), (vec![2, 1], 0.5)]).unwrap();
        let d = disintegrate(&c, &[0]).unwrap();
        assert!(d.conditional(&[1]).is_none());
        assert_eq!(d.conditionals().len(), 2);
    }

    #[test]
    fn independent_gluing() {
        let mu = [0.3, 0.7];
        let a = Coupling::product(&[&mu, &mu]).unwrap();
        let g = glue(&a, &a).unwrap();
        let expect = Coupling::product(&[&mu, &mu, &mu]).unwrap();
        assert!(g.total_variation(&expect) < 1e-15);
    }

    #[test]
    fn glue_rejects_mismatched_base() {
        let a = Coupling::product(&[&[0.5, 0.5], &[1.0]]).unwrap();
        let b = Coupling::product(&[&[0.4, 0.6], &[1.0]]).unwrap();
        assert!(matches!(glue(&a, &b), Err(Error::MarginalMismatch { axis: 0, .. })));
    }

    #[test]
    fn assembly_identity_and_graph() {
        let mu = [0.5, 0.5];
        let c = Coupling::new(
            vec![2, 2, 3],
            [
                (vec![0, 0, 1], 0.25),
                (vec![0, 1, 2], 0.25),
                (vec![1, 1, 0], 0.5),
            ],
        )
        .unwrap();
        let d = disintegrate(&c, &[0]).unwrap();
        let out = assemble_product_conditional(
            &[2, 2, 3],
            &[0],
            d.base(),
            &[],
            Some(Residual {
                axes: &[1, 2],
                disintegration: &d,
            }),
        )
        .unwrap();
        assert!(out.total_variation(&c) < 1e-15);

        let base = Coupling::new(vec![2], [(vec![0], 0.5), (vec![1], 0.5)]).unwrap();
        let images: BTreeMap<_, _> = [(vec![0], vec![1, 2]), (vec![1], vec![0, 0])].into();
        let out = assemble_product_conditional(
            &[2, 2, 3],
            &[0],
            &base,
            &[BlockMap {
                axes: vec![1, 2],
                images,
            }],
            None,
        )
        .unwrap();
        let expect = Coupling::graph(&mu, &[2, 3], &[vec![1, 2], vec![0, 0]]).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn assembly_reports_map_gaps() {
        let base = Coupling::new(vec![2], [(vec![0], 0.5), (vec![1], 0.5)]).unwrap();
        let images: BTreeMap<_, _> = [(vec![0], vec![1])].into();
        let err = assemble_product_conditional(
            &[2, 2],
            &[0],
            &base,
            &[BlockMap {
                axes: vec![1],
                images,
            }],
            None,
        )
        .unwrap_err();
        assert_eq!(err, Error::MapDomainGap(vec![1]));
    }
}
