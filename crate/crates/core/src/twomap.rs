//! Three-marginal plans assembled from two two-map plans on `X × Y` and
//! `X × Z`.
//!
//! Per atom `x` the plan is `Σ L_ij(x) δ_{T_i(x)} δ_{G_j(x)}` with
//! `L_11 + L_12 = α`, `L_21 + L_22 = 1 − α`, `L_11 + L_21 = β`,
//! `L_12 + L_22 = 1 − β`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::Polytope;
use crate::measure::Coupling;

/// Tolerance for `α, β ∈ {0, 1}` and for the linear system.
pub const TWOMAP_TOL: f64 = 1e-12;

fn check_unit(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(Error::OutOfRange(v));
    }
    Ok(())
}

/// `[max(0, α+β−1), min(α, β)]`, the admissible range of `L_11`.
pub fn lij_window(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    check_unit(alpha)?;
    check_unit(beta)?;
    let high = alpha.min(beta);
    Ok(((alpha - (1.0 - beta)).max(0.0).min(high), high))
}

/// `(L_11, L_12, L_21, L_22)` for a given `L_11`.
pub fn solve_lij(alpha: f64, beta: f64, l11: f64) -> [f64; 4] {
    [l11, alpha - l11, beta - l11, 1.0 - alpha - beta + l11]
}

/// The index maps `T_1, T_2: X → Y` and `G_1, G_2: X → Z`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TwoMaps {
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub ny: usize,
    pub nz: usize,
}

impl TwoMaps {
    pub fn len(&self) -> usize {
        self.t1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t1.is_empty()
    }

    fn validate(&self, atoms: usize) -> Result<()> {
        let ok_len = [&self.t1, &self.t2, &self.g1, &self.g2]
            .iter()
            .all(|m| m.len() == atoms);
        if !ok_len {
            return Err(Error::DimensionMismatch(format!("maps must cover {atoms} atoms")));
        }
        if self.t1.iter().chain(&self.t2).any(|&y| y >= self.ny)
            || self.g1.iter().chain(&self.g2).any(|&z| z >= self.nz)
        {
            return Err(Error::DimensionMismatch("map image out of range".into()));
        }
        Ok(())
    }

    /// `α, β` with atoms where the two maps agree coalesced to weight 1.
    pub fn coalesce(&self, alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a = alpha
            .iter()
            .enumerate()
            .map(|(x, &a)| if self.t1[x] == self.t2[x] { 1.0 } else { a })
            .collect();
        let b = beta
            .iter()
            .enumerate()
            .map(|(x, &b)| if self.g1[x] == self.g2[x] { 1.0 } else { b })
            .collect();
        (a, b)
    }

    /// `(α δ_{T_1} + (1−α) δ_{T_2}) ⊗ μ` on `X × Y`.
    pub fn xy_plan(&self, mu: &[f64], alpha: &[f64]) -> Result<Coupling> {
        two_point_plan(mu, alpha, &self.t1, &self.t2, self.ny)
    }

    /// `(β δ_{G_1} + (1−β) δ_{G_2}) ⊗ μ` on `X × Z`.
    pub fn xz_plan(&self, mu: &[f64], beta: &[f64]) -> Result<Coupling> {
        two_point_plan(mu, beta, &self.g1, &self.g2, self.nz)
    }

    /// `Π(λ^{XY}, γ) ∩ Π(λ^{XZ}, ν)` as a polytope on `X × Y × Z`.
    pub fn constrained_polytope(&self, mu: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Polytope> {
        let xy = self.xy_plan(mu, alpha)?;
        let xz = self.xz_plan(mu, beta)?;
        Polytope::from_couplings(&[mu.len(), self.ny, self.nz], &[(vec![0, 1], &xy), (vec![0, 2], &xz)])
    }
}

fn two_point_plan(mu: &[f64], w: &[f64], m1: &[usize], m2: &[usize], n: usize) -> Result<Coupling> {
    let mut entries = Vec::new();
    for (x, &m) in mu.iter().enumerate() {
        entries.push((vec![x, m1[x]], m * w[x]));
        entries.push((vec![x, m2[x]], m * (1.0 - w[x])));
    }
    Coupling::new(vec![mu.len(), n], entries)
}

/// Per-atom `(α, β, L)` data for one three-marginal plan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoMapAssembly {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub maps: TwoMaps,
    pub l: Vec<[f64; 4]>,
    pub theta: Option<Vec<f64>>,
}

impl TwoMapAssembly {
    /// Largest residual of the four linear equations over all atoms, and
    /// whether every `L_ij` lies in `[0, 1]` and `L_11` in its window.
    pub fn residual(&self) -> f64 {
        self.l
            .iter()
            .zip(self.alpha.iter().zip(&self.beta))
            .map(|(l, (&a, &b))| {
                [
                    l[0] + l[1] - a,
                    l[2] + l[3] - (1.0 - a),
                    l[0] + l[2] - b,
                    l[1] + l[3] - (1.0 - b),
                ]
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        let r = self.residual();
        if r > TWOMAP_TOL {
            return Err(Error::InvariantViolation(format!("L system residual {r:e}")));
        }
        for (x, (l, (&a, &b))) in self.l.iter().zip(self.alpha.iter().zip(&self.beta)).enumerate() {
            let (lo, hi) = lij_window(a, b)?;
            if l.iter().any(|v| *v < -TWOMAP_TOL || *v > 1.0 + TWOMAP_TOL)
                || l[0] < lo - TWOMAP_TOL
                || l[0] > hi + TWOMAP_TOL
            {
                return Err(Error::InvariantViolation(format!("L out of range at atom {x}")));
            }
        }
        Ok(())
    }
}

/// The assemblies with `L_11` at the lower and upper window endpoint.
pub fn extreme_assemblies(
    alpha: &[f64],
    beta: &[f64],
    maps: &TwoMaps,
) -> Result<(TwoMapAssembly, TwoMapAssembly)> {
    if alpha.len() != beta.len() {
        return Err(Error::DimensionMismatch("alpha and beta lengths differ".into()));
    }
    maps.validate(alpha.len())?;
    for &v in alpha.iter().chain(beta) {
        check_unit(v)?;
    }
    let (a, b) = maps.coalesce(alpha, beta);
    let mut lower = Vec::with_capacity(a.len());
    let mut upper = Vec::with_capacity(a.len());
    for (&ax, &bx) in a.iter().zip(&b) {
        let (lo, hi) = lij_window(ax, bx)?;
        lower.push(solve_lij(ax, bx, lo));
        upper.push(solve_lij(ax, bx, hi));
    }
    let make = |l| TwoMapAssembly {
        alpha: a.clone(),
        beta: b.clone(),
        maps: maps.clone(),
        l,
        theta: None,
    };
    Ok((make(lower), make(upper)))
}

/// `L_11 = θ L̄_11 + (1−θ) L̿_11` per atom, so `θ = 1` is the lower
/// assembly and `θ = 0` the upper one.
pub fn mix_assemblies(lower: &TwoMapAssembly, upper: &TwoMapAssembly, theta: &[f64]) -> Result<TwoMapAssembly> {
    if theta.len() != lower.l.len() || upper.l.len() != lower.l.len() {
        return Err(Error::DimensionMismatch("theta length".into()));
    }
    let mut l = Vec::with_capacity(theta.len());
    for (x, &t) in theta.iter().enumerate() {
        check_unit(t)?;
        let l11 = t * lower.l[x][0] + (1.0 - t) * upper.l[x][0];
        l.push(solve_lij(lower.alpha[x], lower.beta[x], l11));
    }
    Ok(TwoMapAssembly {
        alpha: lower.alpha.clone(),
        beta: lower.beta.clone(),
        maps: lower.maps.clone(),
        l,
        theta: Some(theta.to_vec()),
    })
}

/// Solves `L_11 = θ L̄_11 + (1−θ) L̿_11` for `θ`; collapsed windows give 0.
pub fn recover_theta(l11: &[f64], lower: &TwoMapAssembly, upper: &TwoMapAssembly) -> Vec<f64> {
    l11.iter()
        .enumerate()
        .map(|(x, &v)| {
            let (lo, hi) = (lower.l[x][0], upper.l[x][0]);
            if hi - lo <= TWOMAP_TOL {
                0.0
            } else {
                ((hi - v) / (hi - lo)).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// `L_ij(x) = λ(x, T_i(x), G_j(x)) / μ(x)`, counting coincident images once.
pub fn lij_from_coupling(plan: &Coupling, maps: &TwoMaps, mu: &[f64]) -> Result<Vec<[f64; 4]>> {
    maps.validate(mu.len())?;
    if plan.arities() != [mu.len(), maps.ny, maps.nz] {
        return Err(Error::DimensionMismatch("plan arities do not match the maps".into()));
    }
    Ok(mu
        .iter()
        .enumerate()
        .map(|(x, &m)| {
            if m <= 0.0 {
                return [0.0; 4];
            }
            let two_y = maps.t1[x] != maps.t2[x];
            let two_z = maps.g1[x] != maps.g2[x];
            let at = |y: usize, z: usize| plan.mass(&[x, y, z]) / m;
            [
                at(maps.t1[x], maps.g1[x]),
                if two_z { at(maps.t1[x], maps.g2[x]) } else { 0.0 },
                if two_y { at(maps.t2[x], maps.g1[x]) } else { 0.0 },
                if two_y && two_z { at(maps.t2[x], maps.g2[x]) } else { 0.0 },
            ]
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniqueCondition {
    pub per_atom: Vec<bool>,
    pub global: bool,
    /// `(αβ, α(1−β), (1−α)β, (1−α)(1−β))` per atom when `global`.
    pub product_form: Option<Vec<[f64; 4]>>,
}

/// Per atom: `α ∈ {0,1}` or `β ∈ {0,1}`.
pub fn unique_condition(alpha: &[f64], beta: &[f64]) -> Result<UniqueCondition> {
    if alpha.len() != beta.len() {
        return Err(Error::DimensionMismatch("alpha and beta lengths differ".into()));
    }
    let edge = |v: f64| v.abs() <= TWOMAP_TOL || (1.0 - v).abs() <= TWOMAP_TOL;
    let per_atom: Vec<bool> = alpha.iter().zip(beta).map(|(&a, &b)| edge(a) || edge(b)).collect();
    let global = per_atom.iter().all(|&u| u);
    let product_form = global.then(|| {
        alpha
            .iter()
            .zip(beta)
            .map(|(&a, &b)| [a * b, a * (1.0 - b), (1.0 - a) * b, (1.0 - a) * (1.0 - b)])
            .collect()
    });
    Ok(UniqueCondition {
        per_atom,
        global,
        product_form,
    })
}

/// `λ = (Σ L_ij(x) δ_{T_i(x)} δ_{G_j(x)}) ⊗ μ`.
pub fn assemble_three_marginal(assembly: &TwoMapAssembly, mu: &[f64]) -> Result<Coupling> {
    if mu.len() != assembly.l.len() {
        return Err(Error::DimensionMismatch("mu length".into()));
    }
    assembly.maps.validate(mu.len())?;
    assembly.check()?;
    let m = &assembly.maps;
    let mut entries = Vec::with_capacity(4 * mu.len());
    for (x, (&w, l)) in mu.iter().zip(&assembly.l).enumerate() {
        let cells = [
            (m.t1[x], m.g1[x], l[0]),
            (m.t1[x], m.g2[x], l[1]),
            (m.t2[x], m.g1[x], l[2]),
            (m.t2[x], m.g2[x], l[3]),
        ];
        for (y, z, v) in cells {
            entries.push((vec![x, y, z], w * v.max(0.0)));
        }
    }
    Coupling::new(vec![mu.len(), m.ny, m.nz], entries)
}
