//! Builtin cost families and discrete convex conjugates.

mod gangbo_swiech;

pub use gangbo_swiech::{gangbo_swiech_conjugates, gangbo_swiech_maps, GangboSwiechReport};

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization sense of a transport problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Min,
    Max,
}

impl Sense {
    /// +1 for minimization, −1 for maximization: multiply a cost by this to
    /// obtain the equivalent minimization cost.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }

    /// True if `a` is strictly better than `b` by more than `tol`.
    pub fn better(self, a: f64, b: f64, tol: f64) -> bool {
        match self {
            Sense::Min => a < b - tol,
            Sense::Max => a > b + tol,
        }
    }
}

pub type CostFn = Arc<dyn Fn(&[&[f64]]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    /// Explicit dense row-major table over the full grid.
    Tensor(Vec<f64>),
    /// `Σ_{i<j} ⟨x_i, x_j⟩`.
    Surplus,
    /// `½ Σ_{i<j} |x_i − x_j|²`.
    Attractive,
    /// `−½ Σ_{i<j} |x_i − x_j|²`.
    Repulsive,
    /// The surplus cost, named for the map-formula workflow.
    GangboSwiech,
    /// `|x − y| + |x − z|² + |y − z|²` (three marginals).
    MongeQuadratic,
    /// `|x|²|y|² + ξ⟨Ax, y⟩` (two marginals).
    GromovWasserstein { xi: f64, a: Vec<Vec<f64>> },
    Custom { name: String, f: CostFn },
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Tensor(v) => write!(f, "Tensor({} values)", v.len()),
            CostKind::GromovWasserstein { xi, a } => {
                write!(f, "GromovWasserstein {{ xi: {xi}, a: {a:?} }}")
            }
            CostKind::Custom { name, .. } => write!(f, "Custom({name})"),
            other => f.write_str(other.name()),
        }
    }
}

impl CostKind {
    pub fn name(&self) -> &str {
        match self {
            CostKind::Tensor(_) => "tensor",
            CostKind::Surplus => "surplus",
            CostKind::Attractive => "attractive",
            CostKind::Repulsive => "repulsive",
            CostKind::GangboSwiech => "gangboSwiech",
            CostKind::MongeQuadratic => "mongeQuadratic",
            CostKind::GromovWasserstein { .. } => "gromovWasserstein",
            CostKind::Custom { name, .. } => name,
        }
    }

    pub fn is_surplus(&self) -> bool {
        matches!(self, CostKind::Surplus | CostKind::GangboSwiech)
    }
}

#[derive(Clone, Debug)]
pub struct CostSpec {
    pub kind: CostKind,
    pub sense: Sense,
}

impl CostSpec {
    pub fn new(kind: CostKind, sense: Sense) -> Result<Self> {
        if let CostKind::GromovWasserstein { xi, a } = &kind {
            if *xi == 0.0 {
                return Err(Error::ZeroXi);
            }
            invert(a)?;
        }
        if let CostKind::Tensor(v) = &kind {
            if let Some(i) = v.iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFiniteCost(vec![i]));
            }
        }
        Ok(CostSpec { kind, sense })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Inverse of a square matrix given by rows; errors when `|det| ≤ 1e-10`.
pub fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("matrix must be square and nonempty".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let det = m.determinant();
    if det.abs() <= 1e-10 {
        return Err(Error::SingularMatrix(det));
    }
    let inv = m
        .try_inverse()
        .ok_or(Error::SingularMatrix(det))?;
    Ok((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

pub(crate) fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

/// Evaluates a builtin cost at one point per axis.
pub fn evaluate(spec: &CostSpec, points: &[&[f64]]) -> Result<f64> {
    evaluate_kind(&spec.kind, points)
}

pub(crate) fn evaluate_kind(kind: &CostKind, points: &[&[f64]]) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("no points".into()));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch("points have different dimensions".into()));
    }
    let pairs = |f: &dyn Fn(&[f64], &[f64]) -> f64| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += f(points[i], points[j]);
            }
        }
        s
    };
    Ok(match kind {
        CostKind::Tensor(_) => {
            return Err(Error::DimensionMismatch(
                "tensor costs are evaluated by index, not by point".into(),
            ))
        }
        CostKind::Surplus | CostKind::GangboSwiech => pairs(&dot),
        CostKind::Attractive => 0.5 * pairs(&sq_dist),
        CostKind::Repulsive => -0.5 * pairs(&sq_dist),
        CostKind::MongeQuadratic => {
            if n != 3 {
                return Err(Error::DimensionMismatch(format!(
                    "mongeQuadratic needs 3 marginals, got {n}"
                )));
            }
            let (x, y, z) = (points[0], points[1], points[2]);
            sq_dist(x, y).sqrt() + sq_dist(x, z) + sq_dist(y, z)
        }
        CostKind::GromovWasserstein { xi, a } => {
            if n != 2 {
                return Err(Error::DimensionMismatch(format!(
                    "gromovWasserstein needs 2 marginals, got {n}"
                )));
            }
            if a.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "matrix is {}x{}, points have dimension {d}",
                    a.len(),
                    a.len()
                )));
            }
            let (x, y) = (points[0], points[1]);
            dot(x, x) * dot(y, y) + xi * dot(&mat_vec(a, x), y)
        }
        CostKind::Custom { f, .. } => f(points),
    })
}

/// Sampled convex function `u` together with its discrete Legendre
/// transform `u*(s) = max_t ⟨s, t⟩ − u(t)` over the samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateTable {
    samples: Vec<Vec<f64>>,
    values: Vec<f64>,
}

/// Value and maximizing sample of a conjugate evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateValue {
    pub value: f64,
    pub argmax: usize,
    /// Other samples attaining the max within the tie tolerance.
    pub ties: Vec<usize>,
}

const CONJUGATE_TIE_TOL: f64 = 1e-10;

impl ConjugateTable {
    pub fn new(samples: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTable);
        }
        if samples.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples but {} values",
                samples.len(),
                values.len()
            )));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::DimensionMismatch("samples have different dimensions".into()));
        }
        Ok(ConjugateTable { samples, values })
    }

    pub fn from_fn(samples: Vec<Vec<f64>>, u: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = samples.iter().map(|t| u(t)).collect();
        Self::new(samples, values)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evaluates `u*(s)`; ties are broken by the least sample index.
pub fn legendre_conjugate(table: &ConjugateTable, s: &[f64]) -> Result<ConjugateValue> {
    if table.samples.is_empty() {
        return Err(Error::EmptyTable);
    }
    if s.len() != table.samples[0].len() {
        return Err(Error::DimensionMismatch("query dimension".into()));
    }
    let scores: Vec<f64> = table
        .samples
        .iter()
        .zip(&table.values)
        .map(|(t, u)| dot(s, t) - u)
        .collect();
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    let value = scores[best];
    let scale = 1.0 + value.abs();
    let ties = scores
        .iter()
        .enumerate()
        .filter(|&(i, &v)| i != best && value - v <= CONJUGATE_TIE_TOL * scale)
        .map(|(i, _)| i)
        .collect();
    Ok(ConjugateValue {
        value,
        argmax: best,
        ties,
    })
}
