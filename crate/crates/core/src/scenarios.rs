//! Seeded generators and experiment drivers for the worked applications:
//! sphere reflection, nested shells, the surplus map formula, the
//! Monge+quadratic cost, the Gromov-Wasserstein twist and two-map
//! assemblies.
//!
//! Every report is a deterministic function of its [`ScenarioConfig`].

use std::collections::BTreeMap;
use std::fmt::Display;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{dot, gangbo_swiech_conjugates, gangbo_swiech_maps, sq_dist, CostKind, CostSpec, Sense};
use crate::error::{Error, Result};
use crate::extremality::{
    check_c_extreme, check_cyclical_monotonicity, detect_map_decomposition, fiber_report, gw_twist_count,
    CostTable, CycleOptions, Decomposition, OrderedPartition,
};
use crate::grid::MultiIndex;
use crate::instance::Instance;
use crate::lp::{
    self, certificate_from_witness, enumerate_vertices, oracle_enumerate, strictly_complementary,
    uniqueness_certificate, Polytope, SolveOptions, UniquenessCertificate, UniquenessStatus, FEAS_TOL,
};
use crate::measure::{Coupling, DiscreteMeasure, Space};
use crate::reduction::{reconstruct_bigth, reduce};
use crate::twomap::{
    assemble_three_marginal, extreme_assemblies, lij_from_coupling, lij_window, mix_assemblies, recover_theta,
    unique_condition, TwoMaps, TWOMAP_TOL,
};

/// Off-diagonal and product-form tolerance.
pub const EXACT_TOL: f64 = 1e-12;
/// Equal-cost tolerance for reflected and mixed plans.
pub const COST_GAP_TOL: f64 = 1e-10;
/// Bound on collinearity sines.
pub const SINE_TOL: f64 = 1e-6;
/// Total-variation bound for reconstructed plans.
pub const RECON_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScenarioKind {
    SphereReflection,
    NestedShells,
    GangboSwiech,
    MongeQuadratic,
    GromovWasserstein,
    TwoMapDemo,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::SphereReflection,
        ScenarioKind::NestedShells,
        ScenarioKind::GangboSwiech,
        ScenarioKind::MongeQuadratic,
        ScenarioKind::GromovWasserstein,
        ScenarioKind::TwoMapDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SphereReflection => "sphereReflection",
            ScenarioKind::NestedShells => "nestedShells",
            ScenarioKind::GangboSwiech => "gangboSwiech",
            ScenarioKind::MongeQuadratic => "mongeQuadratic",
            ScenarioKind::GromovWasserstein => "gromovWasserstein",
            ScenarioKind::TwoMapDemo => "twoMapDemo",
        }
    }

    /// Accepts the full names and the short CLI aliases.
    pub fn parse(s: &str) -> Option<ScenarioKind> {
        Some(match s {
            "sphere" | "sphereReflection" => ScenarioKind::SphereReflection,
            "shells" | "nestedShells" => ScenarioKind::NestedShells,
            "gs" | "gangboSwiech" => ScenarioKind::GangboSwiech,
            "monge" | "mongeQuadratic" => ScenarioKind::MongeQuadratic,
            "gw" | "gromovWasserstein" => ScenarioKind::GromovWasserstein,
            "twomap" | "twoMapDemo" => ScenarioKind::TwoMapDemo,
            _ => return None,
        })
    }
}

/// Parameters of one scenario run. Fields a kind does not use are ignored.
///
/// `sizes` per kind: sphere `[n, n, n_z]`, shells `[n_x, n_y, n_z]`,
/// surplus `[n; N]`, Monge `[n_x, n_y, n_z]`, GW `[n_x, n_y]`, two-map `[n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub dimension: usize,
    /// Shell radii, strictly increasing.
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub center: Vec<f64>,
    /// `d_1, d_2` with `X = {⟨n_0, x⟩ = d_1}` and `Y = {⟨n_0, y⟩ = d_2}`.
    #[serde(default)]
    pub plane_offsets: [f64; 2],
    #[serde(default)]
    pub normal: Vec<f64>,
    /// Equatorial sphere atoms (fixed points of the reflection).
    #[serde(default)]
    pub equator: usize,
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub a: Vec<Vec<f64>>,
    /// Per-atom `α` and `β` of the two-map demo; length 1 broadcasts.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Forces an X atom onto a Y atom in the Monge scenario.
    #[serde(default)]
    pub touching: bool,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        let mut c = ScenarioConfig {
            kind,
            seed,
            sizes: Vec::new(),
            dimension: 2,
            radii: Vec::new(),
            center: Vec::new(),
            plane_offsets: [0.0, 0.0],
            normal: Vec::new(),
            equator: 0,
            xi: 0.0,
            a: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            touching: false,
        };
        match kind {
            ScenarioKind::SphereReflection => {
                c.sizes = vec![6, 6, 6];
                c.dimension = 3;
            }
            ScenarioKind::NestedShells => {
                c.sizes = vec![4, 4, 8];
                c.dimension = 3;
                c.radii = vec![1.0];
                c.center = vec![0.0; 3];
                c.plane_offsets = [2.0, -1.5];
                c.normal = vec![0.0, 0.0, 1.0];
            }
            ScenarioKind::GangboSwiech => c.sizes = vec![8, 8, 8],
            ScenarioKind::MongeQuadratic => c.sizes = vec![6, 6, 6],
            ScenarioKind::GromovWasserstein => {
                c.sizes = vec![4, 8];
                c.xi = 1.0;
                c.a = vec![vec![1.0, 0.3], vec![-0.2, 0.8]];
            }
            ScenarioKind::TwoMapDemo => {
                c.sizes = vec![2];
                c.dimension = 1;
                c.alpha = vec![0.5];
                c.beta = vec![0.5];
            }
        }
        c
    }

    /// Nested-shell config with `radii.len()` shells and `n` plane atoms.
    pub fn shells(seed: u64, n: usize, radii: Vec<f64>) -> Self {
        let mut c = ScenarioConfig::new(ScenarioKind::NestedShells, seed);
        let l = radii.len().max(1);
        c.radii = radii;
        c.sizes = vec![n, n, if l == 1 { 2 * n } else { n * l }];
        c
    }

    /// Rescales `sizes` around a base atom count `n`, keeping the number of
    /// marginals.
    pub fn with_n(mut self, n: usize) -> Self {
        self.sizes = match self.kind {
            ScenarioKind::SphereReflection => vec![n, n, n],
            ScenarioKind::NestedShells => {
                let l = self.radii.len().max(1);
                vec![n, n, if l == 1 { 2 * n } else { n * l }]
            }
            ScenarioKind::GangboSwiech => vec![n; self.sizes.len().max(3)],
            ScenarioKind::MongeQuadratic => vec![n, n, n],
            ScenarioKind::GromovWasserstein => vec![n, 2 * n],
            ScenarioKind::TwoMapDemo => vec![n],
        };
        self
    }

    pub fn with_dimension(mut self, d: usize) -> Self {
        self.dimension = d;
        if self.kind == ScenarioKind::NestedShells {
            self.center = vec![0.0; d];
            self.normal = (0..d).map(|i| if i + 1 == d { 1.0 } else { 0.0 }).collect();
        }
        if self.kind == ScenarioKind::GromovWasserstein && self.a.len() != d {
            self.a = (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else if j == i + 1 { 0.3 } else { 0.0 }).collect())
                .collect();
        }
        self
    }

    fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidConfig(msg.into())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.contains(&0) {
            return Err(Self::invalid("sizes must be at least 1"));
        }
        if self.dimension == 0 {
            return Err(Self::invalid("dimension must be at least 1"));
        }
        let need = |len: usize| -> Result<()> {
            if self.sizes.len() != len {
                return Err(Self::invalid(format!(
                    "{} needs {len} sizes, got {}",
                    self.kind.name(),
                    self.sizes.len()
                )));
            }
            Ok(())
        };
        let d = self.dimension;
        match self.kind {
            ScenarioKind::SphereReflection => {
                need(3)?;
                if d != 3 {
                    return Err(Self::invalid("sphereReflection needs dimension 3"));
                }
                if self.sizes[0] != self.sizes[1] {
                    return Err(Self::invalid("X and Y share one point cloud"));
                }
                let nz = self.sizes[2];
                if self.equator > nz || !(nz - self.equator).is_multiple_of(2) {
                    return Err(Self::invalid("sphere atoms minus equator atoms must be even"));
                }
            }
            ScenarioKind::NestedShells => {
                need(3)?;
                if !(2..=3).contains(&d) {
                    return Err(Self::invalid("nestedShells needs dimension 2 or 3"));
                }
                if self.radii.is_empty() {
                    return Err(Self::invalid("at least one shell radius"));
                }
                if self.radii[0] <= 0.0 || self.radii.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Self::invalid("shell radii must be positive and strictly increasing"));
                }
                if !self.sizes[2].is_multiple_of(self.radii.len()) {
                    return Err(Self::invalid("sphere atoms must split evenly over the shells"));
                }
                if self.normal.len() != d || dot(&self.normal, &self.normal) == 0.0 {
                    return Err(Self::invalid("plane normal must be a nonzero vector of the ambient dimension"));
                }
                if self.center.len() != d {
                    return Err(Self::invalid("shell center dimension"));
                }
                if self.plane_offsets[0] == self.plane_offsets[1] {
                    return Err(Self::invalid("the two planes must be distinct"));
                }
            }
            ScenarioKind::GangboSwiech => {
                if self.sizes.len() < 3 {
                    return Err(Self::invalid("gangboSwiech needs at least 3 marginals"));
                }
            }
            ScenarioKind::MongeQuadratic => need(3)?,
            ScenarioKind::GromovWasserstein => {
                need(2)?;
                if self.xi == 0.0 {
                    return Err(Error::ZeroXi);
                }
                if self.a.len() != d || self.a.iter().any(|r| r.len() != d) {
                    return Err(Self::invalid(format!("matrix A must be {d}x{d}")));
                }
                crate::costs::invert(&self.a)?;
            }
            ScenarioKind::TwoMapDemo => {
                need(1)?;
                let n = self.sizes[0];
                for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
                    if v.len() != 1 && v.len() != n {
                        return Err(Self::invalid(format!("{name} must have length 1 or {n}")));
                    }
                    if let Some(&bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                        return Err(Error::OutOfRange(bad));
                    }
                }
            }
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Outward unit normals of the Z atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalField {
    pub normals: Vec<Vec<f64>>,
}

impl NormalField {
    /// `n(z) = (z − c)/|z − c|` for atoms on spheres centered at `center`.
    pub fn spheres(points: &[Vec<f64>], center: &[f64]) -> Result<Self> {
        let normals = points
            .iter()
            .map(|z| {
                let v: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
                let r = dot(&v, &v).sqrt();
                if r == 0.0 {
                    return Err(Error::InvalidConfig("atom at the shell center".into()));
                }
                Ok(v.into_iter().map(|a| a / r).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let field = NormalField { normals };
        field.check()?;
        Ok(field)
    }

    pub fn check(&self) -> Result<()> {
        for (i, n) in self.normals.iter().enumerate() {
            let len = dot(n, n).sqrt();
            if (len - 1.0).abs() > EXACT_TOL {
                return Err(Error::InvariantViolation(format!("normal {i} has length {len}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A hypothesis does not hold or a degeneracy was detected; the
    /// conclusions were not asserted.
    Flagged,
}

/// A plot-ready side table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn cell(v: impl Display) -> String {
    v.to_string()
}

fn support_table(plan: &Coupling) -> Table {
    let mut header: Vec<String> = (1..=plan.rank()).map(|k| format!("i{k}")).collect();
    header.push("mass".into());
    let mut t = Table {
        name: "support".into(),
        header,
        rows: Vec::new(),
    };
    for (idx, m) in plan.iter() {
        let mut row: Vec<String> = idx.iter().map(|i| cell(i + 1)).collect();
        row.push(cell(m));
        t.push(row);
    }
    t
}

/// Support size of the conditional over each atom of `axis`.
pub fn fiber_sizes(plan: &Coupling, axis: usize) -> Vec<usize> {
    let mut sizes = vec![0; plan.arities()[axis]];
    for idx in plan.support() {
        sizes[idx[axis]] += 1;
    }
    sizes
}

/// True when every charged atom of `axis` has exactly one support cell.
pub fn is_graph_over(plan: &Coupling, axis: usize) -> bool {
    fiber_sizes(plan, axis).iter().all(|&s| s <= 1)
}

fn uniform_measure(name: &str, points: Vec<Vec<f64>>) -> Result<DiscreteMeasure> {
    Ok(DiscreteMeasure::uniform(Space::new(name, points)?))
}

fn box_points(rng: &mut ChaCha8Rng, n: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..b)).collect())
        .collect()
}

fn disc_points(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)];
        if p[0] * p[0] + p[1] * p[1] < radius * radius {
            out.push(p);
        }
    }
    out
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// `k` points on the unit sphere of dimension `d ∈ {2, 3}`: a rotated
/// Fibonacci lattice in 3D, equally spaced angles in 2D.
fn sphere_lattice(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..k)
        .map(|i| {
            if d == 2 {
                let t = phase + std::f64::consts::TAU * i as f64 / k as f64;
                vec![t.cos(), t.sin()]
            } else {
                let h = 1.0 - (2.0 * i as f64 + 1.0) / k as f64;
                let r = (1.0 - h * h).sqrt();
                let t = phase + GOLDEN_ANGLE * i as f64;
                vec![r * t.cos(), r * t.sin(), h]
            }
        })
        .collect()
}

fn plan_is_feasible(instance: &Instance, plan: &Coupling) -> bool {
    Polytope::transport(&instance.weight_slices())
        .check_feasible(plan, FEAS_TOL)
        .is_ok()
}

// ---------------------------------------------------------------- sphere

/// A sphere-reflection instance and its reflection `R` on the Z atoms.
#[derive(Clone, Debug)]
pub struct SphereInstance {
    pub instance: Instance,
    pub reflection: Vec<usize>,
}

fn pairwise_quadratic() -> CostKind {
    CostKind::Custom {
        name: "pairwiseQuadratic".into(),
        f: Arc::new(|p: &[&[f64]]| sq_dist(p[0], p[1]) + sq_dist(p[0], p[2]) + sq_dist(p[1], p[2])),
    }
}

pub fn gen_sphere_reflection(config: &ScenarioConfig) -> Result<SphereInstance> {
    if config.kind != ScenarioKind::SphereReflection {
        return Err(Error::InvalidConfig("expected sphereReflection".into()));
    }
    config.validate()?;
    let mut rng = config.rng();
    let n = config.sizes[0];
    let plane: Vec<Vec<f64>> = disc_points(&mut rng, n, 0.9)
        .into_iter()
        .map(|p| vec![p[0], p[1], 0.0])
        .collect();
    let pairs = (config.sizes[2] - config.equator) / 2;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut z = Vec::with_capacity(config.sizes[2]);
    let mut reflection = Vec::with_capacity(config.sizes[2]);
    for i in 0..pairs {
        let h = (i as f64 + 0.5) / pairs as f64;
        let r = (1.0 - h * h).sqrt();
        let t = phase + GOLDEN_ANGLE * i as f64;
        let base = z.len();
        z.push(vec![r * t.cos(), r * t.sin(), h]);
        z.push(vec![r * t.cos(), r * t.sin(), -h]);
        reflection.push(base + 1);
        reflection.push(base);
    }
    let eq_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    for k in 0..config.equator {
        let t = eq_phase + std::f64::consts::TAU * k as f64 / config.equator as f64;
        reflection.push(z.len());
        z.push(vec![t.cos(), t.sin(), 0.0]);
    }
    let x = uniform_measure("X", plane.clone())?;
    let y = uniform_measure("Y", plane)?;
    let zm = uniform_measure("Z", z)?;
    let instance = Instance::new(vec![x, y, zm], CostSpec::new(pairwise_quadratic(), Sense::Min)?)?;
    Ok(SphereInstance { instance, reflection })
}

/// `(I ⊗ I ⊗ R)#λ`.
pub fn reflect_plan(plan: &Coupling, reflection: &[usize]) -> Result<Coupling> {
    plan.relabel_axis(2, reflection)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereReport {
    pub config: ScenarioConfig,
    pub reflection: Vec<usize>,
    pub reflection_is_involution: bool,
    pub weights_invariant: bool,
    pub value: f64,
    pub plan: Coupling,
    pub off_diagonal_mass: f64,
    pub diagonal: bool,
    pub charges_non_equatorial: bool,
    pub reflected_value: f64,
    pub reflected_cost_gap: f64,
    pub reflected_feasible: bool,
    pub reflected_optimal: bool,
    pub reflected_distinct: bool,
    pub mixture_optimal: bool,
    pub mixture_max_fiber: usize,
    pub certificate: UniquenessCertificate,
    pub witness_certificate: UniquenessCertificate,
    pub certificate_consistent: bool,
    pub verdict: Verdict,
}

pub fn run_sphere_reflection(config: &ScenarioConfig) -> Result<SphereReport> {
    let SphereInstance { instance, reflection } = gen_sphere_reflection(config)?;
    let involution = reflection.iter().enumerate().all(|(i, &r)| reflection[r] == i);
    let wz = instance.weights(2);
    let weights_invariant = reflection.iter().enumerate().all(|(i, &r)| wz[i] == wz[r]);
    let sol = lp::solve(&instance)?;
    let plan = sol.plan.clone();
    let off_diagonal_mass = plan.iter().filter(|(i, _)| i[0] != i[1]).fold(0.0, |s, (_, m)| s + m);
    let charges_non_equatorial = plan.support().any(|i| reflection[i[2]] != i[2]);
    let reflected = reflect_plan(&plan, &reflection)?;
    let reflected_value = reflected.integrate(instance.table());
    let gap = (reflected_value - sol.value).abs();
    let scale = instance.cost_scale();
    let reflected_feasible = plan_is_feasible(&instance, &reflected);
    let reflected_optimal = reflected_feasible && gap <= COST_GAP_TOL * scale;
    let reflected_distinct = reflected.total_variation(&plan) > EXACT_TOL;
    let mixture = plan.mix(&reflected, 0.5)?;
    let mixture_optimal = plan_is_feasible(&instance, &mixture)
        && (mixture.integrate(instance.table()) - sol.value).abs() <= COST_GAP_TOL * scale;
    let mixture_max_fiber = fiber_sizes(&mixture, 0).into_iter().max().unwrap_or(0);
    let certificate = uniqueness_certificate(&instance, &plan, &sol.potentials, sol.value)?;
    let witness_certificate = certificate_from_witness(&instance, &plan, sol.value, reflected);
    let certificate_consistent = if reflected_distinct {
        certificate.status == UniquenessStatus::NonUnique && witness_certificate.status == UniquenessStatus::NonUnique
    } else {
        witness_certificate.status != UniquenessStatus::NonUnique
    };
    let diagonal = off_diagonal_mass < EXACT_TOL;
    let mixture_ok = if reflected_distinct {
        mixture_optimal && mixture_max_fiber == 2
    } else {
        mixture_optimal
    };
    let pass = involution
        && weights_invariant
        && diagonal
        && reflected_optimal
        && reflected_distinct == charges_non_equatorial
        && mixture_ok
        && certificate_consistent;
    Ok(SphereReport {
        config: config.clone(),
        reflection,
        reflection_is_involution: involution,
        weights_invariant,
        value: sol.value,
        plan,
        off_diagonal_mass,
        diagonal,
        charges_non_equatorial,
        reflected_value,
        reflected_cost_gap: gap,
        reflected_feasible,
        reflected_optimal,
        reflected_distinct,
        mixture_optimal,
        mixture_max_fiber,
        certificate,
        witness_certificate,
        certificate_consistent,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

// ---------------------------------------------------------------- shells

#[derive(Clone, Debug)]
pub struct ShellInstance {
    pub instance: Instance,
    /// Shell of each Z atom.
    pub shell_of: Vec<usize>,
    pub normals: NormalField,
}

/// Orthonormal basis of the complement of `n`.
fn complement_basis(n: &[f64]) -> Vec<Vec<f64>> {
    let d = n.len();
    let len = dot(n, n).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![n.iter().map(|v| v / len).collect()];
    for e in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let l = dot(&v, &v).sqrt();
        if l > 1e-8 && basis.len() < d {
            basis.push(v.into_iter().map(|a| a / l).collect());
        }
    }
    basis.remove(0);
    basis
}

fn plane_points(rng: &mut ChaCha8Rng, n: usize, normal: &[f64], offset: f64) -> Vec<Vec<f64>> {
    let d = normal.len();
    let nn = dot(normal, normal);
    let base: Vec<f64> = normal.iter().map(|v| v * offset / nn).collect();
    let tangent = complement_basis(normal);
    (0..n)
        .map(|_| {
            let mut p = base.clone();
            for t in &tangent {
                let s = rng.gen_range(-1.0..1.0);
                p.iter_mut().zip(t).for_each(|(a, b)| *a += s * b);
            }
            debug_assert_eq!(p.len(), d);
            p
        })
        .collect()
}

pub fn gen_nested_shells(config: &ScenarioConfig) -> Result<ShellInstance> {
    if config.kind != ScenarioKind::NestedShells {
        return Err(Error::InvalidConfig("expected nestedShells".into()));
    }
    config.validate()?;
    let mut rng = config.rng();
    let d = config.dimension;
    let xs = plane_points(&mut rng, config.sizes[0], &config.normal, config.plane_offsets[0]);
    let ys = plane_points(&mut rng, config.sizes[1], &config.normal, config.plane_offsets[1]);
    let per_shell = config.sizes[2] / config.radii.len();
    let mut zs = Vec::with_capacity(config.sizes[2]);
    let mut shell_of = Vec::with_capacity(config.sizes[2]);
    for (l, &r) in config.radii.iter().enumerate() {
        for u in sphere_lattice(&mut rng, per_shell, d) {
            zs.push(u.iter().zip(&config.center).map(|(a, c)| c + r * a).collect::<Vec<f64>>());
            shell_of.push(l);
        }
    }
    let normals = NormalField::spheres(&zs, &config.center)?;
    let instance = Instance::new(
        vec![uniform_measure("X", xs)?, uniform_measure("Y", ys)?, uniform_measure("Z", zs)?],
        CostSpec::new(CostKind::Surplus, Sense::Max)?,
    )?;
    Ok(ShellInstance {
        instance,
        shell_of,
        normals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharingPair {
    pub z: usize,
    pub first: [usize; 2],
    pub second: [usize; 2],
    pub sine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellReport {
    pub config: ScenarioConfig,
    pub value: f64,
    pub plan: Coupling,
    pub shell_of: Vec<usize>,
    pub reduced_plan: Coupling,
    pub reduced_graph: bool,
    pub sharing_pairs: Vec<SharingPair>,
    pub max_sine: f64,
    pub collinear: bool,
    /// `|F(x, y)|` per charged `(x, y)`.
    pub fiber_sizes: Vec<([usize; 2], usize)>,
    pub c_p_extreme: bool,
    pub verdict: Verdict,
}

fn sine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    (1.0 - c * c).max(0.0).sqrt()
}

pub fn run_nested_shells(config: &ScenarioConfig) -> Result<ShellReport> {
    let ShellInstance {
        instance,
        shell_of,
        normals,
    } = gen_nested_shells(config)?;
    let sol = lp::solve(&instance)?;
    let potentials = strictly_complementary(&instance, &sol, SolveOptions::default())?;
    let reduced = reduce(&instance, &potentials, &[0, 1])?;
    let reduced_plan = lp::solve(&reduced.to_instance(&instance)?)?.plan;
    let reduced_graph = is_graph_over(&reduced_plan, 0);

    let mut by_z: BTreeMap<usize, Vec<[usize; 2]>> = BTreeMap::new();
    for idx in sol.plan.support() {
        by_z.entry(idx[2]).or_default().push([idx[0], idx[1]]);
    }
    let mut sharing_pairs = Vec::new();
    for (&z, owners) in &by_z {
        for (i, a) in owners.iter().enumerate() {
            for b in &owners[i + 1..] {
                let w: Vec<f64> = (0..config.dimension)
                    .map(|k| {
                        instance.point(1, b[1])[k] - instance.point(1, a[1])[k] + instance.point(0, b[0])[k]
                            - instance.point(0, a[0])[k]
                    })
                    .collect();
                sharing_pairs.push(SharingPair {
                    z,
                    first: *a,
                    second: *b,
                    sine: sine(&normals.normals[z], &w),
                });
            }
        }
    }
    let max_sine = sharing_pairs.iter().map(|p| p.sine).fold(0.0, f64::max);
    let collinear = max_sine < SINE_TOL;

    let mut blocks = vec![Vec::new(); config.radii.len()];
    for (z, &l) in shell_of.iter().enumerate() {
        blocks[l].push(z);
    }
    let partition = OrderedPartition::new(blocks, shell_of.len())?;
    let support: Vec<MultiIndex> = sol.plan.support().cloned().collect();
    let report = fiber_report(&support, CostTable::from(&instance), &[0, 1], Some(&partition))?;
    let c_p_extreme = check_c_extreme(&report).is_none();
    let fiber_sizes = report
        .per_atom
        .iter()
        .map(|(x, e)| ([x[0], x[1]], e.fiber.len()))
        .collect();
    let pass = reduced_graph && collinear && c_p_extreme;
    Ok(ShellReport {
        config: config.clone(),
        value: sol.value,
        plan: sol.plan,
        shell_of,
        reduced_plan,
        reduced_graph,
        sharing_pairs,
        max_sine,
        collinear,
        fiber_sizes,
        c_p_extreme,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

// ---------------------------------------------------------------- surplus

pub fn gen_gangbo_swiech(config: &ScenarioConfig) -> Result<Instance> {
    if config.kind != ScenarioKind::GangboSwiech {
        return Err(Error::InvalidConfig("expected gangboSwiech".into()));
    }
    config.validate()?;
    let mut rng = config.rng();
    let d = config.dimension;
    let lo = vec![-1.0; d];
    let hi = vec![1.0; d];
    let marginals = config
        .sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| uniform_measure(&format!("X{}", k + 1), box_points(&mut rng, n, &lo, &hi)))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(marginals, CostSpec::new(CostKind::GangboSwiech, Sense::Max)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedPairCheck {
    pub axis: usize,
    pub graph: bool,
    pub cyclically_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GangboSwiechScenarioReport {
    pub config: ScenarioConfig,
    pub value: f64,
    pub plan: Coupling,
    pub graph: bool,
    pub reduced: Vec<ReducedPairCheck>,
    pub reconstruction_tv: Option<f64>,
    pub reconstruction_error: Option<String>,
    pub maps: Vec<Vec<usize>>,
    pub tied_atoms: Vec<usize>,
    pub agreement: f64,
    pub max_point_distance: f64,
    pub uniqueness: UniquenessStatus,
    pub verdict: Verdict,
}

pub fn run_gangbo_swiech(config: &ScenarioConfig) -> Result<GangboSwiechScenarioReport> {
    let instance = gen_gangbo_swiech(config)?;
    let n = instance.n_axes();
    let sol = lp::solve(&instance)?;
    let potentials = strictly_complementary(&instance, &sol, SolveOptions::default())?;
    let graph = is_graph_over(&sol.plan, 0);
    let mut reduced = Vec::with_capacity(n - 1);
    for j in 1..n {
        let red = reduce(&instance, &potentials, &[0, j])?;
        let sub = red.to_instance(&instance)?;
        let plan = lp::solve(&sub)?.plan;
        let support: Vec<MultiIndex> = plan.support().cloned().collect();
        let cm = check_cyclical_monotonicity(
            &support,
            CostTable::from(&sub),
            Sense::Max,
            CycleOptions {
                seed: config.seed,
                ..CycleOptions::default()
            },
        )?;
        reduced.push(ReducedPairCheck {
            axis: j,
            graph: is_graph_over(&plan, 0),
            cyclically_monotone: cm.pass,
        });
    }
    let (reconstruction_tv, reconstruction_error) = match reconstruct_bigth(&instance, &potentials, n - 1) {
        Ok((plan, _)) => (Some(plan.total_variation(&sol.plan)), None),
        Err(e @ Error::NotAGraph(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let conj = gangbo_swiech_conjugates(&instance, &potentials, &sol.plan)?;
    let gs = gangbo_swiech_maps(&instance, &potentials, &sol.plan, &conj)?;
    let cert = uniqueness_certificate(&instance, &sol.plan, &potentials, sol.value)?;
    let structural = graph
        && reduced.iter().all(|r| r.graph && r.cyclically_monotone)
        && reconstruction_tv.is_some_and(|tv| tv < RECON_TOL)
        && gs.agreement == 1.0;
    let verdict = if !structural {
        Verdict::Fail
    } else if cert.status == UniquenessStatus::Unique {
        Verdict::Pass
    } else {
        Verdict::Flagged
    };
    Ok(GangboSwiechScenarioReport {
        config: config.clone(),
        value: sol.value,
        plan: sol.plan,
        graph,
        reduced,
        reconstruction_tv,
        reconstruction_error,
        maps: gs.maps,
        tied_atoms: gs.tied_atoms,
        agreement: gs.agreement,
        max_point_distance: gs.max_point_distance,
        uniqueness: cert.status,
        verdict,
    })
}

// ---------------------------------------------------------------- Monge

pub fn gen_monge_quadratic(config: &ScenarioConfig) -> Result<Instance> {
    if config.kind != ScenarioKind::MongeQuadratic {
        return Err(Error::InvalidConfig("expected mongeQuadratic".into()));
    }
    config.validate()?;
    let mut rng = config.rng();
    let d = config.dimension;
    let span = |a: f64, b: f64| -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![-1.0; d];
        let mut hi = vec![1.0; d];
        lo[0] = a;
        hi[0] = b;
        (lo, hi)
    };
    let (xl, xh) = span(-3.0, -1.0);
    let (yl, yh) = span(1.0, 3.0);
    let (zl, zh) = span(-1.0, 1.0);
    let xs = box_points(&mut rng, config.sizes[0], &xl, &xh);
    let mut ys = box_points(&mut rng, config.sizes[1], &yl, &yh);
    let zs = box_points(&mut rng, config.sizes[2], &zl, &zh);
    if config.touching {
        ys[0] = xs[0].clone();
    }
    Instance::new(
        vec![uniform_measure("X", xs)?, uniform_measure("Y", ys)?, uniform_measure("Z", zs)?],
        CostSpec::new(CostKind::MongeQuadratic, Sense::Min)?,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MongeReport {
    pub config: ScenarioConfig,
    pub min_xy_distance: f64,
    pub hypothesis_violated: bool,
    pub value: f64,
    pub plan: Coupling,
    pub graph: Option<bool>,
    /// Graph property of the reductions onto `{1, 2}` and `{1, 3}`.
    pub reduced_graphs: Option<[bool; 2]>,
    pub cyclically_monotone: Option<bool>,
    pub cycles_tested: usize,
    pub uniqueness: Option<UniquenessStatus>,
    pub verdict: Verdict,
}

pub fn run_monge_quadratic(config: &ScenarioConfig) -> Result<MongeReport> {
    let instance = gen_monge_quadratic(config)?;
    let min_xy_distance = (0..instance.arities()[0])
        .flat_map(|i| (0..instance.arities()[1]).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(instance.point(0, i), instance.point(1, j)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let hypothesis_violated = min_xy_distance <= 1e-9;
    let sol = lp::solve(&instance)?;
    if hypothesis_violated {
        return Ok(MongeReport {
            config: config.clone(),
            min_xy_distance,
            hypothesis_violated,
            value: sol.value,
            plan: sol.plan,
            graph: None,
            reduced_graphs: None,
            cyclically_monotone: None,
            cycles_tested: 0,
            uniqueness: None,
            verdict: Verdict::Flagged,
        });
    }
    let potentials = strictly_complementary(&instance, &sol, SolveOptions::default())?;
    let graph = is_graph_over(&sol.plan, 0);
    let mut reduced_graphs = [false; 2];
    for (slot, subset) in [[0, 1], [0, 2]].iter().enumerate() {
        let red = reduce(&instance, &potentials, subset)?;
        let plan = lp::solve(&red.to_instance(&instance)?)?.plan;
        reduced_graphs[slot] = is_graph_over(&plan, 0);
    }
    let support: Vec<MultiIndex> = sol.plan.support().cloned().collect();
    let cm = check_cyclical_monotonicity(
        &support,
        CostTable::from(&instance),
        Sense::Min,
        CycleOptions {
            max_cycle: 3,
            seed: config.seed,
            ..CycleOptions::default()
        },
    )?;
    let cert = uniqueness_certificate(&instance, &sol.plan, &potentials, sol.value)?;
    let pass = graph && reduced_graphs.iter().all(|&g| g) && cm.pass;
    Ok(MongeReport {
        config: config.clone(),
        min_xy_distance,
        hypothesis_violated,
        value: sol.value,
        plan: sol.plan,
        graph: Some(graph),
        reduced_graphs: Some(reduced_graphs),
        cyclically_monotone: Some(cm.pass),
        cycles_tested: cm.cycles_tested,
        uniqueness: Some(cert.status),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

// ---------------------------------------------------------------- GW

pub fn gen_gromov_wasserstein(config: &ScenarioConfig) -> Result<Instance> {
    if config.kind != ScenarioKind::GromovWasserstein {
        return Err(Error::InvalidConfig("expected gromovWasserstein".into()));
    }
    config.validate()?;
    let mut rng = config.rng();
    let d = config.dimension;
    let lo = vec![-1.0; d];
    let hi = vec![1.0; d];
    let xs = box_points(&mut rng, config.sizes[0], &lo, &hi);
    let ys = box_points(&mut rng, config.sizes[1], &lo, &hi);
    Instance::new(
        vec![uniform_measure("X", xs)?, uniform_measure("Y", ys)?],
        CostSpec::new(
            CostKind::GromovWasserstein {
                xi: config.xi,
                a: config.a.clone(),
            },
            Sense::Max,
        )?,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GwReport {
    pub config: ScenarioConfig,
    pub value: f64,
    pub plan: Coupling,
    pub fiber_sizes: Vec<usize>,
    pub max_fiber: usize,
    /// Twist solutions among the Y atoms for each support cell.
    pub twist_counts: Vec<([usize; 2], usize)>,
    pub max_twist_count: usize,
    pub verdict: Verdict,
}

pub fn run_gromov_wasserstein(config: &ScenarioConfig) -> Result<GwReport> {
    let instance = gen_gromov_wasserstein(config)?;
    let sol = lp::solve(&instance)?;
    let fibers = fiber_sizes(&sol.plan, 0);
    let max_fiber = fibers.iter().copied().max().unwrap_or(0);
    let candidates: Vec<Vec<f64>> = instance.marginal(1).space().points().to_vec();
    let mut twist_counts = Vec::new();
    for idx in sol.plan.support() {
        let c = gw_twist_count(
            instance.point(0, idx[0]),
            instance.point(1, idx[1]),
            &config.a,
            config.xi,
            &candidates,
        )?;
        twist_counts.push(([idx[0], idx[1]], c));
    }
    let max_twist_count = twist_counts.iter().map(|t| t.1).max().unwrap_or(0);
    let pass = max_fiber <= 2 && max_twist_count <= 2;
    Ok(GwReport {
        config: config.clone(),
        value: sol.value,
        plan: sol.plan,
        fiber_sizes: fibers,
        max_fiber,
        twist_counts,
        max_twist_count,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

// ---------------------------------------------------------------- two maps

/// A three-marginal instance whose reduced problems on `X × Y` and `X × Z`
/// have the prescribed two-map solutions.
#[derive(Clone, Debug)]
pub struct TwoMapInstance {
    pub instance: Instance,
    pub maps: TwoMaps,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
}

fn broadcast(v: &[f64], n: usize) -> Vec<f64> {
    if v.len() == 1 {
        vec![v[0]; n]
    } else {
        v.to_vec()
    }
}

/// Private atoms per `x`; one atom when the weight is 0 or 1.
fn private_atoms(w: &[f64], mu: &[f64]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut m1 = Vec::with_capacity(w.len());
    let mut m2 = Vec::with_capacity(w.len());
    let mut weights = Vec::new();
    for (x, &a) in w.iter().enumerate() {
        if a <= TWOMAP_TOL || a >= 1.0 - TWOMAP_TOL {
            let i = weights.len();
            weights.push(mu[x]);
            m1.push(i);
            m2.push(i);
        } else {
            let i = weights.len();
            weights.push(mu[x] * a);
            weights.push(mu[x] * (1.0 - a));
            m1.push(i);
            m2.push(i + 1);
        }
    }
    (m1, m2, weights)
}

fn line_space(name: &str, n: usize) -> Result<Space> {
    Space::new(name, (0..n).map(|i| vec![i as f64]).collect())
}

pub fn gen_two_map_demo(config: &ScenarioConfig) -> Result<TwoMapInstance> {
    if config.kind != ScenarioKind::TwoMapDemo {
        return Err(Error::InvalidConfig("expected twoMapDemo".into()));
    }
    config.validate()?;
    let n = config.sizes[0];
    let alpha = broadcast(&config.alpha, n);
    let beta = broadcast(&config.beta, n);
    let mu = vec![1.0 / n as f64; n];
    let (t1, t2, wy) = private_atoms(&alpha, &mu);
    let (g1, g2, wz) = private_atoms(&beta, &mu);
    let maps = TwoMaps {
        t1,
        t2,
        g1,
        g2,
        ny: wy.len(),
        nz: wz.len(),
    };
    let mut owner_y = vec![0; maps.ny];
    let mut owner_z = vec![0; maps.nz];
    for x in 0..n {
        owner_y[maps.t1[x]] = x;
        owner_y[maps.t2[x]] = x;
        owner_z[maps.g1[x]] = x;
        owner_z[maps.g2[x]] = x;
    }
    let mut table = Vec::with_capacity(n * maps.ny * maps.nz);
    for x in 0..n {
        for &oy in &owner_y {
            for &oz in &owner_z {
                table.push(f64::from(u8::from(oy != x)) + f64::from(u8::from(oz != x)));
            }
        }
    }
    let marginals = vec![
        DiscreteMeasure::new(line_space("X", n)?, mu.clone())?,
        DiscreteMeasure::new(line_space("Y", maps.ny)?, wy)?,
        DiscreteMeasure::new(line_space("Z", maps.nz)?, wz)?,
    ];
    let instance = Instance::from_table(marginals, table, Sense::Min)?;
    Ok(TwoMapInstance {
        instance,
        maps,
        alpha,
        beta,
        mu,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRow {
    pub x: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleFace {
    /// Optimal vertices of the full instance.
    pub optimal_vertices: usize,
    /// Vertices of `Π(λ^{XY}, γ) ∩ Π(λ^{XZ}, ν)`.
    pub constrained_vertices: usize,
    pub expected_vertices: usize,
    pub faces_match: bool,
    /// Every vertex is an assembly with `θ ∈ {0, 1}` per open atom.
    pub vertices_are_assemblies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoMapReport {
    pub config: ScenarioConfig,
    pub maps: TwoMaps,
    pub value: f64,
    pub plan: Coupling,
    pub plan_in_constrained_polytope: bool,
    pub plan_is_assembly: bool,
    pub windows: Vec<WindowRow>,
    /// Atoms whose window is a nondegenerate interval.
    pub open_atoms: usize,
    pub theta_one_is_lower: bool,
    pub interior_points_optimal: bool,
    pub oracle: Option<OracleFace>,
    pub unique_condition: bool,
    pub product_form_residual: Option<f64>,
    pub uniqueness: UniquenessStatus,
    pub verdict: Verdict,
}

pub fn run_two_map_demo(config: &ScenarioConfig) -> Result<TwoMapReport> {
    let TwoMapInstance {
        instance,
        maps,
        alpha,
        beta,
        mu,
    } = gen_two_map_demo(config)?;
    let n = mu.len();
    let sol = lp::solve(&instance)?;
    let poly = maps.constrained_polytope(&mu, &alpha, &beta)?;
    let plan_in_constrained_polytope = poly.check_feasible(&sol.plan, FEAS_TOL).is_ok();
    let (lower, upper) = extreme_assemblies(&alpha, &beta, &maps)?;
    let l = lij_from_coupling(&sol.plan, &maps, &mu)?;
    let l11: Vec<f64> = l.iter().map(|v| v[0]).collect();
    let theta = recover_theta(&l11, &lower, &upper);
    let rebuilt = assemble_three_marginal(&mix_assemblies(&lower, &upper, &theta)?, &mu)?;
    let plan_is_assembly = rebuilt.total_variation(&sol.plan) <= EXACT_TOL;
    let mut windows = Vec::with_capacity(n);
    let mut open_atoms = 0;
    for x in 0..n {
        let (lo, hi) = lij_window(lower.alpha[x], lower.beta[x])?;
        if hi - lo > TWOMAP_TOL {
            open_atoms += 1;
        }
        windows.push(WindowRow {
            x,
            alpha: lower.alpha[x],
            beta: lower.beta[x],
            lo,
            hi,
            theta: theta[x],
        });
    }
    let ones = mix_assemblies(&lower, &upper, &vec![1.0; n])?;
    let theta_one_is_lower = ones.l.iter().zip(&lower.l).all(|(a, b)| {
        a.iter().zip(b).all(|(u, v)| (u - v).abs() <= TWOMAP_TOL)
    });
    let scale = instance.cost_scale();
    let mut rng = config.rng();
    let mut interior_points_optimal = true;
    for _ in 0..20 {
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p = assemble_three_marginal(&mix_assemblies(&lower, &upper, &t)?, &mu)?;
        interior_points_optimal &= plan_is_feasible(&instance, &p)
            && (p.integrate(instance.table()) - sol.value).abs() <= COST_GAP_TOL * scale;
    }
    let arities = instance.arities();
    let within_caps = lp::within_oracle_caps(arities);
    let oracle = if within_caps {
        let all = oracle_enumerate(&instance)?;
        let best = lp::oracle_optimum(&all, Sense::Min).unwrap_or(f64::NAN);
        let optimal: Vec<&Coupling> = all
            .iter()
            .filter(|v| (v.value - best).abs() <= 1e-9 * scale)
            .map(|v| &v.plan)
            .collect();
        let constrained = enumerate_vertices(&poly)?;
        let same = |a: &Coupling, b: &Coupling| a.total_variation(b) <= EXACT_TOL;
        let faces_match = optimal.len() == constrained.len()
            && optimal.iter().all(|o| constrained.iter().any(|c| same(o, c)));
        let mut vertices_are_assemblies = true;
        for v in &constrained {
            let lv = lij_from_coupling(v, &maps, &mu)?;
            let tv = recover_theta(&lv.iter().map(|r| r[0]).collect::<Vec<_>>(), &lower, &upper);
            let corner = tv
                .iter()
                .all(|&t| t.abs() <= TWOMAP_TOL || (t - 1.0).abs() <= TWOMAP_TOL);
            let back = assemble_three_marginal(&mix_assemblies(&lower, &upper, &tv)?, &mu)?;
            vertices_are_assemblies &= corner && same(&back, v);
        }
        Some(OracleFace {
            optimal_vertices: optimal.len(),
            constrained_vertices: constrained.len(),
            expected_vertices: 1 << open_atoms,
            faces_match,
            vertices_are_assemblies,
        })
    } else {
        None
    };
    let cond = unique_condition(&lower.alpha, &lower.beta)?;
    let product_form_residual = cond.product_form.as_ref().map(|pf| {
        pf.iter()
            .zip(&l)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    });
    let cert = uniqueness_certificate(&instance, &sol.plan, &sol.potentials, sol.value)?;
    let mut pass = plan_in_constrained_polytope && plan_is_assembly && theta_one_is_lower && interior_points_optimal;
    if let Some(o) = &oracle {
        pass &= o.faces_match && o.vertices_are_assemblies && o.constrained_vertices == o.expected_vertices;
    }
    if let Some(r) = product_form_residual {
        pass &= r <= EXACT_TOL && cert.status == UniquenessStatus::Unique;
    }
    Ok(TwoMapReport {
        config: config.clone(),
        maps,
        value: sol.value,
        plan: sol.plan,
        plan_in_constrained_polytope,
        plan_is_assembly,
        windows,
        open_atoms,
        theta_one_is_lower,
        interior_points_optimal,
        oracle,
        unique_condition: cond.global,
        product_form_residual,
        uniqueness: cert.status,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

// ---------------------------------------------------------------- dispatch

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ScenarioReport {
    SphereReflection(SphereReport),
    NestedShells(ShellReport),
    GangboSwiech(GangboSwiechScenarioReport),
    MongeQuadratic(MongeReport),
    GromovWasserstein(GwReport),
    TwoMapDemo(TwoMapReport),
}

pub fn run(config: &ScenarioConfig) -> Result<ScenarioReport> {
    Ok(match config.kind {
        ScenarioKind::SphereReflection => ScenarioReport::SphereReflection(run_sphere_reflection(config)?),
        ScenarioKind::NestedShells => ScenarioReport::NestedShells(run_nested_shells(config)?),
        ScenarioKind::GangboSwiech => ScenarioReport::GangboSwiech(run_gangbo_swiech(config)?),
        ScenarioKind::MongeQuadratic => ScenarioReport::MongeQuadratic(run_monge_quadratic(config)?),
        ScenarioKind::GromovWasserstein => ScenarioReport::GromovWasserstein(run_gromov_wasserstein(config)?),
        ScenarioKind::TwoMapDemo => ScenarioReport::TwoMapDemo(run_two_map_demo(config)?),
    })
}

impl ScenarioReport {
    pub fn verdict(&self) -> Verdict {
        match self {
            ScenarioReport::SphereReflection(r) => r.verdict,
            ScenarioReport::NestedShells(r) => r.verdict,
            ScenarioReport::GangboSwiech(r) => r.verdict,
            ScenarioReport::MongeQuadratic(r) => r.verdict,
            ScenarioReport::GromovWasserstein(r) => r.verdict,
            ScenarioReport::TwoMapDemo(r) => r.verdict,
        }
    }

    pub fn plan(&self) -> &Coupling {
        match self {
            ScenarioReport::SphereReflection(r) => &r.plan,
            ScenarioReport::NestedShells(r) => &r.plan,
            ScenarioReport::GangboSwiech(r) => &r.plan,
            ScenarioReport::MongeQuadratic(r) => &r.plan,
            ScenarioReport::GromovWasserstein(r) => &r.plan,
            ScenarioReport::TwoMapDemo(r) => &r.plan,
        }
    }

    /// Pretty JSON; identical bytes for identical configs.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvariantViolation(format!("report serialization: {e}")))
    }

    /// Side tables: the support, plus kind-specific columns (fiber sizes,
    /// collinearity sines, map images, twist counts, window endpoints).
    pub fn tables(&self) -> Vec<Table> {
        let mut out = vec![support_table(self.plan())];
        match self {
            ScenarioReport::SphereReflection(r) => {
                let mut t = Table::new("reflection", &["z", "mirror"]);
                for (z, &m) in r.reflection.iter().enumerate() {
                    t.push(vec![cell(z + 1), cell(m + 1)]);
                }
                out.push(t);
            }
            ScenarioReport::NestedShells(r) => {
                let mut f = Table::new("fibers", &["x", "y", "fiber_size"]);
                for (xy, s) in &r.fiber_sizes {
                    f.push(vec![cell(xy[0] + 1), cell(xy[1] + 1), cell(s)]);
                }
                out.push(f);
                let mut c = Table::new("collinearity", &["z", "x", "y", "x2", "y2", "sine"]);
                for p in &r.sharing_pairs {
                    c.push(vec![
                        cell(p.z + 1),
                        cell(p.first[0] + 1),
                        cell(p.first[1] + 1),
                        cell(p.second[0] + 1),
                        cell(p.second[1] + 1),
                        cell(p.sine),
                    ]);
                }
                out.push(c);
            }
            ScenarioReport::GangboSwiech(r) => {
                let mut t = Table::new("maps", &["axis", "x", "image"]);
                for (j, m) in r.maps.iter().enumerate() {
                    for (x, &y) in m.iter().enumerate() {
                        t.push(vec![cell(j + 1), cell(x + 1), cell(y + 1)]);
                    }
                }
                out.push(t);
            }
            ScenarioReport::MongeQuadratic(r) => {
                let mut t = Table::new("fibers", &["x", "fiber_size"]);
                for (x, s) in fiber_sizes(&r.plan, 0).iter().enumerate() {
                    t.push(vec![cell(x + 1), cell(s)]);
                }
                out.push(t);
            }
            ScenarioReport::GromovWasserstein(r) => {
                let mut f = Table::new("fibers", &["x", "fiber_size"]);
                for (x, s) in r.fiber_sizes.iter().enumerate() {
                    f.push(vec![cell(x + 1), cell(s)]);
                }
                out.push(f);
                let mut t = Table::new("twist", &["x", "y", "count"]);
                for (xy, c) in &r.twist_counts {
                    t.push(vec![cell(xy[0] + 1), cell(xy[1] + 1), cell(c)]);
                }
                out.push(t);
            }
            ScenarioReport::TwoMapDemo(r) => {
                let mut t = Table::new("windows", &["x", "alpha", "beta", "lo", "hi", "theta"]);
                for w in &r.windows {
                    t.push(vec![
                        cell(w.x + 1),
                        cell(w.alpha),
                        cell(w.beta),
                        cell(w.lo),
                        cell(w.hi),
                        cell(w.theta),
                    ]);
                }
                out.push(t);
            }
        }
        out
    }
}

/// Mixture `½(λ + (I⊗I⊗R)#λ)` written as maps over X, when it decomposes.
pub fn sphere_mixture_maps(plan: &Coupling, reflection: &[usize]) -> Result<Decomposition> {
    let mixture = plan.mix(&reflect_plan(plan, reflection)?, 0.5)?;
    detect_map_decomposition(&mixture, 0, Some(2))
}
