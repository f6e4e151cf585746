use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use momt_core::extremality::{check_c_extreme, check_cyclical_monotonicity, fiber_report, CostTable, CycleOptions};
use momt_core::lp::{
    self, is_transport_vertex, oracle_enumerate, oracle_optimum, strictly_complementary, uniqueness_certificate,
    MinimizingSet, Potentials, Solution, SolveOptions, within_oracle_caps, ACTIVE_TOL, FEAS_TOL, ORACLE_MAX_ATOMS, ORACLE_MAX_CELLS,
};
use momt_core::reduction::{reduce, verify_reduction_optimality, ReductionReport};
use momt_core::scenarios::{self, ScenarioConfig, ScenarioKind, Table};
use momt_core::Instance;

use crate::error::CliError;
use crate::schema::*;

/// Default acceptance tolerance for duality and slackness.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Oracle agreement tolerance, relative to the cost scale.
pub const ORACLE_TOL: f64 = 1e-9;

pub struct Loaded {
    pub file: InstanceFile,
    pub instance: Instance,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Schema(format!("{}: not valid UTF-8", path.display())))?;
    let file = InstanceFile::parse(&text, &path.display().to_string())?;
    let instance = file.to_instance()?;
    Ok(Loaded {
        file,
        instance,
        sha256: sha256_hex(&bytes),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `text` to `out`, or prints it.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

/// Parses a 1-based comma list such as `1,2` into 0-based axes.
pub fn parse_subset(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(CliError::Usage(format!("--subset: `{t}` is not a positive index"))),
            }
        })
        .collect()
}

fn duality_check(instance: &Instance, sol: &Solution, tol: f64) -> DualityCheck {
    let slackness = sol
        .plan
        .support()
        .map(|i| (instance.cost_at(i) - sol.potentials.sum_at(i)).abs())
        .fold(0.0, f64::max);
    let gap = sol.duality_gap();
    let max_violation = sol.potentials.max_violation(instance);
    let scaled = tol * instance.cost_scale();
    DualityCheck {
        dual_value: sol.dual_value,
        gap,
        slackness,
        max_violation,
        pass: gap <= scaled && slackness <= scaled && max_violation <= scaled,
    }
}

fn result_file(
    loaded: &Loaded,
    sol: &Solution,
    potentials: &Potentials,
    certificates: Certificates,
    seed: Option<u64>,
    tol: f64,
) -> ResultFile {
    let kept = loaded.instance.kept_atoms();
    let file_arities: Vec<usize> = loaded.file.spaces.iter().map(|s| s.points.len()).collect();
    ResultFile {
        version: SCHEMA_VERSION,
        sense: loaded.instance.sense(),
        value: sol.value,
        support: support_entries(&sol.plan, kept),
        potentials: potentials_on_file_atoms(potentials, kept, &file_arities),
        certificates,
        provenance: ResultProvenance {
            input_sha256: loaded.sha256.clone(),
            seed,
            iterations: sol.iterations,
            tolerances: Tolerances {
                acceptance: tol,
                active: ACTIVE_TOL,
                feasibility: FEAS_TOL,
            },
        },
    }
}

pub struct SolveArgs {
    pub path: PathBuf,
    pub out: Option<PathBuf>,
    pub oracle: bool,
    pub tol: f64,
}

pub fn solve(args: &SolveArgs) -> Result<ResultFile, CliError> {
    let loaded = load(&args.path)?;
    let inst = &loaded.instance;
    let sol = lp::solve(inst)?;
    let weights = inst.weight_slices();
    let mut certs = Certificates {
        duality: Some(duality_check(inst, &sol, args.tol)),
        vertex: Some(is_transport_vertex(&sol.plan, &weights)?),
        ..Default::default()
    };
    if args.oracle {
        if within_oracle_caps(inst.arities()) {
            let vertices = oracle_enumerate(inst)?;
            let optimum = oracle_optimum(&vertices, inst.sense())
                .ok_or_else(|| momt_core::Error::Solver("oracle found no vertex".into()))?;
            let gap = (optimum - sol.value).abs();
            let is_vertex = certs.vertex.unwrap_or(false);
            certs.oracle = Some(OracleCheck {
                vertices: vertices.len(),
                optimum,
                gap,
                is_vertex,
                agrees: gap <= ORACLE_TOL * inst.cost_scale() && is_vertex,
            });
        } else {
            certs.oracle_skipped = Some(format!(
                "{} cells and {} atoms exceed the oracle caps of {ORACLE_MAX_CELLS} cells or {ORACLE_MAX_ATOMS} atoms",
                inst.grid().len(),
                inst.arities().iter().sum::<usize>()
            ));
        }
    }
    let result = result_file(&loaded, &sol, &sol.potentials, certs, None, args.tol);
    emit(args.out.as_deref(), &to_json(&result))?;
    Ok(result)
}

pub struct ReduceArgs {
    pub path: PathBuf,
    pub subset: String,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ReduceOutput {
    pub reduced_file: String,
    pub report: ReductionReport,
}

pub fn reduce_cmd(args: &ReduceArgs) -> Result<ReduceOutput, CliError> {
    let subset = parse_subset(&args.subset)?;
    let loaded = load(&args.path)?;
    let inst = &loaded.instance;
    let sol = lp::solve(inst)?;
    let reduced = reduce(inst, &sol.potentials, &subset)?;
    let mut report = verify_reduction_optimality(inst, &sol.plan, &sol.potentials, &subset)?;
    report.subset = report.subset.iter().map(|k| k + 1).collect();
    let sub = reduced.to_instance(inst)?;
    let kept = inst.kept_atoms();
    let provenance = Provenance {
        parent_sha256: loaded.sha256.clone(),
        subset: reduced.subset.indices().iter().map(|k| k + 1).collect(),
        gauge: "axes after the first have zero weighted mean".into(),
        atoms: reduced
            .subset
            .indices()
            .iter()
            .map(|&k| kept[k].iter().map(|a| a + 1).collect())
            .collect(),
        inherited_potentials: reduced.inherited.vectors.clone(),
    };
    let file = InstanceFile::from_instance(&sub, sub.table(), Some(provenance));
    let out = args.out.clone().unwrap_or_else(|| {
        let mut s = args.path.clone().into_os_string();
        s.push(".reduced.json");
        PathBuf::from(s)
    });
    write(&out, &file.to_json())?;
    let output = ReduceOutput {
        reduced_file: out.display().to_string(),
        report,
    };
    println!("{}", to_json(&output));
    Ok(output)
}

pub struct DiagnoseArgs {
    pub path: PathBuf,
    pub out: Option<PathBuf>,
    pub max_cycle: usize,
    pub seed: u64,
    pub tol: f64,
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<ResultFile, CliError> {
    let loaded = load(&args.path)?;
    let inst = &loaded.instance;
    let sol = lp::solve(inst)?;
    let strict = strictly_complementary(inst, &sol, SolveOptions::default())?;
    let support: Vec<_> = sol.plan.support().cloned().collect();
    let monotonicity = check_cyclical_monotonicity(
        &support,
        CostTable::from(inst),
        inst.sense(),
        CycleOptions {
            max_cycle: args.max_cycle,
            seed: args.seed,
            ..Default::default()
        },
    )?;
    let set = MinimizingSet::new(inst, &strict, ACTIVE_TOL * inst.cost_scale());
    let fibers = fiber_report(&set.indices, CostTable::from(inst), &[0], None)?;
    let violation = check_c_extreme(&fibers).map(|v| {
        let one = |i: &Vec<usize>| i.iter().map(|a| a + 1).collect::<Vec<_>>();
        [one(&v.x1), one(&v.x2), one(&v.shared)]
    });
    let weights = inst.weight_slices();
    let cert = uniqueness_certificate(inst, &sol.plan, &strict, sol.value)?;
    let kept = inst.kept_atoms();
    let certs = Certificates {
        duality: Some(duality_check(inst, &sol, args.tol)),
        vertex: Some(is_transport_vertex(&sol.plan, &weights)?),
        monotonicity: Some(monotonicity),
        extremality: Some(ExtremalityCheck {
            first_axes: vec![1],
            minimizing_set_cells: set.len(),
            max_fiber: fibers.max_fiber(),
            c_extreme: violation.is_none(),
            violation,
        }),
        uniqueness: Some(UniquenessSummary {
            status: cert.status,
            face_cells: cert.face_cells,
            witness: cert.witness.as_ref().map(|w| support_entries(w, kept)),
        }),
        ..Default::default()
    };
    let result = result_file(&loaded, &sol, &strict, certs, Some(args.seed), args.tol);
    emit(args.out.as_deref(), &to_json(&result))?;
    Ok(result)
}

#[derive(Default)]
pub struct ScenarioArgs {
    pub kind: String,
    pub seed: u64,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub shells: Option<usize>,
    pub equator: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub touching: bool,
    pub marginals: Option<usize>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub csv_dir: Option<PathBuf>,
    pub batch: Option<usize>,
}

pub fn scenario_config(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let kind = ScenarioKind::parse(&args.kind).ok_or_else(|| CliError::UnknownScenario(args.kind.clone()))?;
    let mut c = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let c: ScenarioConfig = serde_json::from_str(&text).map_err(|e| {
                CliError::Schema(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column()))
            })?;
            if c.kind != kind {
                return Err(CliError::Usage(format!(
                    "config is for `{}`, not `{}`",
                    c.kind.name(),
                    kind.name()
                )));
            }
            c
        }
        None => ScenarioConfig::new(kind, args.seed),
    };
    c.seed = args.seed;
    if let Some(d) = args.d {
        c = c.with_dimension(d);
    }
    if let Some(l) = args.shells {
        if kind != ScenarioKind::NestedShells {
            return Err(CliError::Usage("--shells applies to the shells scenario only".into()));
        }
        let n = args.n.unwrap_or(c.sizes[0]);
        c.radii = (1..=l).map(|i| 0.5 * i as f64).collect();
        c = c.with_n(n);
    }
    if let Some(m) = args.marginals {
        if kind != ScenarioKind::GangboSwiech {
            return Err(CliError::Usage("--marginals applies to the gs scenario only".into()));
        }
        c.sizes = vec![c.sizes[0]; m];
    }
    if let Some(n) = args.n {
        c = c.with_n(n);
    }
    if let Some(e) = args.equator {
        c.equator = e;
    }
    if let Some(a) = &args.alpha {
        c.alpha = a.clone();
    }
    if let Some(b) = &args.beta {
        c.beta = b.clone();
    }
    c.touching |= args.touching;
    c.validate()?;
    Ok(c)
}

fn write_tables(dir: &Path, tables: &[Table], suffix: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for t in tables {
        let path = dir.join(format!("{}{suffix}.csv", t.name));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| CliError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        let io = |e: csv::Error| CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        w.write_record(&t.header).map_err(io)?;
        for r in &t.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Runs one scenario, or `--batch K` consecutive seeds in parallel with
/// output in seed order.
pub fn scenario(args: &ScenarioArgs) -> Result<Vec<scenarios::ScenarioReport>, CliError> {
    let base = scenario_config(args)?;
    let configs: Vec<ScenarioConfig> = match args.batch {
        None => vec![base],
        Some(0) => return Err(CliError::Usage("--batch must be at least 1".into())),
        Some(k) => (0..k as u64)
            .map(|i| ScenarioConfig {
                seed: base.seed + i,
                ..base.clone()
            })
            .collect(),
    };
    let reports: Vec<scenarios::ScenarioReport> = configs
        .par_iter()
        .map(scenarios::run)
        .collect::<Result<_, _>>()?;
    let json = if args.batch.is_some() {
        to_json(&reports)
    } else {
        reports[0].to_json()?
    };
    emit(args.out.as_deref(), &json)?;
    if let Some(dir) = &args.csv_dir {
        for (c, r) in configs.iter().zip(&reports) {
            let suffix = if args.batch.is_some() {
                format!("_seed{}", c.seed)
            } else {
                String::new()
            };
            write_tables(dir, &r.tables(), &suffix)?;
        }
    }
    Ok(reports)
}
