//! On-disk formats: instance files (full and reduced problems) and result
//! files. Atom indices are 1-based on disk.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use momt_core::costs::{CostKind, CostSpec, Sense};
use momt_core::extremality::CycleReport;
use momt_core::lp::{Potentials, UniquenessStatus};
use momt_core::{Coupling, DiscreteMeasure, Instance, Space};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub name: String,
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    /// Nested arrays, one nesting level per space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<Value>,
}

/// Where a reduced problem came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub parent_sha256: String,
    /// 1-based axes of the parent.
    pub subset: Vec<usize>,
    pub gauge: String,
    /// 1-based parent atoms kept on each reduced axis.
    pub atoms: Vec<Vec<usize>>,
    pub inherited_potentials: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    pub spaces: Vec<SpaceFile>,
    pub weights: Vec<Vec<f64>>,
    pub cost: CostFile,
    pub sense: Sense,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn flatten_tensor(v: &Value, shape: &[usize], path: &str, out: &mut Vec<f64>) -> Result<(), CliError> {
    match shape.split_first() {
        None => {
            let x = v
                .as_f64()
                .ok_or_else(|| schema(format!("{path}: expected a number")))?;
            out.push(x);
        }
        Some((&n, rest)) => {
            let arr = v
                .as_array()
                .ok_or_else(|| schema(format!("{path}: expected an array of length {n}")))?;
            if arr.len() != n {
                return Err(schema(format!("{path}: length {} but the space has {n} atoms", arr.len())));
            }
            for (i, item) in arr.iter().enumerate() {
                flatten_tensor(item, rest, &format!("{path}[{i}]"), out)?;
            }
        }
    }
    Ok(())
}

/// Nested-array form of a row-major table.
pub fn nest_tensor(values: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => serde_json::json!(values[0]),
        Some((&n, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..n)
                    .map(|i| nest_tensor(&values[i * stride..(i + 1) * stride], rest))
                    .collect(),
            )
        }
    }
}

impl InstanceFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            schema(format!("{origin}: line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files serialize")
    }

    fn cost_spec(&self, arities: &[usize]) -> Result<CostSpec, CliError> {
        let c = &self.cost;
        let kind = match (&c.builtin, &c.tensor) {
            (Some(_), Some(_)) => return Err(schema("cost: give either builtin or tensor, not both")),
            (None, None) => return Err(schema("cost: missing builtin or tensor")),
            (None, Some(t)) => {
                let mut out = Vec::new();
                flatten_tensor(t, arities, "cost.tensor", &mut out)?;
                CostKind::Tensor(out)
            }
            (Some(name), None) => match name.as_str() {
                "surplus" => CostKind::Surplus,
                "attractive" => CostKind::Attractive,
                "repulsive" => CostKind::Repulsive,
                "gangboSwiech" => CostKind::GangboSwiech,
                "mongeQuadratic" => CostKind::MongeQuadratic,
                "gromovWasserstein" => CostKind::GromovWasserstein {
                    xi: c.xi.ok_or_else(|| schema("cost.xi: required for gromovWasserstein"))?,
                    a: c.a.clone().ok_or_else(|| schema("cost.a: required for gromovWasserstein"))?,
                },
                other => return Err(schema(format!("cost.builtin: unknown cost `{other}`"))),
            },
        };
        Ok(CostSpec::new(kind, self.sense)?)
    }

    /// Validates the file and builds the instance.
    pub fn to_instance(&self) -> Result<Instance, CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(schema(format!(
                "version: unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.spaces.len() != self.weights.len() {
            return Err(schema(format!(
                "weights: {} vectors for {} spaces",
                self.weights.len(),
                self.spaces.len()
            )));
        }
        let mut marginals = Vec::with_capacity(self.spaces.len());
        for (k, (s, w)) in self.spaces.iter().zip(&self.weights).enumerate() {
            let space = Space::new(s.name.clone(), s.points.clone())
                .map_err(|e| schema(format!("spaces[{k}]: {e}")))?;
            let m = DiscreteMeasure::new(space, w.clone()).map_err(|e| schema(format!("weights[{k}]: {e}")))?;
            marginals.push(m);
        }
        let arities: Vec<usize> = self.spaces.iter().map(|s| s.points.len()).collect();
        let spec = self.cost_spec(&arities)?;
        Ok(Instance::new(marginals, spec)?)
    }

    /// A tensor-cost file for an in-memory instance.
    pub fn from_instance(instance: &Instance, table: &[f64], provenance: Option<Provenance>) -> Self {
        InstanceFile {
            version: SCHEMA_VERSION,
            spaces: instance
                .marginals()
                .iter()
                .map(|m| SpaceFile {
                    name: m.space().name().to_string(),
                    points: m.space().points().to_vec(),
                })
                .collect(),
            weights: instance.marginals().iter().map(|m| m.weights().to_vec()).collect(),
            cost: CostFile {
                builtin: None,
                xi: None,
                a: None,
                tensor: Some(nest_tensor(table, instance.arities())),
            },
            sense: instance.sense(),
            provenance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportEntry {
    pub index: Vec<usize>,
    pub mass: f64,
}

/// Support of `plan` in 1-based indices of the original file atoms.
pub fn support_entries(plan: &Coupling, kept: &[Vec<usize>]) -> Vec<SupportEntry> {
    plan.iter()
        .map(|(idx, mass)| SupportEntry {
            index: idx.iter().zip(kept).map(|(&i, k)| k[i] + 1).collect(),
            mass,
        })
        .collect()
}

/// Potentials on the original atoms; dropped zero-weight atoms get `null`.
pub fn potentials_on_file_atoms(p: &Potentials, kept: &[Vec<usize>], file_arities: &[usize]) -> Vec<Vec<Option<f64>>> {
    p.vectors
        .iter()
        .zip(kept)
        .zip(file_arities)
        .map(|((v, k), &n)| {
            let mut out = vec![None; n];
            for (i, &orig) in k.iter().enumerate() {
                out[orig] = Some(v[i]);
            }
            out
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityCheck {
    pub dual_value: f64,
    pub gap: f64,
    /// Largest `|c − Σφ_k|` over the support.
    pub slackness: f64,
    pub max_violation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub vertices: usize,
    pub optimum: f64,
    pub gap: f64,
    pub is_vertex: bool,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessSummary {
    pub status: UniquenessStatus,
    pub face_cells: usize,
    pub witness: Option<Vec<SupportEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalityCheck {
    /// 1-based axes of the first block.
    pub first_axes: Vec<usize>,
    pub minimizing_set_cells: usize,
    pub max_fiber: usize,
    pub c_extreme: bool,
    pub violation: Option<[Vec<usize>; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Certificates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualityCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<CycleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extremality: Option<ExtremalityCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniqueness: Option<UniquenessSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub acceptance: f64,
    pub active: f64,
    pub feasibility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultProvenance {
    pub input_sha256: String,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultFile {
    pub version: u32,
    pub sense: Sense,
    pub value: f64,
    pub support: Vec<SupportEntry>,
    pub potentials: Vec<Vec<Option<f64>>>,
    pub certificates: Certificates,
    pub provenance: ResultProvenance,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE: &str = r#"{
  "version": 1,
  "spaces": [
    {
      "name": "X",
      "points": [[0.0], [1.0]]
    },
    {
      "name": "Y",
      "points": [[0.0], [1.0]]
    }
  ],
  "weights": [[0.5, 0.5], [0.5, 0.5]],
  "cost": {
    "tensor": [[0.0, 1.0], [1.0, 0.0]]
  },
  "sense": "min"
}"#;

    fn squash(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    #[test]
    fn load_save_round_trip() {
        let f = InstanceFile::parse(EXAMPLE, "example").unwrap();
        assert_eq!(squash(&f.to_json()), squash(EXAMPLE));
        let inst = f.to_instance().unwrap();
        assert_eq!(inst.table(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn tensor_shape_is_checked() {
        let bad = EXAMPLE.replace("[[0.0, 1.0], [1.0, 0.0]]", "[[0.0, 1.0], [1.0]]");
        let err = InstanceFile::parse(&bad, "x").unwrap().to_instance().unwrap_err();
        assert!(err.to_string().contains("cost.tensor[1]"), "{err}");
    }

    #[test]
    fn nest_and_flatten_agree() {
        let vals: Vec<f64> = (0..12).map(f64::from).collect();
        let v = nest_tensor(&vals, &[2, 3, 2]);
        let mut out = Vec::new();
        flatten_tensor(&v, &[2, 3, 2], "t", &mut out).unwrap();
        assert_eq!(out, vals);
    }

    fn arb_file() -> impl Strategy<Value = InstanceFile> {
        (prop::collection::vec(1usize..4, 2..4), 1usize..3, any::<bool>()).prop_flat_map(|(arities, dim, tensor)| {
            let cells: usize = arities.iter().product();
            let spaces = arities
                .iter()
                .map(|&n| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim), n))
                .collect::<Vec<_>>();
            let weights = arities
                .iter()
                .map(|&n| prop::collection::vec(0.0f64..1.0, n))
                .collect::<Vec<_>>();
            (spaces, weights, prop::collection::vec(-1e6f64..1e6, cells)).prop_map(move |(pts, w, table)| {
                InstanceFile {
                    version: SCHEMA_VERSION,
                    spaces: pts
                        .into_iter()
                        .enumerate()
                        .map(|(k, points)| SpaceFile {
                            name: format!("S{k}"),
                            points,
                        })
                        .collect(),
                    weights: w,
                    cost: if tensor {
                        CostFile {
                            builtin: None,
                            xi: None,
                            a: None,
                            tensor: Some(nest_tensor(&table, &arities)),
                        }
                    } else {
                        CostFile {
                            builtin: Some("surplus".into()),
                            xi: None,
                            a: None,
                            tensor: None,
                        }
                    },
                    sense: if tensor { Sense::Min } else { Sense::Max },
                    provenance: None,
                }
            })
        })
    }

    proptest! {
        #[test]
        fn save_load_save_is_stable(f in arb_file()) {
            let text = f.to_json();
            let back = InstanceFile::parse(&text, "p").unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(squash(&back.to_json()), squash(&text));
        }
    }

    #[test]
    fn sha_is_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
