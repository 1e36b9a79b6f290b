//! Reference values from the dense density-matrix oracle.

use std::collections::BTreeMap;

use decohere::dense::{
    apply_site_channels, cluster_density, decohered_cluster, fidelity_correlator, negativity_dense, renyi_moments,
};
use decohere::negativity::NoiseKind;
use decohere::pauli::{sublattice_a, Pauli, PauliOperator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::record::VERSION;

pub const DIGITS: u32 = 12;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Dense-oracle values below this are round-off and stored as zero.
pub const ZERO_FLOOR: f64 = 1e-13;

const GRID: [f64; 5] = [0.0, 0.1, 0.25, 0.4, 0.5];
const TORIC_RATES: [(f64, f64); 4] = [(0.1, 0.3), (0.3, 0.1), (0.0, 0.4), (0.5, 0.2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub id: String,
    pub quantity: String,
    pub params: BTreeMap<String, Value>,
    pub value: f64,
    /// Significant digits kept in `value`.
    pub digits: u32,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub generator_version: String,
    pub entries: Vec<FixtureEntry>,
}

pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x.abs() < ZERO_FLOOR {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits as usize - 1, x).parse().expect("float")
}

/// One fixture: quantity, params, and the dense evaluation.
struct Job {
    quantity: &'static str,
    params: BTreeMap<String, Value>,
    eval: Box<dyn Fn() -> decohere::Result<f64> + Send + Sync>,
}

fn id_of(quantity: &str, params: &BTreeMap<String, Value>) -> String {
    let mut s = quantity.to_string();
    for (k, v) in params {
        let v = match v {
            Value::String(t) => t.clone(),
            other => other.to_string(),
        };
        s.push_str(&format!("/{k}={v}"));
    }
    s
}

fn zz(n: usize, x: usize, y: usize) -> decohere::Result<PauliOperator> {
    if x % n == y % n {
        return Ok(PauliOperator::identity(n));
    }
    PauliOperator::from_sparse(n, &[(x, Pauli::Z), (y % n, Pauli::Z)])
}

fn params(v: Value) -> BTreeMap<String, Value> {
    serde_json::from_value(v).expect("object")
}

fn jobs() -> Vec<Job> {
    let mut jobs = Vec::new();
    for two_n in [4usize, 6, 8] {
        for p in GRID {
            for sep in [2usize, 4] {
                jobs.push(Job {
                    quantity: "fidelity_correlator",
                    params: params(json!({ "two_n": two_n, "p": p, "sep": sep })),
                    eval: Box::new(move || {
                        let rho = decohered_cluster(two_n, p, Pauli::X)?;
                        fidelity_correlator(&rho, &zz(two_n, 0, sep)?)
                    }),
                });
            }
        }
    }
    for two_n in [4usize, 6, 8] {
        for kind in [NoiseKind::X, NoiseKind::Z] {
            for p in GRID {
                let noise = if kind == NoiseKind::X { "X" } else { "Z" };
                jobs.push(Job {
                    quantity: "log_negativity",
                    params: params(json!({ "two_n": two_n, "p": p, "noise": noise })),
                    eval: Box::new(move || {
                        let rho = decohered_cluster(two_n, p, kind.letter())?;
                        negativity_dense(&rho, &sublattice_a(two_n))
                    }),
                });
            }
        }
    }
    for alpha in [2u32, 3] {
        for p in GRID {
            jobs.push(Job {
                quantity: "renyi_negativity",
                params: params(json!({ "two_n": 8, "p": p, "noise": "X", "alpha": alpha })),
                eval: Box::new(move || {
                    let rho = decohered_cluster(8, p, Pauli::X)?;
                    Ok(renyi_moments(&rho, &sublattice_a(8), alpha)?.negativity(alpha))
                }),
            });
        }
    }
    for (p_x, p_z) in TORIC_RATES {
        jobs.push(Job {
            quantity: "toric_boundary",
            params: params(json!({ "two_n": 8, "p_x": p_x, "p_z": p_z })),
            eval: Box::new(move || {
                let rho = cluster_density(8)?;
                let rates: Vec<(usize, f64)> = (0..8).map(|q| (q, if q % 2 == 0 { p_x } else { p_z })).collect();
                let rho = apply_site_channels(&rho, Pauli::X, &rates)?;
                negativity_dense(&rho, &sublattice_a(8))
            }),
        });
    }
    jobs
}

/// Unrounded fresh values keyed by id.
pub fn generate() -> decohere::Result<Vec<(FixtureEntry, f64)>> {
    jobs()
        .into_par_iter()
        .map(|job| {
            let raw = (job.eval)()?;
            let entry = FixtureEntry {
                id: id_of(job.quantity, &job.params),
                quantity: job.quantity.to_string(),
                params: job.params,
                value: round_sig(raw, DIGITS),
                digits: DIGITS,
                generator_version: VERSION.to_string(),
            };
            Ok((entry, raw))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub id: String,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fresh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub tolerance: f64,
    pub checked: usize,
    pub divergent: Vec<Divergence>,
    /// Entries beyond `tolerance` only because the committed value is rounded.
    pub round_off_limited: Vec<String>,
}

impl DiffReport {
    pub fn is_clean(&self) -> bool {
        self.divergent.is_empty()
    }
}

/// Parse a committed fixture file entry by entry, so a damaged entry is reported by name.
pub fn parse_committed(text: &str) -> (Vec<FixtureEntry>, Vec<Divergence>) {
    let bad = |id: String, reason: String| Divergence { id, reason, committed: None, fresh: None, diff: None };
    let v: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return (Vec::new(), vec![bad("<file>".into(), format!("unreadable fixture file: {e}"))]),
    };
    let Some(entries) = v.get("entries").and_then(Value::as_array) else {
        return (Vec::new(), vec![bad("<file>".into(), "missing `entries` array".into())]);
    };
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let name = e.get("id").and_then(Value::as_str).map_or_else(|| format!("entries[{i}]"), String::from);
        match serde_json::from_value::<FixtureEntry>(e.clone()) {
            Ok(f) => ok.push(f),
            Err(err) => errs.push(bad(name, format!("corrupt entry: {err}"))),
        }
    }
    (ok, errs)
}

pub fn diff(fresh: &[(FixtureEntry, f64)], committed_text: &str, tolerance: f64) -> DiffReport {
    let (committed, mut divergent) = parse_committed(committed_text);
    if divergent.iter().any(|d| d.id == "<file>") {
        return DiffReport { tolerance, checked: fresh.len(), divergent, round_off_limited: Vec::new() };
    }
    let mut by_id: BTreeMap<&str, &FixtureEntry> = BTreeMap::new();
    for c in &committed {
        if by_id.insert(c.id.as_str(), c).is_some() {
            divergent.push(Divergence { id: c.id.clone(), reason: "duplicate entry".into(), committed: None, fresh: None, diff: None });
        }
    }
    let corrupt: Vec<String> = divergent.iter().map(|d| d.id.clone()).collect();
    let mut round_off = Vec::new();
    for (f, raw) in fresh {
        let Some(c) = by_id.remove(f.id.as_str()) else {
            if !corrupt.contains(&f.id) {
                divergent.push(Divergence { id: f.id.clone(), reason: "missing from committed fixtures".into(), committed: None, fresh: Some(*raw), diff: None });
            }
            continue;
        };
        let d = (c.value - raw).abs();
        let rounding = (10f64.powi(1 - c.digits as i32) * raw.abs()).max(ZERO_FLOOR);
        if d <= tolerance {
            continue;
        }
        if d <= rounding {
            round_off.push(f.id.clone());
        } else {
            divergent.push(Divergence {
                id: f.id.clone(),
                reason: "value differs beyond tolerance".into(),
                committed: Some(c.value),
                fresh: Some(*raw),
                diff: Some(d),
            });
        }
    }
    for id in by_id.keys() {
        divergent.push(Divergence { id: id.to_string(), reason: "not produced by the generator".into(), committed: None, fresh: None, diff: None });
    }
    DiffReport { tolerance, checked: fresh.len(), divergent, round_off_limited: round_off }
}

pub fn to_file(fresh: &[(FixtureEntry, f64)]) -> FixtureFile {
    let mut entries: Vec<FixtureEntry> = fresh.iter().map(|(e, _)| e.clone()).collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    FixtureFile { generator_version: VERSION.to_string(), entries }
}
