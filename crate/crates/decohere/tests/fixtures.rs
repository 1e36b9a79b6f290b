//! Frozen dense-oracle values against the fast routes.

use decohere::fidelity::fc_1d_exact;
use decohere::mpdo::{cluster_mpdo, renyi_negativity_tm};
use decohere::negativity::{toric_boundary_negativity_exact, trace_norm_exact_enum, BoundaryRates, NoiseKind};
use serde_json::Value;

const PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/dense_oracle.json");

fn uint(p: &Value, k: &str) -> usize {
    p[k].as_u64().unwrap_or_else(|| panic!("missing {k}")) as usize
}

fn float(p: &Value, k: &str) -> f64 {
    p[k].as_f64().unwrap_or_else(|| panic!("missing {k}"))
}

fn noise(p: &Value) -> NoiseKind {
    match p["noise"].as_str() {
        Some("X") => NoiseKind::X,
        Some("Z") => NoiseKind::Z,
        other => panic!("bad noise {other:?}"),
    }
}

#[test]
fn fast_routes_reproduce_frozen_dense_values() {
    let text = std::fs::read_to_string(PATH).unwrap();
    let file: Value = serde_json::from_str(&text).unwrap();
    let entries = file["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 74);
    let mut seen = std::collections::BTreeMap::<String, usize>::new();
    for e in entries {
        let id = e["id"].as_str().unwrap();
        let q = e["quantity"].as_str().unwrap();
        let p = &e["params"];
        let frozen = e["value"].as_f64().unwrap();
        let digits = e["digits"].as_i64().unwrap() as i32;
        assert!(e["generator_version"].is_string());
        let fast = match q {
            "fidelity_correlator" => fc_1d_exact(uint(p, "two_n") / 2, float(p, "p"), uint(p, "sep")).unwrap().value,
            "log_negativity" => trace_norm_exact_enum(uint(p, "two_n"), float(p, "p"), noise(p)).unwrap(),
            "renyi_negativity" => {
                let m = cluster_mpdo(float(p, "p"), noise(p)).unwrap();
                renyi_negativity_tm(&m, uint(p, "alpha"), uint(p, "two_n")).unwrap()
            }
            "toric_boundary" => {
                let r = BoundaryRates::new(float(p, "p_x"), float(p, "p_z")).unwrap();
                toric_boundary_negativity_exact(uint(p, "two_n"), r).unwrap()
            }
            other => panic!("unknown quantity {other}"),
        };
        let tol = 1e-10 + 10f64.powi(1 - digits) * frozen.abs();
        assert!((fast - frozen).abs() < tol, "{id}: fast {fast} vs frozen {frozen}");
        *seen.entry(q.to_string()).or_default() += 1;
    }
    assert_eq!(seen["fidelity_correlator"], 30);
    assert_eq!(seen["log_negativity"], 30);
    assert_eq!(seen["renyi_negativity"], 10);
    assert_eq!(seen["toric_boundary"], 4);
}
