use std::f64::consts::LN_2;

use decohere::dense::{apply_site_channels, cluster_density, decohered_cluster, negativity_dense};
use decohere::negativity::*;
use decohere::pauli::{sublattice_a, Pauli};
use decohere::statmech::{
    beta_from_p, normalization_constant, nonhermitian_correlator, Beta, IsingParams, NonHermitianKind, TransferKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GRID: [f64; 5] = [0.0, 0.1, 0.25, 0.4, 0.5];

#[test]
fn enumeration_matches_dense_partial_transpose() {
    for two_n in [4usize, 6, 8] {
        for kind in [NoiseKind::X, NoiseKind::Z] {
            for &p in &GRID {
                let rho = decohered_cluster(two_n, p, kind.letter()).unwrap();
                let d = negativity_dense(&rho, &sublattice_a(two_n)).unwrap();
                let e = trace_norm_exact_enum(two_n, p, kind).unwrap();
                assert!((d - e).abs() < 1e-10, "2N={two_n} {kind:?} p={p}: {d} vs {e}");
            }
        }
    }
}

#[test]
fn enumeration_matches_correlator_route() {
    // (1/C) sum_S |<sigma_S>| with correlators from the transfer kernel
    for (kind, nk, tk) in [
        (NoiseKind::X, NonHermitianKind::X, TransferKind::NonHermitianX),
        (NoiseKind::Z, NonHermitianKind::Z, TransferKind::NonHermitianZ),
    ] {
        for &p in &[0.1, 0.3] {
            let two_n = 8;
            let Beta::Finite(b) = beta_from_p(p).unwrap() else { panic!() };
            let params = IsingParams::new(Beta::Finite(b), two_n).unwrap();
            let mut acc = 0.0;
            for m in 0..1usize << two_n {
                let s: Vec<usize> = (0..two_n).filter(|&i| (m >> i) & 1 == 1).collect();
                acc += nonhermitian_correlator(&params, &s, nk).unwrap().abs();
            }
            let ln_c = normalization_constant(&params, tk).unwrap();
            let route = acc.ln() - ln_c;
            let e = trace_norm_exact_enum(two_n, p, kind).unwrap();
            assert!((route - e).abs() < 1e-10, "{kind:?} p={p}: {route} vs {e}");
        }
    }
}

#[test]
fn pure_value_matches_stabilizer_count() {
    for two_n in [4usize, 8, 12, 20] {
        let v = trace_norm_exact_enum(two_n, 0.0, NoiseKind::X).unwrap();
        assert!((v - (two_n / 2 - 1) as f64 * LN_2).abs() < 1e-10);
    }
}

fn mixed_dense(two_n: usize, rates: BoundaryRates) -> f64 {
    let rho = cluster_density(two_n).unwrap();
    let r: Vec<(usize, f64)> = (0..two_n).map(|q| (q, if q % 2 == 0 { rates.p_x } else { rates.p_z })).collect();
    let rho = apply_site_channels(&rho, Pauli::X, &r).unwrap();
    negativity_dense(&rho, &sublattice_a(two_n)).unwrap()
}

#[test]
fn toric_boundary_exact_matches_dense() {
    for (px, pz) in [(0.1, 0.3), (0.3, 0.1), (0.0, 0.4), (0.5, 0.2)] {
        let rates = BoundaryRates::new(px, pz).unwrap();
        let d = mixed_dense(8, rates);
        let e = toric_boundary_negativity_exact(8, rates).unwrap();
        assert!((d - e).abs() < 1e-10, "({px},{pz}): {d} vs {e}");
    }
}

#[test]
fn toric_boundary_equal_rates_is_x_noise() {
    let cfg = McConfig::new(20_000, 11);
    for &p in &[0.0, 0.15, 0.4, 0.5] {
        let a = toric_boundary_negativity_mc(16, BoundaryRates::new(p, p).unwrap(), &cfg).unwrap();
        let b = trace_norm_mc(16, p, NoiseKind::X, &cfg).unwrap();
        assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }
    let pure = toric_boundary_negativity_exact(10, BoundaryRates::new(0.0, 0.0).unwrap()).unwrap();
    assert!((pure - 4.0 * LN_2).abs() < 1e-12);
}

#[test]
fn betas_round_trip_to_rates() {
    let Beta::Finite(b) = beta_from_p(0.2).unwrap() else { panic!() };
    let r = BoundaryRates::from_betas(b, 0.0).unwrap();
    assert!((r.p_x - 0.2).abs() < 1e-15 && r.p_z == 0.0);
}

#[test]
fn mc_close_to_enumeration() {
    for kind in [NoiseKind::X, NoiseKind::Z] {
        let cfg = McConfig::new(200_000, 5);
        let mc = trace_norm_mc(8, 0.1, kind, &cfg).unwrap();
        let e = trace_norm_exact_enum(8, 0.1, kind).unwrap();
        assert!((mc.log_value - e).abs() < 3.0 * mc.std_err, "{kind:?}: {} +- {} vs {e}", mc.log_value, mc.std_err);
        assert!(mc.std_err > 0.0);
    }
}

#[test]
fn mc_endpoints_are_exact() {
    let cfg = McConfig::new(1000, 3);
    let z = trace_norm_mc(12, 0.0, NoiseKind::X, &cfg).unwrap();
    assert_eq!(z.std_err, 0.0);
    assert!((z.log_value - 5.0 * LN_2).abs() < 1e-15);
    assert_eq!(trace_norm_mc(12, 0.5, NoiseKind::Z, &cfg).unwrap().log_value, 0.0);
}

#[test]
fn mc_large_chain_is_finite() {
    let cfg = McConfig::new(4_000, 9);
    let e = trace_norm_mc(64, 0.45, NoiseKind::X, &cfg).unwrap();
    assert!(e.log_value.is_finite() && e.std_err.is_finite());
    assert!(e.log_value + 3.0 * e.std_err >= 0.0);
}

#[test]
fn mc_is_deterministic_across_workers() {
    let base = McConfig::new(30_000, 42);
    let reference = trace_norm_mc(12, 0.2, NoiseKind::X, &base.with_workers(1)).unwrap();
    for w in [2usize, 8] {
        let e = trace_norm_mc(12, 0.2, NoiseKind::X, &base.with_workers(w)).unwrap();
        assert_eq!(e.log_value.to_bits(), reference.log_value.to_bits());
        assert_eq!(e.std_err.to_bits(), reference.std_err.to_bits());
    }
}

#[test]
fn sampled_syndromes_follow_class_probabilities() {
    let two_n = 8;
    let p = 0.3;
    let draws = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut counts = std::collections::HashMap::<Vec<bool>, u64>::new();
    for _ in 0..draws {
        let s = sample_syndrome(two_n, p, NoiseKind::X, &mut rng).unwrap();
        let exact = syndrome_ln_prob(p, NoiseKind::X, &s.subset).unwrap();
        assert_eq!(s.ln_prob, exact);
        *counts.entry(s.subset).or_default() += 1;
    }
    // error patterns enumerated directly
    let mut exact = std::collections::HashMap::<Vec<bool>, f64>::new();
    for m in 0..1u32 << two_n {
        let e: Vec<bool> = (0..two_n).map(|i| (m >> i) & 1 == 1).collect();
        let w = e.iter().filter(|&&b| b).count() as i32;
        let prob = p.powi(w) * (1.0 - p).powi(two_n as i32 - w);
        let s: Vec<bool> = (0..two_n).map(|j| e[(j + two_n - 1) % two_n] ^ e[(j + 1) % two_n]).collect();
        *exact.entry(s).or_default() += prob;
    }
    assert_eq!(exact.len(), 1 << (two_n - 2));
    for (s, &pi) in &exact {
        assert!((syndrome_ln_prob(p, NoiseKind::X, s).unwrap().exp() - pi).abs() < 1e-14);
        let c = *counts.get(s).unwrap_or(&0) as f64;
        let sigma = (draws as f64 * pi * (1.0 - pi)).sqrt();
        assert!((c - draws as f64 * pi).abs() <= 4.0 * sigma, "{s:?}");
    }
}

#[test]
fn zero_rate_sampling_is_trivial() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let s = sample_syndrome(8, 0.0, NoiseKind::X, &mut rng).unwrap();
        assert!(s.subset.iter().all(|&b| !b));
        assert_eq!(s.ln_prob, 0.0);
    }
}

#[test]
fn negativity_nonincreasing_in_p() {
    for kind in [NoiseKind::X, NoiseKind::Z] {
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let p = 0.025 * k as f64;
            let v = trace_norm_exact_enum(10, p, kind).unwrap();
            assert!(v <= prev + 1e-12, "{kind:?} p={p}");
            assert!(v >= -1e-12);
            prev = v;
        }
    }
}

#[test]
fn spurious_endpoints_route_through_stabilizers() {
    let cfg = McConfig::new(1000, 0);
    for kind in [NoiseKind::X, NoiseKind::Z] {
        assert_eq!(spurious_ten(16, 0.0, kind, &cfg).unwrap().log_value, LN_2);
        assert_eq!(spurious_ten(16, 0.5, kind, &cfg).unwrap().log_value, 0.0);
    }
}
