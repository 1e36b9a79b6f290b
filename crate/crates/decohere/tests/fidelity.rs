use decohere::dense::{apply_pauli_channel, cluster_density, decohered_cluster, fidelity_correlator};
use decohere::fidelity::*;
use decohere::pauli::{Pauli, PauliOperator};
use decohere::statmech::{beta_from_p, Beta, PlaquetteModel};
use proptest::prelude::*;

const GRID: [f64; 5] = [0.0, 0.1, 0.25, 0.4, 0.5];

fn zz(n: usize, x: usize, y: usize) -> PauliOperator {
    if x % n == y % n {
        return PauliOperator::identity(n);
    }
    PauliOperator::from_sparse(n, &[(x, Pauli::Z), (y % n, Pauli::Z)]).unwrap()
}

#[test]
fn exact_matches_dense_oracle() {
    for two_n in [4usize, 6, 8] {
        for &p in &GRID {
            let rho = decohered_cluster(two_n, p, Pauli::X).unwrap();
            for sep in [2usize, 4] {
                let dense = fidelity_correlator(&rho, &zz(two_n, 0, sep)).unwrap();
                let exact = fc_1d_exact(two_n / 2, p, sep).unwrap().value;
                assert!((dense - exact).abs() < 1e-10, "2N={two_n} p={p} sep={sep}: {dense} vs {exact}");
            }
        }
    }
}

#[test]
fn general_onsite_x_reproduces_exact() {
    for n in [2usize, 3, 8, 17, 64] {
        let noise = NoiseSpec::onsite_x(2 * n).unwrap();
        for &p in &GRID {
            for sep in (2..2 * n).step_by(2).take(6) {
                let pair = ChargedOperatorPair::zz(1, (1 + sep) % (2 * n), &noise).unwrap();
                let g = fc_1d_general(p, &noise, &pair).unwrap();
                let e = fc_1d_exact(n, p, sep).unwrap();
                assert!((g.value - e.value).abs() < 1e-12, "N={n} p={p} sep={sep}");
            }
        }
    }
}

fn xx_noise(two_n: usize) -> NoiseSpec {
    let kraus = (0..two_n)
        .map(|j| (j, PauliOperator::from_sparse(two_n, &[(j, Pauli::X), ((j + 2) % two_n, Pauli::X)]).unwrap()))
        .collect();
    NoiseSpec::general(two_n, kraus).unwrap()
}

fn dense_with(noise: &NoiseSpec, p: f64) -> decohere::dense::DenseOperator {
    let mut rho = cluster_density(noise.two_n()).unwrap();
    for k in noise.kraus_operators() {
        rho = apply_pauli_channel(&rho, p, k).unwrap();
    }
    rho
}

#[test]
fn two_site_noise_matches_dense() {
    for two_n in [6usize, 8] {
        let noise = xx_noise(two_n);
        for &p in &[0.0, 0.2, 0.35] {
            let rho = dense_with(&noise, p);
            for (x, y) in [(0usize, 4usize), (1, 5), (0, 2)] {
                let Ok(pair) = ChargedOperatorPair::zz(x, y % two_n, &noise) else {
                    continue;
                };
                let d = fidelity_correlator(&rho, &pair.operator).unwrap();
                let g = fc_1d_general(p, &noise, &pair).unwrap().value;
                assert!((d - g).abs() < 1e-10, "2N={two_n} p={p} ({x},{y}): {d} vs {g}");
            }
        }
    }
}

#[test]
fn two_site_noise_plateau() {
    let noise = xx_noise(8);
    let pair = ChargedOperatorPair::zz(0, 4, &noise).unwrap();
    assert_eq!(fc_1d_general(0.5, &noise, &pair).unwrap().value, 1.0);
}

#[test]
fn onsite_z_matches_dense() {
    let noise = NoiseSpec::onsite_z(8).unwrap();
    for &p in &[0.1, 0.3] {
        let rho = dense_with(&noise, p);
        let pair = ChargedOperatorPair::zz(0, 4, &noise).unwrap();
        let d = fidelity_correlator(&rho, &pair.operator).unwrap();
        let g = fc_1d_general(p, &noise, &pair).unwrap().value;
        assert!((d - g).abs() < 1e-10);
    }
}

#[test]
fn undecomposable_pair_is_rejected() {
    let noise = NoiseSpec::onsite_x(8).unwrap();
    assert!(ChargedOperatorPair::zz(0, 3, &noise).is_err());
}

#[test]
fn symmetry_breaking_kraus_is_rejected() {
    let kraus = (0..8).map(|j| (j, PauliOperator::from_sparse(8, &[(j, Pauli::Y)]).unwrap())).collect();
    assert!(NoiseSpec::general(8, kraus).is_err());
}

#[test]
fn two_d_endpoints() {
    for mode in [Fc2dMode::Factorized { width: 4 }, Fc2dMode::Brute { width: 4, height: 3, include_boundary: true }] {
        assert_eq!(fc_2d(2, 2, 0.5, mode).unwrap().value, 1.0);
        assert_eq!(fc_2d(2, 2, 0.0, mode).unwrap().value, 0.0);
    }
}

#[test]
fn two_d_tau_map_is_exact_without_boundary() {
    let p = 0.5 * (1.0 - (-0.6f64).exp());
    for (height, h) in [(3usize, 2usize), (4, 2), (4, 3), (5, 2)] {
        let b = fc_2d(2, h, p, Fc2dMode::Brute { width: 4, height, include_boundary: false }).unwrap();
        let f = fc_2d(2, h, p, Fc2dMode::Factorized { width: 4 }).unwrap();
        assert!((b.value - f.value).abs() < 1e-12, "L={height} h={h}: {} vs {}", b.value, f.value);
    }
}

#[test]
fn factorized_is_sum_of_equal_logs() {
    let f = fc_2d(3, 2, 0.2, Fc2dMode::Factorized { width: 8 }).unwrap();
    let r = fc_1d_exact(8, 0.2, 6).unwrap();
    assert_eq!(f.log_value, r.log_value + r.log_value);
}

#[test]
fn overlap_matches_direct_enumeration() {
    let Beta::Finite(beta) = beta_from_p(0.2).unwrap() else { panic!() };
    let m = PlaquetteModel::new(4, 3, beta, true).unwrap();
    let masks = m.interaction_masks();
    // span by closure over the generators
    let mut span = std::collections::BTreeSet::from([0u64]);
    for &g in &masks {
        let add: Vec<u64> = span.iter().map(|&s| s ^ g).collect();
        span.extend(add);
    }
    let to_sites = |s: u64| -> Vec<(usize, usize)> { (0..12).filter(|&i| (s >> i) & 1 == 1).map(|i| (i % 4, i / 4)).collect() };
    let rect = (1u64 << m.site(0, 0)) ^ (1u64 << m.site(2, 0)) ^ (1u64 << m.site(0, 2)) ^ (1u64 << m.site(2, 2));
    let (mut num, mut den) = (0.0, 0.0);
    for &s in &span {
        let a = decohere::statmech::pim_brute_correlator(&m, &to_sites(s)).unwrap();
        let b = decohere::statmech::pim_brute_correlator(&m, &to_sites(s ^ rect)).unwrap();
        num += (a * b).max(0.0).sqrt();
        den += a;
    }
    let v = pim_overlap(&m, rect).unwrap();
    assert!((v - num / den).abs() < 1e-12, "{v} vs {}", num / den);
    let f = fc_2d(2, 2, 0.2, Fc2dMode::Brute { width: 4, height: 3, include_boundary: true }).unwrap();
    assert!((f.value - v).abs() < 1e-14);
}

proptest! {
    #[test]
    fn fc_bounded_and_monotone_in_p(n in 1usize..200, k in 0usize..100, p in 0.0f64..0.5, dp in 0.0f64..0.1) {
        let sep = 2 * (k % (n + 1));
        let lo = fc_1d_exact(n, p, sep).unwrap().value;
        let hi = fc_1d_exact(n, (p + dp).min(0.5), sep).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo - 1e-12);
    }
}
