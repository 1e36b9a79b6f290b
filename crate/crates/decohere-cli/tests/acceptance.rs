//! Acceptance checks, one PASS/FAIL line each.

use std::f64::consts::{LN_2, PI};
use std::time::{Duration, Instant};

use decohere::dense::{apply_site_channels, cluster_density, decohered_cluster, fidelity_correlator, negativity_dense, renyi_moments};
use decohere::fidelity::{fc_1d_exact, fc_2d, Fc2dMode};
use decohere::mpdo::{cluster_mpdo, moment_spectra, renyi_negativity_tm, spurious_ten_renyi, DEFAULT_CLUSTER_TOL};
use decohere::negativity::{
    spurious_ten, spurious_ten_stabilizer, toric_boundary_negativity_exact, toric_boundary_negativity_mc, trace_norm_exact_enum,
    trace_norm_mc, BoundaryRates, McConfig, NoiseKind,
};
use decohere::pauli::{sublattice_a, Pauli, PauliOperator};
use decohere::statmech::{beta_from_p, normalization_constant, Beta, IsingParams, TransferKind, TransferOperator};
use decohere_cli::record::Table;
use decohere_cli::reproduce::{reproduce, Figure, Request, Scale};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: [f64; 5] = [0.0, 0.1, 0.25, 0.4, 0.5];

/// Name, check, time budget in seconds.
type Check = (&'static str, fn() -> Outcome, u64);

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), notes: Vec::new() }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

fn zz(n: usize, x: usize, y: usize) -> PauliOperator {
    if x % n == y % n {
        return PauliOperator::identity(n);
    }
    PauliOperator::from_sparse(n, &[(x, Pauli::Z), (y % n, Pauli::Z)]).unwrap()
}

fn kinds() -> [(NoiseKind, &'static str); 2] {
    [(NoiseKind::X, "X"), (NoiseKind::Z, "Z")]
}

fn fidelity_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for two_n in [4usize, 6, 8] {
        for p in GRID {
            let rho = decohered_cluster(two_n, p, Pauli::X).unwrap();
            for sep in [2usize, 4] {
                let dense = fidelity_correlator(&rho, &zz(two_n, 0, sep)).unwrap();
                let fast = fc_1d_exact(two_n / 2, p, sep).unwrap().value;
                worst = worst.max((dense - fast).abs());
                count += 1;
            }
        }
    }
    Outcome::new(worst < 1e-10, format!("{count} points, max |exact - dense| = {worst:.2e} (tol 1e-10)"))
}

fn plateau() -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    for n in 1..=1024usize {
        let mut seps = vec![2, 2 * (n / 2), 2 * n];
        seps.dedup();
        for sep in seps.into_iter().filter(|&s| s > 0 && s <= 2 * n) {
            count += 1;
            let v = fc_1d_exact(n, 0.5, sep).unwrap().value;
            if v != 1.0 {
                bad.push(format!("N={n} sep={sep}: {v}"));
            }
        }
    }
    Outcome::new(bad.is_empty(), format!("{count} (N, sep) pairs at p=0.5, {} not exactly 1 {:?}", bad.len(), &bad[..bad.len().min(3)]))
}

fn decay_length() -> Outcome {
    let n = 1024usize;
    let mut pass = true;
    let mut half_pass = true;
    let mut lines = Vec::new();
    for p in [0.1f64, 0.25, 0.4] {
        let inv_xi = -(2.0 * (p * (1.0 - p)).sqrt()).ln();
        let big = fc_1d_exact(n, p, n).unwrap().log_value;
        let half = fc_1d_exact(n / 2, p, n / 2).unwrap().log_value;
        let slope = (half - big) / (n / 2) as f64;
        let rel = (slope - inv_xi).abs() / inv_xi;
        let rel_half = (slope - inv_xi / 2.0).abs() / (inv_xi / 2.0);
        pass &= rel < 0.01;
        half_pass &= rel_half < 0.01;
        lines.push(format!("p={p}: slope {slope:.5} (-log F/N {:.5}), 1/xi {inv_xi:.5}, rel {rel:.3}", -big / n as f64));
    }
    Outcome::new(pass, lines.join("; ")).note(format!(
        "slope against 1/(2 xi) within 1%: {}",
        if half_pass { "holds" } else { "does not hold" }
    ))
}

fn fig2() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let req = Request {
        figure: Figure::Fig2,
        scale: Scale::Full,
        yes_long: true,
        samples: None,
        seed: 0,
        batches: 64,
        sizes: None,
        out: dir.path().to_path_buf(),
    };
    let out = reproduce(&req).unwrap();
    let t = Table::parse(&std::fs::read_to_string(&out.csv).unwrap()).unwrap();
    let f = |r: usize, c: &str| -> f64 { t.get(r, c).unwrap().parse().unwrap() };
    // (p, N) -> F
    let mut by_p: std::collections::BTreeMap<u64, Vec<(usize, f64)>> = Default::default();
    for r in 0..t.rows.len() {
        by_p.entry(f(r, "p").to_bits()).or_default().push((f(r, "N") as usize, f(r, "value")));
    }
    let mut curves = std::collections::BTreeSet::new();
    let mut monotone = true;
    let mut through = true;
    for (bits, mut pts) in by_p {
        pts.sort_by_key(|&(n, _)| n);
        curves.extend(pts.iter().map(|&(n, _)| n));
        monotone &= pts.windows(2).all(|w| w[1].1 <= w[0].1);
        if f64::from_bits(bits) == 0.5 {
            through &= pts.iter().all(|&(_, v)| v == 1.0) && pts.len() == 10;
        }
    }
    let pass = monotone && through && curves.len() == 10 && out.svgs.len() == 1;
    Outcome::new(pass, format!("{} curves, {} rows, monotone in N: {monotone}, all F=1 at p=0.5: {through}", curves.len(), t.rows.len()))
}

fn spin(c: usize, i: usize) -> f64 {
    if (c >> i) & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `exp(H)` of the two non-Hermitian chains on a ring of `n` spins.
fn nh_weight(kind: NoiseKind, beta: f64, n: usize, c: usize) -> Complex64 {
    let i_pi = Complex64::new(0.0, PI);
    let mut h = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let s0 = spin(c, i);
        let s1 = spin(c, (i + 1) % n);
        let s2 = spin(c, (i + 2) % n);
        h += i_pi / 4.0 * s0 * s1;
        match kind {
            NoiseKind::X => h += beta * s0 * s2 - i_pi / 2.0 * s0,
            NoiseKind::Z => h += (beta - i_pi / 2.0) * s0,
        }
    }
    h.exp()
}

/// Sum over all subsets S of the normalised correlator of prod_{i in S} s_i.
fn subset_sum(kind: NoiseKind, beta: f64, n: usize) -> Complex64 {
    let weights: Vec<Complex64> = (0..1usize << n).map(|c| nh_weight(kind, beta, n, c)).collect();
    let z: Complex64 = weights.iter().sum();
    let mut total = Complex64::new(0.0, 0.0);
    for mask in 0..1usize << n {
        let num: Complex64 = weights
            .iter()
            .enumerate()
            .map(|(c, w)| w * (0..n).filter(|&i| (mask >> i) & 1 == 1).map(|i| spin(c, i)).product::<f64>())
            .sum();
        total += num / z;
    }
    total
}

fn negativity_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for two_n in [4usize, 6, 8, 10] {
        for (kind, _) in kinds() {
            for p in GRID {
                let rho = decohered_cluster(two_n, p, kind.letter()).unwrap();
                let dense = negativity_dense(&rho, &sublattice_a(two_n)).unwrap();
                let fast = trace_norm_exact_enum(two_n, p, kind).unwrap();
                worst = worst.max((dense - fast).abs());
                count += 1;
            }
        }
    }
    let mut worst_rel: f64 = 0.0;
    let mut closed = 0;
    for p in [0.0, 0.1, 0.25, 0.4] {
        let Beta::Finite(b) = beta_from_p(p).unwrap() else { unreachable!() };
        for two_n in [4usize, 6, 8, 10] {
            let params = IsingParams::new(Beta::Finite(b), two_n).unwrap();
            for (kind, tk, t) in [
                (NoiseKind::X, TransferKind::NonHermitianX, TransferOperator::nonhermitian_x(b)),
                (NoiseKind::Z, TransferKind::NonHermitianZ, TransferOperator::nonhermitian_z(b)),
            ] {
                // the transfer matrices drop a constant phase exp(-i pi / 4) per site of the Z chain
                let phase = match kind {
                    NoiseKind::X => Complex64::new(1.0, 0.0),
                    NoiseKind::Z => Complex64::from_polar(1.0, PI * two_n as f64 / 4.0),
                };
                let z_direct: Complex64 = phase * (0..1usize << two_n).map(|c| nh_weight(kind, b, two_n, c)).sum::<Complex64>();
                let z_closed = t.closed_partition(two_n).unwrap().to_complex();
                let z_trace = t.trace_power(two_n).to_complex();
                worst_rel = worst_rel.max(((z_direct - z_closed) / z_closed).norm());
                worst_rel = worst_rel.max(((z_trace - z_closed) / z_closed).norm());
                if two_n <= 8 {
                    let c_direct = subset_sum(kind, b, two_n);
                    let c_closed = normalization_constant(&params, tk).unwrap().exp();
                    worst_rel = worst_rel.max(((c_direct - c_closed) / c_closed).norm());
                }
                closed += 1;
            }
        }
    }
    Outcome::new(
        worst < 1e-10 && worst_rel < 1e-10,
        format!("{count} points, max |enum - dense| = {worst:.2e}; {closed} closed forms, max rel dev {worst_rel:.2e}"),
    )
}

fn endpoints() -> Outcome {
    let mut bad = Vec::new();
    let cfg = McConfig::new(1000, 0);
    for (kind, name) in kinds() {
        for n in [2usize, 4, 16, 64, 256] {
            for (p, want) in [(0.0, LN_2), (0.5, 0.0)] {
                let s = spurious_ten_stabilizer(n, p, kind).unwrap();
                let m = spurious_ten(n, p, kind, &cfg).unwrap();
                if s != want || m.log_value != want || m.std_err != 0.0 {
                    bad.push(format!("{name} N={n} p={p}: {s} / {}", m.log_value));
                }
            }
        }
    }
    Outcome::new(bad.is_empty(), format!("X and Z, N up to 256, {} mismatches {bad:?}", bad.len()))
}

fn fig3_trend() -> Outcome {
    let cfg = McConfig::new(10_000_000, 7);
    let mut pass = true;
    let mut lines = Vec::new();
    for (kind, name, ps) in [(NoiseKind::X, "X", vec![0.0, 0.1, 0.2, 0.3]), (NoiseKind::Z, "Z", vec![0.3, 0.4, 0.5])] {
        for p in ps {
            let e = spurious_ten(16, p, kind, &cfg).unwrap();
            let (v, s) = (e.log_value / LN_2, e.std_err / LN_2);
            let ok = match kind {
                NoiseKind::X => (v - 1.0).abs() <= 3.0 * s + 1e-12,
                NoiseKind::Z => v < 0.2,
            };
            pass &= ok;
            lines.push(format!("{name} p={p}: {v:.4} +- {s:.4}{}", if ok { "" } else { " (out)" }));
        }
    }
    Outcome::new(pass, format!("N=16, 1e7 samples: {}", lines.join("; ")))
}

fn mc_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    let mut pairs = Vec::new();
    for k in 0..50u64 {
        let two_n = 2 * rng.random_range(2..=6usize);
        let p: f64 = rng.random_range(0.0..0.5);
        let kind = if rng.random_bool(0.5) { NoiseKind::X } else { NoiseKind::Z };
        let exact = trace_norm_exact_enum(two_n, p, kind).unwrap();
        let est = trace_norm_mc(two_n, p, kind, &McConfig::new(200_000, k)).unwrap();
        let z = if est.std_err > 0.0 { (est.log_value - exact).abs() / est.std_err } else { 0.0 };
        worst = worst.max(z);
        if (est.log_value - exact).abs() > 3.0 * est.std_err + 1e-12 {
            misses.push(format!("2N={two_n} p={p:.4} {kind:?}: {:.5} +- {:.5} vs {exact:.5}", est.log_value, est.std_err));
        }
        pairs.push((two_n, p, kind));
    }
    let mut deterministic = true;
    for &(two_n, p, kind) in pairs.iter().take(6) {
        let runs: Vec<_> = [1usize, 2, 8]
            .iter()
            .map(|&w| trace_norm_mc(two_n, p, kind, &McConfig::new(50_000, 9).with_workers(w)).unwrap())
            .collect();
        deterministic &= runs.iter().all(|r| r.log_value.to_bits() == runs[0].log_value.to_bits() && r.std_err.to_bits() == runs[0].std_err.to_bits());
    }
    let ten: Vec<_> = [1usize, 2, 8]
        .iter()
        .map(|&w| spurious_ten(6, 0.2, NoiseKind::X, &McConfig::new(50_000, 9).with_workers(w)).unwrap().log_value.to_bits())
        .collect();
    deterministic &= ten.iter().all(|&b| b == ten[0]);
    Outcome::new(
        misses.is_empty() && deterministic,
        format!("50 pairs, {} outside 3 std_err (max |z| {worst:.2}) {misses:?}; identical across 1/2/8 workers: {deterministic}", misses.len()),
    )
}

fn mpdo_instances() -> Outcome {
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for alpha in [2usize, 3] {
        for p in [0.1, 0.2, 0.4] {
            let m = cluster_mpdo(p, NoiseKind::X).unwrap();
            let (t, tt) = moment_spectra(&m, alpha).unwrap();
            let want = 4usize.pow(alpha as u32 - 1);
            if !t.has_unique_leading(DEFAULT_CLUSTER_TOL) {
                bad.push(format!("alpha={alpha} p={p}: T leading not unique and real"));
            }
            if tt.degeneracy(DEFAULT_CLUSTER_TOL) != want {
                bad.push(format!("alpha={alpha} p={p}: degeneracy {}", tt.degeneracy(DEFAULT_CLUSTER_TOL)));
            }
            match spurious_ten_renyi(&m, alpha).unwrap().value {
                Some(v) if (v - LN_2).abs() < 1e-12 => {}
                other => bad.push(format!("alpha={alpha} p={p}: spurious {other:?}")),
            }
            let rho = decohered_cluster(8, p, Pauli::X).unwrap();
            let dense = renyi_moments(&rho, &sublattice_a(8), alpha as u32).unwrap().negativity(alpha as u32);
            let tm = renyi_negativity_tm(&m, alpha, 8).unwrap();
            worst = worst.max((dense - tm).abs());
        }
    }
    if worst >= 1e-8 {
        bad.push(format!("transfer vs dense {worst:.2e}"));
    }
    Outcome::new(bad.is_empty(), format!("6 instances, transfer vs dense max {worst:.2e} {bad:?}"))
}

fn dimensional_reduction() -> Outcome {
    let beta: f64 = 0.3;
    let p = 0.5 * (1.0 - (-2.0 * beta).exp());
    let mut worst: f64 = 0.0;
    for (height, h) in [(3usize, 2usize), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)] {
        for w in [1usize, 2, 3] {
            let b = fc_2d(w, h, p, Fc2dMode::Brute { width: 4, height, include_boundary: false }).unwrap().value;
            let f = fc_2d(w, h, p, Fc2dMode::Factorized { width: 4 }).unwrap().value;
            worst = worst.max((b - f).abs());
        }
    }
    let f = fc_2d(2, 2, p, Fc2dMode::Factorized { width: 4 }).unwrap().value;
    let diffs: Vec<f64> = [3usize, 4, 5]
        .iter()
        .map(|&height| (fc_2d(2, 2, p, Fc2dMode::Brute { width: 4, height, include_boundary: true }).unwrap().value - f).abs())
        .collect();
    let decreasing = diffs.windows(2).all(|d| d[1] < d[0]);
    Outcome::new(
        worst < 1e-12 && decreasing,
        format!("open boundary max dev {worst:.2e} (tol 1e-12); |brute - factorized| for 3, 4, 5 spin rows: {diffs:.4?}"),
    )
}

fn toric() -> Outcome {
    let mut identical = true;
    for two_n in [4usize, 8, 12, 16] {
        for p in GRID {
            let r = BoundaryRates::new(p, p).unwrap();
            identical &= toric_boundary_negativity_exact(two_n, r).unwrap().to_bits() == trace_norm_exact_enum(two_n, p, NoiseKind::X).unwrap().to_bits();
            let cfg = McConfig::new(20_000, 3);
            let a = toric_boundary_negativity_mc(two_n, r, &cfg).unwrap();
            let b = trace_norm_mc(two_n, p, NoiseKind::X, &cfg).unwrap();
            identical &= a.log_value.to_bits() == b.log_value.to_bits() && a.std_err.to_bits() == b.std_err.to_bits();
        }
    }
    let mut worst: f64 = 0.0;
    let base = cluster_density(8).unwrap();
    for (px, pz) in [(0.1, 0.3), (0.3, 0.1), (0.0, 0.4), (0.5, 0.2), (0.25, 0.45)] {
        let rates: Vec<(usize, f64)> = (0..8).map(|q| (q, if q % 2 == 0 { px } else { pz })).collect();
        let rho = apply_site_channels(&base, Pauli::X, &rates).unwrap();
        let dense = negativity_dense(&rho, &sublattice_a(8)).unwrap();
        let fast = toric_boundary_negativity_exact(8, BoundaryRates::new(px, pz).unwrap()).unwrap();
        worst = worst.max((dense - fast).abs());
    }
    Outcome::new(identical && worst < 1e-10, format!("equal rates bit-identical: {identical}; mixed rates vs dense max {worst:.2e}"))
}

fn main() {
    let checks: [Check; 11] = [
        ("fidelity oracle equivalence", fidelity_oracle, 60),
        ("maximal-rate plateau", plateau, 10),
        ("decay length", decay_length, 60),
        ("fidelity figure", fig2, 60),
        ("negativity oracle equivalence", negativity_oracle, 300),
        ("endpoint values", endpoints, 10),
        ("spurious TEN trend", fig3_trend, 600),
        ("MC soundness", mc_soundness, 300),
        ("MPDO instances", mpdo_instances, 120),
        ("2D dimensional reduction", dimensional_reduction, 120),
        ("toric boundary", toric, 60),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, budget)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let pass = outcome.pass && in_time;
        println!(
            "criterion {:>2} {}: {name}: {} [{:.1}s of {budget}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            took.as_secs_f64()
        );
        for n in &outcome.notes {
            println!("             note: {n}");
        }
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
