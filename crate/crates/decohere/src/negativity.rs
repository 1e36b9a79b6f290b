//! Logarithmic negativity of decohered cluster chains between the two sublattices.
//!
//! The partial transpose is diagonal in the stabilizer-sign basis up to relabelling, and
//! its eigenvalues are correlators of the non-Hermitian chains (see
//! [`ChainKernel`](crate::statmech::ChainKernel)). Small chains are enumerated exactly;
//! larger ones use importance sampling over error patterns.
//!
//! `A` is the sublattice of even (0-indexed) qubits and the negativity is taken with respect
//! to it.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::logsum::{ln_add, log_sum_exp, KahanSum};
use crate::pauli::{build_cluster_1d, maximal_dephase, negativity_stabilizer, sublattice_a, Pauli, PauliOperator};
use crate::statmech::{ChainCoupling, ChainKernel};

/// Largest chain handled by [`trace_norm_exact_enum`].
pub const MAX_ENUM_QUBITS: usize = 20;

/// Number of error-rate components in the sampling mixture.
pub const MIXTURE_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseKind {
    X,
    Z,
}

impl NoiseKind {
    pub fn letter(self) -> Pauli {
        match self {
            NoiseKind::X => Pauli::X,
            NoiseKind::Z => Pauli::Z,
        }
    }
}

/// Rates of `X` noise at the rough boundary of the toric code: `p_x` on the even
/// (0-indexed) boundary qubits and `p_z` on the odd ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRates {
    pub p_x: f64,
    pub p_z: f64,
}

impl BoundaryRates {
    pub fn new(p_x: f64, p_z: f64) -> Result<Self> {
        for p in [p_x, p_z] {
            if !(0.0..=0.5).contains(&p) {
                return invalid(format!("error rate {p} outside [0, 1/2]"));
            }
        }
        Ok(Self { p_x, p_z })
    }

    /// Rates from inverse temperatures `beta = -1/2 log(1 - 2p)`.
    pub fn from_betas(beta_x: f64, beta_z: f64) -> Result<Self> {
        for b in [beta_x, beta_z] {
            if !(b >= 0.0) {
                return invalid(format!("beta must be nonnegative, got {b}"));
            }
        }
        let p = |b: f64| -0.5 * (-2.0 * b).exp_m1();
        Self::new(p(beta_x), p(beta_z))
    }
}

/// Per-sublattice noise description shared by every negativity route.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Channel {
    coupling: ChainCoupling,
    p_a: f64,
    p_b: f64,
}

impl Channel {
    fn uniform(kind: NoiseKind, p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return invalid(format!("error rate {p} outside [0, 1/2]"));
        }
        let coupling = match kind {
            NoiseKind::X => ChainCoupling::Pair,
            NoiseKind::Z => ChainCoupling::Field,
        };
        Ok(Self { coupling, p_a: p, p_b: p })
    }

    fn boundary(rates: BoundaryRates) -> Result<Self> {
        let r = BoundaryRates::new(rates.p_x, rates.p_z)?;
        Ok(Self { coupling: ChainCoupling::Pair, p_a: r.p_x, p_b: r.p_z })
    }

    fn rate(&self, q: usize) -> f64 {
        if q.is_multiple_of(2) {
            self.p_a
        } else {
            self.p_b
        }
    }

    fn rates(&self, two_n: usize) -> Vec<f64> {
        (0..two_n).map(|q| self.rate(q)).collect()
    }

    fn kernel(&self, two_n: usize) -> Result<ChainKernel> {
        ChainKernel::from_rates(two_n, self.coupling, &self.rates(two_n))
    }

    fn is_pure(&self) -> bool {
        self.p_a == 0.0 && self.p_b == 0.0
    }

    fn is_maximal(&self) -> bool {
        self.p_a == 0.5 && self.p_b == 0.5
    }

    fn with_rates(&self, p_a: f64, p_b: f64) -> Self {
        Self { coupling: self.coupling, p_a, p_b }
    }
}

fn check_chain(two_n: usize) -> Result<()> {
    if two_n < 4 || !two_n.is_multiple_of(2) {
        return invalid(format!("chain length must be even and >= 4, got {two_n}"));
    }
    Ok(())
}

fn pure_value(two_n: usize) -> f64 {
    (two_n / 2 - 1) as f64 * LN_2
}

fn walsh_hadamard(f: &mut [f64]) {
    let n = f.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let a = f[j];
                let b = f[j + h];
                f[j] = a + b;
                f[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

fn exact_enum(two_n: usize, ch: Channel) -> Result<f64> {
    check_chain(two_n)?;
    if two_n > MAX_ENUM_QUBITS {
        return invalid(format!("exact enumeration supports at most {MAX_ENUM_QUBITS} qubits, got {two_n}"));
    }
    if ch.is_maximal() {
        return Ok(0.0);
    }
    if ch.is_pure() {
        return Ok(pure_value(two_n));
    }
    let n = two_n as u32;
    let full: u64 = (1u64 << n) - 1;
    let rot = |c: u64, k: u32| ((c >> k) | (c << (n - k))) & full;
    let even: u64 = (0..n).step_by(2).fold(0, |m, i| m | (1 << i));
    let odd = full ^ even;
    let da = 1.0 - 2.0 * ch.p_a;
    let db = 1.0 - 2.0 * ch.p_b;
    // bit i of the unsatisfied mask belongs to the rate of qubit i + 1 (pair) or i (field)
    let (mask_a, mask_b) = match ch.coupling {
        ChainCoupling::Pair => (odd, even),
        ChainCoupling::Field => (even, odd),
    };
    let mut w: Vec<f64> = (0..1usize << n)
        .into_par_iter()
        .with_min_len(1 << 12)
        .map(|c| {
            let c = c as u64;
            let sign = if (c & rot(c, 1)).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            let u = match ch.coupling {
                ChainCoupling::Pair => c ^ rot(c, 2),
                ChainCoupling::Field => c,
            };
            sign * da.powi((u & mask_a).count_ones() as i32) * db.powi((u & mask_b).count_ones() as i32)
        })
        .collect();
    walsh_hadamard(&mut w);
    let mut acc = KahanSum::new();
    for v in &w {
        acc.add(v.abs());
    }
    Ok(acc.value().ln() - two_n as f64 * LN_2)
}

/// `log ||rho^{T_A}||_1` by summing `|lambda_S|` over all `2^{2N}` subsets.
pub fn trace_norm_exact_enum(two_n: usize, p: f64, kind: NoiseKind) -> Result<f64> {
    exact_enum(two_n, Channel::uniform(kind, p)?)
}

/// Eigenvalue label of the partial transpose together with its exact class probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SyndromeSample {
    pub subset: Vec<bool>,
    pub ln_prob: f64,
}

fn xlny(k: usize, ln_y: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_y
    }
}

/// Stabilizers flipped by an error pattern.
fn syndrome_of(coupling: ChainCoupling, errors: &[bool]) -> Vec<bool> {
    let n = errors.len();
    match coupling {
        ChainCoupling::Pair => (0..n).map(|j| errors[(j + n - 1) % n] ^ errors[(j + 1) % n]).collect(),
        ChainCoupling::Field => errors.to_vec(),
    }
}

/// Per-parity error counts that determine `pi(S)`: the number of flipped stabilizers
/// sitting on even / odd qubits (field), or the weight of one preimage error pattern on
/// even / odd qubits (pair). `None` when no error pattern produces `S`.
fn class_stats(coupling: ChainCoupling, subset: &[bool]) -> Option<[usize; 2]> {
    let n = subset.len();
    let mut out = [0usize; 2];
    match coupling {
        ChainCoupling::Field => {
            for (q, &s) in subset.iter().enumerate() {
                if s {
                    out[q % 2] += 1;
                }
            }
        }
        ChainCoupling::Pair => {
            for (qp, slot) in out.iter_mut().enumerate() {
                // errors on qubits of parity `qp` flip the stabilizers between them
                let mut e = false;
                let mut w = 0usize;
                for m in 0..n / 2 {
                    let q = qp + 2 * m;
                    if e {
                        w += 1;
                    }
                    e ^= subset[(q + 1) % n];
                }
                if e {
                    return None;
                }
                *slot = w;
            }
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy)]
struct LnRates {
    lp: [f64; 2],
    lq: [f64; 2],
}

impl LnRates {
    fn new(ch: &Channel) -> Self {
        let l = |p: f64| (p.ln(), (1.0 - p).ln());
        let (pa, qa) = l(ch.p_a);
        let (pb, qb) = l(ch.p_b);
        Self { lp: [pa, pb], lq: [qa, qb] }
    }
}

fn ln_prob_from_stats(coupling: ChainCoupling, stats: Option<[usize; 2]>, half: usize, r: &LnRates) -> f64 {
    let Some(st) = stats else {
        return f64::NEG_INFINITY;
    };
    let mut acc = 0.0;
    for par in 0..2 {
        let k = st[par];
        let (lp, lq) = (r.lp[par], r.lq[par]);
        acc += match coupling {
            ChainCoupling::Field => xlny(k, lp) + xlny(half - k, lq),
            ChainCoupling::Pair => ln_add(xlny(k, lp) + xlny(half - k, lq), xlny(half - k, lp) + xlny(k, lq)),
        };
    }
    acc
}

/// `ln pi(S)` for the given channel: the probability that i.i.d. errors produce syndrome `S`.
fn ln_class_prob(ch: &Channel, subset: &[bool]) -> f64 {
    ln_prob_from_stats(ch.coupling, class_stats(ch.coupling, subset), subset.len() / 2, &LnRates::new(ch))
}

fn draw_errors<R: Rng>(ch: &Channel, two_n: usize, rng: &mut R) -> Vec<bool> {
    (0..two_n).map(|q| rng.random_bool(ch.rate(q))).collect()
}

/// Draws i.i.d. errors at rate `p` and returns the syndrome with its probability.
pub fn sample_syndrome<R: Rng>(two_n: usize, p: f64, kind: NoiseKind, rng: &mut R) -> Result<SyndromeSample> {
    check_chain(two_n)?;
    let ch = Channel::uniform(kind, p)?;
    let e = draw_errors(&ch, two_n, rng);
    let subset = syndrome_of(ch.coupling, &e);
    let ln_prob = ln_class_prob(&ch, &subset);
    Ok(SyndromeSample { subset, ln_prob })
}

/// Exact `ln pi(S)` for uniform noise.
pub fn syndrome_ln_prob(p: f64, kind: NoiseKind, subset: &[bool]) -> Result<f64> {
    check_chain(subset.len())?;
    Ok(ln_class_prob(&Channel::uniform(kind, p)?, subset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub seed: u64,
    pub n_batches: usize,
    /// Thread count; `None` uses the ambient pool. Results do not depend on it.
    pub workers: Option<usize>,
}

impl McConfig {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        Self { n_samples, seed, n_batches: 64, workers: None }
    }

    pub fn with_batches(mut self, n_batches: usize) -> Self {
        self.n_batches = n_batches;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_batches < 16 {
            return invalid(format!("need at least 16 batches, got {}", self.n_batches));
        }
        if self.n_samples < self.n_batches as u64 {
            return invalid(format!("{} samples cannot fill {} batches", self.n_samples, self.n_batches));
        }
        if self.workers == Some(0) {
            return invalid("worker count must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub log_value: f64,
    pub std_err: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    fn exact(log_value: f64, cfg: &McConfig) -> Self {
        Self { log_value, std_err: 0.0, n_samples: cfg.n_samples, seed: cfg.seed }
    }
}

fn mixture(ch: &Channel) -> Vec<Channel> {
    let k = MIXTURE_COMPONENTS;
    (0..k)
        .map(|i| {
            let f = i as f64 / (k - 1) as f64;
            ch.with_rates(ch.p_a + (0.5 - ch.p_a) * f, ch.p_b + (0.5 - ch.p_b) * f)
        })
        .collect()
}

fn run_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn mc_estimate(two_n: usize, ch: Channel, cfg: &McConfig) -> Result<McEstimate> {
    check_chain(two_n)?;
    cfg.validate()?;
    if ch.is_pure() {
        return Ok(McEstimate::exact(pure_value(two_n), cfg));
    }
    if ch.is_maximal() {
        return Ok(McEstimate::exact(0.0, cfg));
    }
    let kernel = ch.kernel(two_n)?;
    let comps = mixture(&ch);
    let comp_logs: Vec<LnRates> = comps.iter().map(LnRates::new).collect();
    let ln_k = (comps.len() as f64).ln();
    let n = cfg.n_samples;
    let nb = cfg.n_batches as u64;
    let one = |idx: u64| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx);
        let comp = &comps[(idx % comps.len() as u64) as usize];
        let e = draw_errors(comp, two_n, &mut rng);
        let s = syndrome_of(ch.coupling, &e);
        let stats = class_stats(ch.coupling, &s);
        let lq: Vec<f64> = comp_logs.iter().map(|r| ln_prob_from_stats(ch.coupling, stats, two_n / 2, r)).collect();
        let ln_q = log_sum_exp(&lq) - ln_k;
        let (sign, ln_lambda) = kernel.ln_eigenvalue(&s);
        if sign == 0.0 {
            f64::NEG_INFINITY
        } else {
            ln_lambda - ln_q
        }
    };
    let batch_logs: Vec<f64> = run_pool(cfg.workers, || {
        (0..nb)
            .into_par_iter()
            .map(|b| {
                let lo = b * n / nb;
                let hi = (b + 1) * n / nb;
                let logs: Vec<f64> = (lo..hi).map(one).collect();
                log_sum_exp(&logs) - ((hi - lo) as f64).ln()
            })
            .collect()
    })?;
    let m = batch_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NumericDomain("all sampled eigenvalues vanished".into()));
    }
    let xs: Vec<f64> = batch_logs.iter().map(|&l| (l - m).exp()).collect();
    let b = xs.len() as f64;
    let mut s = KahanSum::new();
    for &x in &xs {
        s.add(x);
    }
    let mean = s.value() / b;
    let mut v = KahanSum::new();
    for &x in &xs {
        v.add((x - mean) * (x - mean));
    }
    let var = v.value() / (b - 1.0);
    let std_err = (var / b).sqrt() / mean;
    Ok(McEstimate { log_value: m + mean.ln(), std_err, n_samples: n, seed: cfg.seed })
}

/// Importance-sampling estimate of `log ||rho^{T_A}||_1`.
pub fn trace_norm_mc(two_n: usize, p: f64, kind: NoiseKind, cfg: &McConfig) -> Result<McEstimate> {
    mc_estimate(two_n, Channel::uniform(kind, p)?, cfg)
}

fn endpoint_rank(two_n: usize, p: f64, kind: NoiseKind) -> Result<usize> {
    let tab = build_cluster_1d(two_n)?;
    let tab = if p == 0.0 {
        tab
    } else if p == 0.5 {
        let kraus = (0..two_n)
            .map(|q| PauliOperator::single(two_n, q, kind.letter()))
            .collect::<Result<Vec<_>>>()?;
        maximal_dephase(&tab, &kraus)?
    } else {
        return invalid(format!("stabilizer route needs p in {{0, 1/2}}, got {p}"));
    };
    Ok(negativity_stabilizer(&tab, &sublattice_a(two_n))?.rank)
}

/// Negativity of a chain of `two_n` qubits at the endpoints `p = 0` and `p = 1/2` from the
/// stabilizer formalism.
pub fn stabilizer_endpoint_negativity(two_n: usize, p: f64, kind: NoiseKind) -> Result<f64> {
    Ok(0.5 * endpoint_rank(two_n, p, kind)? as f64 * LN_2)
}

/// `E(2n) - 2 E(n)` in nats, with `E(L)` the negativity of a chain of `2L` qubits, at the
/// endpoints `p = 0` and `p = 1/2`.
pub fn spurious_ten_stabilizer(n: usize, p: f64, kind: NoiseKind) -> Result<f64> {
    let big = endpoint_rank(4 * n, p, kind)? as i64;
    let small = endpoint_rank(2 * n, p, kind)? as i64;
    Ok(0.5 * (big - 2 * small) as f64 * LN_2)
}

/// Spurious topological negativity `E(2n) - 2 E(n)`, comparing chains of `4n` and `2n`
/// qubits. The larger chain uses `cfg.seed`, the smaller `cfg.seed + 1`.
pub fn spurious_ten(n: usize, p: f64, kind: NoiseKind, cfg: &McConfig) -> Result<McEstimate> {
    if n < 2 {
        return invalid(format!("spurious TEN needs n >= 2, got {n}"));
    }
    if p == 0.0 || p == 0.5 {
        return Ok(McEstimate::exact(spurious_ten_stabilizer(n, p, kind)?, cfg));
    }
    let big = trace_norm_mc(4 * n, p, kind, cfg)?;
    let small_cfg = McConfig { seed: cfg.seed.wrapping_add(1), ..*cfg };
    let small = trace_norm_mc(2 * n, p, kind, &small_cfg)?;
    Ok(McEstimate {
        log_value: big.log_value - 2.0 * small.log_value,
        std_err: (big.std_err.powi(2) + 4.0 * small.std_err.powi(2)).sqrt(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
    })
}

/// Boundary negativity of the toric code under `X` noise with sublattice-dependent rates,
/// by exact enumeration.
pub fn toric_boundary_negativity_exact(two_n: usize, rates: BoundaryRates) -> Result<f64> {
    exact_enum(two_n, Channel::boundary(rates)?)
}

/// Monte Carlo version of [`toric_boundary_negativity_exact`]. Equal rates reproduce
/// [`trace_norm_mc`] with `X` noise bit for bit.
pub fn toric_boundary_negativity_mc(two_n: usize, rates: BoundaryRates, cfg: &McConfig) -> Result<McEstimate> {
    mc_estimate(two_n, Channel::boundary(rates)?, cfg)
}
