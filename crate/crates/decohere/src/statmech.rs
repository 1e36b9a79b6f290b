//! Effective classical models: ferromagnetic Ising chains, the non-Hermitian chains
//! whose correlators give the spectrum of the partial transpose, and the plaquette
//! Ising model on a cylinder.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::logsum::ln_add;

/// Inverse temperature on the extended half-line; `Infinite` stands for `p = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn finite(b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return invalid(format!("beta must be finite and nonnegative, got {b}"));
        }
        Ok(Beta::Finite(b))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Beta::Infinite)
    }

    /// `tanh(beta)`, equal to `p / (1 - p)`.
    pub fn tanh(&self) -> f64 {
        match *self {
            Beta::Finite(b) => b.tanh(),
            Beta::Infinite => 1.0,
        }
    }

    /// `ln tanh(beta)`; `-inf` at `beta = 0`.
    pub fn ln_tanh(&self) -> f64 {
        match *self {
            Beta::Finite(b) => {
                if b == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    // tanh b = (1 - e^{-2b}) / (1 + e^{-2b})
                    let e = (-2.0 * b).exp();
                    (-(-2.0 * b).exp_m1()).ln() - e.ln_1p()
                }
            }
            Beta::Infinite => 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Beta::Finite(b) => b,
            Beta::Infinite => f64::INFINITY,
        }
    }
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return invalid(format!("error rate {p} outside [0, 1/2]"));
    }
    Ok(())
}

/// `beta = -1/2 log(1 - 2p)`.
pub fn beta_from_p(p: f64) -> Result<Beta> {
    check_rate(p)?;
    if p == 0.5 {
        return Ok(Beta::Infinite);
    }
    Ok(Beta::Finite(-0.5 * (-2.0 * p).ln_1p()))
}

/// Inverse of [`beta_from_p`].
pub fn p_from_beta(beta: Beta) -> f64 {
    match beta {
        Beta::Finite(b) => -0.5 * (-2.0 * b).exp_m1(),
        Beta::Infinite => 0.5,
    }
}

/// A uniform Ising chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub beta: Beta,
    pub n_sites: usize,
}

impl IsingParams {
    pub fn new(beta: Beta, n_sites: usize) -> Result<Self> {
        if n_sites == 0 {
            return invalid("chain needs at least one site");
        }
        Ok(Self { beta, n_sites })
    }

    pub fn from_p(p: f64, n_sites: usize) -> Result<Self> {
        Self::new(beta_from_p(p)?, n_sites)
    }
}

/// Bit pattern of error locations with cached weight.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorPattern {
    bits: Vec<bool>,
    weight: usize,
}

impl ErrorPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        let weight = bits.iter().filter(|&&b| b).count();
        Self { bits, weight }
    }

    pub fn from_sites(n: usize, sites: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &s in sites {
            if s >= n {
                return invalid(format!("site {s} out of range for length {n}"));
            }
            bits[s] = !bits[s];
        }
        Ok(Self::new(bits))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.weight
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Stabilizer-sign subset produced by `X` errors on a periodic cluster chain:
    /// stabilizer `j` flips when exactly one of qubits `j-1`, `j+1` is in error.
    pub fn cluster_x_syndrome(&self) -> Vec<bool> {
        let n = self.bits.len();
        (0..n).map(|j| self.bits[(j + n - 1) % n] ^ self.bits[(j + 1) % n]).collect()
    }
}

/// `ln <sigma_S>` of the periodic ferromagnetic chain when `S` is the boundary of an
/// error string of weight `w`: `ln[(t^w + t^{N-w}) / (1 + t^N)]`.
pub fn ising_correlator_ln(beta: Beta, n_sites: usize, w: usize) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    let lt = beta.ln_tanh();
    let n = n_sites as f64;
    let w = w as f64;
    if lt == f64::NEG_INFINITY {
        return if w == 0.0 || w == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_add(w * lt, (n - w) * lt) - ln_add(0.0, n * lt)
}

/// Multi-spin correlator of the periodic chain via the closed form; depends only on `|e|`.
pub fn ising_correlator_closed(params: &IsingParams, e: &ErrorPattern) -> Result<f64> {
    if e.len() != params.n_sites {
        return invalid(format!("error pattern length {} differs from chain length {}", e.len(), params.n_sites));
    }
    Ok(ising_correlator_ln(params.beta, params.n_sites, e.weight()).exp())
}

/// Complex number `exp(ln_abs) * i^quarter_turns`, used for partition functions whose
/// phase is an exact multiple of `pi/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasedLog {
    pub ln_abs: f64,
    pub quarter_turns: u8,
}

impl PhasedLog {
    pub fn to_complex(self) -> Complex64 {
        let phase = match self.quarter_turns % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        phase * self.ln_abs.exp()
    }
}

/// Log-magnitude plus phase of a complex number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexLog {
    pub ln_abs: f64,
    pub arg: f64,
}

impl ComplexLog {
    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.ln_abs.exp(), self.arg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferKind {
    Ising,
    NonHermitianX,
    NonHermitianZ,
}

/// Small transfer matrix with its closed-form partition function.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOperator {
    kind: TransferKind,
    beta: f64,
    matrix: DMatrix<Complex64>,
}

impl TransferOperator {
    /// `e^beta I + e^{-beta} X`.
    pub fn ising(beta: f64) -> Self {
        let a = Complex64::new(beta.exp(), 0.0);
        let b = Complex64::new((-beta).exp(), 0.0);
        Self { kind: TransferKind::Ising, beta, matrix: DMatrix::from_row_slice(2, 2, &[a, b, b, a]) }
    }

    /// Four-state transfer matrix of `H_{beta,X}` in the ordered pair basis
    /// `(++, +-, -+, --)`.
    pub fn nonhermitian_x(beta: f64) -> Self {
        let e = |re: f64, im: f64| Complex64::from_polar(re.exp(), im);
        let z = Complex64::new(0.0, 0.0);
        let b = beta;
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(4, 4, &[
            e(b, -FRAC_PI_4), e(-b, -FRAC_PI_2), z, z,
            z, z, e(b, FRAC_PI_4), e(-b, FRAC_PI_2),
            e(-b, -FRAC_PI_2), e(b, -3.0 * FRAC_PI_4), z, z,
            z, z, e(-b, FRAC_PI_2), e(b, 3.0 * FRAC_PI_4),
        ]);
        Self { kind: TransferKind::NonHermitianX, beta, matrix: m }
    }

    /// Two-state transfer matrix of `H_{beta,Z}` with the constant phase stripped.
    pub fn nonhermitian_z(beta: f64) -> Self {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(beta.exp(), 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(-(-beta).exp(), 0.0),
            ],
        );
        Self { kind: TransferKind::NonHermitianZ, beta, matrix: m }
    }

    pub fn kind(&self) -> TransferKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// `Tr[T^k]` by repeated squaring with rescaling.
    pub fn trace_power(&self, k: usize) -> ComplexLog {
        let d = self.matrix.nrows();
        let mut result = DMatrix::<Complex64>::identity(d, d);
        let mut result_ln = 0.0;
        let mut base = self.matrix.clone();
        let mut base_ln = 0.0;
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
                result_ln += base_ln;
                let s = result.camax();
                result /= Complex64::new(s, 0.0);
                result_ln += s.ln();
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
                base_ln *= 2.0;
                let s = base.camax();
                base /= Complex64::new(s, 0.0);
                base_ln += s.ln();
            }
        }
        let tr = result.trace();
        ComplexLog { ln_abs: result_ln + tr.norm().ln(), arg: tr.arg() }
    }

    /// Closed-form `Tr[T^steps]`. For the non-Hermitian kinds `steps = 2N` must be even.
    pub fn closed_partition(&self, steps: usize) -> Result<PhasedLog> {
        let b = self.beta;
        match self.kind {
            TransferKind::Ising => {
                // (2 cosh b)^N + (2 sinh b)^N
                let n = steps as f64;
                let lc = LN_2 + b + (-2.0 * b).exp().ln_1p() - LN_2;
                let ls = if b == 0.0 { f64::NEG_INFINITY } else { b + (-(-2.0 * b).exp_m1()).ln() };
                if steps % 2 == 1 || b > 0.0 {
                    Ok(PhasedLog { ln_abs: ln_add(n * lc, n * ls), quarter_turns: 0 })
                } else {
                    Ok(PhasedLog { ln_abs: n * lc, quarter_turns: 0 })
                }
            }
            TransferKind::NonHermitianX => {
                if !steps.is_multiple_of(2) {
                    return invalid("non-Hermitian chains need an even number of sites");
                }
                let n = (steps / 2) as f64;
                let ln_bracket = ln_bracket_x(b, steps);
                let ln_abs = LN_2 + ln_bracket - n * LN_2 - 2.0 * b * n;
                let turns = ((4 - (steps / 2) % 4) % 4) as u8;
                Ok(PhasedLog { ln_abs, quarter_turns: turns })
            }
            TransferKind::NonHermitianZ => {
                if !steps.is_multiple_of(2) {
                    return invalid("non-Hermitian chains need an even number of sites");
                }
                let n = (steps / 2) as f64;
                let ln_abs = ln_bracket_z(b, steps) - 2.0 * n * LN_2 - 2.0 * b * n;
                Ok(PhasedLog { ln_abs, quarter_turns: 0 })
            }
        }
    }
}

/// `ln[(a+1)^{2N} + (a-1)^{2N}]` with `a = sqrt(2 e^{4b} - 1)`.
fn ln_bracket_x(b: f64, two_n: usize) -> f64 {
    let ln_a = 2.0 * b + 0.5 * (2.0 - (-4.0 * b).exp()).ln();
    let a_inv = (-ln_a).exp();
    let ln_plus = ln_a + a_inv.ln_1p();
    let ratio = (1.0 - a_inv) / (1.0 + a_inv);
    let m = two_n as f64;
    if ratio == 0.0 {
        return m * ln_plus;
    }
    m * ln_plus + (m * ratio.abs().ln()).exp().ln_1p()
}

/// `ln[(c+s)^{2N} + (c-s)^{2N}]` with `c = e^{2b} - 1`, `s = sqrt(e^{4b} + 6 e^{2b} + 1)`.
fn ln_bracket_z(b: f64, two_n: usize) -> f64 {
    let u = (-2.0 * b).exp();
    // c + s = e^{2b} (1 - u + sqrt(1 + 6u + u^2)); c - s = e^{2b} (1 - u - sqrt(...))
    let root = (1.0 + 6.0 * u + u * u).sqrt();
    let plus = 1.0 - u + root;
    let minus = 1.0 - u - root;
    let m = two_n as f64;
    let ln_plus = 2.0 * b + plus.ln();
    let ratio = minus.abs() / plus;
    m * ln_plus + (m * ratio.ln()).exp().ln_1p()
}

/// Which non-Hermitian chain to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NonHermitianKind {
    X,
    Z,
    /// `X` noise with rate-specific couplings: `beta_a` comes from errors on the even
    /// (0-indexed) qubits, `beta_b` from errors on the odd qubits.
    Mixed { beta_a: f64, beta_b: f64 },
}

/// `ln C` for the chain of `params.n_sites = 2N` spins, from the closed forms.
pub fn normalization_constant(params: &IsingParams, kind: TransferKind) -> Result<f64> {
    let two_n = params.n_sites;
    if !two_n.is_multiple_of(2) {
        return invalid("chain length must be even");
    }
    let Beta::Finite(b) = params.beta else {
        return Err(Error::NumericDomain("normalization constant diverges at beta = infinity".into()));
    };
    let n = (two_n / 2) as f64;
    match kind {
        TransferKind::NonHermitianX => Ok((3.0 * n - 1.0) * LN_2 + 4.0 * b * n - ln_bracket_x(b, two_n)),
        TransferKind::NonHermitianZ => Ok(4.0 * n * LN_2 + 4.0 * b * n - ln_bracket_z(b, two_n)),
        TransferKind::Ising => invalid("normalization constant is defined for the non-Hermitian chains"),
    }
}

/// Real-gauge transfer evaluation of the non-Hermitian chains.
///
/// Spins `sigma_i = 1 - 2 a_i` sit on a ring of `2N` sites. The unnormalised weight is
/// `prod_i (-1)^{a_i a_{i+1}} exp(beta_i (s_i - 1))`, with `s_i = sigma_i sigma_{i+2}`
/// (kind `X`/mixed) or `s_i = sigma_i` (kind `Z`). It differs from the Boltzmann weight of
/// `H_{beta,X}` / `H_{beta,Z}` by a configuration-independent constant, so correlators
/// agree. The all-up configuration has weight 1, which makes
/// `lambda(S) = Tr[prod D_S T] / 2^{2N}` the eigenvalue of the partial transpose.
#[derive(Debug, Clone)]
pub struct ChainKernel {
    two_n: usize,
    kind: ChainCoupling,
    /// `exp(-2 beta_i) = 1 - 2 p` per coupling.
    damp: Vec<f64>,
}

/// Interaction pattern of a [`ChainKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainCoupling {
    /// `beta_i sigma_i sigma_{i+2}`, from `X` errors on qubit `i + 1`.
    Pair,
    /// `beta_i sigma_i`, from `Z` errors on qubit `i`.
    Field,
}

impl ChainKernel {
    pub fn new(two_n: usize, kind: NonHermitianKind, beta: f64) -> Result<Self> {
        if two_n < 4 || !two_n.is_multiple_of(2) {
            return invalid(format!("chain length must be even and >= 4, got {two_n}"));
        }
        let check = |b: f64| -> Result<()> {
            if !(b >= 0.0) || !b.is_finite() {
                return invalid(format!("beta must be finite and nonnegative, got {b}"));
            }
            Ok(())
        };
        let (kk, damp) = match kind {
            NonHermitianKind::X => {
                check(beta)?;
                (ChainCoupling::Pair, vec![(-2.0 * beta).exp(); two_n])
            }
            NonHermitianKind::Z => {
                check(beta)?;
                (ChainCoupling::Field, vec![(-2.0 * beta).exp(); two_n])
            }
            NonHermitianKind::Mixed { beta_a, beta_b } => {
                check(beta_a)?;
                check(beta_b)?;
                // coupling (i, i+2) comes from qubit i+1
                let d = (0..two_n)
                    .map(|i| if (i + 1) % 2 == 0 { (-2.0 * beta_a).exp() } else { (-2.0 * beta_b).exp() })
                    .collect();
                (ChainCoupling::Pair, d)
            }
        };
        Ok(Self { two_n, kind: kk, damp })
    }

    /// Kernel from per-qubit error rates in `[0, 1/2]`; `rates[q]` is the rate of qubit `q`.
    pub fn from_rates(two_n: usize, coupling: ChainCoupling, rates: &[f64]) -> Result<Self> {
        if two_n < 4 || !two_n.is_multiple_of(2) {
            return invalid(format!("chain length must be even and >= 4, got {two_n}"));
        }
        if rates.len() != two_n {
            return invalid(format!("expected {two_n} rates, got {}", rates.len()));
        }
        for &p in rates {
            if !(0.0..=0.5).contains(&p) {
                return invalid(format!("error rate {p} outside [0, 1/2]"));
            }
        }
        let damp = match coupling {
            ChainCoupling::Pair => (0..two_n).map(|i| 1.0 - 2.0 * rates[(i + 1) % two_n]).collect(),
            ChainCoupling::Field => rates.iter().map(|&p| 1.0 - 2.0 * p).collect(),
        };
        Ok(Self { two_n, kind: coupling, damp })
    }

    pub fn coupling(&self) -> ChainCoupling {
        self.kind
    }

    /// `exp(-2 beta_i)` per coupling.
    pub fn damping(&self) -> &[f64] {
        &self.damp
    }

    pub fn two_n(&self) -> usize {
        self.two_n
    }

    /// Signed log of `Tr[prod_i D_i T_i]` with `sigma_i` insertions at `subset[i] = true`.
    pub fn ln_trace(&self, subset: &[bool]) -> (f64, f64) {
        debug_assert_eq!(subset.len(), self.two_n);
        match self.kind {
            ChainCoupling::Pair => self.ln_trace_pair(subset),
            ChainCoupling::Field => self.ln_trace_field(subset),
        }
    }

    fn ln_trace_pair(&self, subset: &[bool]) -> (f64, f64) {
        // state index s = 2 a_i + a_{i+1}; row r of `m` holds <r| prod |.>
        let n = self.two_n;
        let mut m = [[0.0f64; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            row[r] = 1.0;
        }
        let mut ln_scale = 0.0;
        for i in 0..n {
            let ins = subset[i];
            let d = self.damp[i];
            // state s = 2 a_i + a_{i+1}; signs from the insertion on a_i and (-1)^{a_i a_{i+1}}
            let flip = if ins { -1.0 } else { 1.0 };
            for row in m.iter_mut() {
                let g0 = row[0];
                let g1 = row[1];
                let g2 = flip * row[2];
                let g3 = -flip * row[3];
                // next state 2 a_{i+1} + a_{i+2}; the coupling is damped when a_{i+2} != a_i
                *row = [g0 + d * g2, d * g0 + g2, g1 + d * g3, d * g1 + g3];
            }
            if i % 16 == 15 {
                let s = m.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
                if s > 0.0 {
                    for v in m.iter_mut().flatten() {
                        *v /= s;
                    }
                    ln_scale += s.ln();
                }
            }
        }
        let tr = m[0][0] + m[1][1] + m[2][2] + m[3][3];
        (sign_of(tr), ln_scale + tr.abs().ln())
    }

    fn ln_trace_field(&self, subset: &[bool]) -> (f64, f64) {
        let n = self.two_n;
        let mut m = [[1.0f64, 0.0], [0.0, 1.0]];
        let mut ln_scale = 0.0;
        for i in 0..n {
            let ins = subset[i];
            let d = self.damp[i];
            let f = if ins { -d } else { d };
            for row in m.iter_mut() {
                let g0 = row[0];
                let g1 = f * row[1];
                *row = [g0 + g1, g0 - g1];
            }
            if i % 16 == 15 {
                let s = m.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
                if s > 0.0 {
                    for v in m.iter_mut().flatten() {
                        *v /= s;
                    }
                    ln_scale += s.ln();
                }
            }
        }
        let tr = m[0][0] + m[1][1];
        (sign_of(tr), ln_scale + tr.abs().ln())
    }

    /// Signed log of the partial-transpose eigenvalue labelled by `subset`.
    pub fn ln_eigenvalue(&self, subset: &[bool]) -> (f64, f64) {
        let (s, l) = self.ln_trace(subset);
        (s, l - self.two_n as f64 * LN_2)
    }

    /// `ln Z'` of the real-gauge chain.
    pub fn ln_partition(&self) -> f64 {
        self.ln_trace(&vec![false; self.two_n]).1
    }

    /// `ln C = 2N ln 2 - ln Z'`.
    pub fn ln_normalization(&self) -> f64 {
        self.two_n as f64 * LN_2 - self.ln_partition()
    }
}

fn sign_of(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

fn subset_bits(n: usize, subset: &[usize]) -> Result<Vec<bool>> {
    let mut bits = vec![false; n];
    for &s in subset {
        if s >= n {
            return invalid(format!("site {s} out of range for chain length {n}"));
        }
        bits[s] = !bits[s];
    }
    Ok(bits)
}

/// `<prod_{i in S} sigma_i>` in the non-Hermitian chain of `params.n_sites` spins.
pub fn nonhermitian_correlator(params: &IsingParams, subset: &[usize], kind: NonHermitianKind) -> Result<f64> {
    let beta = match (params.beta, kind) {
        (_, NonHermitianKind::Mixed { .. }) => 0.0,
        (Beta::Finite(b), _) => b,
        (Beta::Infinite, _) => {
            return Err(Error::NumericDomain("non-Hermitian correlators need finite beta".into()));
        }
    };
    let k = ChainKernel::new(params.n_sites, kind, beta)?;
    let bits = subset_bits(params.n_sites, subset)?;
    let (s, l) = k.ln_trace(&bits);
    Ok(s * (l - k.ln_partition()).exp())
}

/// Same correlator evaluated with the complex transfer matrices in their original gauge
/// (`kind` must be `X` or `Z`). Returns the complex value; its imaginary part vanishes
/// up to round-off.
pub fn nonhermitian_correlator_original_gauge(
    params: &IsingParams,
    subset: &[usize],
    kind: NonHermitianKind,
) -> Result<Complex64> {
    let Beta::Finite(b) = params.beta else {
        return Err(Error::NumericDomain("non-Hermitian correlators need finite beta".into()));
    };
    let n = params.n_sites;
    let bits = subset_bits(n, subset)?;
    let (t, dim) = match kind {
        NonHermitianKind::X => (TransferOperator::nonhermitian_x(b), 4),
        NonHermitianKind::Z => (TransferOperator::nonhermitian_z(b), 2),
        NonHermitianKind::Mixed { .. } => return invalid("original gauge is defined for X and Z only"),
    };
    // insertion acts on the first spin of the pair state (X) or the single spin (Z);
    // basis order has sigma = +1 first
    let diag = |on: bool| -> DMatrix<Complex64> {
        let mut d = DMatrix::<Complex64>::identity(dim, dim);
        if on {
            for s in 0..dim {
                let down = if dim == 4 { s >= 2 } else { s == 1 };
                if down {
                    d[(s, s)] = -d[(s, s)];
                }
            }
        }
        d
    };
    let mut num = DMatrix::<Complex64>::identity(dim, dim);
    let mut den = DMatrix::<Complex64>::identity(dim, dim);
    for &on in &bits {
        num = num * diag(on) * t.matrix();
        den *= t.matrix();
        let s = Complex64::new(den.camax(), 0.0);
        num /= s;
        den /= s;
    }
    Ok(num.trace() / den.trace())
}

/// Plaquette Ising model on a cylinder in sublattice coordinates: spins `(x, y)` with
/// `x` periodic over `width` and `y` in `0..height` (spin rows). Plaquettes couple rows
/// `y` and `y + 1`; optional two-spin bonds on the first and last rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaquetteModel {
    pub width: usize,
    pub height: usize,
    pub beta: f64,
    pub include_boundary: bool,
}

pub const PIM_MAX_SPINS: usize = 22;

impl PlaquetteModel {
    pub fn new(width: usize, height: usize, beta: f64, include_boundary: bool) -> Result<Self> {
        if width < 2 || !width.is_multiple_of(2) {
            return invalid(format!("plaquette model width must be even and >= 2, got {width}"));
        }
        if height < 2 {
            return invalid(format!("plaquette model needs at least two spin rows, got {height}"));
        }
        if width * height > PIM_MAX_SPINS {
            return Err(Error::SizeLimit(format!(
                "{}x{} = {} spins exceeds the brute-force limit {PIM_MAX_SPINS}",
                width,
                height,
                width * height
            )));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return invalid(format!("beta must be finite and nonnegative, got {beta}"));
        }
        Ok(Self { width, height, beta, include_boundary })
    }

    pub fn n_spins(&self) -> usize {
        self.width * self.height
    }

    /// Bit index of spin `(x, y)`.
    pub fn site(&self, x: usize, y: usize) -> usize {
        y * self.width + (x % self.width)
    }

    /// Bit masks of every interaction term.
    pub fn interaction_masks(&self) -> Vec<u64> {
        let w = self.width;
        let mut out = Vec::new();
        for y in 0..self.height - 1 {
            for x in 0..w {
                let m = (1u64 << self.site(x, y))
                    | (1u64 << self.site(x + 1, y))
                    | (1u64 << self.site(x, y + 1))
                    | (1u64 << self.site(x + 1, y + 1));
                out.push(m);
            }
        }
        if self.include_boundary {
            for &y in &[0, self.height - 1] {
                for x in 0..w {
                    out.push((1u64 << self.site(x, y)) | (1u64 << self.site(x + 1, y)));
                }
            }
        }
        out
    }

    /// Boltzmann weights relative to the ground state, indexed by configuration bits
    /// (bit set = spin down).
    fn weights(&self) -> Vec<f64> {
        let masks = self.interaction_masks();
        let nt = masks.len();
        let table: Vec<f64> = (0..=nt).map(|u| (-2.0 * self.beta * u as f64).exp()).collect();
        let dim = 1usize << self.n_spins();
        (0..dim)
            .into_par_iter()
            .with_min_len(1 << 12)
            .map(|c| {
                let c = c as u64;
                let u = masks.iter().filter(|&&m| (c & m).count_ones() % 2 == 1).count();
                table[u]
            })
            .collect()
    }

    /// All correlators `<sigma_S>` indexed by the bit mask of `S`, by a Walsh-Hadamard
    /// transform of the weights.
    pub fn all_correlators(&self) -> Vec<f64> {
        let mut f = self.weights();
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
        let z = f[0];
        for v in f.iter_mut() {
            *v /= z;
        }
        f
    }
}

/// Exact `<prod_{i in S} sigma_i>` of the plaquette Ising model by direct enumeration.
/// `subset` lists spins as `(x, y)`.
pub fn pim_brute_correlator(model: &PlaquetteModel, subset: &[(usize, usize)]) -> Result<f64> {
    let mut smask = 0u64;
    for &(x, y) in subset {
        if x >= model.width || y >= model.height {
            return invalid(format!("spin ({x}, {y}) outside the {}x{} cylinder", model.width, model.height));
        }
        smask ^= 1u64 << model.site(x, y);
    }
    let weights = model.weights();
    const CHUNK: usize = 1 << 14;
    let parts: Vec<(f64, f64)> = weights
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(k, chunk)| {
            let base = (k * CHUNK) as u64;
            let mut num = crate::logsum::KahanSum::new();
            let mut den = crate::logsum::KahanSum::new();
            for (o, &w) in chunk.iter().enumerate() {
                let c = base + o as u64;
                den.add(w);
                if (c & smask).count_ones() % 2 == 1 {
                    num.add(-w);
                } else {
                    num.add(w);
                }
            }
            (num.value(), den.value())
        })
        .collect();
    let mut num = crate::logsum::KahanSum::new();
    let mut den = crate::logsum::KahanSum::new();
    for (a, b) in parts {
        num.add(a);
        den.add(b);
    }
    Ok(num.value() / den.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_values() {
        assert_eq!(beta_from_p(0.0).unwrap(), Beta::Finite(0.0));
        assert_eq!(beta_from_p(0.5).unwrap(), Beta::Infinite);
        let Beta::Finite(b) = beta_from_p(0.25).unwrap() else { panic!() };
        assert!((b - 0.5 * 2.0f64.ln()).abs() < 1e-15);
        assert!(beta_from_p(0.6).is_err());
        assert!(beta_from_p(-0.1).is_err());
        assert!((p_from_beta(Beta::Finite(b)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tanh_is_odds_ratio() {
        for &p in &[0.01, 0.1, 0.3, 0.49] {
            let b = beta_from_p(p).unwrap();
            assert!((b.tanh() - p / (1.0 - p)).abs() < 1e-14);
            assert!((b.ln_tanh() - (p / (1.0 - p)).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_correlator_limits() {
        let params = IsingParams::from_p(0.2, 6).unwrap();
        let e = ErrorPattern::from_sites(6, &[]).unwrap();
        assert_eq!(ising_correlator_closed(&params, &e).unwrap(), 1.0);
        let inf = IsingParams::from_p(0.5, 6).unwrap();
        let e2 = ErrorPattern::from_sites(6, &[1, 4]).unwrap();
        assert_eq!(ising_correlator_closed(&inf, &e2).unwrap(), 1.0);
    }

    #[test]
    fn x_syndrome_of_single_error() {
        let e = ErrorPattern::from_sites(6, &[2]).unwrap();
        let s = e.cluster_x_syndrome();
        assert_eq!(s, vec![false, true, false, true, false, false]);
    }

    #[test]
    fn pim_empty_subset_is_one() {
        let m = PlaquetteModel::new(4, 3, 0.3, true).unwrap();
        assert!((pim_brute_correlator(&m, &[]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pim_infinite_temperature_plaquette_vanishes() {
        let m = PlaquetteModel::new(4, 3, 0.0, false).unwrap();
        let v = pim_brute_correlator(&m, &[(0, 0), (1, 0), (0, 1), (1, 1)]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn pim_size_limit() {
        assert!(matches!(PlaquetteModel::new(6, 4, 0.3, false), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn ising_trace_power_matches_closed_form() {
        let t = TransferOperator::ising(0.4);
        for n in [1usize, 2, 5, 12, 64] {
            let a = t.trace_power(n).to_complex();
            let b = t.closed_partition(n).unwrap().to_complex();
            assert!(((a - b) / b).norm() < 1e-12, "n={n}");
        }
    }
}
