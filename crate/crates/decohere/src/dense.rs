//! Brute-force state vectors and density matrices.
//!
//! Basis index bit `q` is the computational value of qubit `q`. Density matrices
//! are capped at 10 qubits, state vectors at 12.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::pauli::{Pauli, PauliOperator, StabilizerTableau};

pub const MAX_STATE_QUBITS: usize = 12;
pub const MAX_OPERATOR_QUBITS: usize = 10;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const CLAMP_REL: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_state_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_STATE_QUBITS {
        return Err(Error::SizeLimit(format!("state vectors support 1..={MAX_STATE_QUBITS} qubits, got {n}")));
    }
    Ok(())
}

fn check_operator_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_OPERATOR_QUBITS {
        return Err(Error::SizeLimit(format!(
            "density matrices support 1..={MAX_OPERATOR_QUBITS} qubits, got {n}"
        )));
    }
    Ok(())
}

fn region_mask(n: usize, region: &[usize]) -> Result<usize> {
    let mut m = 0usize;
    for &q in region {
        if q >= n {
            return invalid(format!("region qubit {q} out of range for {n} qubits"));
        }
        m |= 1 << q;
    }
    Ok(m)
}

/// Dense matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliOperator) -> Result<DMatrix<Complex64>> {
    let n = p.n_qubits();
    check_operator_size(n)?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        let (b2, amp) = p.apply_to_basis(b as u64);
        m[(b2 as usize, b)] = amp;
    }
    Ok(m)
}

/// Normalised pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n: usize,
    amps: DVector<Complex64>,
}

impl DenseState {
    pub fn new(n: usize, amps: DVector<Complex64>) -> Result<Self> {
        check_state_size(n)?;
        if amps.len() != 1 << n {
            return invalid("amplitude vector length must be 2^n");
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return invalid(format!("state norm {norm} differs from 1"));
        }
        Ok(Self { n, amps })
    }

    /// Computational basis state `|b>`.
    pub fn basis(n: usize, b: usize) -> Result<Self> {
        check_state_size(n)?;
        let mut amps = DVector::zeros(1 << n);
        amps[b] = c(1.0);
        Ok(Self { n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn overlap(&self, other: &DenseState) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    /// `P |psi>` (not renormalised; Pauli strings are unitary).
    pub fn apply_pauli(&self, p: &PauliOperator) -> DVector<Complex64> {
        apply_pauli_vec(p, &self.amps)
    }

    /// `<psi| P |psi>`.
    pub fn expectation(&self, p: &PauliOperator) -> Complex64 {
        self.amps.dotc(&self.apply_pauli(p))
    }
}

fn apply_pauli_vec(p: &PauliOperator, v: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(v.len());
    for b in 0..v.len() {
        let (b2, amp) = p.apply_to_basis(b as u64);
        out[b2 as usize] += amp * v[b];
    }
    out
}

/// Pure state stabilized by every generator of a full-rank tableau.
pub fn densify(tab: &StabilizerTableau) -> Result<DenseState> {
    let n = tab.n_qubits();
    check_state_size(n)?;
    if !tab.is_pure() {
        return invalid(format!("tableau has {} generators for {n} qubits; not a pure state", tab.len()));
    }
    let dim = 1usize << n;
    for b in 0..dim {
        let mut v = DVector::zeros(dim);
        v[b] = c(1.0);
        for g in tab.generators() {
            let gv = apply_pauli_vec(g, &v);
            v = (v + gv) * c(0.5);
        }
        let norm = v.norm();
        if norm > 1e-6 {
            return DenseState::new(n, v / c(norm));
        }
    }
    Err(Error::NumericDomain("no basis state has nonzero stabilizer projection".into()))
}

/// Square operator on `n <= 10` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    mat: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn from_matrix(n: usize, mat: DMatrix<Complex64>) -> Result<Self> {
        check_operator_size(n)?;
        if mat.nrows() != 1 << n || mat.ncols() != 1 << n {
            return invalid("matrix shape must be 2^n x 2^n");
        }
        Ok(Self { n, mat })
    }

    /// Checked density matrix: Hermitian, unit trace, PSD within tolerance.
    pub fn density(n: usize, mat: DMatrix<Complex64>) -> Result<Self> {
        let op = Self::from_matrix(n, mat)?;
        op.validate_density()?;
        Ok(op)
    }

    /// `|psi><psi|`.
    pub fn from_state(psi: &DenseState) -> Result<Self> {
        check_operator_size(psi.n)?;
        let m = &psi.amps * psi.amps.adjoint();
        Ok(Self { n: psi.n, mat: m })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn is_real(&self) -> bool {
        self.mat.iter().all(|z| z.im == 0.0)
    }

    pub fn validate_density(&self) -> Result<()> {
        let herm = (&self.mat - self.mat.adjoint()).camax();
        if herm > HERMITIAN_TOL {
            return Err(Error::NumericDomain(format!("not Hermitian (residual {herm:e})")));
        }
        let tr = self.trace();
        if (tr - c(1.0)).norm() > TRACE_TOL {
            return Err(Error::NumericDomain(format!("trace {tr} differs from 1")));
        }
        let ev = hermitian_eigenvalues(&self.mat);
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NumericDomain(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `P rho P^dagger`.
    pub fn conjugate_by(&self, p: &PauliOperator) -> Result<DenseOperator> {
        if p.n_qubits() != self.n {
            return invalid("Pauli qubit count mismatch");
        }
        let dim = self.mat.nrows();
        let mut amps = Vec::with_capacity(dim);
        let mut targets = Vec::with_capacity(dim);
        for b in 0..dim {
            let (b2, a) = p.apply_to_basis(b as u64);
            targets.push(b2 as usize);
            amps.push(a);
        }
        let mut out = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let cj = amps[j].conj();
            let tj = targets[j];
            for i in 0..dim {
                out[(targets[i], tj)] = amps[i] * self.mat[(i, j)] * cj;
            }
        }
        Ok(DenseOperator { n: self.n, mat: out })
    }

    /// Partial transpose on the qubits of `region`.
    pub fn partial_transpose(&self, region: &[usize]) -> Result<DenseOperator> {
        let m = region_mask(self.n, region)?;
        let dim = self.mat.nrows();
        let mut out = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                let i2 = (i & !m) | (j & m);
                let j2 = (j & !m) | (i & m);
                out[(i, j)] = self.mat[(i2, j2)];
            }
        }
        Ok(DenseOperator { n: self.n, mat: out })
    }

    fn symmetrize(mut self) -> Self {
        let adj = self.mat.adjoint();
        self.mat = (&self.mat + adj) * c(0.5);
        self
    }
}

/// Eigenvalues of a Hermitian matrix, using a real solver when the imaginary part vanishes.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.iter().all(|z| z.im == 0.0) {
        let re = m.map(|z| z.re);
        re.symmetric_eigenvalues().iter().copied().collect()
    } else {
        m.clone().symmetric_eigenvalues().iter().copied().collect()
    }
}

/// `(1-p) rho + p P rho P`, with `p` in `[0, 1/2]`.
pub fn apply_pauli_channel(rho: &DenseOperator, p: f64, kraus: &PauliOperator) -> Result<DenseOperator> {
    if !(0.0..=0.5).contains(&p) {
        return invalid(format!("error rate {p} outside [0, 1/2]"));
    }
    if !kraus.is_hermitian() {
        return invalid("Kraus Pauli must be Hermitian");
    }
    if p == 0.0 {
        return Ok(rho.clone());
    }
    let flipped = rho.conjugate_by(kraus)?;
    let mat = &rho.mat * c(1.0 - p) + &flipped.mat * c(p);
    Ok(DenseOperator { n: rho.n, mat }.symmetrize())
}

/// Applies single-qubit channels of the same letter to every listed qubit, each at its own rate.
pub fn apply_site_channels(rho: &DenseOperator, letter: Pauli, rates: &[(usize, f64)]) -> Result<DenseOperator> {
    let mut out = rho.clone();
    for &(q, p) in rates {
        let k = PauliOperator::single(rho.n, q, letter)?;
        out = apply_pauli_channel(&out, p, &k)?;
    }
    Ok(out)
}

fn sqrt_psd<T>(m: DMatrix<T>) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    let eig = m.symmetric_eigen();
    let vals = &eig.eigenvalues;
    let max = vals.iter().copied().fold(0.0f64, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::NumericDomain(format!("matrix is not PSD (eigenvalue {min:e})")));
    }
    let cut = CLAMP_REL * max;
    let roots: Vec<T> = vals
        .iter()
        .map(|&l| T::from_real(if l > cut { l.sqrt() } else { 0.0 }))
        .collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(r.clone().real());
    }
    Ok(scaled * v.adjoint())
}

fn nuclear_norm_of_product<T>(a: DMatrix<T>, b: DMatrix<T>) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    let sa = sqrt_psd(a)?;
    let sb = sqrt_psd(b)?;
    Ok((sa * sb).singular_values().iter().sum())
}

/// Root fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))`, evaluated as the nuclear norm of
/// `sqrt(rho) sqrt(sigma)` so that small overlaps keep absolute precision.
pub fn fidelity(rho: &DenseOperator, sigma: &DenseOperator) -> Result<f64> {
    if rho.n != sigma.n {
        return invalid("qubit count mismatch");
    }
    let f = if rho.is_real() && sigma.is_real() {
        nuclear_norm_of_product(rho.mat.map(|z| z.re), sigma.mat.map(|z| z.re))?
    } else {
        nuclear_norm_of_product(rho.mat.clone(), sigma.mat.clone())?
    };
    Ok(f.clamp(0.0, 1.0))
}

/// `F(rho, O rho O^dagger)` for a Pauli string `O`.
pub fn fidelity_correlator(rho: &DenseOperator, charged: &PauliOperator) -> Result<f64> {
    let sigma = rho.conjugate_by(charged)?;
    fidelity(rho, &sigma)
}

/// `log ||rho^{T_R}||_1` in nats.
pub fn negativity_dense(rho: &DenseOperator, region: &[usize]) -> Result<f64> {
    let pt = rho.partial_transpose(region)?;
    let ev = hermitian_eigenvalues(&pt.mat);
    let mut acc = crate::logsum::KahanSum::new();
    for l in ev {
        acc.add(l.abs());
    }
    Ok(acc.value().ln())
}

/// The two moments entering the Renyi-(2 alpha) negativity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiMoments {
    /// `Tr[(rho^{T_R})^{2 alpha}]`.
    pub transposed: f64,
    /// `Tr[rho^{2 alpha}]`.
    pub plain: f64,
}

impl RenyiMoments {
    /// `(2 - 2 alpha)^{-1} log(transposed / plain)`.
    pub fn negativity(&self, alpha: u32) -> f64 {
        (self.transposed / self.plain).ln() / (2.0 - 2.0 * alpha as f64)
    }
}

fn power_sum(ev: &[f64], k: i32) -> f64 {
    let mut acc = crate::logsum::KahanSum::new();
    for &l in ev {
        acc.add(l.powi(k));
    }
    acc.value()
}

pub fn renyi_moments(rho: &DenseOperator, region: &[usize], alpha: u32) -> Result<RenyiMoments> {
    if alpha < 2 {
        return invalid(format!("Renyi index alpha must be >= 2, got {alpha}"));
    }
    let k = 2 * alpha as i32;
    let pt = rho.partial_transpose(region)?;
    let transposed = power_sum(&hermitian_eigenvalues(&pt.mat), k);
    let plain = power_sum(&hermitian_eigenvalues(&rho.mat), k);
    Ok(RenyiMoments { transposed, plain })
}

/// Density matrix of the periodic cluster state on `two_n` qubits.
pub fn cluster_density(two_n: usize) -> Result<DenseOperator> {
    let tab = crate::pauli::build_cluster_1d(two_n)?;
    DenseOperator::from_state(&densify(&tab)?)
}

/// Cluster state with single-qubit `letter` noise at rate `p` on every qubit.
pub fn decohered_cluster(two_n: usize, p: f64, letter: Pauli) -> Result<DenseOperator> {
    let rho = cluster_density(two_n)?;
    let rates: Vec<(usize, f64)> = (0..two_n).map(|q| (q, p)).collect();
    apply_site_channels(&rho, letter, &rates)
}
