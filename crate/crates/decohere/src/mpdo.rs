//! Matrix product density operators of the decohered cluster chain.
//!
//! Two neighbouring qubits form one block. The physical index of a block is
//! `i = i_a + 2 i_b`, with `i_a` the even (sublattice A) qubit and `i_b` the odd
//! one. Bond indices of `M^{ij} = sum_k Mt^{ik} (x) conj(Mt^{jk})` are ket-major.
//!
//! Moment transfer matrices contract `2 alpha` layers of `M`; layer `l` takes its
//! ket index from the `l`-th copy of the physical configuration and its bra index
//! from the `(l+1)`-th. The partial-transposed variant swaps the roles of the A
//! halves. Both are built sparse and diagonalised one strongly connected
//! component at a time.

use nalgebra::DMatrix;
use num_complex::Complex64;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Serialize, Serializer};

use crate::dense::{hermitian_eigenvalues, DenseOperator};
use crate::error::{invalid, Error, Result};
use crate::negativity::NoiseKind;

/// Largest moment transfer matrix we build.
pub const MAX_TRANSFER_DIM: usize = 4096;
/// Default eigenvalue clustering tolerance, relative to the leading modulus.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;

const RANK_TOL: f64 = 1e-12;
const DROP_TOL: f64 = 1e-14;
const SOLVE_TOL: f64 = 1e-9;
const MAX_CONDITION: f64 = 1e6;
const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_ITERS: usize = 3000;

type CMat = DMatrix<Complex64>;

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Rank of the span of a set of matrices, from the spectrum of their Gram matrix.
fn span_rank(mats: &[CMat]) -> usize {
    let n = mats.len();
    if n == 0 {
        return 0;
    }
    let g = CMat::from_fn(n, n, |a, b| mats[a].dotc(&mats[b]));
    let ev = hermitian_eigenvalues(&g);
    let top = ev.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if top == 0.0 {
        return 0;
    }
    ev.iter().filter(|&&x| x > RANK_TOL * top).count()
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Single-site or blocked MPS tensor `A^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsTensor {
    phys_dim: usize,
    bond_dim: usize,
    entries: Vec<CMat>,
}

impl MpsTensor {
    pub fn new(entries: Vec<CMat>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return invalid("an MPS tensor needs at least one physical index");
        };
        let d = first.nrows();
        if d == 0 || entries.iter().any(|a| a.nrows() != d || a.ncols() != d) {
            return invalid("MPS matrices must all be square with the same bond dimension");
        }
        Ok(Self { phys_dim: entries.len(), bond_dim: d, entries })
    }

    /// Site tensor of the cluster chain, `C^0 = [[1,1],[0,0]]`, `C^1 = [[0,0],[1,-1]]`.
    pub fn cluster_site() -> Self {
        let c0 = CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(0.0), cr(0.0)]);
        let c1 = CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.0), cr(1.0), cr(-1.0)]);
        Self { phys_dim: 2, bond_dim: 2, entries: vec![c0, c1] }
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn entries(&self) -> &[CMat] {
        &self.entries
    }

    /// `A^{i_1} B^{i_2}` with `i = i_1 + d_A i_2`.
    pub fn block(&self, next: &MpsTensor) -> Result<MpsTensor> {
        if self.bond_dim != next.bond_dim {
            return invalid("blocked tensors must share the bond dimension");
        }
        let mut entries = Vec::with_capacity(self.phys_dim * next.phys_dim);
        for b in &next.entries {
            for a in &self.entries {
                entries.push(a * b);
            }
        }
        MpsTensor::new(entries)
    }

    /// Rank of the map from virtual matrices `X` to `(Tr[A^i X])_i`.
    pub fn map_rank(&self) -> usize {
        span_rank(&self.entries)
    }

    pub fn is_injective(&self) -> bool {
        self.map_rank() == self.bond_dim * self.bond_dim
    }

    /// `sum_i A^i (x) conj(A^i)`.
    pub fn transfer(&self) -> CMat {
        let mut t = CMat::zeros(self.bond_dim * self.bond_dim, self.bond_dim * self.bond_dim);
        for a in &self.entries {
            t += kron(a, &a.map(|z| z.conj()));
        }
        t
    }
}

/// MPDO tensor `M^{ij}` together with the purification it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MpdoTensor {
    phys_dim: usize,
    env_dim: usize,
    bond_dim: usize,
    entries: Vec<CMat>,
    purification: MpsTensor,
}

impl MpdoTensor {
    /// From a purification whose physical index is `i * env_dim + k`.
    pub fn from_purification(purification: MpsTensor, phys_dim: usize) -> Result<Self> {
        if phys_dim == 0 || !purification.phys_dim.is_multiple_of(phys_dim) {
            return invalid("purification index must factor as system x environment");
        }
        let env_dim = purification.phys_dim / phys_dim;
        let d = purification.bond_dim;
        let mut entries = Vec::with_capacity(phys_dim * phys_dim);
        for i in 0..phys_dim {
            for j in 0..phys_dim {
                let mut m = CMat::zeros(d * d, d * d);
                for k in 0..env_dim {
                    let a = &purification.entries[i * env_dim + k];
                    let b = &purification.entries[j * env_dim + k];
                    m += kron(a, &b.map(|z| z.conj()));
                }
                entries.push(m);
            }
        }
        Ok(Self { phys_dim, env_dim, bond_dim: d * d, entries, purification })
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// Bond dimension `D` of `M^{ij}` (the square of the purification bond).
    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn purification(&self) -> &MpsTensor {
        &self.purification
    }

    pub fn entry(&self, i: usize, j: usize) -> &CMat {
        &self.entries[i * self.phys_dim + j]
    }

    /// `M_alpha^{ij} = sum_k M_{alpha-1}^{ik} (x) M^{kj}`, bond `D^alpha`.
    pub fn moment_tensor(&self, alpha: usize) -> Result<Vec<CMat>> {
        if alpha == 0 {
            return invalid("alpha must be at least 1");
        }
        if self.bond_dim.pow(2 * alpha as u32) > MAX_TRANSFER_DIM {
            return invalid(format!("D^(2 alpha) exceeds {MAX_TRANSFER_DIM} at alpha = {alpha}"));
        }
        let d = self.phys_dim;
        let mut cur = self.entries.clone();
        for _ in 1..alpha {
            let dim = cur[0].nrows() * self.bond_dim;
            let mut next = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    let mut m = CMat::zeros(dim, dim);
                    for k in 0..d {
                        m += kron(&cur[i * d + k], self.entry(k, j));
                    }
                    next.push(m);
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// `sum_i M^{ii}`.
    pub fn trace_transfer(&self) -> CMat {
        let mut t = CMat::zeros(self.bond_dim, self.bond_dim);
        for i in 0..self.phys_dim {
            t += self.entry(i, i);
        }
        t
    }

    /// Solves `(M^{ji})^* = W^{-1} M^{ij} W` for an invertible `W`.
    pub fn hermiticity_gauge(&self) -> Intertwiner {
        let d = self.phys_dim;
        let mut l = Vec::with_capacity(d * d);
        let mut r = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                l.push(self.entry(j, i).map(|z| z.conj()));
                r.push(self.entry(i, j).clone());
            }
        }
        intertwiner(&l, &r, cr(1.0))
    }

    fn real_entries(&self) -> Result<Vec<DMatrix<f64>>> {
        let scale = self.entries.iter().flat_map(|m| m.iter()).fold(0.0f64, |a, z| a.max(z.norm()));
        if self.entries.iter().flat_map(|m| m.iter()).any(|z| z.im.abs() > DROP_TOL * scale) {
            return Err(Error::NumericDomain("moment transfer matrices need a real MPDO tensor".into()));
        }
        Ok(self.entries.iter().map(|m| m.map(|z| z.re)).collect())
    }
}

/// Two-site blocked MPDO of the cluster chain after single-qubit `kind` noise at rate `p`.
pub fn cluster_mpdo(p: f64, kind: NoiseKind) -> Result<MpdoTensor> {
    if !(0.0..=0.5).contains(&p) {
        return invalid(format!("rate must lie in [0, 1/2], got {p}"));
    }
    let site = MpsTensor::cluster_site();
    let pauli: [[f64; 2]; 2] = match kind {
        NoiseKind::X => [[0.0, 1.0], [1.0, 0.0]],
        NoiseKind::Z => [[1.0, 0.0], [0.0, -1.0]],
    };
    let kraus = [[[(1.0 - p).sqrt(), 0.0], [0.0, (1.0 - p).sqrt()]], pauli.map(|r| r.map(|x| x * p.sqrt()))];
    // purified site tensor, physical index (i, k)
    let purified = |i: usize, k: usize| -> CMat {
        let mut a = CMat::zeros(2, 2);
        for (ii, c) in site.entries.iter().enumerate() {
            a += c * cr(kraus[k][i][ii]);
        }
        a
    };
    let mut entries = Vec::with_capacity(16);
    for i in 0..4 {
        for k in 0..4 {
            entries.push(purified(i & 1, k & 1) * purified(i >> 1, k >> 1));
        }
    }
    MpdoTensor::from_purification(MpsTensor::new(entries)?, 4)
}

/// Dense density matrix of `n_blocks` blocks on a ring, normalised to unit trace.
pub fn contract_ring(m: &MpdoTensor, n_blocks: usize) -> Result<DenseOperator> {
    if m.phys_dim != 4 {
        return invalid("ring contraction expects two-qubit blocks");
    }
    if n_blocks == 0 || n_blocks > 5 {
        return Err(Error::SizeLimit(format!("ring contraction supports 1..=5 blocks, got {n_blocks}")));
    }
    let dim = 1usize << (2 * n_blocks);
    let mut rho = CMat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let mut prod = CMat::identity(m.bond_dim, m.bond_dim);
            for b in 0..n_blocks {
                let i = (r >> (2 * b)) & 3;
                let j = (c >> (2 * b)) & 3;
                prod *= m.entry(i, j);
            }
            rho[(r, c)] = prod.trace();
        }
    }
    let tr = rho.trace();
    if tr.norm() == 0.0 {
        return Err(Error::NumericDomain("contracted ring has zero trace".into()));
    }
    rho /= tr;
    DenseOperator::from_matrix(2 * n_blocks, rho)
}

/// Real square matrix in coordinate form, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseMatrix {
    /// Sums duplicates and drops entries below `1e-14` of the largest.
    fn from_triplets(dim: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let top = merged.iter().fold(0.0f64, |a, e| a.max(e.2.abs()));
        merged.retain(|e| e.2.abs() > DROP_TOL * top);
        Self { dim, entries: merged }
    }

    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != 0.0 {
                    t.push((r as u32, c as u32, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    fn kron_into(&self, other: &SparseMatrix, out: &mut Vec<(u32, u32, f64)>) {
        let n = other.dim as u32;
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &other.entries {
                out.push((r1 * n + r2, c1 * n + c2, v1 * v2));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] += v;
        }
        m
    }

    /// Strongly connected components of the sparsity graph, as dense diagonal blocks.
    fn diagonal_blocks(&self) -> Vec<DMatrix<f64>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.dim, self.entries.len());
        for _ in 0..self.dim {
            g.add_node(());
        }
        for &(r, c, _) in &self.entries {
            g.add_edge(NodeIndex::new(r as usize), NodeIndex::new(c as usize), ());
        }
        let sccs = petgraph::algo::tarjan_scc(&g);
        let mut where_ = vec![(0usize, 0usize); self.dim];
        for (b, comp) in sccs.iter().enumerate() {
            for (pos, n) in comp.iter().enumerate() {
                where_[n.index()] = (b, pos);
            }
        }
        let mut blocks: Vec<DMatrix<f64>> = sccs.iter().map(|c| DMatrix::zeros(c.len(), c.len())).collect();
        for &(r, c, v) in &self.entries {
            let (br, pr) = where_[r as usize];
            let (bc, pc) = where_[c as usize];
            if br == bc {
                blocks[br][(pr, pc)] += v;
            }
        }
        blocks
    }

    /// All eigenvalues, via the block-triangular form.
    pub fn spectrum(&self) -> Result<Spectrum> {
        let mut ev = Vec::with_capacity(self.dim);
        for b in self.diagonal_blocks() {
            if b.nrows() == 1 {
                ev.push(cr(b[(0, 0)]));
            } else {
                ev.extend(block_eigenvalues(b)?);
            }
        }
        Ok(Spectrum::new(ev))
    }

    /// `ln |Tr A^n|` and the sign of the trace.
    pub fn ln_trace_power(&self, n: u32) -> (f64, f64) {
        let mut parts = Vec::new();
        for b in self.diagonal_blocks() {
            let (s, l) = ln_trace_power_dense(&b, n);
            if s != 0.0 {
                parts.push((s, l));
            }
        }
        let top = parts.iter().fold(f64::NEG_INFINITY, |a, p| a.max(p.1));
        if !top.is_finite() {
            return (0.0, f64::NEG_INFINITY);
        }
        let sum: f64 = parts.iter().map(|&(s, l)| s * (l - top).exp()).sum();
        if sum == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        (sum.signum(), top + sum.abs().ln())
    }
}

fn block_eigenvalues(b: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = b.nrows();
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| b[(i, j)]);
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::NumericDomain(format!("eigenvalue solver failed on a {n} x {n} block: {e:?}")))?;
    Ok(ev.iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

fn ln_trace_power_dense(b: &DMatrix<f64>, n: u32) -> (f64, f64) {
    if n == 0 {
        return (1.0, (b.nrows() as f64).ln());
    }
    let mut result: Option<(DMatrix<f64>, f64)> = None;
    let mut base = b.clone();
    let mut base_ln = 0.0;
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => (base.clone(), base_ln),
                Some((r, l)) => rescale(&r * &base, l + base_ln),
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        let (sq, l) = rescale(&base * &base, 2.0 * base_ln);
        base = sq;
        base_ln = l;
    }
    let (r, l) = result.expect("n > 0");
    let t = r.trace();
    if t == 0.0 {
        (0.0, f64::NEG_INFINITY)
    } else {
        (t.signum(), l + t.abs().ln())
    }
}

fn rescale(m: DMatrix<f64>, ln_scale: f64) -> (DMatrix<f64>, f64) {
    let s = m.amax();
    if s == 0.0 || !s.is_finite() {
        return (m, ln_scale);
    }
    (m / s, ln_scale + s.ln())
}

/// Eigenvalues sorted by decreasing modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    fn new(mut ev: Vec<Complex64>) -> Self {
        ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
        Self { eigenvalues: ev }
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Eigenvalue of largest modulus; among near ties, the one of largest real part.
    pub fn leading(&self) -> Complex64 {
        let Some(first) = self.eigenvalues.first() else {
            return cr(0.0);
        };
        let top = first.norm();
        self.eigenvalues
            .iter()
            .take_while(|z| z.norm() >= top * (1.0 - DEFAULT_CLUSTER_TOL))
            .copied()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap_or(*first)
    }

    /// Number of eigenvalues with `|lambda - lambda_1| <= tol |lambda_1|`.
    pub fn degeneracy(&self, tol: f64) -> usize {
        let l = self.leading();
        self.eigenvalues.iter().filter(|z| (*z - l).norm() <= tol * l.norm()).count()
    }

    /// `1 - |lambda_next| / |lambda_1|`, with `lambda_next` the largest eigenvalue
    /// outside the leading cluster.
    pub fn gap(&self, tol: f64) -> f64 {
        let l = self.leading();
        if l.norm() == 0.0 {
            return 0.0;
        }
        self.eigenvalues
            .iter()
            .find(|z| (*z - l).norm() > tol * l.norm())
            .map_or(1.0, |z| 1.0 - z.norm() / l.norm())
    }

    /// Whether every eigenvalue of leading modulus is real to `tol |lambda_1|`.
    pub fn leading_modulus_is_real(&self, tol: f64) -> bool {
        let top = self.leading().norm();
        self.eigenvalues
            .iter()
            .filter(|z| z.norm() >= top * (1.0 - tol))
            .all(|z| z.im.abs() <= tol * top)
    }

    /// Unique, real and positive leading eigenvalue.
    pub fn has_unique_leading(&self, tol: f64) -> bool {
        let l = self.leading();
        l.re > 0.0 && self.leading_modulus_is_real(tol) && self.degeneracy(tol) == 1 && self.gap(tol) > tol
    }
}

fn wiring(x: usize, y: usize, tilde: bool) -> (usize, usize) {
    if tilde {
        ((y & 1) | (x & 2), (x & 1) | (y & 2))
    } else {
        (x, y)
    }
}

/// `T_{2 alpha}` or, with `tilde`, its partial-transposed counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMoment {
    pub alpha: usize,
    pub tilde: bool,
    matrix: SparseMatrix,
}

impl TransferMoment {
    pub fn new(m: &MpdoTensor, alpha: usize, tilde: bool) -> Result<Self> {
        if alpha == 0 {
            return invalid("alpha must be at least 1");
        }
        if m.phys_dim != 4 {
            return invalid("moment transfer matrices expect two-qubit blocks");
        }
        let layers = 2 * alpha;
        if m.bond_dim.pow(layers as u32) > MAX_TRANSFER_DIM {
            return invalid(format!(
                "transfer dimension {}^{layers} exceeds {MAX_TRANSFER_DIM}",
                m.bond_dim
            ));
        }
        let d = m.phys_dim;
        let local: Vec<SparseMatrix> = m.real_entries()?.iter().map(SparseMatrix::from_dense).collect();
        let layer = |x: usize, y: usize| {
            let (ket, bra) = wiring(x, y, tilde);
            &local[ket * d + bra]
        };
        // partial[x1 * d + y]: first l layers with open first ket x1 and last bra y
        let mut partial: Vec<SparseMatrix> = (0..d * d).map(|k| layer(k / d, k % d).clone()).collect();
        for step in 1..layers {
            let last = step + 1 == layers;
            let dim = partial[0].dim * m.bond_dim;
            let mut next = Vec::with_capacity(d * d);
            for x1 in 0..d {
                for y in 0..d {
                    let mut t = Vec::new();
                    if last && y != x1 {
                        // only the closed trace is needed
                        next.push(SparseMatrix { dim, entries: Vec::new() });
                        continue;
                    }
                    for x in 0..d {
                        partial[x1 * d + x].kron_into(layer(x, y), &mut t);
                    }
                    next.push(SparseMatrix::from_triplets(dim, t));
                }
            }
            partial = next;
        }
        let dim = partial[0].dim;
        let mut t = Vec::new();
        for x1 in 0..d {
            t.extend_from_slice(&partial[x1 * d + x1].entries);
        }
        Ok(Self { alpha, tilde, matrix: SparseMatrix::from_triplets(dim, t) })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        self.matrix.spectrum()
    }

    /// `ln Tr[T^n]`; the trace of a moment is never negative.
    pub fn ln_trace_power(&self, n: u32) -> Result<f64> {
        let (s, l) = self.matrix.ln_trace_power(n);
        if s < 0.0 {
            return Err(Error::NumericDomain(format!("negative moment trace at n = {n}")));
        }
        Ok(l)
    }
}

/// Spectra of `T_{2 alpha}` and of its partial-transposed counterpart.
pub fn moment_spectra(m: &MpdoTensor, alpha: usize) -> Result<(Spectrum, Spectrum)> {
    if alpha < 2 {
        return invalid(format!("moment spectra need alpha >= 2, got {alpha}"));
    }
    let t = TransferMoment::new(m, alpha, false)?;
    let tt = TransferMoment::new(m, alpha, true)?;
    Ok((t.spectrum()?, tt.spectrum()?))
}

/// MPS transfer matrix `sum_{ij} M_alpha^{ij} (x) conj(M_alpha^{ij})` of the
/// purification of `M_{2 alpha}` by `M_alpha`.
pub fn purification_transfer(m: &MpdoTensor, alpha: usize) -> Result<SparseMatrix> {
    let ma = m.moment_tensor(alpha)?;
    let dim = ma[0].nrows();
    let mut t = Vec::new();
    for a in &ma {
        if a.iter().any(|z| z.im != 0.0) {
            return Err(Error::NumericDomain("purification transfer needs a real MPDO tensor".into()));
        }
        let s = SparseMatrix::from_dense(&a.map(|z| z.re));
        s.kron_into(&s, &mut t);
    }
    Ok(SparseMatrix::from_triplets(dim * dim, t))
}

/// Spectral comparison of `T_{2 alpha}` with [`purification_transfer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub alpha: usize,
    pub leading: f64,
    /// Largest distance between matched eigenvalues, relative to `|lambda_1|`.
    pub max_deviation: f64,
}

pub fn lemma_check(m: &MpdoTensor, alpha: usize) -> Result<LemmaCheck> {
    let a = TransferMoment::new(m, alpha, false)?.spectrum()?;
    let b = purification_transfer(m, alpha)?.spectrum()?;
    let scale = a.leading().norm().max(f64::MIN_POSITIVE);
    let mut used = vec![false; b.eigenvalues.len()];
    let mut worst: f64 = 0.0;
    for z in &a.eigenvalues {
        let best = b
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .min_by(|x, y| (*x.1 - z).norm().total_cmp(&(*y.1 - z).norm()));
        match best {
            Some((k, w)) => {
                used[k] = true;
                worst = worst.max((w - z).norm() / scale);
            }
            None => worst = f64::INFINITY,
        }
    }
    if a.eigenvalues.len() != b.eigenvalues.len() {
        worst = f64::INFINITY;
    }
    Ok(LemmaCheck { alpha, leading: a.leading().re, max_deviation: worst })
}

/// Injectivity data of `M_alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaInjectivity {
    pub alpha: usize,
    /// `D^{2 alpha}`.
    pub virtual_dim: usize,
    /// Rank of `X -> (Tr[M_alpha^{ij} X])_{ij}` on the full virtual space.
    pub map_rank: usize,
    pub left_support: usize,
    pub right_support: usize,
    /// Same rank with `X` restricted to the supports of the fixed points.
    pub support_rank: usize,
    pub c1_prime: bool,
    /// Leading eigenvalue of `sum_i M_alpha^{ii}`.
    pub transfer_leading: f64,
    pub transfer_gap: f64,
    pub transfer_degeneracy: usize,
    pub c2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectivityReport {
    pub tolerance: f64,
    /// `M = M_1` is injective on the full virtual space.
    pub c1: bool,
    pub c1_rank: usize,
    pub c1_target: usize,
    /// Unique leading eigenvalue of the trace transfer of every `M_alpha`.
    pub c2: bool,
    pub c1_prime: bool,
    pub strongly_injective: bool,
    pub alphas: Vec<AlphaInjectivity>,
}

impl InjectivityReport {
    pub fn all_pass(&self) -> bool {
        self.c1 && self.c2 && self.c1_prime
    }
}

fn fixed_point(mats: &[CMat], left: bool) -> CMat {
    let d = mats[0].nrows();
    let mut x = CMat::identity(d, d) / cr((d as f64).sqrt());
    for _ in 0..FIXED_POINT_ITERS {
        let mut y = CMat::zeros(d, d);
        for a in mats {
            if left {
                y += a.adjoint() * &x * a;
            } else {
                y += a * &x * a.adjoint();
            }
        }
        let n = y.norm();
        if n == 0.0 {
            return y;
        }
        y /= cr(n);
        let done = (&y - &x).norm() < FIXED_POINT_TOL;
        x = y;
        if done {
            break;
        }
    }
    x
}

fn support_projector(x: &CMat) -> CMat {
    let h = (x + x.adjoint()) * cr(0.5);
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k].abs() > 1e-10 * top).collect();
    let mut p = CMat::zeros(x.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        p.set_column(c, &eig.eigenvectors.column(k));
    }
    p
}

/// Conditions (C1), (C2) and (C1') for `alpha = 1..=alpha_max`.
pub fn injectivity_report(m: &MpdoTensor, alpha_max: usize) -> Result<InjectivityReport> {
    injectivity_report_with_tol(m, alpha_max, DEFAULT_CLUSTER_TOL)
}

pub fn injectivity_report_with_tol(m: &MpdoTensor, alpha_max: usize, tol: f64) -> Result<InjectivityReport> {
    if alpha_max == 0 {
        return invalid("alpha_max must be at least 1");
    }
    let d = m.phys_dim;
    let mut alphas = Vec::with_capacity(alpha_max);
    for alpha in 1..=alpha_max {
        let ma = m.moment_tensor(alpha)?;
        let bond = ma[0].nrows();
        let map_rank = span_rank(&ma);
        let pl = support_projector(&fixed_point(&ma, true));
        let pr = support_projector(&fixed_point(&ma, false));
        let projected: Vec<CMat> = ma.iter().map(|a| pl.adjoint() * a * &pr).collect();
        let support_rank = span_rank(&projected);
        let mut t = CMat::zeros(bond, bond);
        for i in 0..d {
            t += &ma[i * d + i];
        }
        let spec = if t.iter().all(|z| z.im == 0.0) {
            Spectrum::new(block_eigenvalues(t.map(|z| z.re))?)
        } else {
            return Err(Error::NumericDomain("trace transfer is not real".into()));
        };
        alphas.push(AlphaInjectivity {
            alpha,
            virtual_dim: bond * bond,
            map_rank,
            left_support: pl.ncols(),
            right_support: pr.ncols(),
            support_rank,
            c1_prime: support_rank == pl.ncols() * pr.ncols(),
            transfer_leading: spec.leading().re,
            transfer_gap: spec.gap(tol),
            transfer_degeneracy: spec.degeneracy(tol),
            c2: spec.has_unique_leading(tol),
        });
    }
    let c1_rank = alphas[0].map_rank;
    let c1_target = alphas[0].virtual_dim;
    let c1 = c1_rank == c1_target;
    let c2 = alphas.iter().all(|a| a.c2);
    let c1_prime = alphas.iter().all(|a| a.c1_prime);
    Ok(InjectivityReport { tolerance: tol, c1, c1_rank, c1_target, c2, c1_prime, strongly_injective: c1 && c2, alphas })
}

/// `(2 - 2 alpha)^{-1} ln(Tr[Tt^{N_b}] / Tr[T^{N_b}])` on `two_n` qubits (`N_b = two_n / 2` blocks).
pub fn renyi_negativity_tm(m: &MpdoTensor, alpha: usize, two_n: usize) -> Result<f64> {
    if alpha < 2 {
        return invalid(format!("Renyi index alpha must be >= 2, got {alpha}"));
    }
    if two_n < 2 || !two_n.is_multiple_of(2) {
        return invalid(format!("two_n must be even and positive, got {two_n}"));
    }
    let nb = u32::try_from(two_n / 2).map_err(|_| Error::SizeLimit("chain too long".into()))?;
    let t = TransferMoment::new(m, alpha, false)?.ln_trace_power(nb)?;
    let tt = TransferMoment::new(m, alpha, true)?.ln_trace_power(nb)?;
    Ok((tt - t) / (2.0 - 2.0 * alpha as f64))
}

/// Renyi spurious TEN read off from the leading degeneracy of the partial-transposed moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenyiSpuriousTen {
    pub alpha: usize,
    pub degeneracy: usize,
    pub gap: f64,
    /// `ln(degeneracy) / (2 (alpha - 1))`; absent when the regularity conditions fail.
    pub value: Option<f64>,
    pub report: InjectivityReport,
}

pub fn spurious_ten_renyi(m: &MpdoTensor, alpha: usize) -> Result<RenyiSpuriousTen> {
    spurious_ten_renyi_with_tol(m, alpha, DEFAULT_CLUSTER_TOL)
}

pub fn spurious_ten_renyi_with_tol(m: &MpdoTensor, alpha: usize, tol: f64) -> Result<RenyiSpuriousTen> {
    if alpha < 2 {
        return invalid(format!("Renyi index alpha must be >= 2, got {alpha}"));
    }
    let report = injectivity_report_with_tol(m, alpha, tol)?;
    let spec = TransferMoment::new(m, alpha, true)?.spectrum()?;
    let degeneracy = spec.degeneracy(tol);
    let value = report.all_pass().then(|| (degeneracy as f64).ln() / (2.0 * (alpha as f64 - 1.0)));
    Ok(RenyiSpuriousTen { alpha, degeneracy, gap: spec.gap(tol), value, report })
}

/// Least-squares solution of `V L_k = chi R_k V` for all `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intertwiner {
    /// `||A v|| / (||A|| ||v||)` for the linear system `A v = 0`.
    pub residual: f64,
    /// Condition number of `V`.
    pub condition: f64,
    #[serde(serialize_with = "ser_cmat")]
    pub matrix: CMat,
}

impl Intertwiner {
    pub fn is_valid(&self) -> bool {
        self.residual <= SOLVE_TOL && self.condition <= MAX_CONDITION
    }
}

fn ser_cmat<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> =
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect();
    rows.serialize(s)
}

fn intertwiner(l: &[CMat], r: &[CMat], chi: Complex64) -> Intertwiner {
    let d = l[0].nrows();
    let n = d * d;
    let mut a = CMat::zeros(l.len() * n, n);
    for (k, (lk, rk)) in l.iter().zip(r).enumerate() {
        for row in 0..d {
            for col in 0..d {
                let eq = k * n + row * d + col;
                for c in 0..d {
                    // (V L)_{row,col} = V_{row,c} L_{c,col}
                    a[(eq, row * d + c)] += lk[(c, col)];
                    // (R V)_{row,col} = R_{row,c} V_{c,col}
                    a[(eq, c * d + col)] -= chi * rk[(row, c)];
                }
            }
        }
    }
    let gram = a.adjoint() * &a;
    let eig = gram.symmetric_eigen();
    let (kmin, _) = eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("nonempty");
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let v = eig.eigenvectors.column(kmin).into_owned();
    let residual = if top > 0.0 { (&a * &v).norm() / (v.norm() * top.sqrt()) } else { 1.0 };
    let mut mat = CMat::from_fn(d, d, |i, j| v[i * d + j]);
    // unit normalisation: ||V||_F^2 = D, largest entry real positive
    let big = mat.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or(cr(1.0));
    if big.norm() > 0.0 {
        let phase = big.conj() / big.norm();
        let scale = (d as f64).sqrt() / mat.norm();
        mat *= phase * scale;
    }
    let sv = hermitian_eigenvalues(&(mat.adjoint() * &mat));
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let condition = if lo > 0.0 { (hi / lo).sqrt() } else { f64::INFINITY };
    Intertwiner { residual, condition, matrix: mat }
}

/// Which layer a symmetry acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Layer {
    Ket,
    Bra,
}

/// Virtual action `V_g` of a sublattice spin flip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryAction {
    /// `"g"` flips sublattice A, `"h"` sublattice B.
    pub label: String,
    pub layer: Layer,
    /// Character `chi` in `V (g M) V^{-1} = chi M`.
    pub character: [f64; 2],
    pub solution: Intertwiner,
    /// Pauli `P` with `V` proportional to `P (x) 1` (ket) or `1 (x) P` (bra), if any.
    pub pauli: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Every ket and bra action was found.
    pub symmetric: bool,
    pub actions: Vec<SymmetryAction>,
    /// Labels of actions with no invertible solution.
    pub unsolved: Vec<String>,
    pub omega: Option<[f64; 2]>,
    pub omega_residual: Option<f64>,
    /// Order of `omega`.
    pub q: Option<usize>,
    /// `V_{g^d} V_{h^d} = omega^{-1} V_{h^d} V_{g^d}`.
    pub bra_omega_residual: Option<f64>,
    /// `max ||[V_{x^u}, V_{y^d}]||` over both flips.
    pub ket_bra_commutator: Option<f64>,
    /// Commutation relations of the leg operators at `alpha = 2`.
    pub algebra_residual: Option<f64>,
    /// `max ||V Tt_4 - Tt_4 V|| / ||Tt_4 V||` over the leg operators.
    pub transfer_invariance: Option<f64>,
}

const CHARACTERS: [Complex64; 4] =
    [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];

fn flip_action(m: &MpdoTensor, bit: usize, layer: Layer) -> (Complex64, Intertwiner) {
    let d = m.phys_dim;
    let mut l = Vec::with_capacity(d * d);
    let mut r = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            l.push(match layer {
                Layer::Ket => m.entry(i ^ bit, j).clone(),
                Layer::Bra => m.entry(i, j ^ bit).clone(),
            });
            r.push(m.entry(i, j).clone());
        }
    }
    CHARACTERS
        .iter()
        .map(|&chi| (chi, intertwiner(&l, &r, chi)))
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
        .expect("four characters")
}

fn pauli_factor(v: &CMat, layer: Layer) -> Option<char> {
    if v.nrows() != 4 {
        return None;
    }
    let i = Complex64::new(0.0, 1.0);
    let paulis = [
        ('I', [cr(1.0), cr(0.0), cr(0.0), cr(1.0)]),
        ('X', [cr(0.0), cr(1.0), cr(1.0), cr(0.0)]),
        ('Y', [cr(0.0), -i, i, cr(0.0)]),
        ('Z', [cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
    ];
    let id = CMat::identity(2, 2);
    for (name, e) in paulis {
        let p = CMat::from_row_slice(2, 2, &e);
        let q = match layer {
            Layer::Ket => kron(&p, &id),
            Layer::Bra => kron(&id, &p),
        };
        let overlap = q.dotc(v).norm() / (q.norm() * v.norm());
        if overlap > 1.0 - 1e-9 {
            return Some(name);
        }
    }
    None
}

fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Per-leg factors of `ops` placed on `legs` legs, identity elsewhere.
fn leg_factors(ops: &[(usize, &CMat)], legs: usize, leg_dim: usize) -> Vec<CMat> {
    (0..legs)
        .map(|l| ops.iter().find(|(k, _)| *k == l).map_or_else(|| CMat::identity(leg_dim, leg_dim), |(_, m)| (*m).clone()))
        .collect()
}

fn kron_all(f: &[CMat]) -> CMat {
    f.iter().fold(CMat::identity(1, 1), |acc, m| kron(&acc, m))
}

fn legwise(a: &[CMat], b: &[CMat]) -> Vec<CMat> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `||V T - T V|| / ||T V||` with `T` sparse.
fn commutator_residual(v: &CMat, t: &SparseMatrix) -> f64 {
    let n = t.dim;
    let mut vt = CMat::zeros(n, n);
    let mut tv = CMat::zeros(n, n);
    for &(r, c, x) in &t.entries {
        let (r, c) = (r as usize, c as usize);
        for k in 0..n {
            vt[(k, c)] += v[(k, r)] * x;
            tv[(r, k)] += v[(c, k)] * x;
        }
    }
    let s = tv.norm();
    if s == 0.0 {
        0.0
    } else {
        (vt - tv).norm() / s
    }
}

/// Solves for the virtual actions of the two sublattice flips on both layers and
/// checks their projective algebra.
pub fn symmetry_algebra_check(m: &MpdoTensor) -> Result<SymmetryReport> {
    if m.phys_dim != 4 {
        return invalid("symmetry check expects two-qubit blocks");
    }
    let mut actions = Vec::new();
    let mut unsolved = Vec::new();
    for (label, bit) in [("g", 1usize), ("h", 2usize)] {
        for layer in [Layer::Ket, Layer::Bra] {
            let (chi, sol) = flip_action(m, bit, layer);
            let name = format!("{label}^{}", if layer == Layer::Ket { 'u' } else { 'd' });
            if sol.is_valid() {
                let pauli = pauli_factor(&sol.matrix, layer);
                actions.push(SymmetryAction { label: name, layer, character: [chi.re, chi.im], solution: sol, pauli });
            } else {
                unsolved.push(name);
            }
        }
    }
    let mut report = SymmetryReport {
        symmetric: unsolved.is_empty(),
        actions,
        unsolved,
        omega: None,
        omega_residual: None,
        q: None,
        bra_omega_residual: None,
        ket_bra_commutator: None,
        algebra_residual: None,
        transfer_invariance: None,
    };
    if !report.symmetric {
        return Ok(report);
    }
    let get = |name: &str| &report.actions.iter().find(|a| a.label == name).expect("solved").solution.matrix;
    let (gu, gd, hu, hd) = (get("g^u"), get("g^d"), get("h^u"), get("h^d"));
    let (omega, omega_res) = CHARACTERS
        .iter()
        .map(|&w| (w, rel_diff(&(gu * hu), &(hu * gu * w))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("four candidates");
    let bra_res = rel_diff(&(gd * hd), &(hd * gd * omega.inv()));
    let mut comm: f64 = 0.0;
    for x in [gu, hu] {
        for y in [gd, hd] {
            comm = comm.max(rel_diff(&(x * y), &(y * x)));
        }
    }
    // leg operators on the four legs of the alpha = 2 transfer matrices
    let legs = 4;
    let ld = m.bond_dim;
    let vg = |j: usize| leg_factors(&[(j, gu), ((j + 1) % legs, gd)], legs, ld);
    let vh = |j: usize| leg_factors(&[(j, hd), ((j + 1) % legs, hu)], legs, ld);
    let relation = |a: &[CMat], b: &[CMat], phase: Complex64| {
        rel_diff(&kron_all(&legwise(a, b)), &(kron_all(&legwise(b, a)) * phase))
    };
    let mut alg: f64 = 0.0;
    for j in 0..legs {
        let k = (j + 1) % legs;
        alg = alg.max(relation(&vg(j), &vh(k), omega.inv()));
        alg = alg.max(relation(&vg(k), &vh(j), omega));
        for k in (0..legs).filter(|&k| k != j && k != (j + 1) % legs && (k + 1) % legs != j) {
            alg = alg.max(relation(&vg(j), &vh(k), cr(1.0)));
        }
    }
    let tt = TransferMoment::new(m, 2, true)?;
    let mut inv: f64 = 0.0;
    for j in 0..legs {
        for v in [vg(j), vh(j)] {
            inv = inv.max(commutator_residual(&kron_all(&v), &tt.matrix));
        }
    }
    let q = if (omega - cr(1.0)).norm() < 1e-12 {
        1
    } else if (omega + cr(1.0)).norm() < 1e-12 {
        2
    } else {
        4
    };
    report.omega = Some([omega.re, omega.im]);
    report.omega_residual = Some(omega_res);
    report.q = Some(q);
    report.bra_omega_residual = Some(bra_res);
    report.ket_bra_commutator = Some(comm);
    report.algebra_residual = Some(alg);
    report.transfer_invariance = Some(inv);
    Ok(report)
}

/// Groups eigenvalues into clusters of the given relative tolerance, largest first.
pub fn eigenvalue_clusters(spec: &Spectrum, tol: f64) -> Vec<(Complex64, usize)> {
    let scale = spec.leading().norm();
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    let mut seen = vec![false; spec.eigenvalues.len()];
    for (k, z) in spec.eigenvalues.iter().enumerate() {
        if seen[k] {
            continue;
        }
        let mut count = 0;
        for (k2, w) in spec.eigenvalues.iter().enumerate().skip(k) {
            if !seen[k2] && (w - z).norm() <= tol * scale {
                seen[k2] = true;
                count += 1;
            }
        }
        out.push((*z, count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_cluster_site_is_injective() {
        let s = MpsTensor::cluster_site();
        assert_eq!(s.map_rank(), 2);
        assert!(!s.is_injective());
        let b = s.block(&s).unwrap();
        assert_eq!(b.phys_dim(), 4);
        assert!(b.is_injective());
    }

    #[test]
    fn sparse_spectrum_matches_dense() {
        let m = DMatrix::from_row_slice(4, 4, &[2.0, 1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 1.0, 0.0, 0.5, 2.0, 0.0, 0.0, -1.0, 0.5]);
        let s = SparseMatrix::from_dense(&m);
        let mut a: Vec<f64> = s.spectrum().unwrap().eigenvalues().iter().map(|z| z.norm()).collect();
        let mut b: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let (sign, l) = s.ln_trace_power(5);
        let direct = m.pow(5).trace();
        assert!((sign * l.exp() - direct).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn trace_power_zero_is_dimension() {
        let s = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let (sign, l) = s.ln_trace_power(0);
        assert_eq!(sign, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn spectrum_degeneracy_and_gap() {
        let s = Spectrum::new(vec![cr(2.0), cr(2.0 + 1e-12), cr(-2.0), cr(1.0)]);
        assert_eq!(s.degeneracy(1e-9), 2);
        assert!(s.leading().re > 0.0);
        assert!(s.gap(1e-9) < 1e-9);
        assert!(s.leading_modulus_is_real(1e-9));
        assert!(!s.has_unique_leading(1e-9));
    }

    #[test]
    fn rejects_oversized_moments() {
        let m = cluster_mpdo(0.1, NoiseKind::X).unwrap();
        assert!(matches!(TransferMoment::new(&m, 4, false), Err(Error::InvalidArgument(_))));
        assert!(moment_spectra(&m, 1).is_err());
    }

    #[test]
    fn hermiticity_gauge_is_the_layer_swap() {
        let m = cluster_mpdo(0.3, NoiseKind::Z).unwrap();
        let w = m.hermiticity_gauge();
        assert!(w.is_valid(), "{w:?}");
        let swap = CMat::from_fn(4, 4, |r, c| cr(if r == 2 * (c % 2) + c / 2 { 1.0 } else { 0.0 }));
        let overlap = swap.dotc(&w.matrix).norm() / (swap.norm() * w.matrix.norm());
        assert!(overlap > 1.0 - 1e-12);
    }

    #[test]
    fn clusters_count_multiplicities() {
        let s = Spectrum::new(vec![cr(3.0), cr(1.0), cr(1.0), cr(3.0), cr(0.5)]);
        let c = eigenvalue_clusters(&s, 1e-9);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].1, 2);
        assert_eq!(c[1].1, 2);
    }
}
