//! Pauli strings, stabilizer tableaux and GF(2) linear algebra.
//!
//! A Pauli operator on `n` qubits is stored as `i^k * prod_q P(x_q, z_q)` where
//! `P(0,0)=I`, `P(1,0)=X`, `P(0,1)=Z`, `P(1,1)=Y = i X Z`. Qubit `q` lives in bit
//! `q % 64` of word `q / 64`.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const WORD: usize = 64;

fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

fn and_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' | '_' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Global phase in `{+1, +i, -1, -i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    PlusOne,
    PlusI,
    MinusOne,
    MinusI,
}

impl Phase {
    /// Phase `i^k`.
    pub fn from_exponent(k: u32) -> Self {
        match k % 4 {
            0 => Phase::PlusOne,
            1 => Phase::PlusI,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn exponent(self) -> u32 {
        match self {
            Phase::PlusOne => 0,
            Phase::PlusI => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self {
            Phase::PlusOne => Complex64::new(1.0, 0.0),
            Phase::PlusI => Complex64::new(0.0, 1.0),
            Phase::MinusOne => Complex64::new(-1.0, 0.0),
            Phase::MinusI => Complex64::new(0.0, -1.0),
        }
    }
}

/// A Pauli string with an exact phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliOperator {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: Phase,
}

impl PauliOperator {
    pub fn identity(n: usize) -> Self {
        Self { n, x: vec![0; words_for(n)], z: vec![0; words_for(n)], phase: Phase::PlusOne }
    }

    /// Single-qubit Pauli `p` on qubit `q`.
    pub fn single(n: usize, q: usize, p: Pauli) -> Result<Self> {
        Self::from_sparse(n, &[(q, p)])
    }

    /// Product of letters at distinct positions, phase `+1`.
    pub fn from_sparse(n: usize, terms: &[(usize, Pauli)]) -> Result<Self> {
        let mut op = Self::identity(n);
        for &(q, p) in terms {
            if q >= n {
                return invalid(format!("qubit {q} out of range for {n} qubits"));
            }
            if op.letter(q) != Pauli::I {
                return invalid(format!("qubit {q} listed twice"));
            }
            let (xb, zb) = p.bits();
            op.set_bits(q, xb, zb);
        }
        Ok(op)
    }

    /// Parses strings like `"XZIY"` or `"-iXZ"`; character `q` acts on qubit `q`.
    pub fn from_label(label: &str) -> Result<Self> {
        let (phase, body) = if let Some(rest) = label.strip_prefix("-i") {
            (Phase::MinusI, rest)
        } else if let Some(rest) = label.strip_prefix("+i") {
            (Phase::PlusI, rest)
        } else if let Some(rest) = label.strip_prefix('i') {
            (Phase::PlusI, rest)
        } else if let Some(rest) = label.strip_prefix('-') {
            (Phase::MinusOne, rest)
        } else if let Some(rest) = label.strip_prefix('+') {
            (Phase::PlusOne, rest)
        } else {
            (Phase::PlusOne, label)
        };
        let n = body.chars().count();
        if n == 0 {
            return invalid("empty Pauli label");
        }
        let mut op = Self::identity(n);
        for (q, c) in body.chars().enumerate() {
            let p = Pauli::from_char(c)
                .ok_or_else(|| crate::Error::InvalidArgument(format!("bad Pauli letter {c:?}")))?;
            let (xb, zb) = p.bits();
            op.set_bits(q, xb, zb);
        }
        op.phase = phase;
        Ok(op)
    }

    /// Builds from explicit bit vectors (`x[q]`, `z[q]`) and a phase.
    pub fn from_bits(x: &[bool], z: &[bool], phase: Phase) -> Result<Self> {
        if x.len() != z.len() || x.is_empty() {
            return invalid("x and z bit vectors must be nonempty and equally long");
        }
        let mut op = Self::identity(x.len());
        for q in 0..x.len() {
            op.set_bits(q, x[q], z[q]);
        }
        op.phase = phase;
        Ok(op)
    }

    fn set_bits(&mut self, q: usize, xb: bool, zb: bool) {
        let (w, b) = (q / WORD, q % WORD);
        let mask = 1u64 << b;
        self.x[w] = (self.x[w] & !mask) | ((xb as u64) << b);
        self.z[w] = (self.z[w] & !mask) | ((zb as u64) << b);
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / WORD] >> (q % WORD)) & 1 == 1
    }

    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / WORD] >> (q % WORD)) & 1 == 1
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn letter(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x_bit(q), self.z_bit(q))
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.letter(q) != Pauli::I).collect()
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.weight() == 0
    }

    /// `true` iff the operator is Hermitian (phase `+-1`).
    pub fn is_hermitian(&self) -> bool {
        self.phase.exponent().is_multiple_of(2)
    }

    fn count_y(&self) -> u32 {
        and_popcount(&self.x, &self.z)
    }

    /// Symplectic commutation test.
    pub fn commutes_with(&self, other: &PauliOperator) -> bool {
        assert_eq!(self.n, other.n, "qubit count mismatch");
        let s = and_popcount(&self.x, &other.z) + and_popcount(&self.z, &other.x);
        s.is_multiple_of(2)
    }

    /// Exact product `self * other`.
    pub fn product(&self, other: &PauliOperator) -> PauliOperator {
        assert_eq!(self.n, other.n, "qubit count mismatch");
        let x: Vec<u64> = self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect();
        let z: Vec<u64> = self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect();
        let y3 = and_popcount(&x, &z);
        let k = self.phase.exponent()
            + other.phase.exponent()
            + self.count_y()
            + other.count_y()
            + 2 * and_popcount(&self.z, &other.x);
        // subtract y3 modulo 4
        let k = (k + 4 * (y3 / 4 + 1) - y3) % 4;
        PauliOperator { n: self.n, x, z, phase: Phase::from_exponent(k) }
    }

    /// Restriction to `region`: letters outside are replaced by identity; phase kept.
    pub fn restrict(&self, region: &[usize]) -> PauliOperator {
        let mut out = PauliOperator::identity(self.n);
        for &q in region {
            out.set_bits(q, self.x_bit(q), self.z_bit(q));
        }
        out.phase = self.phase;
        out
    }

    /// Full transpose: `P^T = (-1)^{#Y} P`.
    pub fn transpose(&self) -> PauliOperator {
        self.partial_transpose(&(0..self.n).collect::<Vec<_>>())
    }

    /// Transpose on the qubits of `region` only.
    pub fn partial_transpose(&self, region: &[usize]) -> PauliOperator {
        let ys = region.iter().filter(|&&q| self.letter(q) == Pauli::Y).count() as u32;
        let mut out = self.clone();
        out.phase = Phase::from_exponent(self.phase.exponent() + 2 * (ys % 2));
        out
    }

    /// Action on a computational basis state: `P|b> = c |b'>`. Requires `n <= 63`.
    pub fn apply_to_basis(&self, b: u64) -> (u64, Complex64) {
        assert!(self.n < 64, "basis action limited to 63 qubits");
        let x = self.x[0];
        let z = self.z[0];
        let k = self.phase.exponent() + (x & z).count_ones() + 2 * ((z & b).count_ones() % 2);
        (b ^ x, Phase::from_exponent(k).to_complex())
    }

    pub fn label(&self) -> String {
        (0..self.n).map(|q| self.letter(q).as_char()).collect()
    }
}

impl Mul for &PauliOperator {
    type Output = PauliOperator;

    fn mul(self, rhs: &PauliOperator) -> PauliOperator {
        self.product(rhs)
    }
}

impl fmt::Display for PauliOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.phase {
            Phase::PlusOne => "+",
            Phase::PlusI => "+i",
            Phase::MinusOne => "-",
            Phase::MinusI => "-i",
        };
        write!(f, "{p}{}", self.label())
    }
}

/// Dense bit matrix over GF(2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    stride: usize,
    bits: Vec<u64>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols).max(1);
        Self { rows, cols, stride, bits: vec![0; rows * stride] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.bits[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let i = r * self.stride + c / WORD;
        let mask = 1u64 << (c % WORD);
        if v {
            self.bits[i] |= mask;
        } else {
            self.bits[i] &= !mask;
        }
    }

    /// Adds row `src` into row `dst` (XOR).
    pub fn add_row(&mut self, dst: usize, src: usize) {
        for w in 0..self.stride {
            let v = self.bits[src * self.stride + w];
            self.bits[dst * self.stride + w] ^= v;
        }
    }

    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.bits[r * self.stride..(r + 1) * self.stride]
    }

    /// Rank by Gaussian elimination modulo 2.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.row_reduce().len()
    }

    /// In-place row reduction; returns the pivot columns in order.
    pub fn row_reduce(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| self.get(i, c)) else {
                continue;
            };
            if p != r {
                for w in 0..self.stride {
                    self.bits.swap(p * self.stride + w, r * self.stride + w);
                }
            }
            for i in 0..self.rows {
                if i != r && self.get(i, c) {
                    self.add_row(i, r);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    /// Solves `x^T A = b^T`, i.e. expresses `b` as a combination of the rows of `A`.
    /// Returns the row coefficients, or `None` when `b` is not in the row space.
    pub fn solve_row_combination(&self, b: &[bool]) -> Option<Vec<bool>> {
        assert_eq!(b.len(), self.cols);
        // augmented: rows of A with an identity tag block
        let mut aug = Gf2Matrix::zeros(self.rows, self.cols + self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    aug.set(r, c, true);
                }
            }
            aug.set(r, self.cols + r, true);
        }
        let mut target = vec![false; self.cols + self.rows];
        target[..self.cols].copy_from_slice(b);
        let pivots = aug.row_reduce();
        for (i, &c) in pivots.iter().enumerate() {
            if c >= self.cols {
                break;
            }
            if target[c] {
                for (cc, t) in target.iter_mut().enumerate() {
                    if aug.get(i, cc) {
                        *t = !*t;
                    }
                }
            }
        }
        if target[..self.cols].iter().any(|&v| v) {
            return None;
        }
        Some(target[self.cols..].to_vec())
    }
}

/// A set of independent, pairwise commuting Pauli generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    generators: Vec<PauliOperator>,
}

impl StabilizerTableau {
    /// Validates commutation and GF(2) independence.
    pub fn new(n: usize, generators: Vec<PauliOperator>) -> Result<Self> {
        if n == 0 {
            return invalid("tableau needs at least one qubit");
        }
        for g in &generators {
            if g.n_qubits() != n {
                return invalid("generator qubit count mismatch");
            }
            if !g.is_hermitian() {
                return invalid(format!("generator {g} is not Hermitian"));
            }
        }
        for i in 0..generators.len() {
            for j in i + 1..generators.len() {
                if !generators[i].commutes_with(&generators[j]) {
                    return invalid(format!("generators {i} and {j} anticommute"));
                }
            }
        }
        let tab = Self { n, generators };
        if tab.symplectic_matrix().rank() != tab.generators.len() {
            return invalid("generators are not independent over GF(2)");
        }
        Ok(tab)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliOperator] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// A pure stabilizer state has `n` generators.
    pub fn is_pure(&self) -> bool {
        self.generators.len() == self.n
    }

    /// Stacked `[x | z]` rows.
    pub fn symplectic_matrix(&self) -> Gf2Matrix {
        let mut m = Gf2Matrix::zeros(self.generators.len(), 2 * self.n);
        for (r, g) in self.generators.iter().enumerate() {
            for q in 0..self.n {
                m.set(r, q, g.x_bit(q));
                m.set(r, self.n + q, g.z_bit(q));
            }
        }
        m
    }

    /// Anticommutation matrix of the generators restricted to `region`.
    pub fn restricted_commutation_matrix(&self, region: &[usize]) -> Gf2Matrix {
        let restricted: Vec<PauliOperator> =
            self.generators.iter().map(|g| g.restrict(region)).collect();
        let k = restricted.len();
        let mut m = Gf2Matrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                if !restricted[i].commutes_with(&restricted[j]) {
                    m.set(i, j, true);
                    m.set(j, i, true);
                }
            }
        }
        m
    }

    /// Replaces generator `dst` by `g_dst * g_src` (keeps the group).
    pub fn multiply_into(&mut self, dst: usize, src: usize) {
        let prod = self.generators[dst].product(&self.generators[src]);
        self.generators[dst] = prod;
    }
}

fn check_cluster_len(two_n: usize) -> Result<()> {
    if two_n < 4 || !two_n.is_multiple_of(2) {
        return invalid(format!("chain length must be even and >= 4, got {two_n}"));
    }
    Ok(())
}

/// Periodic 1D cluster state, generators `K_j = Z_{j-1} X_j Z_{j+1}` (0-indexed).
pub fn build_cluster_1d(two_n: usize) -> Result<StabilizerTableau> {
    check_cluster_len(two_n)?;
    let gens = (0..two_n)
        .map(|j| {
            PauliOperator::from_sparse(
                two_n,
                &[((j + two_n - 1) % two_n, Pauli::Z), (j, Pauli::X), ((j + 1) % two_n, Pauli::Z)],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    StabilizerTableau::new(two_n, gens)
}

/// Sublattice `A`: even 0-indexed sites (odd in 1-indexed labels).
pub fn sublattice_a(two_n: usize) -> Vec<usize> {
    (0..two_n).step_by(2).collect()
}

/// Sublattice `B`: odd 0-indexed sites.
pub fn sublattice_b(two_n: usize) -> Vec<usize> {
    (1..two_n).step_by(2).collect()
}

/// Product of `X` over `sites`.
pub fn x_string(n: usize, sites: &[usize]) -> Result<PauliOperator> {
    PauliOperator::from_sparse(n, &sites.iter().map(|&q| (q, Pauli::X)).collect::<Vec<_>>())
}

/// Product of `Z` over `sites`.
pub fn z_string(n: usize, sites: &[usize]) -> Result<PauliOperator> {
    PauliOperator::from_sparse(n, &sites.iter().map(|&q| (q, Pauli::Z)).collect::<Vec<_>>())
}

/// Square-lattice cluster state on a cylinder: periodic in `x` (width), open in `y`.
/// Qubit `(x, y)` has index `y * width + x`.
pub fn build_cluster_2d_cylinder(width: usize, height: usize) -> Result<StabilizerTableau> {
    if !width.is_multiple_of(2) {
        return invalid(format!("cylinder width must be even, got {width}"));
    }
    if width < 4 {
        return invalid(format!("cylinder width must be at least 4, got {width}"));
    }
    if height == 0 {
        return invalid("cylinder height must be positive");
    }
    let n = width * height;
    let idx = |x: usize, y: usize| y * width + x;
    let mut gens = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let mut terms = vec![
                (idx(x, y), Pauli::X),
                (idx((x + 1) % width, y), Pauli::Z),
                (idx((x + width - 1) % width, y), Pauli::Z),
            ];
            if y > 0 {
                terms.push((idx(x, y - 1), Pauli::Z));
            }
            if y + 1 < height {
                terms.push((idx(x, y + 1), Pauli::Z));
            }
            gens.push(PauliOperator::from_sparse(n, &terms)?);
        }
    }
    StabilizerTableau::new(n, gens)
}

/// Why a negativity evaluation was trivial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionWarning {
    EmptyRegion,
    FullRegion,
}

/// Result of the stabilizer negativity formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizerNegativity {
    /// Negativity in nats.
    pub value: f64,
    /// GF(2) rank of the restricted anticommutation matrix.
    pub rank: usize,
    pub warning: Option<RegionWarning>,
}

fn normalize_region(n: usize, region: &[usize]) -> Result<Vec<usize>> {
    let mut r: Vec<usize> = region.to_vec();
    r.sort_unstable();
    r.dedup();
    if let Some(&q) = r.last() {
        if q >= n {
            return invalid(format!("region qubit {q} out of range for {n} qubits"));
        }
    }
    Ok(r)
}

/// `(1/2) rank(K_R) log 2` for a (possibly mixed) stabilizer state.
pub fn negativity_stabilizer(tab: &StabilizerTableau, region: &[usize]) -> Result<StabilizerNegativity> {
    let r = normalize_region(tab.n_qubits(), region)?;
    let warning = if r.is_empty() {
        Some(RegionWarning::EmptyRegion)
    } else if r.len() == tab.n_qubits() {
        Some(RegionWarning::FullRegion)
    } else {
        None
    };
    if warning.is_some() {
        return Ok(StabilizerNegativity { value: 0.0, rank: 0, warning });
    }
    let rank = tab.restricted_commutation_matrix(&r).rank();
    Ok(StabilizerNegativity { value: 0.5 * rank as f64 * std::f64::consts::LN_2, rank, warning })
}

/// Applies the `p = 1/2` channel of each Kraus Pauli: the first anticommuting generator
/// is multiplied into every other anticommuting generator and then dropped.
pub fn maximal_dephase(tab: &StabilizerTableau, kraus: &[PauliOperator]) -> Result<StabilizerTableau> {
    let mut gens = tab.generators().to_vec();
    for p in kraus {
        if p.n_qubits() != tab.n_qubits() {
            return invalid("Kraus operator qubit count mismatch");
        }
        let anti: Vec<usize> = (0..gens.len()).filter(|&i| !gens[i].commutes_with(p)).collect();
        let Some((&pivot, rest)) = anti.split_first() else {
            continue;
        };
        for &i in rest {
            gens[i] = gens[i].product(&gens[pivot]);
        }
        gens.remove(pivot);
    }
    Ok(StabilizerTableau { n: tab.n_qubits(), generators: gens })
}
