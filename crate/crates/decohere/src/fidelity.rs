//! Fidelity correlators of decohered cluster states.
//!
//! Separations are measured in lattice sites of the full chain, so two charged operators
//! on the same sublattice at distance `sep` enclose `sep / 2` noise patches.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::logsum::{ln_add, ln_factorials, log_sum_exp};
use crate::pauli::{build_cluster_1d, sublattice_a, sublattice_b, x_string, Gf2Matrix, PauliOperator};
use crate::statmech::{beta_from_p, Beta, PlaquetteModel};

/// Parameters echoed in a [`FidelityResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum FidelityParams {
    OneD { n: usize, p: f64, sep: usize },
    General { n: usize, p: f64, weight_a: usize, weight_b: usize },
    TwoD { w: usize, h: usize, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub value: f64,
    pub log_value: f64,
    pub params: FidelityParams,
}

impl FidelityResult {
    fn from_log(log_value: f64, params: FidelityParams) -> Self {
        let log_value = log_value.min(0.0);
        Self { value: log_value.exp(), log_value, params }
    }

    fn one(params: FidelityParams) -> Self {
        Self { value: 1.0, log_value: 0.0, params }
    }
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return invalid(format!("error rate {p} outside [0, 1/2]"));
    }
    Ok(())
}

/// `ln F` of one sublattice ring of `n` patches with `r` of them between the charges.
fn ln_ring_factor(n: usize, p: f64, r: usize) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p == 0.0 {
        return if r == 0 || r == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let q = 1.0 - p;
    let lt = (p / q).ln();
    let lf = ln_factorials(n);
    let ln_binom = |a: usize, b: usize| lf[a] - lf[b] - lf[a - b];
    let half = |k: usize| 0.5 * ln_add(k as f64 * lt, (n - k) as f64 * lt);
    let mut terms = Vec::with_capacity((r + 1) * (n - r + 1));
    for n1 in 0..=r {
        for m1 in 0..=n - r {
            let a = n1 + m1;
            let b = r - n1 + m1;
            terms.push(ln_binom(r, n1) + ln_binom(n - r, m1) + half(a) + half(b));
        }
    }
    n as f64 * q.ln() - std::f64::consts::LN_2 + log_sum_exp(&terms)
}

/// Fidelity correlator of `Z_x Z_y` in the X-decohered cluster chain of `2n` qubits.
///
/// `sep` must be even and at most `2n`.
pub fn fc_1d_exact(n: usize, p: f64, sep: usize) -> Result<FidelityResult> {
    if n == 0 {
        return invalid("chain needs at least one unit cell");
    }
    check_rate(p)?;
    if !sep.is_multiple_of(2) {
        return invalid(format!("separation {sep} is odd; charges must sit on one sublattice"));
    }
    if sep > 2 * n {
        return invalid(format!("separation {sep} exceeds the chain length {}", 2 * n));
    }
    let params = FidelityParams::OneD { n, p, sep };
    if p == 0.5 {
        return Ok(FidelityResult::one(params));
    }
    Ok(FidelityResult::from_log(ln_ring_factor(n, p, sep / 2), params))
}

/// `xi = -1 / ln(2 sqrt(p (1 - p)))`.
pub fn fc_decay_length(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return invalid(format!("decay length needs 0 < p < 1/2, got {p}"));
    }
    Ok(-1.0 / (2.0 * (p * (1.0 - p)).sqrt()).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    OnsiteX,
    OnsiteZ,
    General,
}

/// One Kraus operator of a single-Pauli channel `(1 - p) rho + p P rho P`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTerm {
    pub anchor: usize,
    pub kraus: PauliOperator,
    /// Cluster stabilizers anticommuting with `kraus`.
    pub patch: Vec<bool>,
}

/// Noise on the periodic cluster chain of `two_n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    two_n: usize,
    terms: Vec<NoiseTerm>,
}

fn anticommuting_patch(stabs: &[PauliOperator], p: &PauliOperator) -> Vec<bool> {
    stabs.iter().map(|k| !k.commutes_with(p)).collect()
}

impl NoiseSpec {
    /// General symmetric noise. Each Kraus operator must commute with both sublattice `X`
    /// strings; overlapping patches must form rings whose only undetectable combination is
    /// the whole ring.
    pub fn general(two_n: usize, kraus: Vec<(usize, PauliOperator)>) -> Result<Self> {
        let spec = Self::build(NoiseKind::General, two_n, kraus)?;
        let ga = x_string(two_n, &sublattice_a(two_n))?;
        let gb = x_string(two_n, &sublattice_b(two_n))?;
        for t in &spec.terms {
            if !t.kraus.commutes_with(&ga) || !t.kraus.commutes_with(&gb) {
                return invalid(format!("Kraus operator {} breaks the subsystem symmetry", t.kraus));
            }
            let on_a = t.patch.iter().step_by(2).filter(|&&b| b).count();
            let on_b = t.patch.iter().skip(1).step_by(2).filter(|&&b| b).count();
            if on_a % 2 != 0 || on_b % 2 != 0 {
                return invalid(format!("patch of {} has an odd number of sites on a sublattice", t.kraus));
            }
        }
        spec.components()?;
        Ok(spec)
    }

    /// On-site `X` noise written as a general spec.
    pub fn onsite_x(two_n: usize) -> Result<Self> {
        let kraus = (0..two_n)
            .map(|j| Ok((j, PauliOperator::from_sparse(two_n, &[(j, crate::pauli::Pauli::X)])?)))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::general(two_n, kraus)?;
        s.kind = NoiseKind::OnsiteX;
        Ok(s)
    }

    /// On-site `Z` noise; breaks the strong symmetry.
    pub fn onsite_z(two_n: usize) -> Result<Self> {
        let kraus = (0..two_n)
            .map(|j| Ok((j, PauliOperator::from_sparse(two_n, &[(j, crate::pauli::Pauli::Z)])?)))
            .collect::<Result<Vec<_>>>()?;
        Self::build(NoiseKind::OnsiteZ, two_n, kraus)
    }

    fn build(kind: NoiseKind, two_n: usize, kraus: Vec<(usize, PauliOperator)>) -> Result<Self> {
        let tab = build_cluster_1d(two_n)?;
        let stabs = tab.generators();
        let mut terms = Vec::with_capacity(kraus.len());
        for (anchor, k) in kraus {
            if anchor >= two_n {
                return invalid(format!("anchor {anchor} outside the chain of {two_n}"));
            }
            if k.n_qubits() != two_n {
                return invalid(format!("Kraus operator acts on {} qubits, chain has {two_n}", k.n_qubits()));
            }
            if !k.is_hermitian() {
                return invalid(format!("Kraus operator {k} is not Hermitian"));
            }
            let patch = anticommuting_patch(stabs, &k);
            terms.push(NoiseTerm { anchor, kraus: k, patch });
        }
        if terms.is_empty() {
            return invalid("noise spec needs at least one Kraus operator");
        }
        Ok(Self { kind, two_n, terms })
    }

    pub(crate) fn patch_matrix(&self) -> Gf2Matrix {
        let mut m = Gf2Matrix::zeros(self.terms.len(), self.two_n);
        for (r, t) in self.terms.iter().enumerate() {
            for (c, &b) in t.patch.iter().enumerate() {
                if b {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Groups anchors whose patches overlap and classifies each group. A group either has
    /// independent patches, or behaves as a ring whose only undetectable combination is
    /// the whole group.
    fn components(&self) -> Result<Vec<PatchComponent>> {
        let n = self.terms.len();
        let mut uf = UnionFind::<usize>::new(n);
        let mut owner: Vec<Option<usize>> = vec![None; self.two_n];
        for (i, t) in self.terms.iter().enumerate() {
            for (s, &b) in t.patch.iter().enumerate() {
                if b {
                    match owner[s] {
                        Some(j) => {
                            uf.union(i, j);
                        }
                        None => owner[s] = Some(i),
                    }
                }
            }
        }
        let labels = uf.into_labeling();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match groups.iter_mut().find(|(k, _)| *k == l) {
                Some((_, g)) => g.push(i),
                None => groups.push((l, vec![i])),
            }
        }
        let mut out = Vec::with_capacity(groups.len());
        for (_, members) in groups {
            if members.iter().any(|&i| self.terms[i].patch.iter().all(|&b| !b)) {
                return invalid(format!(
                    "Kraus operator {} commutes with every stabilizer and cannot be detected",
                    self.terms[members[0]].kraus
                ));
            }
            let mut m = Gf2Matrix::zeros(members.len(), self.two_n);
            for (r, &i) in members.iter().enumerate() {
                for (c, &b) in self.terms[i].patch.iter().enumerate() {
                    if b {
                        m.set(r, c, true);
                    }
                }
            }
            let rank = m.rank();
            let ring = if rank == members.len() {
                false
            } else {
                let mut sum = vec![false; self.two_n];
                for &i in &members {
                    for (a, &b) in sum.iter_mut().zip(&self.terms[i].patch) {
                        *a ^= b;
                    }
                }
                if rank + 1 != members.len() || sum.iter().any(|&b| b) {
                    return invalid("patch map has undetectable combinations beyond whole rings");
                }
                true
            };
            out.push(PatchComponent { members, ring });
        }
        Ok(out)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn two_n(&self) -> usize {
        self.two_n
    }

    pub fn terms(&self) -> &[NoiseTerm] {
        &self.terms
    }

    /// Kraus operators paired with a common rate, ready for a channel application.
    pub fn kraus_operators(&self) -> Vec<&PauliOperator> {
        self.terms.iter().map(|t| &t.kraus).collect()
    }

    /// Patch indicator `r` whose mod-2 union of patches equals `target`, if any.
    pub fn decompose(&self, target: &[bool]) -> Option<Vec<bool>> {
        self.patch_matrix().solve_row_combination(target)
    }
}

#[derive(Debug, Clone)]
struct PatchComponent {
    members: Vec<usize>,
    ring: bool,
}

/// Charged operator `O_x O_y` with its noise-patch decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargedOperatorPair {
    pub x: usize,
    pub y: usize,
    pub operator: PauliOperator,
    pub decomposition: Vec<bool>,
}

impl ChargedOperatorPair {
    /// Fails when the stabilizers flipped by `operator` are not a union of noise patches,
    /// in which case the correlator vanishes for every `p < 1/2`.
    pub fn new(x: usize, y: usize, operator: PauliOperator, noise: &NoiseSpec) -> Result<Self> {
        if operator.n_qubits() != noise.two_n {
            return invalid("charged operator and noise act on different chain lengths");
        }
        let tab = build_cluster_1d(noise.two_n)?;
        let flipped = anticommuting_patch(tab.generators(), &operator);
        let Some(decomposition) = noise.decompose(&flipped) else {
            return invalid(format!(
                "{operator} is not a union of noise patches; its fidelity correlator vanishes trivially"
            ));
        };
        Ok(Self { x, y, operator, decomposition })
    }

    /// `Z_x Z_y`.
    pub fn zz(x: usize, y: usize, noise: &NoiseSpec) -> Result<Self> {
        let n = noise.two_n;
        if x >= n || y >= n || x == y {
            return invalid(format!("charge positions ({x}, {y}) invalid for chain of {n}"));
        }
        let op = PauliOperator::from_sparse(n, &[(x, crate::pauli::Pauli::Z), (y, crate::pauli::Pauli::Z)])?;
        Self::new(x, y, op, noise)
    }
}

/// Fidelity correlator for symmetric noise at a shared rate `p`: a product over groups of
/// overlapping patches, each a ring factor or independent `2 sqrt(p (1 - p))` factors.
pub fn fc_1d_general(p: f64, noise: &NoiseSpec, charged: &ChargedOperatorPair) -> Result<FidelityResult> {
    check_rate(p)?;
    if charged.decomposition.len() != noise.terms.len() {
        return invalid("charged pair was decomposed against a different noise spec");
    }
    let r = &charged.decomposition;
    let mut wa = 0;
    let mut wb = 0;
    for (t, &on) in noise.terms.iter().zip(r) {
        if on {
            if t.anchor % 2 == 0 {
                wa += 1;
            } else {
                wb += 1;
            }
        }
    }
    let params = FidelityParams::General { n: noise.two_n / 2, p, weight_a: wa, weight_b: wb };
    if p == 0.5 {
        return Ok(FidelityResult::one(params));
    }
    let mut ln = 0.0;
    for comp in noise.components()? {
        let w = comp.members.iter().filter(|&&i| r[i]).count();
        ln += if comp.ring {
            ln_ring_factor(comp.members.len(), p, w)
        } else if w == 0 {
            0.0
        } else if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            w as f64 * (2.0 * (p * (1.0 - p)).sqrt()).ln()
        };
    }
    Ok(FidelityResult::from_log(ln, params))
}

/// Evaluation route for [`fc_2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Fc2dMode {
    /// Product of `h` decoupled rings of `width` sites.
    Factorized { width: usize },
    /// Exact enumeration of the plaquette model with `height` spin rows.
    Brute { width: usize, height: usize, include_boundary: bool },
}

/// Fidelity correlator of the corner operator of a `w x h` rectangle on the decohered
/// 2D cluster state, in the plaquette-model coordinates of one sublattice.
pub fn fc_2d(w: usize, h: usize, p: f64, mode: Fc2dMode) -> Result<FidelityResult> {
    check_rate(p)?;
    let params = FidelityParams::TwoD { w, h, p };
    if w == 0 || h == 0 {
        return invalid("rectangle needs positive width and height");
    }
    match mode {
        Fc2dMode::Factorized { width } => {
            if w > width {
                return invalid(format!("rectangle width {w} exceeds the cylinder width {width}"));
            }
            if p == 0.5 {
                return Ok(FidelityResult::one(params));
            }
            let ring = fc_1d_exact(width, p, 2 * w)?.log_value;
            let mut ln = 0.0;
            for _ in 0..h {
                ln += ring;
            }
            Ok(FidelityResult::from_log(ln, params))
        }
        Fc2dMode::Brute { width, height, include_boundary } => {
            if h + 1 > height {
                return invalid(format!("rectangle height {h} needs at least {} spin rows", h + 1));
            }
            if w > width {
                return invalid(format!("rectangle width {w} exceeds the cylinder width {width}"));
            }
            let beta = match beta_from_p(p)? {
                Beta::Infinite => return Ok(FidelityResult::one(params)),
                Beta::Finite(b) => b,
            };
            let model = PlaquetteModel::new(width, height, beta, include_boundary)?;
            let y0 = (height - 1 - h) / 2;
            let corners = [(0, y0), (w % width, y0), (0, y0 + h), (w % width, y0 + h)];
            let mut rect = 0u64;
            for &(x, y) in &corners {
                rect ^= 1u64 << model.site(x, y);
            }
            let f = pim_overlap(&model, rect)?;
            Ok(FidelityResult::from_log(f.ln(), params))
        }
    }
}

/// `sum_S sqrt(c_S c_{S + R}) / sum_S c_S` over the span of the interaction terms.
pub fn pim_overlap(model: &PlaquetteModel, rect: u64) -> Result<f64> {
    let masks = model.interaction_masks();
    let basis = gf2_basis(&masks);
    if !in_span(&basis, rect) {
        return invalid("rectangle corners are not generated by the interaction terms");
    }
    let c = model.all_correlators();
    let mut num = crate::logsum::KahanSum::new();
    let mut den = crate::logsum::KahanSum::new();
    let mut s = 0u64;
    let total = 1u64 << basis.len();
    for k in 0..total {
        if k > 0 {
            s ^= basis[k.trailing_zeros() as usize];
        }
        let a = c[s as usize].max(0.0);
        let b = c[(s ^ rect) as usize].max(0.0);
        num.add((a * b).sqrt());
        den.add(a);
    }
    Ok((num.value() / den.value()).min(1.0))
}

fn gf2_basis(vectors: &[u64]) -> Vec<u64> {
    let mut reduced: Vec<u64> = Vec::new();
    let mut basis = Vec::new();
    for &v in vectors {
        let mut r = v;
        for &b in &reduced {
            r = r.min(r ^ b);
        }
        if r != 0 {
            reduced.push(r);
            reduced.sort_unstable_by(|a, b| b.cmp(a));
            basis.push(v);
        }
    }
    basis
}

fn in_span(basis: &[u64], v: u64) -> bool {
    let mut reduced: Vec<u64> = Vec::new();
    for &b in basis {
        let mut r = b;
        for &x in &reduced {
            r = r.min(r ^ x);
        }
        if r != 0 {
            reduced.push(r);
            reduced.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    let mut r = v;
    for &x in &reduced {
        r = r.min(r ^ x);
    }
    r == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_at_half() {
        for n in [1usize, 7, 1024] {
            assert_eq!(fc_1d_exact(n, 0.5, 2).unwrap().value, 1.0);
        }
    }

    #[test]
    fn pure_state_vanishes() {
        assert_eq!(fc_1d_exact(8, 0.0, 4).unwrap().value, 0.0);
        assert_eq!(fc_1d_exact(8, 0.0, 0).unwrap().value, 1.0);
        assert_eq!(fc_1d_exact(8, 0.0, 16).unwrap().value, 1.0);
    }

    #[test]
    fn rejects_bad_separation() {
        assert!(fc_1d_exact(4, 0.1, 3).is_err());
        assert!(fc_1d_exact(4, 0.1, 10).is_err());
        assert!(fc_1d_exact(4, 0.6, 2).is_err());
    }

    #[test]
    fn decay_length_value() {
        let xi = fc_decay_length(0.25).unwrap();
        assert!((xi - 6.952).abs() < 1e-3);
        assert!(fc_decay_length(0.5).is_err());
        assert!(fc_decay_length(0.0).is_err());
    }

    #[test]
    fn symmetric_under_complement() {
        let a = fc_1d_exact(10, 0.2, 6).unwrap().value;
        let b = fc_1d_exact(10, 0.2, 14).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gf2_span() {
        let b = gf2_basis(&[0b011, 0b110, 0b101]);
        assert_eq!(b.len(), 2);
        assert!(in_span(&b, 0b101));
        assert!(!in_span(&b, 0b001));
    }

    #[test]
    fn z_noise_is_rejected_as_general() {
        let kraus = (0..6)
            .map(|j| (j, PauliOperator::from_sparse(6, &[(j, crate::pauli::Pauli::Z)]).unwrap()))
            .collect();
        assert!(NoiseSpec::general(6, kraus).is_err());
    }
}
