//! Truncated quantum O(2) chain: local operators and Hamiltonians.
//!
//! Local basis states are ordered `n = -S, ..., +S`, so the local index of
//! `|n>` is `n + S`. Many-body product states are ordered lexicographically
//! with site 0 the most significant digit.
//!
//! Two hopping variants are supported. [`ModelVariant::UOperator`] uses the
//! phase operators `U^± |n> = |n ± 1>` (annihilating the extremal states);
//! [`ModelVariant::Ladder`] uses the spin ladder operators normalized by
//! `sqrt(S(S+1))`. [`ModelVariant::UOperatorJz`] adds a nearest-neighbour
//! `Jz S^z S^z` interaction to the `U` hopping.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::SectorBasis;
use crate::error::{Error, Result};

/// Hopping amplitude; fixed as the energy unit.
pub const HOPPING_J: f64 = 1.0;

/// Spin truncation `|n| <= S`; the local dimension is `2S + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SpinTruncation(u32);

impl SpinTruncation {
    pub fn new(s: u32) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidSpec("spin truncation S must be >= 1".into()));
        }
        Ok(SpinTruncation(s))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn as_i32(self) -> i32 {
        self.0 as i32
    }

    pub fn local_dim(self) -> usize {
        2 * self.0 as usize + 1
    }

    /// Local index of the state `|n>`.
    pub fn index_of(self, n: i32) -> usize {
        (n + self.as_i32()) as usize
    }

    /// Eigenvalue of `S^z` on local index `i`.
    pub fn charge_of(self, i: usize) -> i32 {
        i as i32 - self.as_i32()
    }

    /// `S(S+1)`.
    pub fn casimir(self) -> u64 {
        let s = self.0 as u64;
        s * (s + 1)
    }
}

impl TryFrom<u32> for SpinTruncation {
    type Error = Error;

    fn try_from(s: u32) -> Result<Self> {
        SpinTruncation::new(s)
    }
}

impl From<SpinTruncation> for u32 {
    fn from(s: SpinTruncation) -> u32 {
        s.0
    }
}

impl fmt::Display for SpinTruncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelVariant {
    UOperator,
    Ladder,
    UOperatorJz { jz: f64 },
}

impl ModelVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelVariant::UOperator => "u",
            ModelVariant::Ladder => "ladder",
            ModelVariant::UOperatorJz { .. } => "u-jz",
        }
    }

    pub fn jz(&self) -> f64 {
        match self {
            ModelVariant::UOperatorJz { jz } => *jz,
            _ => 0.0,
        }
    }

    /// Build a variant from its command-line tag and an optional `Jz`.
    pub fn from_tag(tag: &str, jz: Option<f64>) -> Result<Self> {
        match (tag, jz) {
            ("u", None) => Ok(ModelVariant::UOperator),
            ("ladder", None) => Ok(ModelVariant::Ladder),
            ("u-jz", Some(jz)) if jz.is_finite() => Ok(ModelVariant::UOperatorJz { jz }),
            ("u-jz", _) => Err(Error::InvalidSpec("variant u-jz requires a finite jz".into())),
            ("u" | "ladder", Some(_)) => Err(Error::InvalidSpec(format!(
                "jz coupling is only defined for the u-jz variant, not '{tag}'"
            ))),
            _ => Err(Error::InvalidSpec(format!("unknown variant '{tag}'"))),
        }
    }

    /// Stable, filesystem-safe label including the coupling when present.
    pub fn label(&self) -> String {
        match self {
            ModelVariant::UOperatorJz { jz } => format!("u-jz{jz:+}"),
            other => other.tag().to_string(),
        }
    }

    fn uses_ladder_hopping(&self) -> bool {
        matches!(self, ModelVariant::Ladder)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("u-jz") {
            let jz = rest
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("bad jz in variant label '{s}'")))?;
            return ModelVariant::from_tag("u-jz", Some(jz));
        }
        ModelVariant::from_tag(s, None)
    }
}

/// One Hamiltonian instance with open boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub variant: ModelVariant,
    pub spin: SpinTruncation,
    pub length: usize,
    pub d: f64,
}

impl ChainSpec {
    pub fn new(variant: ModelVariant, spin: u32, length: usize, d: f64) -> Result<Self> {
        let spin = SpinTruncation::new(spin)?;
        if length < 2 {
            return Err(Error::InvalidSpec(format!("chain length L = {length} must be >= 2")));
        }
        if !d.is_finite() {
            return Err(Error::InvalidSpec("coupling D must be finite".into()));
        }
        if let ModelVariant::UOperatorJz { jz } = variant {
            if !jz.is_finite() {
                return Err(Error::InvalidSpec("jz must be finite".into()));
            }
        }
        Ok(ChainSpec { variant, spin, length, d })
    }

    pub fn with_d(&self, d: f64) -> ChainSpec {
        ChainSpec { d, ..*self }
    }

    pub fn local_dim(&self) -> usize {
        self.spin.local_dim()
    }

    pub fn j(&self) -> f64 {
        HOPPING_J
    }
}

/// Dense single-site operator together with the change in `S^z` it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub matrix: Mat<f64>,
    pub charge_shift: i32,
}

impl LocalOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn transpose(&self) -> LocalOperator {
        LocalOperator {
            matrix: self.matrix.transpose().to_owned(),
            charge_shift: -self.charge_shift,
        }
    }

    pub fn product(&self, other: &LocalOperator) -> LocalOperator {
        LocalOperator {
            matrix: &self.matrix * &other.matrix,
            charge_shift: self.charge_shift + other.charge_shift,
        }
    }

    pub fn commutator(&self, other: &LocalOperator) -> Mat<f64> {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for c in 0..self.matrix.ncols() {
            for r in 0..self.matrix.nrows() {
                let v = self.matrix[(r, c)];
                if v != 0.0 {
                    out.push((r, c, v));
                }
            }
        }
        out.sort_by_key(|&(r, c, _)| (r, c));
        out
    }
}

pub fn build_sz(spin: SpinTruncation) -> LocalOperator {
    let d = spin.local_dim();
    let matrix = Mat::from_fn(d, d, |i, j| if i == j { spin.charge_of(i) as f64 } else { 0.0 });
    LocalOperator { matrix, charge_shift: 0 }
}

/// `(S^z)^2`, the on-site term multiplying `D`.
pub fn build_sz_squared(spin: SpinTruncation) -> LocalOperator {
    let sz = build_sz(spin);
    sz.product(&sz)
}

/// Raising operator of the hopping term: `U^+` or `S^+ / sqrt(S(S+1))`.
pub fn build_raising(spin: SpinTruncation, variant: ModelVariant) -> LocalOperator {
    let d = spin.local_dim();
    let casimir = spin.casimir() as f64;
    let mut matrix = Mat::zeros(d, d);
    for i in 0..d - 1 {
        let n = spin.charge_of(i) as f64;
        matrix[(i + 1, i)] = if variant.uses_ladder_hopping() {
            ((casimir - n * (n + 1.0)) / casimir).sqrt()
        } else {
            1.0
        };
    }
    LocalOperator { matrix, charge_shift: 1 }
}

pub fn build_lowering(spin: SpinTruncation, variant: ModelVariant) -> LocalOperator {
    build_raising(spin, variant).transpose()
}

/// Sparse real-symmetric Hamiltonian stored as `(row, col, value)` triplets.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub dimension: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub sector: Option<i64>,
}

impl SparseHamiltonian {
    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.dimension, &self.entries)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut h = Mat::zeros(self.dimension, self.dimension);
        for &(r, c, v) in &self.entries {
            h[(r, c)] += v;
        }
        h
    }
}

/// Compressed sparse row matrix used for matrix-free eigensolves.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate `(row, col)` triplets are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .filter(|&k| self.col_idx[k] == r)
                    .map(|k| self.values[k])
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Operators entering the Hamiltonian, shared by the exact and MPS builders.
#[derive(Debug, Clone)]
pub struct SiteOperators {
    pub sz: LocalOperator,
    pub sz_squared: LocalOperator,
    pub raising: LocalOperator,
    pub lowering: LocalOperator,
}

impl SiteOperators {
    pub fn new(spec: &ChainSpec) -> Self {
        let raising = build_raising(spec.spin, spec.variant);
        SiteOperators {
            sz: build_sz(spec.spin),
            sz_squared: build_sz_squared(spec.spin),
            lowering: raising.transpose(),
            raising,
        }
    }
}

/// Diagonal part of the Hamiltonian for one product state.
fn diagonal_energy(spec: &ChainSpec, occ: &[i32]) -> f64 {
    let onsite: f64 = occ.iter().map(|&n| (n * n) as f64).sum::<f64>() * spec.d;
    let jz = spec.variant.jz();
    if jz == 0.0 {
        return onsite;
    }
    let bonds: f64 = occ.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
    onsite + jz * bonds
}

/// Off-diagonal hopping moves from one product state: `(new occupations, amplitude)`.
fn hopping_moves(spec: &ChainSpec, ops: &SiteOperators, occ: &[i32], mut emit: impl FnMut(&[i32], f64)) {
    let spin = spec.spin;
    let s = spin.as_i32();
    let mut next = occ.to_vec();
    for l in 0..occ.len() - 1 {
        let (a, b) = (occ[l], occ[l + 1]);
        // U+_l U-_{l+1} and U-_l U+_{l+1}
        for (da, db) in [(1i32, -1i32), (-1, 1)] {
            let (na, nb) = (a + da, b + db);
            if na.abs() > s || nb.abs() > s {
                continue;
            }
            let amp_a = if da > 0 { &ops.raising } else { &ops.lowering }.matrix
                [(spin.index_of(na), spin.index_of(a))];
            let amp_b = if db > 0 { &ops.raising } else { &ops.lowering }.matrix
                [(spin.index_of(nb), spin.index_of(b))];
            let amp = -spec.j() * amp_a * amp_b;
            if amp == 0.0 {
                continue;
            }
            next[l] = na;
            next[l + 1] = nb;
            emit(&next, amp);
            next[l] = a;
            next[l + 1] = b;
        }
    }
}

/// Assemble the Hamiltonian in the full product space or in one magnetization sector.
pub fn build_hamiltonian(spec: &ChainSpec, sector: Option<i64>) -> Result<SparseHamiltonian> {
    let ops = SiteOperators::new(spec);
    let mut entries = Vec::new();
    match sector {
        Some(m) => {
            let basis = SectorBasis::new(spec.spin, spec.length, m)?;
            for (i, occ) in basis.iter().enumerate() {
                let diag = diagonal_energy(spec, occ);
                if diag != 0.0 {
                    entries.push((i, i, diag));
                }
                hopping_moves(spec, &ops, occ, |next, amp| {
                    let j = basis.rank(next).expect("hopping conserves magnetization");
                    entries.push((j, i, amp));
                });
            }
            Ok(SparseHamiltonian { dimension: basis.len(), entries, sector: Some(m) })
        }
        None => {
            let d = spec.local_dim();
            let dim = d.checked_pow(spec.length as u32).ok_or(Error::DimensionCap {
                dim: usize::MAX,
                cap: usize::MAX,
            })?;
            let s = spec.spin.as_i32();
            let mut occ = vec![-s; spec.length];
            let full_index = |occ: &[i32]| {
                occ.iter().fold(0usize, |acc, &n| acc * d + (n + s) as usize)
            };
            for i in 0..dim {
                let diag = diagonal_energy(spec, &occ);
                if diag != 0.0 {
                    entries.push((i, i, diag));
                }
                hopping_moves(spec, &ops, &occ, |next, amp| {
                    entries.push((full_index(next), i, amp));
                });
                // odometer increment, last site fastest
                for k in (0..spec.length).rev() {
                    if occ[k] < s {
                        occ[k] += 1;
                        break;
                    }
                    occ[k] = -s;
                }
            }
            Ok(SparseHamiltonian { dimension: dim, entries, sector: None })
        }
    }
}

/// Diagonal of `H_D = sum_l (S^z_l)^2` over a sector basis.
pub fn d_term_diagonal(basis: &SectorBasis) -> Vec<f64> {
    basis
        .iter()
        .map(|occ| occ.iter().map(|&n| (n * n) as f64).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use faer::mat;

    fn diag(v: &[f64]) -> Mat<f64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
    }

    fn spin(s: u32) -> SpinTruncation {
        SpinTruncation::new(s).unwrap()
    }

    #[test]
    fn sz_is_diagonal_in_declared_order() {
        assert_eq!(build_sz(spin(1)).matrix, diag(&[-1.0, 0.0, 1.0]));
        assert_eq!(
            build_sz(spin(2)).matrix,
            diag(&[-2.0, -1.0, 0.0, 1.0, 2.0])
        );
        assert_eq!(build_sz_squared(spin(1)).matrix, diag(&[1.0, 0.0, 1.0]));
        assert_eq!(build_sz(spin(3)).charge_shift, 0);
    }

    #[test]
    fn raising_operators() {
        let u = build_raising(spin(1), ModelVariant::UOperator);
        let expected = mat![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(u.matrix, expected);
        assert_eq!(u.charge_shift, 1);
        assert_eq!(build_raising(spin(1), ModelVariant::Ladder).matrix, expected);

        let u2 = build_raising(spin(2), ModelVariant::UOperator);
        let s2 = build_raising(spin(2), ModelVariant::Ladder);
        // <2|.|1>
        assert_eq!(u2.matrix[(4, 3)], 1.0);
        assert!((s2.matrix[(4, 3)] - (4.0f64).sqrt() / (6.0f64).sqrt()).abs() < 1e-15);
        assert_ne!(u2.matrix, s2.matrix);
    }

    #[test]
    fn raising_annihilates_top_state() {
        for s in 1..=4 {
            for v in [ModelVariant::UOperator, ModelVariant::Ladder] {
                let up = build_raising(spin(s), v);
                let top = spin(s).local_dim() - 1;
                assert!((0..up.dim()).all(|r| up.matrix[(r, top)] == 0.0));
                let down = build_lowering(spin(s), v);
                assert!((0..down.dim()).all(|r| down.matrix[(r, 0)] == 0.0));
            }
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("u".parse::<ModelVariant>().unwrap(), ModelVariant::UOperator);
        assert_eq!(
            "u-jz-0.5".parse::<ModelVariant>().unwrap(),
            ModelVariant::UOperatorJz { jz: -0.5 }
        );
        assert_eq!(ModelVariant::UOperatorJz { jz: -0.5 }.label(), "u-jz-0.5");
        assert!(ModelVariant::from_tag("ladder", Some(0.3)).is_err());
        assert!(ModelVariant::from_tag("xyz", None).is_err());
        assert!(ChainSpec::new(ModelVariant::UOperator, 1, 1, 1.0).is_err());
        assert!(ChainSpec::new(ModelVariant::UOperator, 0, 4, 1.0).is_err());
    }

    #[test]
    fn two_site_full_space() {
        let d = 0.7;
        let spec = ChainSpec::new(ModelVariant::UOperator, 1, 2, d).unwrap();
        let h = build_hamiltonian(&spec, None).unwrap().to_dense();
        assert_eq!((h.nrows(), h.ncols()), (9, 9));
        for i in 0..9 {
            let (n1, n2) = ((i / 3) as f64 - 1.0, (i % 3) as f64 - 1.0);
            assert_eq!(h[(i, i)], d * (n1 * n1 + n2 * n2));
        }
        // |-1,1> (index 2) couples to |0,0> (index 4) with amplitude -J
        assert_eq!(h[(4, 2)], -1.0);
        assert_eq!(h, h.transpose().to_owned());
    }

    #[test]
    fn two_site_sector_block() {
        let spec = ChainSpec::new(ModelVariant::UOperator, 1, 2, 1.0).unwrap();
        let h = build_hamiltonian(&spec, Some(0)).unwrap().to_dense();
        // basis {|-1,1>, |0,0>, |1,-1>}
        let expected = mat![[2.0, -1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, -1.0, 2.0]];
        assert_eq!(h, expected);
        // eigenvalues of this block: 2, 1 ± sqrt(3)
        let e = sym_eigenvalues(&h).unwrap();
        assert!((e[0] - (1.0 - 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn empty_sector_is_rejected() {
        let spec = ChainSpec::new(ModelVariant::UOperator, 1, 3, 1.0).unwrap();
        assert!(matches!(build_hamiltonian(&spec, Some(4)), Err(Error::EmptySector { .. })));
    }

    #[test]
    fn sector_spectra_embed_in_full_spectrum() {
        let spec = ChainSpec::new(ModelVariant::UOperator, 1, 4, 0.9).unwrap();
        let full = sym_eigenvalues(&build_hamiltonian(&spec, None).unwrap().to_dense()).unwrap();
        let mut collected = Vec::new();
        for m in -4..=4 {
            let e = sym_eigenvalues(&build_hamiltonian(&spec, Some(m)).unwrap().to_dense()).unwrap();
            for x in e.iter() {
                assert!(full.iter().any(|y| (x - y).abs() < 1e-10));
            }
            collected.extend(e.iter().copied());
        }
        collected.sort_by(f64::total_cmp);
        assert_eq!(collected.len(), 81);
        for (a, b) in collected.iter().zip(full.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_blocks_never_mix_magnetization() {
        let spec = ChainSpec::new(ModelVariant::UOperatorJz { jz: -0.5 }, 2, 3, 0.4).unwrap();
        let h = build_hamiltonian(&spec, None).unwrap();
        let d = 5usize;
        let mag = |i: usize| -> i32 {
            let mut i = i;
            let mut m = 0;
            for _ in 0..3 {
                m += (i % d) as i32 - 2;
                i /= d;
            }
            m
        };
        for &(r, c, v) in &h.entries {
            assert!(v == 0.0 || mag(r) == mag(c));
        }
        let dense = h.to_dense();
        let n = dense.nrows();
        assert!((0..n).all(|i| (0..n).all(|j| (dense[(i, j)] - dense[(j, i)]).abs() < 1e-15)));
    }

    #[test]
    fn u_and_ladder_coincide_at_spin_one() {
        for l in [2, 3, 5] {
            for d in [0.1, 0.8, 2.5] {
                let u = ChainSpec::new(ModelVariant::UOperator, 1, l, d).unwrap();
                let s = ChainSpec::new(ModelVariant::Ladder, 1, l, d).unwrap();
                let hu = build_hamiltonian(&u, Some(0)).unwrap().to_dense();
                let hs = build_hamiltonian(&s, Some(0)).unwrap().to_dense();
                assert_eq!(hu, hs);
            }
        }
    }

    #[test]
    fn csr_matches_dense() {
        let spec = ChainSpec::new(ModelVariant::Ladder, 2, 3, 1.3).unwrap();
        let h = build_hamiltonian(&spec, Some(1)).unwrap();
        let dense = h.to_dense();
        let csr = h.to_csr();
        let x: Vec<f64> = (0..h.dimension).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; h.dimension];
        csr.matvec(&x, &mut y);
        for (r, a) in y.iter().enumerate() {
            let b: f64 = (0..h.dimension).map(|c| dense[(r, c)] * x[c]).sum();
            assert!((a - b).abs() < 1e-13);
        }
        let tr: f64 = (0..h.dimension).map(|i| dense[(i, i)]).sum();
        assert!((csr.trace() - tr).abs() < 1e-12);
    }
}
