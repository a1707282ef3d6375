//! Exact-diagonalization oracle for small chains.
//!
//! Ground states come from a seeded Lanczos run with full
//! reorthogonalization; full spectra from a dense symmetric eigensolve of the
//! sector block. The ground state is assumed to live in the `m = 0` sector.

use std::collections::BTreeMap;

use faer::Mat;

pub use crate::basis::SectorBasis;
use crate::error::{Error, Result};
use crate::linalg::{self, LanczosOptions};
use crate::model::{build_hamiltonian, d_term_diagonal, ChainSpec};

/// Eigenvalues of reduced density matrices below this are dropped.
pub const SCHMIDT_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub energy: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub dimension_cap: usize,
    pub dense_cap: usize,
    pub seed: u64,
    pub lanczos: LanczosOptions,
    /// Minimum gap below which the ground state counts as degenerate.
    pub degeneracy_gap: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            dimension_cap: 2_000_000,
            dense_cap: 6000,
            seed: 0x5eed,
            lanczos: LanczosOptions { max_krylov: 100, tolerance: 1e-12, max_restarts: 60 },
            degeneracy_gap: 1e-8,
        }
    }
}

/// Lowest eigenpair in sector `m`, with default options.
pub fn ground_state(spec: &ChainSpec, sector: i64) -> Result<EigenPair> {
    ground_state_with(spec, sector, &ExactOptions::default())
}

pub fn ground_state_with(spec: &ChainSpec, sector: i64, opts: &ExactOptions) -> Result<EigenPair> {
    check_cap(spec, sector, opts.dimension_cap)?;
    let h = build_hamiltonian(spec, Some(sector))?;
    let csr = h.to_csr();
    let start = linalg::random_unit_vector(h.dimension, opts.seed);
    let out = linalg::lowest_eigenpair(h.dimension, |x, y| csr.matvec(x, y), start, opts.lanczos)?;
    if !out.converged && out.residual > 1e-10 * out.value.abs().max(1.0) {
        return Err(Error::NoConvergence { residual: out.residual, iterations: out.matvecs });
    }
    let mut vector = out.vector;
    fix_sign(&mut vector);
    Ok(EigenPair { energy: out.value, vector })
}

/// All eigenpairs of the sector block, energies ascending.
pub fn full_spectrum(spec: &ChainSpec, sector: i64) -> Result<Vec<EigenPair>> {
    full_spectrum_with(spec, sector, &ExactOptions::default())
}

pub fn full_spectrum_with(spec: &ChainSpec, sector: i64, opts: &ExactOptions) -> Result<Vec<EigenPair>> {
    check_cap(spec, sector, opts.dense_cap)?;
    let h = build_hamiltonian(spec, Some(sector))?.to_dense();
    let (vals, vecs) = linalg::sym_eigen(&h)?;
    Ok(vals
        .iter()
        .enumerate()
        .map(|(k, &energy)| {
            let mut vector: Vec<f64> = vecs.col(k).iter().copied().collect();
            fix_sign(&mut vector);
            EigenPair { energy, vector }
        })
        .collect())
}

/// `chi_F = (1/L) sum_{n != 0} |<n| H_D |0>|^2 / (E_n - E_0)^2` over the `m = 0` sector.
///
/// `H_D` conserves magnetization, so other sectors do not contribute.
pub fn chi_f_perturbative(spec: &ChainSpec) -> Result<f64> {
    chi_f_perturbative_with(spec, &ExactOptions::default())
}

pub fn chi_f_perturbative_with(spec: &ChainSpec, opts: &ExactOptions) -> Result<f64> {
    let spectrum = full_spectrum_with(spec, 0, opts)?;
    if spectrum.len() < 2 {
        return Ok(0.0);
    }
    let gap = spectrum[1].energy - spectrum[0].energy;
    if gap < opts.degeneracy_gap {
        return Err(Error::DegenerateGround { gap });
    }
    let basis = SectorBasis::new(spec.spin, spec.length, 0)?;
    let hd = d_term_diagonal(&basis);
    let ground = &spectrum[0];
    let hd_psi: Vec<f64> = ground.vector.iter().zip(&hd).map(|(c, h)| c * h).collect();
    let sum: f64 = spectrum[1..]
        .iter()
        .map(|pair| {
            let m = linalg::dot(&pair.vector, &hd_psi);
            m * m / (pair.energy - ground.energy).powi(2)
        })
        .sum();
    Ok(sum / spec.length as f64)
}

/// Von Neumann entropy of sites `0..cut` (natural log).
pub fn entanglement_entropy_exact(state: &EigenPair, basis: &SectorBasis, cut: usize) -> Result<f64> {
    Ok(entropy_from_weights(&schmidt_weights(&state.vector, basis, cut)?))
}

/// Squared Schmidt coefficients across the cut after sites `0..cut`, descending.
pub fn schmidt_weights(vector: &[f64], basis: &SectorBasis, cut: usize) -> Result<Vec<f64>> {
    let length = basis.length();
    if cut == 0 || cut >= length {
        return Err(Error::InvalidInput(format!("cut {cut} must lie in 1..{}", length - 1)));
    }
    if vector.len() != basis.len() {
        return Err(Error::ShapeMismatch(format!(
            "vector of length {} over a basis of {} states",
            vector.len(),
            basis.len()
        )));
    }
    let spin = basis.spin();
    let m = basis.magnetization();
    let mut left_bases: BTreeMap<i64, SectorBasis> = BTreeMap::new();
    let mut right_bases: BTreeMap<i64, SectorBasis> = BTreeMap::new();
    let mut blocks: BTreeMap<i64, Mat<f64>> = BTreeMap::new();
    for (occ, &amp) in basis.iter().zip(vector) {
        let q: i64 = occ[..cut].iter().map(|&n| n as i64).sum();
        let lb = match left_bases.entry(q) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(SectorBasis::new(spin, cut, q)?),
        };
        let rb = match right_bases.entry(m - q) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(SectorBasis::new(spin, length - cut, m - q)?)
            }
        };
        let (rows, cols) = (lb.len(), rb.len());
        let i = lb.rank(&occ[..cut]).expect("left block state");
        let j = rb.rank(&occ[cut..]).expect("right block state");
        blocks.entry(q).or_insert_with(|| Mat::zeros(rows, cols))[(i, j)] = amp;
    }
    let mut weights = Vec::new();
    for block in blocks.values() {
        let s = linalg::singular_values(block)?;
        weights.extend(s.iter().map(|x| x * x));
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    Ok(weights)
}

/// `-sum w ln w` over normalized weights above [`SCHMIDT_CUTOFF`].
pub fn entropy_from_weights(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    weights
        .iter()
        .map(|w| w / total)
        .filter(|&w| w > SCHMIDT_CUTOFF)
        .map(|w| -w * w.ln())
        .sum()
}

fn check_cap(spec: &ChainSpec, sector: i64, cap: usize) -> Result<()> {
    let dim = SectorBasis::dimension(spec.spin, spec.length, sector);
    if dim == 0 {
        return Err(Error::EmptySector { m: sector, length: spec.length, spin: spec.spin.value() });
    }
    if dim > cap as u64 {
        return Err(Error::DimensionCap { dim: dim as usize, cap });
    }
    Ok(())
}

/// Make the largest-magnitude component positive.
fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelVariant, SpinTruncation};

    fn spec(l: usize, d: f64) -> ChainSpec {
        ChainSpec::new(ModelVariant::UOperator, 1, l, d).unwrap()
    }

    #[test]
    fn two_site_ground_state_matches_hand_solution() {
        let gs = ground_state(&spec(2, 1.0), 0).unwrap();
        assert!((gs.energy - (1.0 - 3f64.sqrt())).abs() < 1e-12);
        assert!((linalg::norm(&gs.vector) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_d_limit_approaches_product_state() {
        let gs = ground_state(&spec(2, 10.0), 0).unwrap();
        // second order: E0 = -2 J^2 / D + ...
        assert!(gs.energy < 0.0 && gs.energy > -0.25);
        assert!(gs.vector[1] > 0.98);
    }

    #[test]
    fn lanczos_matches_dense_at_l8() {
        let s = spec(8, 0.8);
        let gs = ground_state(&s, 0).unwrap();
        let dense = full_spectrum(&s, 0).unwrap();
        assert!((gs.energy - dense[0].energy).abs() < 1e-10);
        let overlap = linalg::dot(&gs.vector, &dense[0].vector).abs();
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_spectrum_small_cases() {
        let two = full_spectrum(&spec(2, 0.3), 0).unwrap();
        assert_eq!(two.len(), 3);
        for a in &two {
            for b in &two {
                let d = linalg::dot(&a.vector, &b.vector);
                let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-13);
            }
        }
        let s4 = spec(4, 0.6);
        let four = full_spectrum(&s4, 0).unwrap();
        assert_eq!(four.len(), 19);
        assert!(four.windows(2).all(|w| w[0].energy <= w[1].energy));
        let trace = build_hamiltonian(&s4, Some(0)).unwrap().to_csr().trace();
        let sum: f64 = four.iter().map(|p| p.energy).sum();
        assert!((trace - sum).abs() < 1e-11);
    }

    #[test]
    fn dimension_caps() {
        let opts = ExactOptions { dense_cap: 10, ..Default::default() };
        assert!(matches!(full_spectrum_with(&spec(4, 1.0), 0, &opts), Err(Error::DimensionCap { dim: 19, cap: 10 })));
        let opts = ExactOptions { dimension_cap: 100, ..Default::default() };
        assert!(matches!(ground_state_with(&spec(6, 1.0), 0, &opts), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn chi_f_vanishes_deep_in_gapped_phase() {
        let chi = chi_f_perturbative(&spec(4, 1e6)).unwrap();
        assert!(chi >= 0.0 && chi < 1e-20, "{chi}");
    }

    #[test]
    fn chi_f_nonnegative_on_grid() {
        for k in 0..20 {
            let d = 0.2 + 1.8 * k as f64 / 19.0;
            assert!(chi_f_perturbative(&spec(4, d)).unwrap() >= 0.0);
        }
    }

    #[test]
    fn product_and_bell_entropies() {
        let basis = SectorBasis::new(SpinTruncation::new(1).unwrap(), 4, 0).unwrap();
        let mut v = vec![0.0; basis.len()];
        v[basis.rank(&[0, 0, 0, 0]).unwrap()] = 1.0;
        let product = EigenPair { energy: 0.0, vector: v };
        for cut in 1..4 {
            assert!(entanglement_entropy_exact(&product, &basis, cut).unwrap().abs() < 1e-15);
        }

        let two = SectorBasis::new(SpinTruncation::new(1).unwrap(), 2, 0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = EigenPair { energy: 0.0, vector: vec![r, 0.0, r] };
        let s = entanglement_entropy_exact(&bell, &two, 1).unwrap();
        assert!((s - 2f64.ln()).abs() < 1e-14);
        assert!(entanglement_entropy_exact(&bell, &two, 2).is_err());
    }

    #[test]
    fn entropy_is_reflection_symmetric() {
        let s = spec(6, 0.7);
        let gs = ground_state(&s, 0).unwrap();
        let basis = SectorBasis::new(s.spin, 6, 0).unwrap();
        for cut in 1..6 {
            let a = entanglement_entropy_exact(&gs, &basis, cut).unwrap();
            let b = entanglement_entropy_exact(&gs, &basis, 6 - cut).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }
}
