//! Fidelity, `chi_F`, `S_vN` and `S'_vN = -dS_vN/dD` from ground states at
//! `D` and `D + delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, EigenPair, ExactOptions, SectorBasis};
use crate::linalg::LanczosOptions;
use crate::model::ChainSpec;
use crate::mps::{self, DmrgResult, DmrgSettings, MpsState};

/// Differencing step used when none is given.
pub const DEFAULT_DELTA: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Ed,
    Dmrg,
    /// Values generated from a closed-form model, not from a ground state.
    Synthetic,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Ed => "ed",
            EngineKind::Dmrg => "dmrg",
            EngineKind::Synthetic => "synthetic",
        }
    }
}

/// Ground-state solver and its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EngineConfig {
    Ed,
    Dmrg(DmrgSettings),
}

impl EngineConfig {
    pub fn kind(&self) -> EngineKind {
        match self {
            EngineConfig::Ed => EngineKind::Ed,
            EngineConfig::Dmrg(_) => EngineKind::Dmrg,
        }
    }

    /// Truncation target; exact diagonalization counts as zero.
    pub fn epsilon(&self) -> f64 {
        match self {
            EngineConfig::Ed => 0.0,
            EngineConfig::Dmrg(s) => s.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub epsilon: f64,
    pub max_bond: usize,
    /// Both solves converged.
    pub converged: bool,
    pub bond_cap_reached: bool,
    pub max_truncation_error: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablePoint {
    pub spec: ChainSpec,
    pub delta: f64,
    pub energy: f64,
    pub fidelity: f64,
    /// `1 - F`, computed without cancellation where the engine allows it.
    pub infidelity: f64,
    pub chi_f: f64,
    pub entropy: f64,
    pub entropy_derivative: f64,
    pub engine: EngineKind,
    pub quality: Quality,
}

/// `chi_F = -2 ln F / (L delta^2)` written in terms of `1 - F`.
pub fn chi_f_from_infidelity(infidelity: f64, length: usize, delta: f64) -> f64 {
    -2.0 * (-infidelity).ln_1p() / (length as f64 * delta * delta)
}

/// `1 - |<a|b>|` for unit vectors, as `|a - s b|^2 / 2` with `s` the overlap sign.
pub fn infidelity_of_vectors(a: &[f64], b: &[f64]) -> f64 {
    let ov: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let s = if ov < 0.0 { -1.0 } else { 1.0 };
    0.5 * a.iter().zip(b).map(|(x, y)| (x - s * y).powi(2)).sum::<f64>()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("delta must be positive, got {delta}")))
    }
}

/// Exact-diagonalization options tight enough for `1 - F` of order `1e-11`.
pub fn precise_exact_options() -> ExactOptions {
    ExactOptions {
        lanczos: LanczosOptions { max_krylov: 120, tolerance: 1e-13, max_restarts: 80 },
        ..ExactOptions::default()
    }
}

pub fn measure_point(spec: &ChainSpec, delta: f64, engine: &EngineConfig) -> Result<ObservablePoint> {
    match engine {
        EngineConfig::Ed => measure_point_exact(spec, delta),
        EngineConfig::Dmrg(settings) => Ok(measure_point_dmrg(spec, delta, settings, None)?.0),
    }
}

pub fn measure_point_exact(spec: &ChainSpec, delta: f64) -> Result<ObservablePoint> {
    check_delta(delta)?;
    let opts = precise_exact_options();
    let solve = |sp: &ChainSpec| exact::ground_state_with(sp, 0, &opts).map_err(engine_failure);
    let a = solve(spec)?;
    let b = solve(&spec.with_d(spec.d + delta))?;
    let basis = SectorBasis::new(spec.spin, spec.length, 0)?;
    let cut = spec.length / 2;
    let entropy = |p: &EigenPair| exact::entanglement_entropy_exact(p, &basis, cut);
    let (s_a, s_b) = (entropy(&a)?, entropy(&b)?);
    let infidelity = infidelity_of_vectors(&a.vector, &b.vector);
    Ok(ObservablePoint {
        spec: *spec,
        delta,
        energy: a.energy,
        fidelity: 1.0 - infidelity,
        infidelity,
        chi_f: chi_f_from_infidelity(infidelity, spec.length, delta),
        entropy: s_a,
        entropy_derivative: -(s_b - s_a) / delta,
        engine: EngineKind::Ed,
        quality: Quality {
            epsilon: 0.0,
            max_bond: 0,
            converged: true,
            bond_cap_reached: false,
            max_truncation_error: 0.0,
            sweeps: 0,
        },
    })
}

/// DMRG measurement. The solve at `D` is warm-started from `warm` when given,
/// the solve at `D + delta` always from the state at `D`. Returns the point and
/// the converged state at `D`.
pub fn measure_point_dmrg(
    spec: &ChainSpec,
    delta: f64,
    settings: &DmrgSettings,
    warm: Option<&MpsState>,
) -> Result<(ObservablePoint, MpsState)> {
    check_delta(delta)?;
    let first = match warm {
        Some(w) => mps::dmrg_warm_start(spec, settings, w),
        None => mps::dmrg_ground_state(spec, settings),
    }
    .map_err(engine_failure)?;
    let second = mps::dmrg_warm_start(&spec.with_d(spec.d + delta), settings, &first.mps).map_err(engine_failure)?;
    let point = point_from_pair(spec, delta, settings.epsilon, &first, &second)?;
    Ok((point, first.mps))
}

fn point_from_pair(spec: &ChainSpec, delta: f64, epsilon: f64, a: &DmrgResult, b: &DmrgResult) -> Result<ObservablePoint> {
    let fidelity = mps::overlap(&a.mps, &b.mps)?.min(1.0);
    let infidelity = 1.0 - fidelity;
    Ok(ObservablePoint {
        spec: *spec,
        delta,
        energy: a.energy,
        fidelity,
        infidelity,
        chi_f: chi_f_from_infidelity(infidelity, spec.length, delta),
        entropy: a.half_chain_entropy,
        entropy_derivative: -(b.half_chain_entropy - a.half_chain_entropy) / delta,
        engine: EngineKind::Dmrg,
        quality: Quality {
            epsilon,
            max_bond: a.largest_bond.max(b.largest_bond),
            converged: a.converged && b.converged,
            bond_cap_reached: a.bond_cap_reached || b.bond_cap_reached,
            max_truncation_error: a.max_truncation_error.max(b.max_truncation_error),
            sweeps: a.sweeps_used + b.sweeps_used,
        },
    })
}

fn engine_failure(e: Error) -> Error {
    match e {
        Error::EngineFailure(_) | Error::InvalidInput(_) | Error::ShapeMismatch(_) => e,
        other => Error::EngineFailure(other.to_string()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub chi_f: f64,
    /// `chi_f - reference`.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaStudy {
    pub spec: ChainSpec,
    /// Perturbative value from the full spectrum.
    pub reference: f64,
    /// Rows in the order the steps were given.
    pub rows: Vec<DeltaRow>,
    /// `log(err_i / err_{i+1}) / log(delta_i / delta_{i+1})` for consecutive rows.
    pub observed_orders: Vec<f64>,
    /// First-order Richardson estimate from the last two rows.
    pub extrapolated: f64,
}

impl DeltaStudy {
    /// Errors shrink in magnitude from row to row.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error.abs() < w[0].error.abs())
    }
}

/// `chi_F(delta)` from exact ground states for each step, compared with the
/// perturbative sum.
pub fn delta_convergence_study(spec: &ChainSpec, deltas: &[f64]) -> Result<DeltaStudy> {
    if deltas.len() < 2 {
        return Err(Error::InvalidInput("delta study needs at least two steps".into()));
    }
    let opts = precise_exact_options();
    let reference = exact::chi_f_perturbative_with(spec, &opts)?;
    let base = exact::ground_state_with(spec, 0, &opts)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        check_delta(delta)?;
        let shifted = exact::ground_state_with(&spec.with_d(spec.d + delta), 0, &opts)?;
        let chi_f = chi_f_from_infidelity(infidelity_of_vectors(&base.vector, &shifted.vector), spec.length, delta);
        rows.push(DeltaRow { delta, chi_f, error: chi_f - reference });
    }
    let observed_orders = rows
        .windows(2)
        .map(|w| (w[0].error.abs() / w[1].error.abs()).ln() / (w[0].delta / w[1].delta).ln())
        .collect();
    let (p, q) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    let extrapolated = (p.delta * q.chi_f - q.delta * p.chi_f) / (p.delta - q.delta);
    Ok(DeltaStudy { spec: *spec, reference, rows, observed_orders, extrapolated })
}
