//! Ground-state fidelity susceptibility and entanglement-entropy derivatives
//! for the spin-S truncated quantum O(2) chain, with the finite-size-scaling
//! analysis used to tell infinite-order Gaussian transitions from BKT
//! transitions.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: local operators and Hamiltonians for the three variants.
//! - [`exact`]: exact-diagonalization oracle (Lanczos and dense spectra).
//! - [`mps`]: two-site DMRG, overlaps and half-chain entropies.
//! - [`observables`]: fidelity, `chi_F`, `S_vN` and `-dS_vN/dD` from pairs of
//!   ground states.
//! - [`sweep`]: coupling grids, the append-only record store and resume.
//! - [`fss`]: spline peaks, crossing points and scaling fits.
//! - [`analyze`]: the declarative analysis pipeline behind `qo2 analyze`.
//! - [`synth`]: synthetic stores with peaks placed by known scaling laws.

pub mod analyze;
pub mod basis;
pub mod error;
pub mod exact;
pub mod fss;
pub mod linalg;
pub mod model;
pub mod mps;
pub mod observables;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use model::{ChainSpec, ModelVariant, SpinTruncation};

/// Version string written into manifests and records.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Format a number with 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..12).contains(&magnitude) {
        let decimals = (11 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.11e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt12;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(1.0), "1.00000000000");
        assert_eq!(fmt12(-0.123456789012345), "-0.123456789012");
        assert_eq!(fmt12(1.5e-7), "1.50000000000e-7");
        assert_eq!(fmt12(0.0), "0");
    }
}
