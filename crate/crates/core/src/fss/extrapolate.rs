use std::fmt;

use serde::{Deserialize, Serialize};

use super::fit::{fit_scaling_auto, FitOptions, FitResult};
use super::model::ScalingModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransitionKind {
    /// Infinite-order Gaussian.
    Iog,
    Bkt,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::Iog => "IOG",
            TransitionKind::Bkt => "BKT",
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `c = 6 a b` for IOG, `c = 12 a b^2` for BKT.
pub fn central_charge(a: f64, b: f64, kind: TransitionKind) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput(format!("central charge needs a > 0 and b > 0, got a = {a}, b = {b}")));
    }
    Ok(match kind {
        TransitionKind::Iog => 6.0 * a * b,
        TransitionKind::Bkt => 12.0 * a * b * b,
    })
}

/// `a` that yields central charge `c` for the given `b`.
pub fn height_coefficient(c: f64, b: f64, kind: TransitionKind) -> f64 {
    match kind {
        TransitionKind::Iog => c / (6.0 * b),
        TransitionKind::Bkt => c / (12.0 * b * b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralCharge {
    pub value: f64,
    pub uncertainty: f64,
}

/// First-order propagation of `sigma_a`, `sigma_b` and their covariance.
pub fn central_charge_with_uncertainty(
    a: f64,
    sigma_a: f64,
    b: f64,
    sigma_b: f64,
    cov_ab: f64,
    kind: TransitionKind,
) -> Result<CentralCharge> {
    let value = central_charge(a, b, kind)?;
    let (da, db) = match kind {
        TransitionKind::Iog => (6.0 * b, 6.0 * a),
        TransitionKind::Bkt => (12.0 * b * b, 24.0 * a * b),
    };
    let var = da * da * sigma_a * sigma_a + db * db * sigma_b * sigma_b + 2.0 * da * db * cov_ab;
    Ok(CentralCharge { value, uncertainty: var.max(0.0).sqrt() })
}

/// Central charge from a peak-height fit (`a`) and a peak-position fit (`b`).
/// The two fits are independent, so no cross covariance enters.
pub fn central_charge_from_fits(height: &FitResult, position: &FitResult, kind: TransitionKind) -> Result<CentralCharge> {
    let get = |f: &FitResult, n: &str| {
        f.param(n)
            .zip(f.uncertainty(n))
            .ok_or_else(|| Error::InvalidInput(format!("fit {} has no parameter '{n}'", f.model)))
    };
    let (a, sa) = get(height, "a")?;
    let (b, sb) = get(position, "b")?;
    central_charge_with_uncertainty(a, sa, b, sb, 0.0, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChiHeightKind {
    /// `C + A / L^p`.
    IogPower,
    /// `C + A / ln L`.
    BktLog,
}

/// Thermodynamic `chi_F` peak height; the intercept is parameter `C`.
pub fn chi_height_extrapolate(data: &[(f64, f64)], kind: ChiHeightKind) -> Result<FitResult> {
    chi_height_extrapolate_with(data, kind, &FitOptions::default())
}

pub fn chi_height_extrapolate_with(data: &[(f64, f64)], kind: ChiHeightKind, opts: &FitOptions) -> Result<FitResult> {
    if data.len() < 4 {
        return Err(Error::InvalidInput(format!("height extrapolation needs at least 4 points, got {}", data.len())));
    }
    let model = match kind {
        ChiHeightKind::IogPower => ScalingModel::PowerLaw,
        ChiHeightKind::BktLog => ScalingModel::ChiHeightLog,
    };
    fit_scaling_auto(model, data, opts)
}

pub const IOG_BAND: (f64, f64) = (1.5, 2.5);
pub const BKT_BAND: (f64, f64) = (2.5, 3.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: TransitionKind,
    pub p: f64,
    pub sigma: f64,
    /// The height fit that supplied `p`.
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Fits the `S'` peak heights with the exponent `p` free, once with one and
/// once with two denominator corrections, keeps the form with the smaller
/// reduced residual and reads the transition type off `p`.
pub fn classify_transition(heights: &[(f64, f64)]) -> Result<Classification> {
    let mut warnings = Vec::new();
    if heights.len() < 6 {
        warnings.push(format!("only {} sizes; at least 6 are recommended", heights.len()));
    }
    let (lo, hi) = heights.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if hi < 10.0 * lo {
        warnings.push(format!("sizes span {lo}..{hi}, less than a decade"));
    }
    let opts = FitOptions::default();
    let mut fits = Vec::new();
    let mut last_err = None;
    for model in [ScalingModel::SprimeHeightIog, ScalingModel::SprimeHeightBkt] {
        if heights.len() <= model.parameter_count() {
            continue;
        }
        match fit_scaling_auto(model, heights, &opts) {
            Ok(f) => fits.push(f),
            Err(e) => last_err = Some(e),
        }
    }
    let fit = fits
        .into_iter()
        .min_by(|a, b| a.reduced_chi2.total_cmp(&b.reduced_chi2))
        .ok_or_else(|| last_err.unwrap_or(Error::InvalidInput("too few sizes to fit the peak heights".into())))?;
    let p = fit.param("p").expect("height forms carry p");
    let sigma = fit.uncertainty("p").expect("height forms carry p");
    let inside = |band: (f64, f64)| p - sigma >= band.0 && p + sigma <= band.1;
    let kind = if inside(IOG_BAND) {
        TransitionKind::Iog
    } else if inside(BKT_BAND) {
        TransitionKind::Bkt
    } else {
        return Err(Error::Ambiguous { p, sigma });
    };
    Ok(Classification { kind, p, sigma, fit, warnings })
}
