//! Finite-size-scaling analysis: spline peaks, crossing points, scaling fits
//! and central-charge checks.

mod extrapolate;
mod fit;
mod model;
mod peak;
mod report;
mod series;
mod spline;

pub use extrapolate::{
    central_charge, central_charge_from_fits, central_charge_with_uncertainty, chi_height_extrapolate,
    chi_height_extrapolate_with, classify_transition, height_coefficient, CentralCharge, ChiHeightKind, Classification,
    TransitionKind, BKT_BAND, IOG_BAND,
};
pub use fit::{fit_scaling, fit_scaling_auto, FitOptions, FitResult};
pub use model::{ScalingModel, ALL_MODELS};
pub use peak::{crossing_point, crossing_point_with, find_peak, find_peak_with, CrossingOptions, PeakEstimate, PeakOptions};
pub use report::{fit_curve, fit_report_text, fit_rows, write_rows, CurveRow, FitRow};
pub use series::{Observable, Series};
pub use spline::{CubicSpline, SplineKind};
