use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::error::Result;
use crate::fmt12;

/// Human-readable block: model, parameters with uncertainties, residuals and
/// the sizes used.
pub fn fit_report_text(label: &str, fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[{label}] model {}", fit.model);
    for (i, name) in fit.names.iter().enumerate() {
        let tail = if fit.pinned[i] { " (pinned)".to_string() } else { format!(" +/- {}", fmt12(fit.uncertainties[i])) };
        let _ = writeln!(out, "  {name:<4} = {}{tail}", fmt12(fit.params[i]));
    }
    let _ = writeln!(out, "  residual norm = {}", fmt12(fit.residual_norm));
    let _ = writeln!(out, "  reduced chi2  = {}", fmt12(fit.reduced_chi2));
    let sizes: Vec<String> = fit.lengths.iter().map(|l| format!("{l}")).collect();
    let _ = writeln!(out, "  sizes ({}) = {}", sizes.len(), sizes.join(" "));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub label: String,
    pub model: String,
    pub parameter: String,
    pub value: f64,
    pub uncertainty: f64,
    pub pinned: bool,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub points: usize,
}

pub fn fit_rows(label: &str, fit: &FitResult) -> Vec<FitRow> {
    let l_min = fit.lengths.first().copied().unwrap_or(f64::NAN);
    let l_max = fit.lengths.last().copied().unwrap_or(f64::NAN);
    fit.names
        .iter()
        .enumerate()
        .map(|(i, name)| FitRow {
            label: label.to_string(),
            model: fit.model.to_string(),
            parameter: name.clone(),
            value: fit.params[i],
            uncertainty: fit.uncertainties[i],
            pinned: fit.pinned[i],
            residual_norm: fit.residual_norm,
            reduced_chi2: fit.reduced_chi2,
            l_min,
            l_max,
            points: fit.lengths.len(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: f64,
    pub y: f64,
    pub y_fit: f64,
}

/// Data against the fitted curve, sorted by `x`.
pub fn fit_curve(fit: &FitResult, data: &[(f64, f64)]) -> Vec<CurveRow> {
    let mut rows: Vec<CurveRow> = data.iter().map(|&(x, y)| CurveRow { x, y, y_fit: fit.predict(x) }).collect();
    rows.sort_by(|a, b| a.x.total_cmp(&b.x));
    rows
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fss::{fit_scaling_auto, FitOptions, ScalingModel};

    #[test]
    fn report_lists_every_parameter() {
        let data: Vec<(f64, f64)> = [32.0, 64.0, 96.0, 128.0].iter().map(|&l: &f64| (l, 0.5 + 2.0 / l + 1e-4 * l.sin())).collect();
        let fit = fit_scaling_auto(ScalingModel::LinearInvL, &data, &FitOptions::default()).unwrap();
        let text = fit_report_text("demo", &fit);
        assert!(text.contains("LINEAR_INV_L") && text.contains("C") && text.contains("sizes (4) = 32 64 96 128"));
        let rows = fit_rows("demo", &fit);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].parameter, "A");
        let curve = fit_curve(&fit, &data);
        assert!(curve.iter().all(|r| (r.y - r.y_fit).abs() < 1e-3));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.csv");
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("label,model,parameter,value,uncertainty"));
    }
}
