use serde::{Deserialize, Serialize};

use super::series::Series;
use super::spline::{CubicSpline, SplineKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakOptions {
    /// Full width of the window centred on the raw argmax.
    pub window: f64,
    pub min_samples: usize,
    pub spline: SplineKind,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions { window: 0.01, min_samples: 7, spline: SplineKind::NotAKnot }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub length: usize,
    pub position: f64,
    pub height: f64,
    pub window: [f64; 2],
    pub samples: usize,
    pub method: SplineKind,
}

pub fn find_peak(series: &Series, bracket: Option<(f64, f64)>) -> Result<PeakEstimate> {
    find_peak_with(series, bracket, &PeakOptions::default())
}

/// Spline maximum near the largest sample. `bracket` limits where the raw
/// argmax is searched for.
pub fn find_peak_with(series: &Series, bracket: Option<(f64, f64)>, opts: &PeakOptions) -> Result<PeakEstimate> {
    let pts = &series.points;
    let (lo, hi) = bracket.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let k = pts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.0 >= lo && p.0 <= hi)
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .ok_or(Error::WindowTooSparse { found: 0, needed: opts.min_samples })?;
    if k == 0 || k + 1 == pts.len() {
        return Err(Error::NoInteriorMax);
    }
    let centre = pts[k].0;
    let slack = 1e-9 * centre.abs().max(1.0);
    let (w_lo, w_hi) = (centre - 0.5 * opts.window - slack, centre + 0.5 * opts.window + slack);
    let window: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 >= w_lo && p.0 <= w_hi).collect();
    if window.len() < opts.min_samples.max(4) {
        return Err(Error::WindowTooSparse { found: window.len(), needed: opts.min_samples.max(4) });
    }
    let peak = pts[k].1;
    let (first, last) = (window[0], window[window.len() - 1]);
    if !(peak > first.1 && peak > last.1) {
        return Err(Error::NoInteriorMax);
    }
    let xs: Vec<f64> = window.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.1).collect();
    let spline = CubicSpline::new(&xs, &ys, opts.spline)?;
    let best = spline
        .critical_points()
        .into_iter()
        .filter(|&t| t > first.0 && t < last.0 && spline.second_derivative(t) <= 0.0)
        .map(|t| (t, spline.eval(t)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::NoInteriorMax)?;
    Ok(PeakEstimate {
        length: series.length,
        position: best.0,
        height: best.1,
        window: [first.0, last.0],
        samples: window.len(),
        method: opts.spline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    pub tolerance: f64,
    pub spline: SplineKind,
    /// Restrict the search to this coupling range.
    pub range: Option<(f64, f64)>,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions { tolerance: 1e-12, spline: SplineKind::NotAKnot, range: None }
    }
}

pub fn crossing_point(a: &Series, b: &Series) -> Result<f64> {
    crossing_point_with(a, b, &CrossingOptions::default())
}

/// Root of the difference of the two interpolated series inside their common
/// coupling range.
pub fn crossing_point_with(a: &Series, b: &Series, opts: &CrossingOptions) -> Result<f64> {
    let bound = |s: &Series| (s.points.first().map_or(f64::INFINITY, |p| p.0), s.points.last().map_or(f64::NEG_INFINITY, |p| p.0));
    let ((a0, a1), (b0, b1)) = (bound(a), bound(b));
    let (mut lo, mut hi) = (a0.max(b0), a1.min(b1));
    if let Some((r0, r1)) = opts.range {
        lo = lo.max(r0);
        hi = hi.min(r1);
    }
    if !(lo < hi) {
        return Err(Error::InvalidInput("series do not overlap".into()));
    }
    let spline = |s: &Series| {
        let r = s.restrict(lo, hi);
        CubicSpline::new(&r.xs(), &r.ys(), opts.spline)
    };
    let (sa, sb) = (spline(a)?, spline(b)?);
    let f = |t: f64| sa.eval(t) - sb.eval(t);

    let mut nodes: Vec<f64> = sa.knots().iter().chain(sb.knots()).copied().collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let values: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();

    let mut roots = 0;
    let mut exact = None;
    let mut bracket = None;
    let mut prev: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            roots += 1;
            exact = Some(nodes[i]);
            prev = None;
            continue;
        }
        if let Some(j) = prev {
            if (values[j] > 0.0) != (v > 0.0) {
                roots += 1;
                bracket = Some((j, i));
            }
        }
        prev = Some(i);
    }
    match roots {
        0 => return Err(Error::NoSignChange),
        1 => {}
        count => return Err(Error::MultipleRoots { count }),
    }
    if let Some(t) = exact {
        return Ok(t);
    }
    let (j, i) = bracket.expect("one sign change");
    let (mut lo, mut hi, mut f_lo) = (nodes[j], nodes[i], values[j]);
    for _ in 0..200 {
        if hi - lo <= opts.tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fss::Observable;

    #[test]
    fn parabola_peak_is_exact() {
        let s = Series::sample(8, Observable::SPrime, 0.4, 1e-3, 200, |d| 1.0 - (d - 0.5) * (d - 0.5));
        let p = find_peak(&s, None).unwrap();
        assert!((p.position - 0.5).abs() < 1e-10, "{}", p.position);
        assert!((p.height - 1.0).abs() < 1e-10);
        assert_eq!(p.samples, 11);
        assert!(p.window[0] < p.position && p.position < p.window[1]);
    }

    #[test]
    fn monotone_data_has_no_peak() {
        let s = Series::sample(8, Observable::ChiF, 0.0, 1e-3, 50, |d| d);
        assert!(matches!(find_peak(&s, None), Err(Error::NoInteriorMax)));
    }

    #[test]
    fn sparse_window_is_reported() {
        let s = Series::sample(8, Observable::ChiF, 0.0, 4e-3, 20, |d| -(d - 0.04).powi(2));
        assert!(matches!(find_peak(&s, None), Err(Error::WindowTooSparse { found: 3, .. })));
    }

    #[test]
    fn bracket_selects_the_second_bump() {
        let f = |d: f64| (-(d - 0.3).powi(2) / 1e-4).exp() + 0.5 * (-(d - 0.7).powi(2) / 1e-4).exp();
        let s = Series::sample(8, Observable::ChiF, 0.0, 1e-3, 1000, f);
        let p = find_peak(&s, Some((0.6, 0.8))).unwrap();
        assert!((p.position - 0.7).abs() < 1e-4);
    }

    #[test]
    fn lines_cross_at_one_half() {
        let a = Series::sample(8, Observable::SPrime, 0.0, 1e-3, 1000, |d| d);
        let b = Series::sample(16, Observable::SPrime, 0.0, 1e-3, 1000, |d| 1.0 - d);
        assert!((crossing_point(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let b = Series::sample(16, Observable::SPrime, 0.0003, 1e-3, 999, |d| 1.0 - d);
        let x = crossing_point(&a, &b).unwrap();
        assert!((x - 0.5).abs() < 1e-10);
        assert_eq!(x, crossing_point(&b, &a).unwrap());
    }

    #[test]
    fn sign_change_failures() {
        let a = Series::sample(8, Observable::SPrime, 0.0, 1e-2, 100, |d| d);
        let b = Series::sample(8, Observable::SPrime, 0.0, 1e-2, 100, |d| d + 1.0);
        assert!(matches!(crossing_point(&a, &b), Err(Error::NoSignChange)));
        let c = Series::sample(8, Observable::SPrime, 0.0, 1e-2, 100, |d| (12.0 * d).sin() * 0.1 + d);
        assert!(matches!(crossing_point(&a, &c), Err(Error::MultipleRoots { .. })));
        let narrowed = CrossingOptions { range: Some((0.1, 0.4)), ..CrossingOptions::default() };
        let x = crossing_point_with(&a, &c, &narrowed).unwrap();
        assert!((x - std::f64::consts::PI / 12.0).abs() < 1e-5, "{x}");
    }
}
