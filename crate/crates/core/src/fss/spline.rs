use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End conditions of an interpolating cubic spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplineKind {
    /// Third derivative continuous across the second and second-to-last knots.
    /// Reproduces cubics exactly.
    #[default]
    NotAKnot,
    /// Zero second derivative at both ends.
    Natural,
    /// End slopes from the one-sided cubic through the four outermost samples.
    Clamped,
}

impl SplineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplineKind::NotAKnot => "not-a-knot",
            SplineKind::Natural => "natural",
            SplineKind::Clamped => "clamped",
        }
    }
}

impl fmt::Display for SplineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Piecewise cubic stored as knot values and second derivatives.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64], kind: SplineKind) -> Result<Self> {
        let n = x.len();
        if y.len() != n {
            return Err(Error::ShapeMismatch(format!("{} abscissae, {} ordinates", n, y.len())));
        }
        if n < 4 {
            return Err(Error::InvalidInput(format!("cubic spline needs at least 4 knots, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        // Rows for every knot: sub[i] M[i-1] + diag[i] M[i] + sup[i] M[i+1] = rhs[i].
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * (slope[i] - slope[i - 1]);
        }
        let mut m = match kind {
            SplineKind::Natural => {
                diag[0] = 1.0;
                diag[n - 1] = 1.0;
                thomas(&sub, &diag, &sup, &rhs)
            }
            SplineKind::Clamped => {
                let s0 = edge_slope(&x[..4], &y[..4], 0);
                let sn = edge_slope(&x[n - 4..], &y[n - 4..], 3);
                diag[0] = 2.0 * h[0];
                sup[0] = h[0];
                rhs[0] = 6.0 * (slope[0] - s0);
                sub[n - 1] = h[n - 2];
                diag[n - 1] = 2.0 * h[n - 2];
                rhs[n - 1] = 6.0 * (sn - slope[n - 2]);
                thomas(&sub, &diag, &sup, &rhs)
            }
            SplineKind::NotAKnot => {
                // Eliminate M[0] and M[n-1] through the jump conditions, then
                // solve the interior tridiagonal system.
                let (h0, h1) = (h[0], h[1]);
                diag[1] += h0 * (h0 + h1) / h1;
                sup[1] -= h0 * h0 / h1;
                let (ha, hb) = (h[n - 3], h[n - 2]);
                diag[n - 2] += hb * (ha + hb) / ha;
                sub[n - 2] -= hb * hb / ha;
                let inner = thomas(&sub[1..n - 1], &diag[1..n - 1], &sup[1..n - 1], &rhs[1..n - 1]);
                let mut m = vec![0.0; n];
                m[1..n - 1].copy_from_slice(&inner);
                m[0] = ((h0 + h1) * m[1] - h0 * m[2]) / h1;
                m[n - 1] = ((ha + hb) * m[n - 2] - hb * m[n - 3]) / ha;
                m
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Linalg("spline system is singular".into()));
        }
        if kind == SplineKind::Natural {
            m[0] = 0.0;
            m[n - 1] = 0.0;
        }
        Ok(CubicSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        self.eval_on(i, t)
    }

    fn eval_on(&self, i: usize, t: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let (a, b) = (self.x[i + 1] - t, t - self.x[i]);
        let (ma, mb) = (self.m[i], self.m[i + 1]);
        ma * a.powi(3) / (6.0 * h)
            + mb * b.powi(3) / (6.0 * h)
            + (self.y[i] / h - ma * h / 6.0) * a
            + (self.y[i + 1] / h - mb * h / 6.0) * b
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let (a, b) = (self.x[i + 1] - t, t - self.x[i]);
        let (ma, mb) = (self.m[i], self.m[i + 1]);
        -ma * a * a / (2.0 * h) + mb * b * b / (2.0 * h) + (self.y[i + 1] - self.y[i]) / h - (mb - ma) * h / 6.0
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        (self.m[i] * (self.x[i + 1] - t) + self.m[i + 1] * (t - self.x[i])) / h
    }

    /// Stationary points, in increasing order.
    pub fn critical_points(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for i in 0..self.x.len() - 1 {
            let h = self.x[i + 1] - self.x[i];
            let (ma, mb) = (self.m[i], self.m[i + 1]);
            // S'(x_i + u) = qa u^2 + qb u + qc on [0, h].
            let qa = (mb - ma) / (2.0 * h);
            let qb = ma;
            let qc = (self.y[i + 1] - self.y[i]) / h - (mb - ma) * h / 6.0 - ma * h / 2.0;
            for u in quadratic_roots(qa, qb, qc) {
                if (0.0..=h).contains(&u) {
                    let t = self.x[i] + u;
                    if out.last().is_none_or(|&p| t - p > 1e-14 * h.max(t.abs())) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }
}

/// Real roots of `a u^2 + b u + c`, cancellation-free.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    let mut r = vec![q / a, c / q];
    r.sort_by(f64::total_cmp);
    r
}

/// Derivative at `x[at]` of the cubic through four points.
fn edge_slope(x: &[f64], y: &[f64], at: usize) -> f64 {
    let t = x[at];
    let mut total = 0.0;
    for j in 0..4 {
        let denom: f64 = (0..4).filter(|&k| k != j).map(|k| x[j] - x[k]).product();
        let deriv = if j == at {
            let mut s = 0.0;
            for k in (0..4).filter(|&k| k != j) {
                s += (0..4).filter(|&l| l != j && l != k).map(|l| t - x[l]).product::<f64>();
            }
            s
        } else {
            (0..4).filter(|&k| k != j && k != at).map(|k| t - x[k]).product::<f64>()
        };
        total += y[j] * deriv / denom;
    }
    total
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let w = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / w } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / w;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}
