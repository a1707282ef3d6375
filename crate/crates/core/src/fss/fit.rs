use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ScalingModel;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// `(parameter name, value)` pairs held fixed.
    pub pins: Vec<(String, f64)>,
    /// One standard deviation per data point; unit weights when absent.
    pub sigmas: Option<Vec<f64>>,
    /// Number of starts, the first being the initial vector itself.
    pub starts: usize,
    /// Relative spread of the other starts: each free parameter is multiplied by
    /// `1 + spread * u` with `u` uniform in `[-1, 1]`.
    pub spread: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { pins: Vec::new(), sigmas: None, starts: 16, spread: 0.5, seed: 0x00f1_7000, max_iterations: 500 }
    }
}

impl FitOptions {
    pub fn pinned(pins: &[(&str, f64)]) -> Self {
        FitOptions { pins: pins.iter().map(|(n, v)| (n.to_string(), *v)).collect(), ..FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ScalingModel,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Zero for pinned parameters.
    pub uncertainties: Vec<f64>,
    pub pinned: Vec<bool>,
    /// Row-major, `params.len()` squared.
    pub covariance: Vec<f64>,
    /// `sqrt(sum r_i^2)` of the weighted residuals.
    pub residual_norm: f64,
    /// `sum r_i^2 / (n - free)`.
    pub reduced_chi2: f64,
    pub lengths: Vec<f64>,
    pub iterations: usize,
    pub success: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.uncertainties[i])
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.covariance[i * self.names.len() + j])
    }

    pub fn predict(&self, length: f64) -> f64 {
        self.model.eval(&self.params, length)
    }
}

struct Problem<'a> {
    model: ScalingModel,
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<f64>,
    free: Vec<usize>,
    base: &'a [f64],
}

impl Problem<'_> {
    fn full(&self, q: &[f64]) -> Vec<f64> {
        let mut p = self.base.to_vec();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = q[k];
        }
        p
    }

    fn feasible(&self, q: &[f64]) -> bool {
        let p = self.full(q);
        q.iter().all(|v| v.is_finite()) && self.model.positive().iter().all(|&i| p[i] > 0.0)
    }

    fn residuals(&self, q: &[f64]) -> Vec<f64> {
        let p = self.full(q);
        self.xs.iter().zip(&self.ys).zip(&self.weights).map(|((&x, &y), &w)| w * (self.model.eval(&p, x) - y)).collect()
    }

    fn cost(&self, q: &[f64]) -> f64 {
        if !self.feasible(q) {
            return f64::INFINITY;
        }
        let c: f64 = self.residuals(q).iter().map(|r| r * r).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    /// Central-difference Jacobian, `n x k`.
    fn jacobian(&self, q: &[f64]) -> Mat<f64> {
        let (n, k) = (self.xs.len(), q.len());
        let mut jac = Mat::zeros(n, k);
        for j in 0..k {
            let h = 1e-6 * q[j].abs().max(1e-3);
            let mut up = q.to_vec();
            let mut down = q.to_vec();
            up[j] += h;
            down[j] -= h;
            // Stay on the feasible side of positivity bounds.
            let (ru, rd, span) = if self.feasible(&down) {
                (self.residuals(&up), self.residuals(&down), 2.0 * h)
            } else {
                (self.residuals(&up), self.residuals(q), h)
            };
            for i in 0..n {
                jac[(i, j)] = (ru[i] - rd[i]) / span;
            }
        }
        jac
    }
}

struct Basin {
    q: Vec<f64>,
    cost: f64,
    iterations: usize,
}

fn normal_equations(jac: &Mat<f64>, r: &[f64]) -> (Mat<f64>, Vec<f64>) {
    let (n, k) = (jac.nrows(), jac.ncols());
    let a = Mat::from_fn(k, k, |i, j| (0..n).map(|m| jac[(m, i)] * jac[(m, j)]).sum());
    let g = (0..k).map(|i| (0..n).map(|m| jac[(m, i)] * r[m]).sum()).collect();
    (a, g)
}

/// Solves `(A + lambda diag A) x = -g` through the eigendecomposition of the
/// diagonally scaled matrix.
fn damped_step(a: &Mat<f64>, g: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let k = g.len();
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return None;
    }
    let scaled = Mat::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]) + if i == j { lambda } else { 0.0 });
    let (vals, vecs) = linalg::sym_eigen(&scaled).ok()?;
    let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rhs: Vec<f64> = (0..k).map(|i| -g[i] / d[i]).collect();
    let mut x = vec![0.0; k];
    for (m, &v) in vals.iter().enumerate() {
        if v <= 1e-15 * top {
            continue;
        }
        let c: f64 = (0..k).map(|i| vecs[(i, m)] * rhs[i]).sum::<f64>() / v;
        for i in 0..k {
            x[i] += c * vecs[(i, m)];
        }
    }
    Some(x.iter().zip(&d).map(|(v, s)| v / s).collect())
}

fn levenberg_marquardt(problem: &Problem<'_>, start: Vec<f64>, max_iterations: usize) -> Option<Basin> {
    let mut q = start;
    let mut cost = problem.cost(&q);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < max_iterations && cost > 0.0 {
        iterations += 1;
        let jac = problem.jacobian(&q);
        let (a, g) = normal_equations(&jac, &problem.residuals(&q));
        let mut accepted = false;
        while lambda < 1e16 {
            let Some(step) = damped_step(&a, &g, lambda) else { return Some(Basin { q, cost, iterations }) };
            let trial: Vec<f64> = q.iter().zip(&step).map(|(v, s)| v + s).collect();
            let c = problem.cost(&trial);
            if c < cost {
                let small = step.iter().zip(&q).all(|(s, v)| s.abs() <= 1e-14 * v.abs().max(1e-10));
                let gain = cost - c;
                q = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = !(small || gain <= 1e-16 * cost);
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Some(Basin { q, cost, iterations })
}

/// Levenberg-Marquardt fit of `model` to `(L, y)` points, restarted from a
/// deterministic cloud around `init`; the lowest-cost basin wins.
pub fn fit_scaling(model: ScalingModel, data: &[(f64, f64)], init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let names = model.parameter_names();
    let k_all = names.len();
    if init.len() != k_all {
        return Err(Error::InvalidInput(format!("{} expects {} parameters, got {}", model, k_all, init.len())));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial parameters must be finite".into()));
    }
    let mut base = init.to_vec();
    let mut pinned = vec![false; k_all];
    for (name, value) in &opts.pins {
        let i = model
            .parameter_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("{model} has no parameter '{name}'")))?;
        base[i] = *value;
        pinned[i] = true;
    }
    let free: Vec<usize> = (0..k_all).filter(|&i| !pinned[i]).collect();
    if data.len() < free.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "{} free parameters need at least {} points, got {}",
            free.len(),
            free.len() + 1,
            data.len()
        )));
    }
    if data.iter().any(|p| !(p.0 > 1.0) || !p.1.is_finite()) {
        return Err(Error::InvalidInput("fit data need L > 1 and finite values".into()));
    }
    let mut rows: Vec<(f64, f64, f64)> = match &opts.sigmas {
        Some(s) if s.len() != data.len() => {
            return Err(Error::ShapeMismatch(format!("{} sigmas for {} points", s.len(), data.len())))
        }
        Some(s) if s.iter().any(|v| !(*v > 0.0)) => return Err(Error::InvalidInput("sigmas must be positive".into())),
        Some(s) => data.iter().zip(s).map(|(p, s)| (p.0, p.1, 1.0 / s)).collect(),
        None => data.iter().map(|p| (p.0, p.1, 1.0)).collect(),
    };
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let problem = Problem {
        model,
        xs: rows.iter().map(|r| r.0).collect(),
        ys: rows.iter().map(|r| r.1).collect(),
        weights: rows.iter().map(|r| r.2).collect(),
        free: free.clone(),
        base: &base,
    };

    let q0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Basin> = None;
    let mut failures = 0;
    for s in 0..opts.starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            q0.clone()
        } else {
            q0.iter().map(|v| v * (1.0 + opts.spread * rng.random_range(-1.0..=1.0))).collect()
        };
        match levenberg_marquardt(&problem, start, opts.max_iterations) {
            Some(b) if best.as_ref().is_none_or(|cur| b.cost < cur.cost) => best = Some(b),
            Some(_) => {}
            None => failures += 1,
        }
    }
    let best = best.ok_or_else(|| {
        Error::NoDescent(format!("{model}: all {failures} starts were infeasible or produced non-finite residuals"))
    })?;

    let jac = problem.jacobian(&best.q);
    let (a, _) = normal_equations(&jac, &problem.residuals(&best.q));
    let inverse = scaled_inverse(&a).ok_or(Error::SingularJacobian)?;
    let dof = (rows.len() - free.len()).max(1) as f64;
    let reduced_chi2 = best.cost / dof;
    let mut covariance = vec![0.0; k_all * k_all];
    for (a_i, &i) in free.iter().enumerate() {
        for (b_j, &j) in free.iter().enumerate() {
            covariance[i * k_all + j] = reduced_chi2 * inverse[(a_i, b_j)];
        }
    }
    let uncertainties = (0..k_all).map(|i| covariance[i * k_all + i].max(0.0).sqrt()).collect();
    Ok(FitResult {
        model,
        names,
        params: problem.full(&best.q),
        uncertainties,
        pinned,
        covariance,
        residual_norm: best.cost.sqrt(),
        reduced_chi2,
        lengths: problem.xs.clone(),
        iterations: best.iterations,
        success: true,
    })
}

/// Fit with the model's own data-driven starting point.
pub fn fit_scaling_auto(model: ScalingModel, data: &[(f64, f64)], opts: &FitOptions) -> Result<FitResult> {
    let init = model.initial_guess(data)?;
    fit_scaling(model, data, &init, opts)
}

fn scaled_inverse(a: &Mat<f64>) -> Option<Mat<f64>> {
    let k = a.nrows();
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return None;
    }
    let scaled = Mat::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]));
    let (vals, vecs) = linalg::sym_eigen(&scaled).ok()?;
    let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if vals.iter().any(|&v| v <= 1e-14 * top) {
        return None;
    }
    Some(Mat::from_fn(k, k, |i, j| {
        (0..k).map(|m| vecs[(i, m)] * vecs[(j, m)] / vals[m]).sum::<f64>() / (d[i] * d[j])
    }))
}
