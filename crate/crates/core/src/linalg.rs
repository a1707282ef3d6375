//! Restarted Lanczos with full reorthogonalization, and thin wrappers over
//! the dense kernels from `faer`.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Deterministic pseudo-random unit vector.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = norm(&v);
    scale(1.0 / n, &mut v);
    v
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Krylov dimension before a restart from the current Ritz vector.
    pub max_krylov: usize,
    /// Convergence when `||H x - E x|| <= tolerance * max(1, |E|)`.
    pub tolerance: f64,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_krylov: 80, tolerance: 1e-12, max_restarts: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
    pub converged: bool,
}

/// Lowest eigenpair of a real symmetric operator given as a matvec closure.
///
/// The start vector need not be normalized but must be nonzero. The returned
/// residual is the true `||H x - E x||` of the returned pair.
pub fn lowest_eigenpair<F>(dim: usize, mut apply: F, start: Vec<f64>, opts: LanczosOptions) -> Result<LanczosOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert_eq!(start.len(), dim);
    let mut x = start;
    let n0 = norm(&x);
    if n0 == 0.0 || !n0.is_finite() {
        return Err(Error::InvalidInput("Lanczos start vector is zero".into()));
    }
    scale(1.0 / n0, &mut x);

    let mut hx = vec![0.0; dim];
    let mut matvecs = 0usize;
    if dim == 1 {
        apply(&x, &mut hx);
        return Ok(LanczosOutcome { value: hx[0] * x[0], vector: x, residual: 0.0, matvecs: 1, converged: true });
    }

    let krylov = opts.max_krylov.min(dim).max(2);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for _ in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(krylov);
        let mut alpha: Vec<f64> = Vec::with_capacity(krylov);
        let mut beta: Vec<f64> = Vec::with_capacity(krylov);
        basis.push(x.clone());
        let mut w = vec![0.0; dim];
        let mut ritz: Option<(f64, Vec<f64>)> = None;
        for j in 0..krylov {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let a = dot(&basis[j], &w);
            alpha.push(a);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let b = norm(&w);
            let (theta, y) = tridiagonal_lowest(&alpha, &beta)?;
            let estimate = b * y[j].abs();
            let scale_e = theta.abs().max(1.0);
            let exhausted = b <= 1e-14 * scale_e || j + 1 == krylov || basis.len() == dim;
            if estimate <= 0.1 * opts.tolerance * scale_e || exhausted {
                ritz = Some((theta, y));
                break;
            }
            beta.push(b);
            let mut next = w.clone();
            scale(1.0 / b, &mut next);
            basis.push(next);
        }
        let (theta, y) = ritz.expect("Krylov loop always produces a Ritz pair");
        let mut v = vec![0.0; dim];
        for (coef, b) in y.iter().zip(&basis) {
            axpy(*coef, b, &mut v);
        }
        let nv = norm(&v);
        scale(1.0 / nv, &mut v);
        apply(&v, &mut hx);
        matvecs += 1;
        let value = dot(&v, &hx);
        axpy(-value, &v, &mut hx);
        let residual = norm(&hx);
        x = v;
        if residual <= opts.tolerance * value.abs().max(1.0) {
            return Ok(LanczosOutcome { value, vector: x, residual, matvecs, converged: true });
        }
        // stagnation at the roundoff floor
        if residual >= 0.5 * best.1 && (value - best.0).abs() <= 1e-15 * value.abs().max(1.0) {
            return Ok(LanczosOutcome { value, vector: x, residual, matvecs, converged: false });
        }
        best = (value, residual);
        let _ = theta;
    }
    let value = best.0;
    Ok(LanczosOutcome { value, vector: x, residual: best.1, matvecs, converged: false })
}

/// Lowest eigenpair of the symmetric tridiagonal matrix (alpha, beta).
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let (vals, vecs) = sym_eigen(&t)?;
    Ok((vals[0], vecs.col(0).iter().copied().collect()))
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigensolve: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigensolve: {e:?}")))
}

/// Singular values, descending.
pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| Error::Linalg(format!("svd: {e:?}")))
}

/// Thin SVD `a = U diag(s) V^T`, singular values descending.
pub fn thin_svd(a: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let svd = a.thin_svd().map_err(|e| Error::Linalg(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().copied().collect();
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

/// Row-major view of a contiguous buffer.
pub fn view(data: &[f64], rows: usize, cols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

pub fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> MatMut<'_, f64> {
    MatMut::from_row_major_slice_mut(data, rows, cols)
}

/// `dst = lhs * rhs` (or `dst += lhs * rhs` when `accumulate`).
pub fn gemm(dst: MatMut<'_, f64>, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, accumulate: bool) {
    let beta = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(dst, beta, lhs, rhs, 1.0, Par::Seq);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn finds_lowest_laplacian_mode() {
        let n = 200;
        let out = lowest_eigenpair(n, laplacian(n), random_unit_vector(n, 7), LanczosOptions::default()).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!(out.converged);
        assert!((out.value - exact).abs() < 1e-12, "{} vs {}", out.value, exact);
        assert!((norm(&out.vector) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn small_dimensions() {
        let diag = |x: &[f64], y: &mut [f64]| {
            y[0] = 3.0 * x[0];
            y[1] = -1.0 * x[1];
        };
        let out = lowest_eigenpair(2, diag, vec![1.0, 1.0], LanczosOptions::default()).unwrap();
        assert!((out.value + 1.0).abs() < 1e-14);
        let one = |x: &[f64], y: &mut [f64]| y[0] = 4.0 * x[0];
        assert_eq!(lowest_eigenpair(1, one, vec![2.0], LanczosOptions::default()).unwrap().value, 4.0);
    }

    #[test]
    fn seeded_vectors_are_reproducible() {
        assert_eq!(random_unit_vector(10, 3), random_unit_vector(10, 3));
        assert_ne!(random_unit_vector(10, 3), random_unit_vector(10, 4));
    }
}
