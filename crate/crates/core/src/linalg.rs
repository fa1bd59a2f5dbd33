//! Dense real-matrix primitives shared by the estimators and filters.
//!
//! Everything here works on [`Matrix`], a column-major `nalgebra` matrix of
//! `f64`. Singular value decompositions run on `faer`, whose SVD stays
//! accurate on rank-deficient input. Public operations reject non-finite
//! input. Every pseudo-inverse computed through [`pinv`] or [`pinv_with_tol`]
//! is counted on the calling thread so that callers can audit the cost of a
//! filter build with [`count_pinv_calls`].

use std::cell::Cell;

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative tolerance for symmetry checks on nominally symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Negative eigenvalues down to `-PSD_CLAMP_TOL * |S|` are treated as zero.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

const MAX_SWEEPS_PER_DIM: usize = 200;

thread_local! {
    static PINV_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Runs `f` and returns its result together with the number of
/// pseudo-inverses it computed on this thread.
pub fn count_pinv_calls<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let before = PINV_CALLS.with(Cell::get);
    let out = f();
    let after = PINV_CALLS.with(Cell::get);
    (out, after - before)
}

pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid(format!("{what}: empty matrix")));
    }
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what}: non-finite entry")))
    }
}

/// Default rank-truncation threshold relative to the largest singular value.
pub fn default_pinv_tol(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols) as f64
}

/// Moore-Penrose pseudo-inverse with the default relative tolerance.
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    pinv_with_tol(a, default_pinv_tol(a.nrows(), a.ncols()))
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values at or below
/// `rel_tol * sigma_max` are treated as zero.
pub fn pinv_with_tol(a: &Matrix, rel_tol: f64) -> Result<Matrix> {
    ensure_finite(a, "pinv")?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::invalid(format!(
            "pinv tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    PINV_CALLS.with(|c| c.set(c.get() + 1));

    let (m, n) = a.shape();
    if a.iter().all(|&v| v == 0.0) {
        return Ok(Matrix::zeros(n, m));
    }

    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::NumericalFailure(format!("SVD of {m}x{n} matrix failed: {e:?}")))?;
    let (u, sigma, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let rank_bound = m.min(n);
    let sigma_max = (0..rank_bound).map(|i| sigma[i]).fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;

    // A^+ = sum_i v_i u_i^T / sigma_i over the retained singular values.
    let mut out = Matrix::zeros(n, m);
    for i in 0..rank_bound {
        if sigma[i] <= cutoff {
            continue;
        }
        let inv = 1.0 / sigma[i];
        for c in 0..m {
            let w = inv * u[(c, i)];
            for r in 0..n {
                out[(r, c)] += w * v[(r, i)];
            }
        }
    }
    Ok(out)
}

fn to_faer(a: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    ensure_finite(a, "spectral_norm")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(0.0);
    }
    let sigma = to_faer(a)
        .singular_values()
        .map_err(|e| Error::NumericalFailure(format!("SVD of {m}x{n} matrix failed: {e:?}")))?;
    Ok(sigma.into_iter().fold(0.0, f64::max))
}

pub fn fro_norm_sq(a: &Matrix) -> f64 {
    a.norm_squared()
}

/// `trace(A B^T)`, the Frobenius inner product.
pub fn trace_abt(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}

pub fn symmetrize(s: &Matrix) -> Matrix {
    (s + s.transpose()) * 0.5
}

/// `|a - b|_F / |b|_F`, falling back to the absolute difference when `b` is zero.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn check_symmetric(s: &Matrix, what: &str) -> Result<()> {
    ensure_finite(s, what)?;
    if !s.is_square() {
        return Err(Error::invalid(format!(
            "{what}: expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let asym = (s - s.transpose()).norm();
    if asym > SYMMETRY_TOL * s.norm() {
        return Err(Error::invalid(format!(
            "{what}: matrix is not symmetric (|S - S^T| = {asym:e})"
        )));
    }
    Ok(())
}

fn symmetric_eigen(s: &Matrix, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = s.nrows();
    SymmetricEigen::try_new(symmetrize(s), f64::EPSILON, MAX_SWEEPS_PER_DIM * n).ok_or_else(|| {
        Error::NumericalFailure(format!("{what}: eigendecomposition did not converge"))
    })
}

fn rebuild(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> Matrix {
    let q = &eigen.eigenvectors;
    let mut scaled = q.clone();
    for (mut col, &lambda) in scaled.column_iter_mut().zip(eigen.eigenvalues.iter()) {
        col *= f(lambda);
    }
    symmetrize(&(scaled * q.transpose()))
}

/// Symmetric square root of a positive semi-definite matrix.
///
/// Small negative eigenvalues (down to `-PSD_CLAMP_TOL * |S|`, where `|S|`
/// is the largest eigenvalue magnitude) are clamped to zero; anything more
/// negative is rejected.
pub fn psd_sqrt(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s, "psd_sqrt")?;
    let eigen = symmetric_eigen(s, "psd_sqrt")?;
    let scale = eigen.eigenvalues.amax();
    let floor = -PSD_CLAMP_TOL * scale;
    if let Some(&worst) = eigen.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(Error::invalid(format!(
            "psd_sqrt: eigenvalue {worst:e} is below the PSD tolerance"
        )));
    }
    Ok(rebuild(&eigen, |l| l.max(0.0).sqrt()))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to zero.
pub fn psd_project(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s, "psd_project")?;
    let eigen = symmetric_eigen(s, "psd_project")?;
    Ok(rebuild(&eigen, |l| l.max(0.0)))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &Matrix) -> Result<f64> {
    check_symmetric(s, "min_eigenvalue")?;
    Ok(symmetric_eigen(s, "min_eigenvalue")?.eigenvalues.min())
}
