//! Covariance estimates for the increment pairs that drive each sub-filter.
//!
//! For interval `j` the increments are `z = x(t_{j+1}) - x_hat(t_j)` and
//! `w = y(t_{j+1}) - y(t_j)`. With `q` realization columns every expectation
//! becomes a column mean, so `E[z w^T]` is estimated by `Z W^T / q`.

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, pinv, symmetrize, trace_abt, Matrix};

/// Second-moment matrices for one increment pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CovPair {
    /// `E[z w^T]`, `m x n`.
    pub e_zw: Matrix,
    /// `E[w w^T]`, `n x n`.
    pub e_ww: Matrix,
    /// `E[z z^T]`, `m x m`.
    pub e_zz: Matrix,
}

impl CovPair {
    pub fn new(e_zw: Matrix, e_ww: Matrix, e_zz: Matrix) -> Result<Self> {
        let (m, n) = e_zw.shape();
        if e_ww.shape() != (n, n) || e_zz.shape() != (m, m) {
            return Err(Error::invalid(format!(
                "inconsistent covariance shapes: E_zw {m}x{n}, E_ww {}x{}, E_zz {}x{}",
                e_ww.nrows(),
                e_ww.ncols(),
                e_zz.nrows(),
                e_zz.ncols()
            )));
        }
        ensure_finite(&e_zw, "E_zw")?;
        ensure_finite(&e_ww, "E_ww")?;
        ensure_finite(&e_zz, "E_zz")?;
        Ok(CovPair {
            e_zw,
            e_ww: symmetrize(&e_ww),
            e_zz: symmetrize(&e_zz),
        })
    }

    /// `(m, n)`.
    pub fn dims(&self) -> (usize, usize) {
        self.e_zw.shape()
    }

    pub fn scaled(&self, c: f64) -> CovPair {
        CovPair {
            e_zw: &self.e_zw * c,
            e_ww: &self.e_ww * c,
            e_zz: &self.e_zz * c,
        }
    }
}

/// Fills in a full-resolution estimate of `x` from its odd columns.
///
/// Odd columns (1-based) are copied; each even column is the mean of its two
/// neighbours; the last column repeats the one before it.
pub fn reconstruct_reference(x: &Matrix) -> Result<Matrix> {
    let q = x.ncols();
    if q < 2 {
        return Err(Error::invalid(format!(
            "reference reconstruction needs at least 2 columns, got {q}"
        )));
    }
    ensure_finite(x, "reconstruct_reference")?;
    let mut out = x.clone();
    // 0-based index i is 1-based column i + 1; even 1-based columns are odd i.
    for i in (1..q - 1).step_by(2) {
        let avg = (x.column(i - 1) + x.column(i + 1)) * 0.5;
        out.set_column(i, &avg);
    }
    let prev = out.column(q - 2).clone_owned();
    out.set_column(q - 1, &prev);
    Ok(out)
}

/// `A B^T`, divided by the column count when `normalize` is set.
pub fn sample_cov(a: &Matrix, b: &Matrix, normalize: bool) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "sample covariance needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    ensure_finite(a, "sample_cov")?;
    ensure_finite(b, "sample_cov")?;
    let mut c = a * b.transpose();
    if normalize {
        c /= a.ncols() as f64;
    }
    Ok(c)
}

fn check_shape(a: &Matrix, shape: (usize, usize), what: &str) -> Result<()> {
    if a.shape() == shape {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            shape.0,
            shape.1
        )))
    }
}

/// Normalized covariances of `Z = x_next_est - x_hat_j` and
/// `W = y_next - y_j`.
pub fn build_cov_pair(
    x_next_est: &Matrix,
    x_hat_j: &Matrix,
    y_next: &Matrix,
    y_j: &Matrix,
) -> Result<CovPair> {
    check_shape(x_hat_j, x_next_est.shape(), "knot estimate")?;
    check_shape(y_j, y_next.shape(), "observed knot")?;
    if x_next_est.ncols() != y_next.ncols() {
        return Err(Error::invalid(format!(
            "reference and observed realizations differ: {} vs {} columns",
            x_next_est.ncols(),
            y_next.ncols()
        )));
    }
    let z = x_next_est - x_hat_j;
    let w = y_next - y_j;
    CovPair::new(
        sample_cov(&z, &w, true)?,
        sample_cov(&w, &w, true)?,
        sample_cov(&z, &z, true)?,
    )
}

/// `E[z w^T]` under additive noise `y = x + xi`, using only observed data.
///
/// Computes `E[y_{j+1} dy^T] - E[xi_{j+1} dy^T] - E[x_hat_j dy^T]` with
/// `dy = y_{j+1} - y_j`. The unobservable noise term is replaced entrywise by
/// `sign * sqrt(xi_power) * sqrt(E[dy_k^2])`, the Cauchy-Schwarz bound on
/// `|E[xi_i dy_k]|`, where `xi_power = E[xi_i^2]` is supplied by the caller.
pub fn cov_zw_additive(
    y_j: &Matrix,
    y_next: &Matrix,
    x_hat_j: &Matrix,
    xi_power: f64,
    sign: f64,
) -> Result<Matrix> {
    check_shape(y_next, y_j.shape(), "next observation")?;
    check_shape(x_hat_j, y_j.shape(), "knot estimate")?;
    if !(xi_power.is_finite() && xi_power >= 0.0) {
        return Err(Error::invalid(format!(
            "noise power must be finite and non-negative, got {xi_power}"
        )));
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::invalid(format!("sign must be +1 or -1, got {sign}")));
    }
    let dy = y_next - y_j;
    let q = dy.ncols() as f64;
    let mut e_zw = sample_cov(y_next, &dy, true)? - sample_cov(x_hat_j, &dy, true)?;

    let xi_rms = xi_power.sqrt();
    for (k, row) in dy.row_iter().enumerate() {
        let dy_rms = (row.norm_squared() / q).sqrt();
        let cross = sign * xi_rms * dy_rms;
        e_zw.column_mut(k).add_scalar_mut(-cross);
    }
    Ok(e_zw)
}

/// `tr(E_zz) - tr(E_zw E_ww^+ E_zw^T)`, clamped at zero: the smallest value
/// of `E|z - B w|^2` over gains `B`.
pub fn residual_value(cov: &CovPair) -> Result<f64> {
    let gain = &cov.e_zw * pinv(&cov.e_ww)?;
    Ok(residual_for_gain(cov, &gain))
}

/// Residual using an already computed optimal gain `E_zw E_ww^+`.
pub(crate) fn residual_for_gain(cov: &CovPair, gain: &Matrix) -> f64 {
    let explained = trace_abt(gain, &cov.e_zw);
    (cov.e_zz.trace() - explained).max(0.0)
}
