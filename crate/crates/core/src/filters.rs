//! Piecewise linear interpolation filter and the two baseline filters.
//!
//! On interval `j` (knots `t_j`, `t_{j+1}`) the piecewise filter estimates
//!
//! ```text
//! x_hat(t) = x_hat_j + B_j (y(t) - y_j),     B_j = E_zw E_ww^+
//! ```
//!
//! where `x_hat_j` is the chained estimate at the left knot. The chain starts
//! from a supplied `x_hat_1` and advances with
//! `x_hat_{j+1} = x_hat_j + B_j (y_{j+1} - y_j)`, so adjacent sub-filters
//! agree at their shared knot. Building a filter with `p` knots computes
//! exactly `p - 1` pseudo-inverses.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::covariance::{build_cov_pair, cov_zw_additive, residual_for_gain, sample_cov, CovPair};
use crate::error::{Error, Result};
use crate::io::{format_matrix, read_text, write_text, Lines};
use crate::linalg::{count_pinv_calls, ensure_finite, pinv, psd_project, Matrix};
use crate::signal::{Partition, SignalSet};

/// Optimal gain `E_zw E_ww^+` (the minimum-norm choice among all minimizers).
pub fn solve_gain(cov: &CovPair) -> Result<Matrix> {
    let (m, n) = cov.dims();
    if cov.e_ww.shape() != (n, n) || cov.e_zz.shape() != (m, m) {
        return Err(Error::invalid("covariance pair has inconsistent shapes"));
    }
    Ok(&cov.e_zw * pinv(&cov.e_ww)?)
}

/// Source of the covariance pair for each interval during a build.
pub trait KnotCovariance: Sync {
    /// Covariances for interval `j`, given the chained estimate `x_hat_j` at
    /// its left knot and the observations at both knots.
    fn estimate(
        &self,
        j: usize,
        x_hat_j: &Matrix,
        y_j: &Matrix,
        y_next: &Matrix,
    ) -> Result<CovPair>;
}

/// Sample covariances from a reference estimate at each right knot.
#[derive(Debug, Clone)]
pub struct SampledReferences {
    refs: Vec<Matrix>,
}

impl SampledReferences {
    /// `refs[j]` estimates the reference signal at knot `j + 1`.
    pub fn new(refs: Vec<Matrix>) -> Self {
        SampledReferences { refs }
    }

    /// References rebuilt from the odd realization columns of `x` at each
    /// right knot.
    pub fn reconstructed(x: &SignalSet, partition: &Partition) -> Result<Self> {
        let refs = partition.knots()[1..]
            .iter()
            .map(|&k| crate::covariance::reconstruct_reference(x.ensemble(k)))
            .collect::<Result<_>>()?;
        Ok(SampledReferences { refs })
    }

    /// The true reference signal at each right knot.
    pub fn oracle(x: &SignalSet, partition: &Partition) -> Self {
        let refs = partition.knots()[1..]
            .iter()
            .map(|&k| x.ensemble(k).clone())
            .collect();
        SampledReferences { refs }
    }

    pub fn refs(&self) -> &[Matrix] {
        &self.refs
    }
}

impl KnotCovariance for SampledReferences {
    fn estimate(
        &self,
        j: usize,
        x_hat_j: &Matrix,
        y_j: &Matrix,
        y_next: &Matrix,
    ) -> Result<CovPair> {
        let reference = self.refs.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: self.refs.len(),
        })?;
        build_cov_pair(reference, x_hat_j, y_next, y_j)
    }
}

/// Covariances from observations alone, assuming `y = x + xi` with white
/// noise of per-component power `xi_power` independent of the signal.
///
/// `E_zw` comes from [`cov_zw_additive`]. `E_zz` is
/// `E[(y_{j+1} - x_hat_j)(y_{j+1} - x_hat_j)^T] - xi_power I`, projected onto
/// the PSD cone.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveNoise {
    pub xi_power: f64,
    pub sign: f64,
}

impl KnotCovariance for AdditiveNoise {
    fn estimate(
        &self,
        _j: usize,
        x_hat_j: &Matrix,
        y_j: &Matrix,
        y_next: &Matrix,
    ) -> Result<CovPair> {
        let e_zw = cov_zw_additive(y_j, y_next, x_hat_j, self.xi_power, self.sign)?;
        let w = y_next - y_j;
        let d = y_next - x_hat_j;
        let m = d.nrows();
        let e_zz = sample_cov(&d, &d, true)? - Matrix::identity(m, m) * self.xi_power;
        let e_zz = psd_project(&crate::linalg::symmetrize(&e_zz))?;
        CovPair::new(e_zw, sample_cov(&w, &w, true)?, e_zz)
    }
}

/// Affine map active on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SubFilter {
    /// `B_j`, `m x n`.
    pub gain: Matrix,
    /// Chained estimate at the left knot, `m x q`.
    pub x_hat_knot: Matrix,
    /// Observation at the left knot, `n x q`.
    pub y_knot: Matrix,
    /// Achieved value of the increment objective `E|z - B w|^2`.
    pub residual: f64,
}

impl SubFilter {
    pub fn apply(&self, y: &Matrix) -> Matrix {
        &self.x_hat_knot + &self.gain * (y - &self.y_knot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterDims {
    pub m: usize,
    pub n: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFilter {
    partition: Partition,
    subfilters: Vec<SubFilter>,
    dims: FilterDims,
}

impl PiecewiseFilter {
    pub fn new(partition: Partition, subfilters: Vec<SubFilter>) -> Result<Self> {
        if subfilters.len() != partition.interval_count() {
            return Err(Error::invalid(format!(
                "{} sub-filters for {} intervals",
                subfilters.len(),
                partition.interval_count()
            )));
        }
        let first = &subfilters[0];
        let dims = FilterDims {
            m: first.gain.nrows(),
            n: first.gain.ncols(),
            q: first.x_hat_knot.ncols(),
        };
        for (j, s) in subfilters.iter().enumerate() {
            if s.gain.shape() != (dims.m, dims.n)
                || s.x_hat_knot.shape() != (dims.m, dims.q)
                || s.y_knot.shape() != (dims.n, dims.q)
            {
                return Err(Error::invalid(format!(
                    "sub-filter {j} has inconsistent dimensions"
                )));
            }
            ensure_finite(&s.gain, "gain")?;
            ensure_finite(&s.x_hat_knot, "knot estimate")?;
            ensure_finite(&s.y_knot, "knot observation")?;
        }
        Ok(PiecewiseFilter {
            partition,
            subfilters,
            dims,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn subfilters(&self) -> &[SubFilter] {
        &self.subfilters
    }

    pub fn dims(&self) -> FilterDims {
        self.dims
    }

    /// Estimate of the reference signal at grid index `k` from its
    /// observation `y_k`.
    pub fn apply(&self, y_k: &Matrix, k: usize) -> Result<Matrix> {
        let j = self.partition.interval_of(k)?;
        if y_k.shape() != (self.dims.n, self.dims.q) {
            return Err(Error::invalid(format!(
                "observation is {}x{}, filter expects {}x{}",
                y_k.nrows(),
                y_k.ncols(),
                self.dims.n,
                self.dims.q
            )));
        }
        Ok(self.subfilters[j].apply(y_k))
    }

    /// Estimates for every grid point of `y`, computed in parallel.
    pub fn apply_set(&self, y: &SignalSet) -> Result<Vec<Matrix>> {
        if y.len() != self.partition.grid_len() {
            return Err(Error::invalid(format!(
                "set has {} grid points, filter covers {}",
                y.len(),
                self.partition.grid_len()
            )));
        }
        y.ensembles()
            .par_iter()
            .enumerate()
            .map(|(k, yk)| self.apply(yk, k))
            .collect()
    }

    /// Writes the filter in its plain-text container format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let FilterDims { m, n, q } = self.dims;
        let _ = writeln!(out, "pwi-filter 1");
        let _ = writeln!(out, "dims {m} {n} {q}");
        let knots: Vec<String> = self
            .partition
            .one_based()
            .iter()
            .map(usize::to_string)
            .collect();
        let _ = writeln!(
            out,
            "knots {} {}",
            self.partition.grid_len(),
            knots.join(" ")
        );
        for (j, s) in self.subfilters.iter().enumerate() {
            let _ = writeln!(out, "subfilter {} {}", j + 1, s.residual);
            out.push_str(&format_matrix(&s.gain));
            out.push_str(&format_matrix(&s.x_hat_knot));
            out.push_str(&format_matrix(&s.y_knot));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = Lines::new(path, text);
        let (ln, magic) = lines.expect_line("the filter header")?;
        if magic != "pwi-filter 1" {
            return Err(lines.error(ln, format!("unsupported filter header `{magic}`")));
        }

        let mut keyed = |key: &str| -> Result<(usize, Vec<usize>)> {
            let (ln, line) = lines.expect_line(key)?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(lines.error(ln, format!("expected `{key}` line")));
            }
            let vals = it
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| lines.error(ln, format!("bad `{key}` line")))?;
            Ok((ln, vals))
        };
        let (ln, dims) = keyed("dims")?;
        let [m, n, q] = dims[..] else {
            return Err(Error::parse(path, format!("line {ln}: dims needs m n q")));
        };
        let (ln, knot_line) = keyed("knots")?;
        let Some((&grid_len, knots)) = knot_line.split_first() else {
            return Err(Error::parse(path, format!("line {ln}: empty knots line")));
        };
        let partition = Partition::from_one_based(knots, grid_len)?;

        let mut subfilters = Vec::with_capacity(partition.interval_count());
        for j in 0..partition.interval_count() {
            let (ln, line) = lines.expect_line("a sub-filter header")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let residual = match parts[..] {
                ["subfilter", idx, r] if idx.parse() == Ok(j + 1) => r
                    .parse::<f64>()
                    .map_err(|_| lines.error(ln, format!("bad residual `{r}`")))?,
                _ => return Err(lines.error(ln, format!("expected `subfilter {}`", j + 1))),
            };
            let gain = lines.read_matrix()?;
            let x_hat_knot = lines.read_matrix()?;
            let y_knot = lines.read_matrix()?;
            subfilters.push(SubFilter {
                gain,
                x_hat_knot,
                y_knot,
                residual,
            });
        }
        if let Some((ln, _)) = lines.next_line() {
            return Err(lines.error(ln, "trailing content after the last sub-filter"));
        }
        let filter = PiecewiseFilter::new(partition, subfilters)?;
        if filter.dims != (FilterDims { m, n, q }) {
            return Err(Error::parse(
                path,
                "declared dims disagree with stored matrices",
            ));
        }
        Ok(filter)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        PiecewiseFilter::from_text(&read_text(path)?, path)
    }
}

/// Builds the filter and returns the covariance pair used on each interval.
pub fn build_piecewise_traced(
    y: &SignalSet,
    partition: &Partition,
    x_hat_1: &Matrix,
    estimator: &dyn KnotCovariance,
) -> Result<(PiecewiseFilter, Vec<CovPair>)> {
    if partition.grid_len() != y.len() {
        return Err(Error::InvalidPartition(format!(
            "partition spans {} grid points but the observed set has {}",
            partition.grid_len(),
            y.len()
        )));
    }
    if x_hat_1.ncols() != y.cols() {
        return Err(Error::invalid(format!(
            "initial estimate has {} realizations, observations have {}",
            x_hat_1.ncols(),
            y.cols()
        )));
    }
    ensure_finite(x_hat_1, "initial estimate")?;

    let mut x_hat = x_hat_1.clone();
    let mut subfilters = Vec::with_capacity(partition.interval_count());
    let mut covs = Vec::with_capacity(partition.interval_count());
    for j in 0..partition.interval_count() {
        let at = |e: Error| Error::Interval {
            interval: j,
            source: Box::new(e),
        };
        let (a, b) = partition.interval(j);
        let (y_j, y_next) = (y.ensemble(a), y.ensemble(b));
        let cov = estimator.estimate(j, &x_hat, y_j, y_next).map_err(at)?;
        if cov.dims() != (x_hat.nrows(), y.rows()) {
            return Err(at(Error::invalid(format!(
                "estimator returned a {}x{} E_zw, expected {}x{}",
                cov.dims().0,
                cov.dims().1,
                x_hat.nrows(),
                y.rows()
            ))));
        }
        let gain = solve_gain(&cov).map_err(at)?;
        let residual = residual_for_gain(&cov, &gain);
        let sub = SubFilter {
            gain,
            x_hat_knot: x_hat,
            y_knot: y_j.clone(),
            residual,
        };
        x_hat = sub.apply(y_next);
        subfilters.push(sub);
        covs.push(cov);
    }
    Ok((PiecewiseFilter::new(partition.clone(), subfilters)?, covs))
}

pub fn build_piecewise(
    y: &SignalSet,
    partition: &Partition,
    x_hat_1: &Matrix,
    estimator: &dyn KnotCovariance,
) -> Result<PiecewiseFilter> {
    build_piecewise_traced(y, partition, x_hat_1, estimator).map(|(f, _)| f)
}

/// Per-signal Wiener-type filter `W_k = E_xy E_yy^+` and its estimate
/// `W_k y_k`.
pub fn gol_estimate(x_ref: &Matrix, y_k: &Matrix) -> Result<(Matrix, Matrix)> {
    if x_ref.ncols() != y_k.ncols() {
        return Err(Error::invalid(format!(
            "reference has {} realizations, observation has {}",
            x_ref.ncols(),
            y_k.ncols()
        )));
    }
    let e_xy = sample_cov(x_ref, y_k, true)?;
    let e_yy = sample_cov(y_k, y_k, true)?;
    let w = e_xy * pinv(&crate::linalg::symmetrize(&e_yy))?;
    let estimate = &w * y_k;
    Ok((w, estimate))
}

/// GOL estimates for a whole set, one filter (and one pseudo-inverse) per
/// grid point. Returns the estimates and the pseudo-inverse count.
pub fn gol_over_set(x_refs: &[Matrix], ys: &[Matrix]) -> Result<(Vec<Matrix>, usize)> {
    if x_refs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "{} references for {} observations",
            x_refs.len(),
            ys.len()
        )));
    }
    let per_signal: Vec<(Matrix, usize)> = x_refs
        .par_iter()
        .zip(ys.par_iter())
        .map(|(x, y)| {
            let (r, calls) = count_pinv_calls(|| gol_estimate(x, y));
            r.map(|(_, est)| (est, calls))
        })
        .collect::<Result<_>>()?;
    let calls = per_signal.iter().map(|(_, c)| c).sum();
    Ok((per_signal.into_iter().map(|(e, _)| e).collect(), calls))
}

/// One filter for the whole set, built from covariances averaged over all
/// `N` pairs: `W = E_xy E_yy^+` with `E_xy = (1/N) sum_k X_k Y_k^T` and
/// `E_yy = (1/N) sum_k Y_k Y_k^T`.
pub fn averaging_estimate(x_refs: &[Matrix], ys: &[Matrix]) -> Result<(Matrix, Vec<Matrix>)> {
    if x_refs.is_empty() || x_refs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "{} references for {} observations",
            x_refs.len(),
            ys.len()
        )));
    }
    let (m, q) = x_refs[0].shape();
    let n = ys[0].nrows();
    for (x, y) in x_refs.iter().zip(ys) {
        if x.shape() != (m, q) || y.shape() != (n, q) {
            return Err(Error::invalid("inconsistent dimensions across the set"));
        }
        ensure_finite(x, "averaging reference")?;
        ensure_finite(y, "averaging observation")?;
    }
    let count = x_refs.len() as f64;
    let mut e_xy = Matrix::zeros(m, n);
    let mut e_yy = Matrix::zeros(n, n);
    for (x, y) in x_refs.iter().zip(ys) {
        e_xy.gemm(1.0, x, &y.transpose(), 1.0);
        e_yy.gemm(1.0, y, &y.transpose(), 1.0);
    }
    e_xy /= count;
    e_yy /= count;
    let w = e_xy * pinv(&crate::linalg::symmetrize(&e_yy))?;
    let estimates = ys.par_iter().map(|y| &w * y).collect();
    Ok((w, estimates))
}
