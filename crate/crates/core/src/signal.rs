//! Discrete signal sets, knot partitions and synthetic data.
//!
//! A continuous index set `[a, b]` is represented by a [`TimeGrid`] of `N`
//! strictly increasing points, and a random signal at each grid point by an
//! `m x q` matrix whose columns are equally weighted realizations. All grid
//! and knot indices in this module are 0-based.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, Matrix};
use crate::rng::{rand_uniform, randn, seeded_rng, stream_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    taus: Vec<f64>,
}

impl TimeGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::invalid("time grid needs at least two points"));
        }
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("time grid contains a non-finite point"));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        Ok(TimeGrid { taus })
    }

    /// The grid `1, 2, ..., n`, so that a grid point's time equals its
    /// 1-based index.
    pub fn uniform(n: usize) -> Result<Self> {
        TimeGrid::new((1..=n).map(|k| k as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.taus[k]
    }

    /// `b - a`.
    pub fn span(&self) -> f64 {
        self.taus[self.taus.len() - 1] - self.taus[0]
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.span() / (self.len() - 1) as f64;
        self.taus
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0))
    }

    /// Discrete time average of `values` sampled on this grid: the plain mean
    /// on a uniform grid, trapezoidal quadrature divided by `b - a` otherwise.
    pub fn time_average(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "time average: {} values for a grid of {} points",
                values.len(),
                self.len()
            )));
        }
        if self.is_uniform() {
            return Ok(values.iter().sum::<f64>() / values.len() as f64);
        }
        let integral: f64 = self
            .taus
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum();
        Ok(integral / self.span())
    }
}

/// One `m x q` realization matrix per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    grid: TimeGrid,
    ensembles: Vec<Matrix>,
}

impl SignalSet {
    pub fn new(grid: TimeGrid, ensembles: Vec<Matrix>) -> Result<Self> {
        if ensembles.len() != grid.len() {
            return Err(Error::invalid(format!(
                "signal set has {} ensembles for a grid of {} points",
                ensembles.len(),
                grid.len()
            )));
        }
        let shape = ensembles[0].shape();
        for (k, e) in ensembles.iter().enumerate() {
            if e.shape() != shape {
                return Err(Error::invalid(format!(
                    "ensemble {k} is {}x{}, expected {}x{}",
                    e.nrows(),
                    e.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            crate::linalg::ensure_finite(e, "signal ensemble")?;
        }
        Ok(SignalSet { grid, ensembles })
    }

    /// Builds a set on the uniform grid `1..=N`.
    pub fn on_uniform_grid(ensembles: Vec<Matrix>) -> Result<Self> {
        let grid = TimeGrid::uniform(ensembles.len())?;
        SignalSet::new(grid, ensembles)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn ensembles(&self) -> &[Matrix] {
        &self.ensembles
    }

    pub fn ensemble(&self, k: usize) -> &Matrix {
        &self.ensembles[k]
    }

    pub fn into_ensembles(self) -> Vec<Matrix> {
        self.ensembles
    }

    /// Number of grid points `N`.
    pub fn len(&self) -> usize {
        self.ensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.is_empty()
    }

    /// Signal dimension `m`.
    pub fn rows(&self) -> usize {
        self.ensembles[0].nrows()
    }

    /// Realization count `q`.
    pub fn cols(&self) -> usize {
        self.ensembles[0].ncols()
    }

    pub fn map(&self, f: impl Fn(&Matrix) -> Matrix + Sync + Send) -> Result<SignalSet> {
        let ensembles = self.ensembles.par_iter().map(f).collect();
        SignalSet::new(self.grid.clone(), ensembles)
    }
}

/// Knot indices `j_1 < ... < j_p` into a grid, pinned to the grid endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    knots: Vec<usize>,
}

impl Partition {
    /// `knots` are 0-based grid indices for a grid of `grid_len` points.
    pub fn new(knots: Vec<usize>, grid_len: usize) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidPartition(format!(
                "need at least two knots, got {}",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPartition(
                "knot indices must be strictly increasing".into(),
            ));
        }
        if knots[0] != 0 || knots[knots.len() - 1] + 1 != grid_len {
            return Err(Error::InvalidPartition(format!(
                "knots must start at the first and end at the last of {grid_len} grid points"
            )));
        }
        Ok(Partition { knots })
    }

    /// Knot list as written in 1-based grid numbering (`1, ..., N`).
    pub fn from_one_based(knots: &[usize], grid_len: usize) -> Result<Self> {
        if knots.contains(&0) {
            return Err(Error::InvalidPartition(
                "1-based knot list contains 0".into(),
            ));
        }
        Partition::new(knots.iter().map(|k| k - 1).collect(), grid_len)
    }

    /// Knots `0, d, 2d, ...` with `d = floor((N - 1) / (p - 1))`; the last
    /// knot is moved to `N - 1`, so the final step absorbs the remainder.
    pub fn uniform(grid_len: usize, p: usize) -> Result<Self> {
        if p < 2 || p > grid_len {
            return Err(Error::InvalidPartition(format!(
                "knot count {p} must lie in [2, {grid_len}]"
            )));
        }
        let step = (grid_len - 1) / (p - 1);
        let mut knots: Vec<usize> = (0..p).map(|j| j * step).collect();
        knots[p - 1] = grid_len - 1;
        Partition::new(knots, grid_len)
    }

    pub fn knots(&self) -> &[usize] {
        &self.knots
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.knots.iter().map(|k| k + 1).collect()
    }

    /// `p`.
    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// `p - 1`.
    pub fn interval_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn grid_len(&self) -> usize {
        self.knots[self.knots.len() - 1] + 1
    }

    /// Knot indices `(start, end)` bounding interval `j`.
    pub fn interval(&self, j: usize) -> (usize, usize) {
        (self.knots[j], self.knots[j + 1])
    }

    /// Interval containing grid index `k`. Interior knots belong to the
    /// interval on their right; the last grid point belongs to the last
    /// interval.
    pub fn interval_of(&self, k: usize) -> Result<usize> {
        let n = self.grid_len();
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
        let at_or_before = self.knots.partition_point(|&knot| knot <= k);
        Ok((at_or_before - 1).min(self.interval_count() - 1))
    }

    /// `|t_{j+1} - t_j|` on `grid`.
    pub fn delta_t(&self, grid: &TimeGrid, j: usize) -> f64 {
        let (a, b) = self.interval(j);
        grid.tau(b) - grid.tau(a)
    }

    pub fn delta_ts(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..self.interval_count())
            .map(|j| self.delta_t(grid, j))
            .collect()
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.len() != self.grid_len() {
            return Err(Error::InvalidPartition(format!(
                "partition spans {} grid points but the grid has {}",
                self.grid_len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Mean squared column norm: the sample version of `E|x|^2` with each
/// realization weighted `1/q`.
pub fn omega_norm_sq(a: &Matrix) -> f64 {
    fro_norm_sq(a) / a.ncols() as f64
}

/// Per-interval Lipschitz rates certified on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimates {
    /// Reference-signal rates, anchored at the left knot of each interval.
    pub lambda: Vec<f64>,
    /// Observed-signal rates, anchored at the right knot of each interval.
    pub gamma: Vec<f64>,
    /// Rate at which the initial estimate departs from the reference signal
    /// on the first interval.
    pub c1: f64,
}

/// Smallest constants such that, for every grid point `k` in interval `j`,
/// `|x_k - x(t_j)|^2 <= lambda_j dt_j` and `|y_k - y(t_{j+1})|^2 <= gamma_j dt_j`
/// (norms are realization means), plus `c1` for `|x_k - x_hat_1|^2` on the
/// first interval.
pub fn estimate_lipschitz(
    x: &SignalSet,
    y: &SignalSet,
    partition: &Partition,
    x_hat_1: &Matrix,
) -> Result<LipschitzEstimates> {
    if x.grid() != y.grid() {
        return Err(Error::invalid(
            "reference and observed sets use different grids",
        ));
    }
    partition.check_grid(x.grid())?;
    if x_hat_1.shape() != (x.rows(), x.cols()) {
        return Err(Error::invalid(format!(
            "initial estimate is {}x{}, expected {}x{}",
            x_hat_1.nrows(),
            x_hat_1.ncols(),
            x.rows(),
            x.cols()
        )));
    }
    let grid = x.grid();

    let max_ratio = |set: &SignalSet, anchor: &Matrix, j: usize| -> f64 {
        let (a, b) = partition.interval(j);
        let dt = partition.delta_t(grid, j);
        (a..=b)
            .map(|k| omega_norm_sq(&(set.ensemble(k) - anchor)) / dt)
            .fold(0.0, f64::max)
    };

    let intervals = 0..partition.interval_count();
    let lambda = intervals
        .clone()
        .map(|j| max_ratio(x, x.ensemble(partition.interval(j).0), j))
        .collect();
    let gamma = intervals
        .map(|j| max_ratio(y, y.ensemble(partition.interval(j).1), j))
        .collect();
    let c1 = max_ratio(x, x_hat_1, 0);

    Ok(LipschitzEstimates { lambda, gamma, c1 })
}

const HARMONICS: usize = 3;

/// Smooth random trajectories on the uniform grid `1..=N`.
///
/// Entry `(i, c)` of every ensemble follows
/// `base + s * sum_h (a_h cos(2 pi h u) + b_h sin(2 pi h u)) / h` for
/// `h = 1..=3`, where `u = k / (N - 1)` runs over `[0, 1]`, `s` is
/// `smoothness` and `base`, `a_h`, `b_h` are standard normal draws fixed per
/// entry. The time derivative is bounded by a multiple of `s`, so
/// `smoothness = 0` gives constant signals.
pub fn gen_lipschitz_set(
    m: usize,
    q: usize,
    n: usize,
    smoothness: f64,
    seed: u64,
) -> Result<SignalSet> {
    if m == 0 || q == 0 || n < 2 {
        return Err(Error::invalid(format!(
            "cannot generate a set with m={m}, q={q}, N={n}"
        )));
    }
    if !(smoothness.is_finite() && smoothness >= 0.0) {
        return Err(Error::invalid(
            "smoothness must be a finite non-negative number",
        ));
    }
    let mut rng = seeded_rng(seed);
    let base = randn(&mut rng, m, q);
    let cos_coef: Vec<Matrix> = (0..HARMONICS).map(|_| randn(&mut rng, m, q)).collect();
    let sin_coef: Vec<Matrix> = (0..HARMONICS).map(|_| randn(&mut rng, m, q)).collect();

    let ensembles = (0..n)
        .into_par_iter()
        .map(|k| {
            let u = k as f64 / (n - 1) as f64;
            let mut x = base.clone();
            for h in 0..HARMONICS {
                let freq = (h + 1) as f64;
                let phase = std::f64::consts::TAU * freq * u;
                let w = smoothness / freq;
                x += &cos_coef[h] * (w * phase.cos());
                x += &sin_coef[h] * (w * phase.sin());
            }
            x
        })
        .collect();
    SignalSet::on_uniform_grid(ensembles)
}

/// How an observed set is derived from a reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `Y = X . randn . rand` (entrywise).
    HadamardRandnRand,
    /// `Y = X . randn`.
    HadamardRandn,
    /// `Y = X + scale * randn`.
    Additive(f64),
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard-randn-rand" => Ok(NoiseModel::HadamardRandnRand),
            "hadamard-randn" => Ok(NoiseModel::HadamardRandn),
            _ => {
                let scale = s
                    .strip_prefix("additive:")
                    .ok_or_else(|| Error::Config(format!("unknown noise model `{s}`")))?;
                let scale: f64 = scale
                    .parse()
                    .map_err(|_| Error::Config(format!("bad additive noise scale `{scale}`")))?;
                if !scale.is_finite() || scale < 0.0 {
                    return Err(Error::Config(format!(
                        "additive noise scale must be finite and non-negative, got {scale}"
                    )));
                }
                Ok(NoiseModel::Additive(scale))
            }
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::HadamardRandnRand => f.write_str("hadamard-randn-rand"),
            NoiseModel::HadamardRandn => f.write_str("hadamard-randn"),
            NoiseModel::Additive(s) => write!(f, "additive:{s}"),
        }
    }
}

/// Observed set from `x` under `model`. Ensemble `k` draws from ChaCha
/// stream `k` of `seed`: first the normal matrix, then (for the
/// three-factor model) the uniform matrix.
pub fn apply_noise(x: &SignalSet, model: NoiseModel, seed: u64) -> Result<SignalSet> {
    let (m, q) = (x.rows(), x.cols());
    let ensembles = x
        .ensembles()
        .par_iter()
        .enumerate()
        .map(|(k, xk)| {
            let mut rng = stream_rng(seed, k as u64);
            let normal = randn(&mut rng, m, q);
            match model {
                NoiseModel::HadamardRandnRand => {
                    let uniform = rand_uniform(&mut rng, m, q);
                    xk.component_mul(&normal).component_mul(&uniform)
                }
                NoiseModel::HadamardRandn => xk.component_mul(&normal),
                NoiseModel::Additive(scale) => xk + normal * scale,
            }
        })
        .collect();
    SignalSet::new(x.grid().clone(), ensembles)
}
