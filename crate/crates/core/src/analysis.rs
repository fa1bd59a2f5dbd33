//! Error metrics, the interval error bound, convergence sweeps and
//! baseline comparisons.
//!
//! Two scales appear in the reports. Per-signal errors are raw squared
//! Frobenius norms `|X_k - X_hat_k|_F^2`. The bound lives on the
//! per-realization scale (every expectation a column mean), so the
//! empirical error compared against it divides by `q` before averaging over
//! time. [`BoundReport`] carries both.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{reconstruct_reference, residual_for_gain, CovPair};
use crate::error::{Error, Result};
use crate::filters::{
    averaging_estimate, build_piecewise_traced, gol_over_set, AdditiveNoise, KnotCovariance,
    PiecewiseFilter, SampledReferences,
};
use crate::linalg::{count_pinv_calls, fro_norm_sq, spectral_norm, trace_abt, Matrix};
use crate::signal::{LipschitzEstimates, Partition, SignalSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub label: String,
    pub per_signal: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub pinv_calls: usize,
    /// Seconds spent building and applying the filter.
    pub wall_time: f64,
}

impl ErrorReport {
    pub fn new(
        label: impl Into<String>,
        per_signal: Vec<f64>,
        pinv_calls: usize,
        wall_time: f64,
    ) -> Self {
        let n = per_signal.len().max(1) as f64;
        let mean = per_signal.iter().sum::<f64>() / n;
        let max = per_signal.iter().copied().fold(0.0, f64::max);
        ErrorReport {
            label: label.into(),
            per_signal,
            mean,
            max,
            pinv_calls,
            wall_time,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// CSV with columns `label,k,error` (1-based `k`).
pub fn reports_to_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("label,k,error\n");
    for r in reports {
        for (k, e) in r.per_signal.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", r.label, k + 1, e);
        }
    }
    out
}

/// CSV summary with columns `label,mean,max,pinv_calls,wall_time`.
pub fn reports_summary_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("label,mean,max,pinv_calls,wall_time\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.label, r.mean, r.max, r.pinv_calls, r.wall_time
        );
    }
    out
}

/// `|x_k - x_hat_k|_F^2`.
pub fn per_signal_error(x_k: &Matrix, x_hat_k: &Matrix) -> Result<f64> {
    if x_k.shape() != x_hat_k.shape() {
        return Err(Error::invalid(format!(
            "reference is {}x{}, estimate is {}x{}",
            x_k.nrows(),
            x_k.ncols(),
            x_hat_k.nrows(),
            x_hat_k.ncols()
        )));
    }
    Ok(fro_norm_sq(&(x_k - x_hat_k)))
}

pub fn errors_for(x: &SignalSet, estimates: &[Matrix]) -> Result<Vec<f64>> {
    if estimates.len() != x.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} signals",
            estimates.len(),
            x.len()
        )));
    }
    x.ensembles()
        .par_iter()
        .zip(estimates.par_iter())
        .map(|(xk, ek)| per_signal_error(xk, ek))
        .collect()
}

/// Operator norm used for `|B_j|` in the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GainNorm {
    Spectral,
    Frobenius,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalTerms {
    /// `(lambda_j + gamma_j |B_j|^2) dt_j`.
    pub lipschitz: f64,
    /// `tr(E_zz)`.
    pub e_zz_trace: f64,
    /// `tr(E_zw E_ww^+ E_zw^T)`.
    pub explained: f64,
}

impl IntervalTerms {
    pub fn total(&self) -> f64 {
        self.lipschitz + (self.e_zz_trace - self.explained).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound: f64,
    pub per_interval: Vec<IntervalTerms>,
    /// Time average of `|X_k - X_hat_k|_F^2 / q`.
    pub empirical_error: f64,
    /// Time average of `|X_k - X_hat_k|_F^2`.
    pub empirical_error_raw: f64,
    pub norm: GainNorm,
}

/// Maximum over intervals of
/// `(lambda_j + gamma_j |B_j|^2) dt_j + tr(E_zz) - tr(E_zw E_ww^+ E_zw^T)`,
/// together with the measured time-averaged error of `estimates`.
pub fn error_bound(
    lip: &LipschitzEstimates,
    filter: &PiecewiseFilter,
    covs: &[CovPair],
    x: &SignalSet,
    estimates: &[Matrix],
    norm: GainNorm,
) -> Result<BoundReport> {
    let intervals = filter.partition().interval_count();
    if lip.lambda.len() != intervals || lip.gamma.len() != intervals || covs.len() != intervals {
        return Err(Error::invalid(format!(
            "{intervals} intervals but {} lambda, {} gamma and {} covariance pairs",
            lip.lambda.len(),
            lip.gamma.len(),
            covs.len()
        )));
    }
    let grid = x.grid();
    let per_interval = filter
        .subfilters()
        .iter()
        .zip(covs)
        .enumerate()
        .map(|(j, (sub, cov))| {
            let b_norm = match norm {
                GainNorm::Spectral => spectral_norm(&sub.gain)?,
                GainNorm::Frobenius => sub.gain.norm(),
            };
            let dt = filter.partition().delta_t(grid, j);
            let e_zz_trace = cov.e_zz.trace();
            let residual = residual_for_gain(cov, &sub.gain);
            Ok(IntervalTerms {
                lipschitz: (lip.lambda[j] + lip.gamma[j] * b_norm * b_norm) * dt,
                e_zz_trace,
                explained: e_zz_trace - residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = per_interval
        .iter()
        .map(IntervalTerms::total)
        .fold(0.0, f64::max);

    let raw = errors_for(x, estimates)?;
    let q = x.cols() as f64;
    let scaled: Vec<f64> = raw.iter().map(|e| e / q).collect();
    Ok(BoundReport {
        bound,
        per_interval,
        empirical_error: grid.time_average(&scaled)?,
        empirical_error_raw: grid.time_average(&raw)?,
        norm,
    })
}

/// Where the initial knot estimate comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate {
    /// Odd-column reconstruction of the first reference ensemble.
    Reconstruct,
    /// The first reference ensemble itself.
    Oracle,
    Given(Matrix),
}

/// Where each interval's covariance pair comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSource {
    /// Odd-column reconstruction of the reference at each right knot.
    Reconstruct,
    /// The true reference at each right knot.
    Oracle,
    /// Observation-only estimate under additive noise.
    Additive { xi_power: f64, sign: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildProtocol {
    pub initial: InitialEstimate,
    pub references: ReferenceSource,
}

impl Default for BuildProtocol {
    fn default() -> Self {
        BuildProtocol {
            initial: InitialEstimate::Reconstruct,
            references: ReferenceSource::Reconstruct,
        }
    }
}

impl BuildProtocol {
    pub fn oracle() -> Self {
        BuildProtocol {
            initial: InitialEstimate::Oracle,
            references: ReferenceSource::Oracle,
        }
    }

    pub fn initial_estimate(&self, x: &SignalSet) -> Result<Matrix> {
        match &self.initial {
            InitialEstimate::Reconstruct => reconstruct_reference(x.ensemble(0)),
            InitialEstimate::Oracle => Ok(x.ensemble(0).clone()),
            InitialEstimate::Given(m) => Ok(m.clone()),
        }
    }

    /// Reference estimate the baseline filters use for ensemble `x_k`.
    pub fn baseline_reference(&self, x_k: &Matrix) -> Result<Matrix> {
        match self.references {
            ReferenceSource::Oracle => Ok(x_k.clone()),
            _ => reconstruct_reference(x_k),
        }
    }

    fn estimator(&self, x: &SignalSet, partition: &Partition) -> Result<Box<dyn KnotCovariance>> {
        Ok(match self.references {
            ReferenceSource::Reconstruct => {
                Box::new(SampledReferences::reconstructed(x, partition)?)
            }
            ReferenceSource::Oracle => Box::new(SampledReferences::oracle(x, partition)),
            ReferenceSource::Additive { xi_power, sign } => {
                Box::new(AdditiveNoise { xi_power, sign })
            }
        })
    }

    /// Builds the piecewise filter for `partition`.
    pub fn build(
        &self,
        x: &SignalSet,
        y: &SignalSet,
        partition: &Partition,
    ) -> Result<(PiecewiseFilter, Vec<CovPair>)> {
        check_pair(x, y)?;
        let x_hat_1 = self.initial_estimate(x)?;
        let estimator = self.estimator(x, partition)?;
        build_piecewise_traced(y, partition, &x_hat_1, estimator.as_ref())
    }
}

fn check_pair(x: &SignalSet, y: &SignalSet) -> Result<()> {
    if x.len() != y.len() || x.cols() != y.cols() {
        return Err(Error::invalid(format!(
            "reference set ({} points, q={}) and observed set ({} points, q={}) do not match",
            x.len(),
            x.cols(),
            y.len(),
            y.cols()
        )));
    }
    Ok(())
}

/// Outcome of one piecewise build-and-apply run.
#[derive(Debug, Clone)]
pub struct PiecewiseRun {
    pub filter: PiecewiseFilter,
    pub covs: Vec<CovPair>,
    pub estimates: Vec<Matrix>,
    pub report: ErrorReport,
}

pub fn run_piecewise(
    x: &SignalSet,
    y: &SignalSet,
    partition: &Partition,
    protocol: &BuildProtocol,
) -> Result<PiecewiseRun> {
    let start = Instant::now();
    let (built, pinv_calls) = count_pinv_calls(|| protocol.build(x, y, partition));
    let (filter, covs) = built?;
    let estimates = filter.apply_set(y)?;
    let wall_time = start.elapsed().as_secs_f64();
    let label = format!("piecewise(p={})", partition.knot_count());
    let report = ErrorReport::new(label, errors_for(x, &estimates)?, pinv_calls, wall_time);
    Ok(PiecewiseRun {
        filter,
        covs,
        estimates,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub p: usize,
    pub mean: f64,
    pub max: f64,
    pub pinv_calls: usize,
    pub wall_time: f64,
}

/// Mean and maximum error for uniform partitions with each knot count in
/// `p_list`.
pub fn convergence_study(
    x: &SignalSet,
    y: &SignalSet,
    p_list: &[usize],
    protocol: &BuildProtocol,
) -> Result<Vec<ConvergenceRow>> {
    let partitions = p_list
        .iter()
        .map(|&p| Partition::uniform(x.len(), p))
        .collect::<Result<Vec<_>>>()?;
    convergence_study_partitions(x, y, &partitions, protocol)
}

pub fn convergence_study_partitions(
    x: &SignalSet,
    y: &SignalSet,
    partitions: &[Partition],
    protocol: &BuildProtocol,
) -> Result<Vec<ConvergenceRow>> {
    partitions
        .iter()
        .map(|partition| {
            let run = run_piecewise(x, y, partition, protocol)?;
            Ok(ConvergenceRow {
                p: partition.knot_count(),
                mean: run.report.mean,
                max: run.report.max,
                pinv_calls: run.report.pinv_calls,
                wall_time: run.report.wall_time,
            })
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("p,mean,max,pinv_calls,wall_time\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.p, r.mean, r.max, r.pinv_calls, r.wall_time
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    Gol,
    Averaging,
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gol" => Ok(Baseline::Gol),
            "averaging" => Ok(Baseline::Averaging),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// Runs the piecewise filter and the requested baselines on the same data
/// and reference-estimate protocol. The piecewise report comes first.
pub fn compare_filters(
    x: &SignalSet,
    y: &SignalSet,
    partition: &Partition,
    protocol: &BuildProtocol,
    baselines: &[Baseline],
) -> Result<Vec<ErrorReport>> {
    let mut reports = vec![run_piecewise(x, y, partition, protocol)?.report];
    if baselines.is_empty() {
        return Ok(reports);
    }
    let refs = x
        .ensembles()
        .par_iter()
        .map(|xk| protocol.baseline_reference(xk))
        .collect::<Result<Vec<_>>>()?;
    for baseline in baselines {
        let start = Instant::now();
        let (estimates, calls, label) = match baseline {
            Baseline::Gol => {
                let (est, calls) = gol_over_set(&refs, y.ensembles())?;
                (est, calls, "gol")
            }
            Baseline::Averaging => {
                let (res, calls) = count_pinv_calls(|| averaging_estimate(&refs, y.ensembles()));
                (res?.1, calls, "averaging")
            }
        };
        let wall_time = start.elapsed().as_secs_f64();
        reports.push(ErrorReport::new(
            label,
            errors_for(x, &estimates)?,
            calls,
            wall_time,
        ));
    }
    Ok(reports)
}

/// `|Z - B W|_F^2`, the unnormalized increment objective.
pub fn objective(z: &Matrix, gain: &Matrix, w: &Matrix) -> f64 {
    let r = z - gain * w;
    trace_abt(&r, &r)
}
