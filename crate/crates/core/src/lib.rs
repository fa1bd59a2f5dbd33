//! Piecewise linear interpolation filtering for large sets of stochastic
//! signals.
//!
//! A set of `N` observed signals `y(t_k)` is filtered by `p - 1` affine
//! sub-filters anchored at `p` knots, so only `p` covariance pairs (and `p - 1`
//! pseudo-inverses) are needed however large `N` is. The crate also provides
//! the per-signal (GOL) and set-averaged baseline filters, covariance
//! estimators, the interval error bound and convergence sweeps.

pub mod analysis;
pub mod covariance;
pub mod error;
pub mod filters;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod signal;

pub use analysis::{
    compare_filters, convergence_study, convergence_study_partitions, error_bound,
    per_signal_error, run_piecewise, Baseline, BoundReport, BuildProtocol, ConvergenceRow,
    ErrorReport, GainNorm, InitialEstimate, ReferenceSource,
};
pub use covariance::{
    build_cov_pair, cov_zw_additive, reconstruct_reference, residual_value, sample_cov, CovPair,
};
pub use error::{Error, Result};
pub use filters::{
    averaging_estimate, build_piecewise, build_piecewise_traced, gol_estimate, gol_over_set,
    solve_gain, AdditiveNoise, KnotCovariance, PiecewiseFilter, SampledReferences, SubFilter,
};
pub use linalg::{fro_norm_sq, pinv, pinv_with_tol, psd_sqrt, Matrix};
pub use signal::{
    apply_noise, estimate_lipschitz, gen_lipschitz_set, LipschitzEstimates, NoiseModel, Partition,
    SignalSet, TimeGrid,
};
