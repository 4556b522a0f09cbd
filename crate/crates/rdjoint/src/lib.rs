//! Joint manipulation and covariate-balance diagnostics for regression
//! discontinuity designs.
//!
//! A credible RD design implies two kinds of smoothness at the cutoff: the
//! density of the running variable should be continuous (no manipulation)
//! and the means of predetermined covariates should be continuous (no
//! sorting on observables). This crate estimates all of those boundary
//! jumps at once — local polynomial estimates of the density jump and of
//! each covariate-mean jump — together with the joint covariance of the
//! scaled estimates, and then tests the single null hypothesis that every
//! jump is zero.
//!
//! Supported procedures:
//!
//! * `wald` — the quadratic form `T' V^-1 T` against a chi-squared
//!   critical value with `d + 1` degrees of freedom,
//! * `max` — the largest squared component of `T` against a Monte Carlo
//!   critical value drawn from `N(0, V)`,
//! * `max_studentized` — the same with per-component studentization,
//! * `naive` — per-component two-sided z-tests at level `alpha` (no
//!   multiplicity control; included as a baseline),
//! * `bonferroni` — per-component z-tests at level `alpha / (d + 1)`.
//!
//! The crate also ships a simulation harness (`simulation`) that measures
//! empirical size and power of the procedures under a configurable
//! manipulation/imbalance process, and a CLI (`rdjoint`) exposing both the
//! data-analysis path and the experiments.
//!
//! Determinism is a design contract: given a seed, every result — including
//! Monte Carlo critical values and full simulation tables — is bit-for-bit
//! reproducible regardless of thread count.

// `!(x > 0.0)`-style guards deliberately reject NaN along with nonpositive
// values; the negated comparison is load-bearing.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod config;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod joint;
pub mod kernel;
pub mod report;
pub mod rng;
pub mod sample;
pub mod simulation;

pub use boundary::{
    fit_density_boundary, fit_mean_boundary, rot_bandwidth, tau_f, tau_z, BoundaryFit, Ecdf,
    FitTarget, JumpEstimate,
};
pub use config::{BandwidthSpec, RunConfig};
pub use covariance::{
    assemble_v, covariance_block_z, jackknife_variance_f, nn_sigma_pair, CovarianceEstimate,
};
pub use error::RdError;
pub use joint::{
    bonferroni_test, max_test, mc_critical_value, naive_test, run_joint_diagnostics,
    statistic_vector, wald_test, Procedure, StatisticVector, TestResult,
};
pub use kernel::{kernel_eval, side_gram, KernelKind, Side, SideGram};
pub use report::{ComponentReport, ProcedureReport, Report};
pub use sample::Sample;
pub use simulation::{
    empirical_size, lambda_eval, p_manip_for_density_jump, power_curve, simulate_sample,
    size_adjusted_power, DgpConfig, ExperimentResult, SimOptions,
};
