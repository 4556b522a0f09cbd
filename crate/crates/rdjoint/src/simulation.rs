//! The simulation study: data-generating process, empirical size and
//! power experiments, and size-adjusted power.
//!
//! The running variable is a two-sided truncated normal: `X+ ~ sigma|N|`
//! truncated to `[0, 1]`, `X- = -X+` in distribution, and a manipulation
//! indicator `M = 1{U >= p_manip}` picks the right side. Covariates are
//! `Z_k = lambda(X) + Ztilde_k` with equicorrelated Gaussian noise
//! (`corr = rho`), and the last covariate gains a jump `a * M`. The joint
//! null (no density jump, no covariate jumps) holds iff `p_manip = 0.5`
//! and `a = 0`.
//!
//! Experiments are embarrassingly parallel and fully deterministic:
//! replication `r` draws its data from the RNG stream
//! `(mix(seed, DOMAIN_DGP), r)` and its Monte Carlo critical values from
//! `(mix(seed, DOMAIN_MC), r)`, so aggregates are bitwise identical for
//! any thread count.

use crate::boundary::{rot_bandwidth, tau_f, tau_z, ROT_C_DEFAULT};
use crate::covariance::{covariance_block_z, jackknife_variance_f, NEIGHBORS_M_DEFAULT};
use crate::error::RdError;
use crate::joint::{
    chi2_quantile, mc_max_crits_both, normal_quantile, quantile_by_rank, wald_stat_raw, Procedure,
    StatisticVector,
};
use crate::kernel::KernelKind;
use crate::rng::{mix, stream_rng, DOMAIN_DGP, DOMAIN_MC};
use crate::sample::Sample;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;

/// Lee-style conditional-mean polynomial: coefficients on `x^1 .. x^5`,
/// constant term structurally zero so `lambda(0) = 0`.
pub const LAMBDA_LEE: [f64; 5] = [1.27, 7.18, 20.21, 21.54, 7.33];

/// Scale of the truncated normal running variable.
pub const SIGMA_X_DEFAULT: f64 = 0.12;

/// Monte Carlo draws per replication for max-test critical values inside
/// experiments. Smaller than the data-analysis default; the induced
/// quantile noise is well inside the experiment tolerances.
pub const EXPERIMENT_MC_DRAWS_DEFAULT: usize = 2000;

/// Data-generating process for the simulation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    /// Number of covariates.
    pub d: usize,
    /// Pairwise correlation of the covariate noise, in `[0, 1)`.
    pub rho: f64,
    /// Manipulation probability: a unit lands left of the cutoff with
    /// probability `p_manip`, in `(0, 0.5]`. At `0.5` the density is
    /// continuous; below it the right side gains mass.
    pub p_manip: f64,
    /// Mean jump of the last covariate for right-side units, `>= 0`.
    pub a: f64,
    /// Coefficients of `lambda(x)` on `x^1, x^2, ...` (no constant term).
    pub lambda_coeffs: Vec<f64>,
    /// Scale of the truncated normal running variable.
    pub sigma_x: f64,
    pub seed: u64,
}

impl DgpConfig {
    /// The joint-null configuration: no manipulation, no covariate jump.
    pub fn null_config(n: usize, d: usize, rho: f64, seed: u64) -> Self {
        DgpConfig {
            n,
            d,
            rho,
            p_manip: 0.5,
            a: 0.0,
            lambda_coeffs: LAMBDA_LEE.to_vec(),
            sigma_x: SIGMA_X_DEFAULT,
            seed,
        }
    }

    /// True iff every continuity restriction holds under this DGP.
    pub fn is_null(&self) -> bool {
        self.p_manip == 0.5 && self.a == 0.0
    }

    pub fn validate(&self) -> Result<(), RdError> {
        if self.n < 2 {
            return Err(RdError::InvalidConfig(format!(
                "n: need at least 2 observations, got {}",
                self.n
            )));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(RdError::InvalidConfig(format!(
                "rho: must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(self.p_manip > 0.0 && self.p_manip <= 0.5) {
            return Err(RdError::InvalidConfig(format!(
                "p_manip: must lie in (0, 0.5], got {}",
                self.p_manip
            )));
        }
        if !self.a.is_finite() || self.a < 0.0 {
            return Err(RdError::InvalidConfig(format!(
                "a: must be finite and nonnegative, got {}",
                self.a
            )));
        }
        if self.a != 0.0 && self.d == 0 {
            return Err(RdError::InvalidConfig(
                "a: a covariate jump needs at least one covariate (d >= 1)".to_string(),
            ));
        }
        if !(self.sigma_x > 0.0) || !self.sigma_x.is_finite() {
            return Err(RdError::InvalidConfig(format!(
                "sigma_x: must be positive and finite, got {}",
                self.sigma_x
            )));
        }
        if self.lambda_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RdError::InvalidConfig(
                "lambda_coeffs: coefficients must be finite".to_string(),
            ));
        }
        Ok(())
    }
}

/// Evaluate `lambda(x) = c_1 x + c_2 x^2 + ...` by Horner's rule. The
/// constant term is structurally zero, so `lambda(0) = 0` for any
/// coefficients.
pub fn lambda_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = (acc + c) * x;
    }
    acc
}

/// Combined boundary density scale of the running variable at the cutoff:
/// `f0 = phi(0) / (sigma * (Phi(1/sigma) - 1/2))`. The one-sided boundary
/// densities are `(1 - p) f0` on the right and `p f0` on the left, so the
/// density jump is `(1 - 2 p_manip) f0`.
pub fn boundary_density_scale(sigma_x: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    phi0 / (sigma_x * (normal.cdf(1.0 / sigma_x) - 0.5))
}

/// Density jump at the cutoff induced by a manipulation probability.
pub fn density_jump_for_p(p_manip: f64, sigma_x: f64) -> f64 {
    (1.0 - 2.0 * p_manip) * boundary_density_scale(sigma_x)
}

/// Invert the density-jump relation: find the `p_manip` whose DGP density
/// jump equals `tau_f_target`. The relation is strictly decreasing in
/// `p_manip`, so a bisection converges to machine precision.
pub fn p_manip_for_density_jump(tau_f_target: f64, sigma_x: f64) -> Result<f64, RdError> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(RdError::InvalidConfig(format!(
            "sigma_x: must be positive and finite, got {sigma_x}"
        )));
    }
    let f0 = boundary_density_scale(sigma_x);
    if !tau_f_target.is_finite() || tau_f_target < 0.0 || tau_f_target >= f0 {
        return Err(RdError::InvalidConfig(format!(
            "tau_f: target density jump must lie in [0, {f0:.6}) for sigma_x = {sigma_x}, \
             got {tau_f_target}"
        )));
    }
    let mut lo = 1e-12;
    let mut hi = 0.5;
    for _ in 0..200 {
        let midpoint = 0.5 * (lo + hi);
        if density_jump_for_p(midpoint, sigma_x) > tau_f_target {
            lo = midpoint;
        } else {
            hi = midpoint;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn truncated_half_normal(rng: &mut impl Rng, sigma: f64) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        let out = sigma * v.abs();
        if out <= 1.0 {
            return out;
        }
    }
}

/// Draw one sample from the DGP using the caller's RNG. Draw order is part
/// of the determinism contract: first per unit `(X+, X-, U)`, then per
/// unit the shared factor `w0` followed by `w_1 .. w_d`.
pub(crate) fn simulate_with(cfg: &DgpConfig, rng: &mut impl Rng) -> Sample {
    let n = cfg.n;
    let d = cfg.d;
    let mut x = vec![0.0f64; n];
    let mut manipulated = vec![false; n];
    for i in 0..n {
        let xp = truncated_half_normal(rng, cfg.sigma_x);
        let xm = truncated_half_normal(rng, cfg.sigma_x);
        let u: f64 = rng.gen();
        let m = u >= cfg.p_manip;
        x[i] = if m { xp } else { -xm };
        manipulated[i] = m;
    }
    let shared = cfg.rho.sqrt();
    let own = (1.0 - cfg.rho).sqrt();
    let mut z = vec![vec![0.0f64; n]; d];
    for i in 0..n {
        let w0: f64 = rng.sample(StandardNormal);
        let lam = lambda_eval(&cfg.lambda_coeffs, x[i]);
        for (k, column) in z.iter_mut().enumerate() {
            let wk: f64 = rng.sample(StandardNormal);
            column[i] = lam + shared * w0 + own * wk;
            if k + 1 == d && manipulated[i] {
                column[i] += cfg.a;
            }
        }
    }
    let names = (1..=d).map(|k| format!("z{k}")).collect();
    Sample::new(x, z, names).expect("simulated sample is internally consistent")
}

/// Draw one sample from the DGP (the same data replication 0 of an
/// experiment with this config sees).
pub fn simulate_sample(cfg: &DgpConfig) -> Result<Sample, RdError> {
    cfg.validate()?;
    let mut rng = stream_rng(mix(cfg.seed, DOMAIN_DGP), 0);
    Ok(simulate_with(cfg, &mut rng))
}

/// Estimation settings shared by every replication of an experiment — the
/// polynomial orders, kernel, neighbor count, rule-of-thumb bandwidth
/// constant, and per-replication Monte Carlo draw count.
#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Polynomial order of the covariate-mean fits.
    pub l: usize,
    /// Polynomial order of the density fit.
    pub p: usize,
    pub kernel: KernelKind,
    pub neighbors_m: usize,
    /// Monte Carlo draws per replication for max-test critical values.
    pub mc_draws: usize,
    /// Constant of the rule-of-thumb bandwidth.
    pub rot_c: f64,
    /// Keep per-replication statistics (needed for size adjustment).
    pub retain_statistics: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            l: 2,
            p: 3,
            kernel: KernelKind::Triangular,
            neighbors_m: NEIGHBORS_M_DEFAULT,
            mc_draws: EXPERIMENT_MC_DRAWS_DEFAULT,
            rot_c: ROT_C_DEFAULT,
            retain_statistics: false,
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<(), RdError> {
        if self.l < 1 || self.p < 1 {
            return Err(RdError::InvalidConfig(format!(
                "l, p: polynomial orders must be at least 1, got l = {}, p = {}",
                self.l, self.p
            )));
        }
        if self.neighbors_m < 1 {
            return Err(RdError::InvalidConfig(
                "neighbors_m: must be at least 1".to_string(),
            ));
        }
        if self.mc_draws < 1 {
            return Err(RdError::InvalidConfig(
                "mc_draws: must be at least 1".to_string(),
            ));
        }
        if !(self.rot_c > 0.0) || !self.rot_c.is_finite() {
            return Err(RdError::InvalidConfig(format!(
                "rot_c: must be positive and finite, got {}",
                self.rot_c
            )));
        }
        Ok(())
    }
}

/// Per-replication test statistics retained for size adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepStats {
    /// `max_j |t_j| / sqrt(V_jj)` — the statistic behind both naive and
    /// bonferroni, whose size-adjusted power therefore coincides.
    pub max_abs_z: f64,
    /// `T' V^-1 T`; absent when `V` was not positive definite.
    pub wald: Option<f64>,
    /// `max_j t_j^2`.
    pub max: f64,
    /// `max_j t_j^2 / V_jj`.
    pub max_studentized: f64,
}

/// Aggregated outcome of one experiment cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: DgpConfig,
    pub alpha: f64,
    pub requested: Vec<Procedure>,
    /// Requested replication count.
    pub replications: usize,
    /// Replications where estimation itself failed; excluded from every
    /// denominator. Must stay below 1% or the experiment aborts.
    pub estimator_failures: usize,
    /// Rejection counts per requested procedure.
    pub rejections: BTreeMap<Procedure, usize>,
    /// Replications in which each procedure produced a decision (a
    /// non-positive-definite covariance, for example, removes a
    /// replication from the Wald denominator only).
    pub valid: BTreeMap<Procedure, usize>,
    /// Per-replication statistics, present when requested.
    pub retained: Option<Vec<RepStats>>,
}

impl ExperimentResult {
    /// Empirical rejection rate; `None` if the procedure was not requested
    /// or never produced a decision.
    pub fn rate(&self, procedure: Procedure) -> Option<f64> {
        let valid = *self.valid.get(&procedure)?;
        if valid == 0 {
            return None;
        }
        Some(*self.rejections.get(&procedure)? as f64 / valid as f64)
    }

    /// Monte Carlo standard error of a rate.
    pub fn rate_se(&self, procedure: Procedure) -> Option<f64> {
        let rate = self.rate(procedure)?;
        let valid = *self.valid.get(&procedure)? as f64;
        Some((rate * (1.0 - rate) / valid).sqrt())
    }
}

struct RepDecisions {
    /// Indexed by `Procedure::ALL` order; `None` means the procedure could
    /// not produce a decision on this replication.
    decisions: [Option<bool>; 5],
    stats: RepStats,
}

struct RepContext<'a> {
    cfg: &'a DgpConfig,
    opts: &'a SimOptions,
    alpha: f64,
    crit_naive: f64,
    crit_bonf: f64,
    crit_chi2: f64,
    want_mc: bool,
    dgp_seed: u64,
    mc_base: u64,
}

fn run_replication(ctx: &RepContext<'_>, rep: u64) -> Result<RepDecisions, RdError> {
    let cfg = ctx.cfg;
    let opts = ctx.opts;
    let mut rng = stream_rng(ctx.dgp_seed, rep);
    let sample = simulate_with(cfg, &mut rng);
    let x = sample.x();
    let n = sample.n();
    let d = sample.d();

    let h_mean = rot_bandwidth(x, opts.l, opts.rot_c);
    let h_f = rot_bandwidth(x, opts.p, opts.rot_c);
    if !(h_mean > 0.0 && h_f > 0.0) {
        return Err(RdError::DegenerateSample(
            "rule-of-thumb bandwidth is zero (constant running variable)".to_string(),
        ));
    }
    let h_means = vec![h_mean; d];
    let mut h_all = h_means.clone();
    h_all.push(h_f);

    let mut taus = Vec::with_capacity(d + 1);
    for k in 0..d {
        taus.push(tau_z(x, sample.z_col(k), h_mean, opts.l, opts.kernel)?.tau);
    }
    let fjump = tau_f(x, h_f, opts.p, opts.kernel)?;
    taus.push(fjump.tau);

    let vz = covariance_block_z(
        x,
        sample.z(),
        &h_means,
        opts.l,
        opts.neighbors_m,
        opts.kernel,
    )?;
    let vf = jackknife_variance_f(
        x,
        h_f,
        opts.p,
        opts.kernel,
        &fjump.plus_fit,
        &fjump.minus_fit,
    )?;
    let mut diag = Vec::with_capacity(d + 1);
    for k in 0..d {
        let v = vz[(k, k)];
        if !(v.is_finite() && v > 0.0) {
            return Err(RdError::ComponentDegenerate {
                name: format!("covariate z{}", k + 1),
                detail: format!("variance {v} is not positive"),
            });
        }
        diag.push(v);
    }
    if !(vf.is_finite() && vf > 0.0) {
        return Err(RdError::ComponentDegenerate {
            name: "density".to_string(),
            detail: format!("variance {vf} is not positive"),
        });
    }
    diag.push(vf);

    let t = StatisticVector::from_taus(n, &h_all, &taus)?;
    let mut max_abs_z = 0.0f64;
    let mut max_sq = 0.0f64;
    let mut max_stud = 0.0f64;
    for (&tj, &vjj) in t.t.iter().zip(&diag) {
        max_abs_z = max_abs_z.max(tj.abs() / vjj.sqrt());
        max_sq = max_sq.max(tj * tj);
        max_stud = max_stud.max(tj * tj / vjj);
    }

    let mut v_full = DMatrix::<f64>::zeros(d + 1, d + 1);
    v_full.view_mut((0, 0), (d, d)).copy_from(&vz);
    v_full[(d, d)] = vf;
    let wald = wald_stat_raw(&t.t, &v_full);

    let mut decisions = [None; 5];
    decisions[0] = Some(max_abs_z > ctx.crit_naive);
    decisions[1] = Some(max_abs_z > ctx.crit_bonf);
    decisions[2] = wald.map(|w| w > ctx.crit_chi2);
    if ctx.want_mc {
        if ctx.alpha >= 1.0 {
            decisions[3] = Some(true);
            decisions[4] = Some(true);
        } else {
            match mc_max_crits_both(
                &v_full,
                &diag,
                opts.mc_draws,
                mix(ctx.mc_base, rep),
                ctx.alpha,
            ) {
                Ok((crit_raw, crit_stud)) => {
                    decisions[3] = Some(max_sq > crit_raw);
                    decisions[4] = Some(max_stud > crit_stud);
                }
                // The max tests could not produce a decision on this
                // replication; the others still count.
                Err(RdError::NotPsd { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RepDecisions {
        decisions,
        stats: RepStats {
            max_abs_z,
            wald,
            max: max_sq,
            max_studentized: max_stud,
        },
    })
}

/// Run one experiment cell: `replications` independent draws from `cfg`,
/// each pushed through the full estimation pipeline and the requested
/// procedures at level `alpha` (`(0, 1]`; `1` is the degenerate
/// always-reject limit). Aborts if 1% or more of the replications fail to
/// produce estimates.
pub fn run_experiment(
    cfg: &DgpConfig,
    opts: &SimOptions,
    alpha: f64,
    replications: usize,
    procedures: &[Procedure],
) -> Result<ExperimentResult, RdError> {
    cfg.validate()?;
    opts.validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RdError::InvalidConfig(format!(
            "alpha: must lie in (0, 1], got {alpha}"
        )));
    }
    if replications == 0 {
        return Err(RdError::InvalidConfig(
            "replications: must be at least 1".to_string(),
        ));
    }
    if procedures.is_empty() {
        return Err(RdError::InvalidConfig(
            "procedures: at least one procedure is required".to_string(),
        ));
    }
    let df = cfg.d + 1;
    let ctx = RepContext {
        cfg,
        opts,
        alpha,
        crit_naive: if alpha >= 1.0 {
            f64::NEG_INFINITY
        } else {
            normal_quantile(1.0 - alpha / 2.0)
        },
        crit_bonf: if alpha >= 1.0 {
            f64::NEG_INFINITY
        } else {
            normal_quantile(1.0 - alpha / (2.0 * df as f64))
        },
        crit_chi2: if alpha >= 1.0 {
            f64::NEG_INFINITY
        } else {
            chi2_quantile(df, 1.0 - alpha)
        },
        want_mc: procedures.contains(&Procedure::Max)
            || procedures.contains(&Procedure::MaxStudentized),
        dgp_seed: mix(cfg.seed, DOMAIN_DGP),
        mc_base: mix(cfg.seed, DOMAIN_MC),
    };

    let outcomes: Vec<Result<RepDecisions, RdError>> = (0..replications)
        .into_par_iter()
        .map(|r| run_replication(&ctx, r as u64))
        .collect();

    let mut rejections = BTreeMap::new();
    let mut valid = BTreeMap::new();
    for &p in procedures {
        rejections.insert(p, 0usize);
        valid.insert(p, 0usize);
    }
    let mut failures = 0usize;
    let mut first_failure: Option<String> = None;
    let mut retained = opts
        .retain_statistics
        .then(|| Vec::with_capacity(replications));
    for outcome in outcomes {
        match outcome {
            Err(e) => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(e.to_string());
                }
            }
            Ok(rep) => {
                for (idx, proc) in Procedure::ALL.iter().enumerate() {
                    if let (Some(decision), Some(count)) = (rep.decisions[idx], valid.get_mut(proc))
                    {
                        *count += 1;
                        if decision {
                            *rejections.get_mut(proc).expect("same keys") += 1;
                        }
                    }
                }
                if let Some(buffer) = &mut retained {
                    buffer.push(rep.stats);
                }
            }
        }
    }
    if failures > 0 && failures * 100 >= replications {
        return Err(RdError::ExperimentAborted {
            failed: failures,
            total: replications,
            detail: first_failure.unwrap_or_default(),
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        alpha,
        requested: procedures.to_vec(),
        replications,
        estimator_failures: failures,
        rejections,
        valid,
        retained,
    })
}

/// Empirical size: `run_experiment` restricted to null configurations.
pub fn empirical_size(
    cfg: &DgpConfig,
    opts: &SimOptions,
    alpha: f64,
    replications: usize,
    procedures: &[Procedure],
) -> Result<ExperimentResult, RdError> {
    if !cfg.is_null() {
        return Err(RdError::InvalidConfig(format!(
            "size experiment requires the null configuration (p_manip = 0.5, a = 0), \
             got p_manip = {}, a = {}",
            cfg.p_manip, cfg.a
        )));
    }
    run_experiment(cfg, opts, alpha, replications, procedures)
}

/// Power curve over a grid of covariate-jump sizes `a`. Every grid point
/// reuses the base config (and in particular its seed), so the curves use
/// common random numbers; statistics are always retained so the curve can
/// be size-adjusted afterwards.
pub fn power_curve(
    base: &DgpConfig,
    a_grid: &[f64],
    opts: &SimOptions,
    alpha: f64,
    replications: usize,
    procedures: &[Procedure],
) -> Result<Vec<(f64, ExperimentResult)>, RdError> {
    if a_grid.is_empty() {
        return Err(RdError::InvalidConfig(
            "a_grid: at least one grid point is required".to_string(),
        ));
    }
    let mut opts = opts.clone();
    opts.retain_statistics = true;
    let mut out = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let mut cfg = base.clone();
        cfg.a = a;
        out.push((
            a,
            run_experiment(&cfg, &opts, alpha, replications, procedures)?,
        ));
    }
    Ok(out)
}

/// Size-adjusted rejection rates.
#[derive(Clone, Debug)]
pub struct SizeAdjusted {
    pub rates: BTreeMap<Procedure, f64>,
    /// The empirical null critical value each procedure was held to.
    pub critical_values: BTreeMap<Procedure, f64>,
    /// Procedures whose null statistics tie at the critical value, so the
    /// adjusted size is not exactly attainable.
    pub degenerate: Vec<Procedure>,
}

fn stat_series(retained: &[RepStats], procedure: Procedure) -> Vec<f64> {
    retained
        .iter()
        .filter_map(|s| match procedure {
            Procedure::Naive | Procedure::Bonferroni => Some(s.max_abs_z),
            Procedure::Wald => s.wald,
            Procedure::Max => Some(s.max),
            Procedure::MaxStudentized => Some(s.max_studentized),
        })
        .collect()
}

/// Replace each procedure's asymptotic critical value with the empirical
/// `1 - alpha` quantile of its statistic under the null replications, then
/// measure rejection rates on the alternative replications. Both
/// experiments must have retained statistics.
pub fn size_adjusted_power(
    null: &ExperimentResult,
    alternative: &ExperimentResult,
    alpha: f64,
) -> Result<SizeAdjusted, RdError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RdError::InvalidConfig(format!(
            "alpha: must lie in (0, 1], got {alpha}"
        )));
    }
    let null_stats = null.retained.as_deref().ok_or_else(|| {
        RdError::InvalidConfig(
            "size-adjusted power needs retained statistics in the null experiment".to_string(),
        )
    })?;
    let alt_stats = alternative.retained.as_deref().ok_or_else(|| {
        RdError::InvalidConfig(
            "size-adjusted power needs retained statistics in the alternative experiment"
                .to_string(),
        )
    })?;
    let mut rates = BTreeMap::new();
    let mut critical_values = BTreeMap::new();
    let mut degenerate = Vec::new();
    for &proc in &alternative.requested {
        if !null.requested.contains(&proc) {
            continue;
        }
        let mut nulls = stat_series(null_stats, proc);
        let alts = stat_series(alt_stats, proc);
        if nulls.is_empty() || alts.is_empty() {
            continue;
        }
        let count = nulls.len();
        let rank = ((((1.0 - alpha) * count as f64).ceil()) as usize).min(count);
        let crit = quantile_by_rank(&mut nulls, alpha);
        let above = nulls.iter().filter(|&&s| s > crit).count();
        if above != count - rank {
            degenerate.push(proc);
        }
        let rate = alts.iter().filter(|&&s| s > crit).count() as f64 / alts.len() as f64;
        rates.insert(proc, rate);
        critical_values.insert(proc, crit);
    }
    Ok(SizeAdjusted {
        rates,
        critical_values,
        degenerate,
    })
}
