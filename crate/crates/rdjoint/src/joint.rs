//! Joint test procedures on the scaled statistic vector.
//!
//! The statistic vector stacks the scaled jumps,
//! `T = sqrt(n) * (sqrt(h_1) tau_1, ..., sqrt(h_d) tau_d, sqrt(h_f) tau_f)'`,
//! and every procedure tests the single null that all components are zero:
//!
//! * **wald** — `T' V^-1 T` against the `1 - alpha` quantile of a
//!   chi-squared with `d + 1` degrees of freedom. Requires `V` positive
//!   definite; `V` is never regularized — a non-PD matrix is an error.
//! * **max** — `max_j T_j^2` against the `1 - alpha` quantile of
//!   `max_j G_j^2`, `G ~ N(0, V)`, approximated by Monte Carlo with a
//!   counter-based seed so the critical value is reproducible.
//! * **max_studentized** — same with `T_j^2 / V_jj` (scale-free variant).
//! * **naive** — each component's two-sided z-test at level `alpha`; no
//!   multiplicity control, included as the baseline whose size distortion
//!   motivates the joint tests.
//! * **bonferroni** — the same z-tests at level `alpha / (d + 1)`.
//!
//! `alpha >= 1` is allowed as a degenerate saturation limit: a level-one
//! test rejects unconditionally, so every critical value becomes `-inf`.

use crate::boundary::{rot_bandwidth, tau_f, tau_z, ROT_C_DEFAULT};
use crate::config::RunConfig;
use crate::covariance::{assemble_v, covariance_block_z, jackknife_variance_f, CovarianceEstimate};
use crate::error::RdError;
use crate::report::{ComponentReport, ConfigEcho, ProcedureReport, Report};
use crate::rng::{mix, stream_rng, DOMAIN_MC};
use crate::sample::Sample;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use std::fmt;

/// Default number of Monte Carlo draws for max-type critical values.
pub const MC_DRAWS_DEFAULT: usize = 100_000;

/// Test procedures. `all()` lists them in the canonical reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Naive,
    Bonferroni,
    Wald,
    Max,
    MaxStudentized,
}

impl Procedure {
    pub const ALL: [Procedure; 5] = [
        Procedure::Naive,
        Procedure::Bonferroni,
        Procedure::Wald,
        Procedure::Max,
        Procedure::MaxStudentized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::Naive => "naive",
            Procedure::Bonferroni => "bonferroni",
            Procedure::Wald => "wald",
            Procedure::Max => "max",
            Procedure::MaxStudentized => "max_studentized",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Procedure {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self, RdError> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Procedure::Naive),
            "bonferroni" | "bonfe" => Ok(Procedure::Bonferroni),
            "wald" | "chisq" => Ok(Procedure::Wald),
            "max" => Ok(Procedure::Max),
            "max_studentized" | "max_inv" | "max.inv" | "maxinv" => Ok(Procedure::MaxStudentized),
            other => Err(RdError::InvalidConfig(format!(
                "procedures: unknown procedure {other:?}"
            ))),
        }
    }
}

/// The scaled statistic vector and the settings behind it.
#[derive(Clone, Debug)]
pub struct StatisticVector {
    /// `t[k] = sqrt(n * h_k) * tau_k`, density component last.
    pub t: DVector<f64>,
    pub n: usize,
    /// Bandwidths aligned with `t`.
    pub bandwidths: Vec<f64>,
}

impl StatisticVector {
    /// Scale raw jumps into the statistic vector.
    pub fn from_taus(n: usize, bandwidths: &[f64], taus: &[f64]) -> Result<Self, RdError> {
        if bandwidths.len() != taus.len() {
            return Err(RdError::LengthMismatch {
                x_len: taus.len(),
                other_len: bandwidths.len(),
                what: "bandwidth vector".to_string(),
            });
        }
        if n == 0 {
            return Err(RdError::DegenerateSample(
                "statistic vector needs a non-empty sample".to_string(),
            ));
        }
        for &h in bandwidths {
            if !(h > 0.0) || !h.is_finite() {
                return Err(RdError::InvalidConfig(format!(
                    "bandwidth: must be positive and finite, got {h}"
                )));
            }
        }
        let t = DVector::from_iterator(
            taus.len(),
            taus.iter()
                .zip(bandwidths)
                .map(|(&tau, &h)| (n as f64 * h).sqrt() * tau),
        );
        Ok(StatisticVector {
            t,
            n,
            bandwidths: bandwidths.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }
}

/// Estimate every jump and assemble the scaled statistic vector for a
/// sample. `bandwidths` holds `h_1, ..., h_d, h_f` (density last).
pub fn statistic_vector(
    sample: &Sample,
    bandwidths: &[f64],
    l: usize,
    p: usize,
    kind: crate::kernel::KernelKind,
) -> Result<StatisticVector, RdError> {
    let d = sample.d();
    if bandwidths.len() != d + 1 {
        return Err(RdError::LengthMismatch {
            x_len: d + 1,
            other_len: bandwidths.len(),
            what: "bandwidth vector (one per covariate plus the density)".to_string(),
        });
    }
    let mut taus = Vec::with_capacity(d + 1);
    for (k, &h) in bandwidths[..d].iter().enumerate() {
        let jump = tau_z(sample.x(), sample.z_col(k), h, l, kind)
            .map_err(|e| e.with_component(&format!("covariate {}", sample.z_names()[k])))?;
        taus.push(jump.tau);
    }
    let jump =
        tau_f(sample.x(), bandwidths[d], p, kind).map_err(|e| e.with_component("density"))?;
    taus.push(jump.tau);
    StatisticVector::from_taus(sample.n(), bandwidths, &taus)
}

/// Outcome of one test procedure.
#[derive(Clone, Debug, Serialize)]
pub struct TestResult {
    pub procedure: Procedure,
    /// The scalar test statistic (for naive/bonferroni, the largest
    /// absolute studentized component).
    pub statistic: f64,
    pub critical_value: f64,
    /// Present for wald (chi-squared tail) and the max tests (Monte Carlo
    /// exceedance fraction); absent for naive/bonferroni.
    pub p_value: Option<f64>,
    pub reject: bool,
    pub alpha: f64,
    pub mc_draws: Option<usize>,
    pub seed: Option<u64>,
    /// Studentized components `t_j / sqrt(V_jj)` for naive/bonferroni.
    pub component_stats: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

fn check_dims(t: &StatisticVector, v: &CovarianceEstimate) -> Result<usize, RdError> {
    let dim = t.dim();
    if v.dim() != dim {
        return Err(RdError::LengthMismatch {
            x_len: dim,
            other_len: v.dim(),
            what: "covariance matrix".to_string(),
        });
    }
    if dim == 0 {
        return Err(RdError::DegenerateSample(
            "statistic vector is empty".to_string(),
        ));
    }
    Ok(dim)
}

fn check_alpha(alpha: f64) -> Result<(), RdError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RdError::InvalidConfig(format!(
            "alpha: must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Chi-squared quantile, Newton-polished to near machine precision.
///
/// `ChiSquared::inverse_cdf` only resolves the quantile to roughly 1e-5, so
/// refine its output with Newton steps against the (machine-accurate)
/// regularized-incomplete-gamma cdf and the density.
pub(crate) fn chi2_quantile(df: usize, prob: f64) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    let mut x = dist.inverse_cdf(prob);
    for _ in 0..8 {
        let density = dist.pdf(x);
        if !(density > 0.0) || !density.is_finite() {
            break;
        }
        let step = (dist.cdf(x) - prob) / density;
        x -= step;
        if step.abs() <= 1e-14 * x.abs() {
            break;
        }
    }
    x
}

pub(crate) fn normal_quantile(prob: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(prob)
}

/// Wald statistic `t' V^-1 t` via Cholesky, or `None` when `V` is not
/// positive definite.
pub(crate) fn wald_stat_raw(t: &DVector<f64>, v: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(v.clone())?;
    Some(t.dot(&chol.solve(t)))
}

/// Wald (chi-squared) test: `T' V^-1 T` against `chi2_{d+1}(1 - alpha)`.
pub fn wald_test(
    t: &StatisticVector,
    v: &CovarianceEstimate,
    alpha: f64,
) -> Result<TestResult, RdError> {
    let dim = check_dims(t, v)?;
    check_alpha(alpha)?;
    let stat = wald_stat_raw(&t.t, &v.v).ok_or(RdError::NotPositiveDefinite)?;
    let chi = ChiSquared::new(dim as f64).expect("dim >= 1");
    let critical_value = if alpha >= 1.0 {
        f64::NEG_INFINITY
    } else {
        chi2_quantile(dim, 1.0 - alpha)
    };
    Ok(TestResult {
        procedure: Procedure::Wald,
        statistic: stat,
        critical_value,
        p_value: Some(chi.sf(stat)),
        reject: stat > critical_value,
        alpha,
        mc_draws: None,
        seed: None,
        component_stats: None,
        notes: Vec::new(),
    })
}

/// Symmetric PSD square root via the eigendecomposition. Eigenvalues below
/// `-1e-10 * trace` are a hard error; small negative eigenvalues inside
/// the tolerance are clamped to zero.
fn psd_sqrt(v: &DMatrix<f64>) -> Result<DMatrix<f64>, RdError> {
    let eig = nalgebra::SymmetricEigen::new(v.clone());
    let tol = -1e-10 * v.trace().abs();
    let mut min_eig = f64::INFINITY;
    for &lambda in eig.eigenvalues.iter() {
        min_eig = min_eig.min(lambda);
    }
    if min_eig < tol {
        return Err(RdError::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    let dim = v.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..dim {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..dim {
            scaled[(i, j)] *= s;
        }
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Generate the Monte Carlo max-statistic draws `max_j G_j^2` (and the
/// studentized variant) for `G ~ N(0, v)`. Draw `i` uses the RNG stream
/// `(seed, i)`, so the set of draws is independent of threading and
/// iteration order.
fn mc_max_draws_both(
    v: &DMatrix<f64>,
    mc_draws: usize,
    seed: u64,
    studentized_diag: Option<&[f64]>,
) -> Result<Vec<(f64, f64)>, RdError> {
    let a = psd_sqrt(v)?;
    let dim = v.nrows();
    let mut flat = vec![0.0f64; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            flat[r * dim + c] = a[(r, c)];
        }
    }
    let diag: Vec<f64> = match studentized_diag {
        Some(d) => d.to_vec(),
        None => vec![1.0; dim],
    };
    let draws: Vec<(f64, f64)> = (0..mc_draws)
        .into_par_iter()
        .with_min_len(8192)
        .map_init(
            || vec![0.0f64; dim],
            |xi, i| {
                let mut rng = stream_rng(seed, i as u64);
                for slot in xi.iter_mut() {
                    *slot = rng.sample::<f64, _>(StandardNormal);
                }
                let mut best_raw = f64::NEG_INFINITY;
                let mut best_stud = f64::NEG_INFINITY;
                for r in 0..dim {
                    let mut acc = 0.0;
                    for c in 0..dim {
                        acc += flat[r * dim + c] * xi[c];
                    }
                    let g2 = acc * acc;
                    if g2 > best_raw {
                        best_raw = g2;
                    }
                    let s = g2 / diag[r];
                    if s > best_stud {
                        best_stud = s;
                    }
                }
                (best_raw, best_stud)
            },
        )
        .collect();
    Ok(draws)
}

/// `ceil((1 - alpha) * len)`-th order statistic (1-indexed) of `values`;
/// `-inf` when the rank is zero (the `alpha >= 1` saturation limit).
pub(crate) fn quantile_by_rank(values: &mut [f64], alpha: f64) -> f64 {
    let len = values.len();
    let rank = ((1.0 - alpha) * len as f64).ceil() as usize;
    let rank = rank.min(len);
    if rank == 0 {
        return f64::NEG_INFINITY;
    }
    let (_, kth, _) = values.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    *kth
}

fn check_mc_draws(mc_draws: usize) -> Result<(), RdError> {
    if mc_draws == 0 {
        return Err(RdError::InvalidConfig(
            "mc_draws: must be at least 1".to_string(),
        ));
    }
    Ok(())
}

fn studentized_diag(v: &CovarianceEstimate) -> Result<Vec<f64>, RdError> {
    (0..v.dim())
        .map(|j| {
            let vjj = v.v[(j, j)];
            if vjj > 0.0 && vjj.is_finite() {
                Ok(vjj)
            } else {
                Err(RdError::ComponentDegenerate {
                    name: format!("component {j}"),
                    detail: format!("variance {vjj} is not positive"),
                })
            }
        })
        .collect()
}

/// Monte Carlo critical value of the (optionally studentized) max-squared
/// statistic under `N(0, V)`.
pub fn mc_critical_value(
    v: &CovarianceEstimate,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
    studentized: bool,
) -> Result<f64, RdError> {
    check_alpha(alpha)?;
    check_mc_draws(mc_draws)?;
    let diag = if studentized {
        Some(studentized_diag(v)?)
    } else {
        None
    };
    let draws = mc_max_draws_both(&v.v, mc_draws, seed, diag.as_deref())?;
    let mut vals: Vec<f64> = draws
        .into_iter()
        .map(|(raw, stud)| if studentized { stud } else { raw })
        .collect();
    Ok(quantile_by_rank(&mut vals, alpha))
}

/// Both max-test critical values (raw, studentized) from one shared set of
/// draws — the simulation harness uses this so the two procedures see the
/// same noise.
pub(crate) fn mc_max_crits_both(
    v: &DMatrix<f64>,
    diag: &[f64],
    mc_draws: usize,
    seed: u64,
    alpha: f64,
) -> Result<(f64, f64), RdError> {
    let draws = mc_max_draws_both(v, mc_draws, seed, Some(diag))?;
    let mut raw: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut stud: Vec<f64> = draws.iter().map(|d| d.1).collect();
    Ok((
        quantile_by_rank(&mut raw, alpha),
        quantile_by_rank(&mut stud, alpha),
    ))
}

/// Max test: largest squared component of `T` against the Monte Carlo
/// quantile of the same functional of `N(0, V)`. With `studentized` the
/// components are divided by their variances first. The p-value is the
/// Monte Carlo exceedance fraction.
pub fn max_test(
    t: &StatisticVector,
    v: &CovarianceEstimate,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
    studentized: bool,
) -> Result<TestResult, RdError> {
    let dim = check_dims(t, v)?;
    check_alpha(alpha)?;
    check_mc_draws(mc_draws)?;
    let diag = if studentized {
        Some(studentized_diag(v)?)
    } else {
        None
    };
    let mut stat = f64::NEG_INFINITY;
    for j in 0..dim {
        let tj2 = t.t[j] * t.t[j];
        let val = match &diag {
            Some(d) => tj2 / d[j],
            None => tj2,
        };
        if val > stat {
            stat = val;
        }
    }
    let draws = mc_max_draws_both(&v.v, mc_draws, seed, diag.as_deref())?;
    let mut vals: Vec<f64> = draws
        .iter()
        .map(|&(raw, stud)| if studentized { stud } else { raw })
        .collect();
    let exceed = vals.iter().filter(|&&x| x > stat).count();
    let critical_value = quantile_by_rank(&mut vals, alpha);
    Ok(TestResult {
        procedure: if studentized {
            Procedure::MaxStudentized
        } else {
            Procedure::Max
        },
        statistic: stat,
        critical_value,
        p_value: Some(exceed as f64 / mc_draws as f64),
        reject: stat > critical_value,
        alpha,
        mc_draws: Some(mc_draws),
        seed: Some(seed),
        component_stats: None,
        notes: vec!["p_value is the Monte Carlo exceedance fraction".to_string()],
    })
}

fn z_tests(
    t: &StatisticVector,
    v: &CovarianceEstimate,
    alpha: f64,
    per_component_level: f64,
    procedure: Procedure,
) -> Result<TestResult, RdError> {
    let dim = check_dims(t, v)?;
    check_alpha(alpha)?;
    let diag = studentized_diag(v)?;
    let z: Vec<f64> = (0..dim).map(|j| t.t[j] / diag[j].sqrt()).collect();
    let stat = z.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let critical_value = if alpha >= 1.0 {
        f64::NEG_INFINITY
    } else {
        normal_quantile(1.0 - per_component_level / 2.0)
    };
    Ok(TestResult {
        procedure,
        statistic: stat,
        critical_value,
        p_value: None,
        reject: stat > critical_value,
        alpha,
        mc_draws: None,
        seed: None,
        component_stats: Some(z),
        notes: Vec::new(),
    })
}

/// Per-component two-sided z-tests at level `alpha`, rejecting when any
/// component exceeds the normal critical value. No multiplicity control.
pub fn naive_test(
    t: &StatisticVector,
    v: &CovarianceEstimate,
    alpha: f64,
) -> Result<TestResult, RdError> {
    z_tests(t, v, alpha, alpha, Procedure::Naive)
}

/// Bonferroni-corrected per-component z-tests at level `alpha / (d + 1)`.
pub fn bonferroni_test(
    t: &StatisticVector,
    v: &CovarianceEstimate,
    alpha: f64,
) -> Result<TestResult, RdError> {
    let dim = check_dims(t, v)?;
    z_tests(t, v, alpha, alpha / dim as f64, Procedure::Bonferroni)
}

/// Run the full diagnostic on a sample: resolve bandwidths, estimate every
/// jump and the joint covariance, drop degenerate components loudly, and
/// apply the requested procedures. Estimation failures abort with an
/// error; a procedure-level failure (for example a non-PD covariance for
/// the Wald test) only marks that procedure unavailable in the report.
pub fn run_joint_diagnostics(sample: &Sample, config: &RunConfig) -> Result<Report, RdError> {
    config.validate()?;
    let seed = config.seed.expect("validated");
    let n = sample.n();
    let d = sample.d();
    if n == 0 {
        return Err(RdError::DegenerateSample("empty sample".to_string()));
    }
    let kind = config.kernel;
    let mut warnings = Vec::new();

    // Bandwidths: rule-of-thumb unless given explicitly.
    let (h_means, means_auto) = config.bandwidths.resolve_means(sample.x(), d, config.l)?;
    let (h_f, hf_auto) = config.h_f.resolve_density(sample.x(), config.p)?;
    if means_auto && d > 0 {
        warnings.push(format!(
            "bandwidths: rule-of-thumb h = {:.6} for the covariate means \
             (h = {ROT_C_DEFAULT} * sd(x) * n^(-1/(2l+3)) * n^(-0.05))",
            h_means[0]
        ));
    }
    if hf_auto {
        warnings.push(format!(
            "bandwidths: rule-of-thumb h_f = {h_f:.6} for the density \
             (h_f = {ROT_C_DEFAULT} * sd(x) * n^(-1/(2p+3)) * n^(-0.05))"
        ));
    }

    // Jump estimates.
    let mut names: Vec<String> = sample.z_names().to_vec();
    names.push("density".to_string());
    let mut taus = Vec::with_capacity(d + 1);
    for k in 0..d {
        let jump = tau_z(sample.x(), sample.z_col(k), h_means[k], config.l, kind)
            .map_err(|e| e.with_component(&format!("covariate {}", names[k])))?;
        taus.push(jump.tau);
    }
    let fjump = tau_f(sample.x(), h_f, config.p, kind).map_err(|e| e.with_component("density"))?;
    if fjump.plus_fit.beta[1] < 0.0 || fjump.minus_fit.beta[1] < 0.0 {
        warnings.push(format!(
            "density: a one-sided boundary density estimate is negative \
             (right {:.6}, left {:.6}); reported as-is",
            fjump.plus_fit.beta[1], fjump.minus_fit.beta[1]
        ));
    }
    taus.push(fjump.tau);

    // Covariance.
    let vz = covariance_block_z(
        sample.x(),
        sample.z(),
        &h_means,
        config.l,
        config.neighbors_m,
        kind,
    )?;
    let vf = jackknife_variance_f(
        sample.x(),
        h_f,
        config.p,
        kind,
        &fjump.plus_fit,
        &fjump.minus_fit,
    )?;

    // Degenerate components are dropped from the joint statistics with a
    // warning; the remaining tests run at the reduced dimension.
    let mut h_all = h_means.clone();
    h_all.push(h_f);
    let full_dim = d + 1;
    let var_of = |k: usize| if k < d { vz[(k, k)] } else { vf };
    let mut keep = Vec::with_capacity(full_dim);
    let mut dropped = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let vkk = var_of(k);
        if vkk.is_finite() && vkk > 0.0 {
            keep.push(k);
        } else {
            dropped.push(name.clone());
            warnings.push(format!(
                "component {name}: variance {vkk} is not positive; dropped from the joint \
                 tests (degrees of freedom reduced)"
            ));
        }
    }
    if keep.is_empty() {
        return Err(RdError::DegenerateSample(
            "every component has degenerate variance".to_string(),
        ));
    }

    let kept_taus: Vec<f64> = keep.iter().map(|&k| taus[k]).collect();
    let kept_h: Vec<f64> = keep.iter().map(|&k| h_all[k]).collect();
    let t = StatisticVector::from_taus(n, &kept_h, &kept_taus)?;
    let full_v = assemble_v(&vz, vf).v;
    let kdim = keep.len();
    let mut v_kept = DMatrix::<f64>::zeros(kdim, kdim);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            v_kept[(a, b)] = full_v[(i, j)];
        }
    }
    let vz_kept_dim = keep.iter().filter(|&&k| k < d).count();
    let cov = CovarianceEstimate {
        vz: v_kept.view((0, 0), (vz_kept_dim, vz_kept_dim)).into_owned(),
        vf: if keep.contains(&d) { vf } else { 0.0 },
        v: v_kept,
        neighbors_m: config.neighbors_m,
        orders: (config.l, config.p),
        bandwidths: kept_h.clone(),
    };

    // Procedures.
    let mc_seed = mix(seed, DOMAIN_MC);
    let mut report_procedures = crate::report::ProcedureMap::default();
    for &proc in &config.procedures {
        let result = match proc {
            Procedure::Naive => naive_test(&t, &cov, config.alpha),
            Procedure::Bonferroni => bonferroni_test(&t, &cov, config.alpha),
            Procedure::Wald => wald_test(&t, &cov, config.alpha),
            Procedure::Max => max_test(&t, &cov, config.alpha, config.mc_draws, mc_seed, false),
            Procedure::MaxStudentized => {
                max_test(&t, &cov, config.alpha, config.mc_draws, mc_seed, true)
            }
        };
        let entry = match result {
            Ok(r) => ProcedureReport::from_result(&r),
            Err(e) => {
                warnings.push(format!("procedure {proc}: unavailable ({e})"));
                ProcedureReport::unavailable(&e.to_string())
            }
        };
        report_procedures.set(proc, entry);
    }

    // Component table: every component, including dropped ones (their
    // standard error is reported from the non-positive variance as zero).
    let components: Vec<ComponentReport> = (0..full_dim)
        .map(|k| {
            let vkk = var_of(k);
            let se = if vkk.is_finite() && vkk > 0.0 {
                (vkk / (n as f64 * h_all[k])).sqrt()
            } else {
                0.0
            };
            ComponentReport {
                name: names[k].clone(),
                tau: taus[k],
                se,
                h: h_all[k],
            }
        })
        .collect();

    Ok(Report {
        schema_version: 1,
        config_echo: ConfigEcho {
            n,
            cutoff: config.cutoff,
            kernel: kind.name().to_string(),
            l: config.l,
            p: config.p,
            bandwidths: h_means,
            h_f,
            alpha: config.alpha,
            neighbors_m: config.neighbors_m,
            mc_draws: config.mc_draws,
            seed,
            procedures: config
                .procedures
                .iter()
                .map(|p| p.name().to_string())
                .collect(),
            dropped_components: dropped,
        },
        components,
        procedures: report_procedures,
        warnings,
    })
}

/// Shared helper: resolve the two rule-of-thumb bandwidths for a sample.
pub fn rot_bandwidths_for(x: &[f64], l: usize, p: usize, c: f64) -> (f64, f64) {
    (rot_bandwidth(x, l, c), rot_bandwidth(x, p, c))
}
