//! One-sided local polynomial estimators for boundary means and boundary
//! densities.
//!
//! Both estimators are weighted least squares fits of a polynomial in the
//! running variable on one side of the cutoff, with kernel weights
//! `K(x/h)/h`. For a covariate mean the response is the covariate itself
//! and the boundary value is the fitted intercept. For the density the
//! response is the empirical CDF and the boundary density is the fitted
//! slope: near the cutoff the CDF is locally `F(0) + f(0) x + ...`, so an
//! order-`p` fit to the empirical CDF estimates the one-sided density
//! `f(0+)` (or `f(0-)`) as the coefficient on `x`.
//!
//! The empirical CDF uses the weak inequality `F(x) = n^-1 #\{x_j <= x\}`.
//! The density fits regress the shifted CDF `F(x_i) - F(0-)` so that both
//! sides use a response anchored at the cutoff; the constant shift changes
//! only the fitted intercept, never the slope.
//!
//! Fits are solved in scaled units `u = x/h` for conditioning and reported
//! in natural units: `beta[s]` multiplies `x^s`.

use crate::error::RdError;
use crate::kernel::{side_gram, KernelKind, Side, SideGram};
use nalgebra::{Cholesky, DVector};

/// Default constant in the rule-of-thumb bandwidth. Calibrated so the
/// studentized per-component tests hold their level on boundary-density
/// designs: smaller constants leave too few effective observations in the
/// kernel window (over-dispersed t-statistics), larger ones start paying
/// smoothing bias on curved conditional means.
pub const ROT_C_DEFAULT: f64 = 3.0;

/// What a [`BoundaryFit`] estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitTarget {
    /// Boundary mean of a covariate; the estimate is the intercept.
    Mean,
    /// Boundary density of the running variable; the estimate is the slope.
    Density,
}

/// A fitted one-sided local polynomial.
#[derive(Clone, Debug)]
pub struct BoundaryFit {
    /// Coefficients in natural units: `beta[s]` multiplies `x^s`.
    pub beta: DVector<f64>,
    /// Coefficients in scaled units: `beta_scaled[s]` multiplies `(x/h)^s`.
    pub beta_scaled: DVector<f64>,
    pub side: Side,
    pub target: FitTarget,
    /// The weighted Gram matrix of the design (scaled units).
    pub gram: SideGram,
    pub bandwidth: f64,
}

impl BoundaryFit {
    /// The boundary estimate this fit was built for: the intercept for a
    /// mean fit, the slope for a density fit.
    pub fn boundary_estimate(&self) -> f64 {
        match self.target {
            FitTarget::Mean => self.beta[0],
            FitTarget::Density => self.beta[1],
        }
    }

    /// Fitted polynomial value at `x` (natural units, Horner evaluation).
    pub fn predict(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.beta.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

/// A boundary jump: the difference of right and left boundary estimates.
#[derive(Clone, Debug)]
pub struct JumpEstimate {
    /// `right boundary estimate - left boundary estimate`.
    pub tau: f64,
    pub plus_fit: BoundaryFit,
    pub minus_fit: BoundaryFit,
}

/// Empirical CDF with the weak inequality `F(x) = n^-1 #{x_j <= x}`,
/// backed by a sorted copy of the data.
#[derive(Clone, Debug)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(x: &[f64]) -> Self {
        let mut sorted = x.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Ecdf { sorted }
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// `F(x) = n^-1 #{x_j <= x}`.
    pub fn value(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Left limit at the cutoff, `F(0-) = n^-1 #{x_j < 0}`.
    pub fn below_cutoff(&self) -> f64 {
        let count = self.sorted.partition_point(|&v| v < 0.0);
        count as f64 / self.sorted.len() as f64
    }
}

/// Shared WLS core: build the Gram matrix and kernel-weighted moments of
/// the response, solve in scaled units, convert to natural units.
fn wls_side(
    x: &[f64],
    y: &[f64],
    h: f64,
    order: usize,
    side: Side,
    kind: KernelKind,
    target: FitTarget,
) -> Result<BoundaryFit, RdError> {
    let gram = side_gram(x, h, side, order, kind)?;
    let q = order + 1;
    let n = x.len();
    let mut rhs = DVector::<f64>::zeros(q);
    for (&xi, &yi) in x.iter().zip(y) {
        if !side.contains(xi) {
            continue;
        }
        let u = xi / h;
        let w = kind.eval(u) / h;
        if w <= 0.0 {
            continue;
        }
        let mut pow = w * yi;
        for r in 0..q {
            rhs[r] += pow;
            pow *= u;
        }
    }
    rhs /= n as f64;
    let chol = Cholesky::new(gram.gamma.clone()).ok_or_else(|| RdError::SingularDesign {
        side,
        context: String::new(),
        detail: "Gram matrix not positive definite".to_string(),
    })?;
    let beta_scaled = chol.solve(&rhs);
    let mut beta = beta_scaled.clone();
    let mut hs = 1.0;
    for s in 0..q {
        beta[s] /= hs;
        hs *= h;
    }
    Ok(BoundaryFit {
        beta,
        beta_scaled,
        side,
        target,
        gram,
        bandwidth: h,
    })
}

/// Fit a one-sided local polynomial of order `l` to covariate `z`. The
/// boundary mean estimate is the fitted intercept.
pub fn fit_mean_boundary(
    x: &[f64],
    z: &[f64],
    h: f64,
    l: usize,
    side: Side,
    kind: KernelKind,
) -> Result<BoundaryFit, RdError> {
    if z.len() != x.len() {
        return Err(RdError::LengthMismatch {
            x_len: x.len(),
            other_len: z.len(),
            what: "covariate".to_string(),
        });
    }
    wls_side(x, z, h, l, side, kind, FitTarget::Mean)
}

/// Fit a one-sided local polynomial of order `p` to the empirical CDF. The
/// boundary density estimate is the fitted slope; it can be negative in
/// small samples and is reported as-is (callers may warn).
pub fn fit_density_boundary(
    x: &[f64],
    h_f: f64,
    p: usize,
    side: Side,
    kind: KernelKind,
) -> Result<BoundaryFit, RdError> {
    let side_count = x.iter().filter(|&&v| side.contains(v)).count();
    if side_count < p + 2 {
        return Err(RdError::DegenerateSample(format!(
            "density fit needs at least {} observations on the {side} side, have {side_count}",
            p + 2
        )));
    }
    let ecdf = Ecdf::new(x);
    let anchor = ecdf.below_cutoff();
    let y: Vec<f64> = x.iter().map(|&xi| ecdf.value(xi) - anchor).collect();
    wls_side(x, &y, h_f, p, side, kind, FitTarget::Density)
}

/// Covariate-mean jump at the cutoff: intercept difference of the two
/// one-sided order-`l` fits.
pub fn tau_z(
    x: &[f64],
    z: &[f64],
    h: f64,
    l: usize,
    kind: KernelKind,
) -> Result<JumpEstimate, RdError> {
    let plus_fit = fit_mean_boundary(x, z, h, l, Side::Right, kind)?;
    let minus_fit = fit_mean_boundary(x, z, h, l, Side::Left, kind)?;
    Ok(JumpEstimate {
        tau: plus_fit.beta[0] - minus_fit.beta[0],
        plus_fit,
        minus_fit,
    })
}

/// Density jump at the cutoff: slope difference of the two one-sided
/// order-`p` CDF fits.
pub fn tau_f(x: &[f64], h_f: f64, p: usize, kind: KernelKind) -> Result<JumpEstimate, RdError> {
    let plus_fit = fit_density_boundary(x, h_f, p, Side::Right, kind)?;
    let minus_fit = fit_density_boundary(x, h_f, p, Side::Left, kind)?;
    Ok(JumpEstimate {
        tau: plus_fit.beta[1] - minus_fit.beta[1],
        plus_fit,
        minus_fit,
    })
}

/// Rule-of-thumb bandwidth for an order-`order` boundary fit:
///
/// ```text
/// h = c * sd(x) * n^(-1/(2*order+3)) * n^(-0.05)
/// ```
///
/// The first exponent is the optimal rate for the order; the extra
/// `n^(-0.05)` undersmooths so that the smoothing bias is asymptotically
/// negligible relative to the standard error, which is what the tests
/// assume. The standard deviation uses the population convention
/// (denominator `n`).
pub fn rot_bandwidth(x: &[f64], order: usize, c: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    let sd = var.sqrt();
    let expo = -1.0 / (2.0 * order as f64 + 3.0) - 0.05;
    c * sd * nf.powf(expo)
}
