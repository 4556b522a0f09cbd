//! Kernel functions and one-sided weighted Gram matrices.
//!
//! Everything downstream builds on the same weighted design: for a
//! bandwidth `h`, kernel `K` and polynomial order `q`, each observation
//! contributes weight `K(x_i / h) / h` on its own side of the cutoff (the
//! cutoff itself belongs to the right side) and the Gram matrix collects
//! the kernel-weighted moments of the scaled regressors `u = x / h`:
//!
//! ```text
//! gamma[r][s] = n^-1 * sum_i 1{side}(x_i) * K(x_i/h)/h * (x_i/h)^(r+s)
//! ```
//!
//! Note the division by the full sample size `n`, not the per-side count;
//! off-side observations simply carry zero weight.

use crate::error::RdError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Reciprocal-condition-number floor below which a Gram matrix is treated
/// as numerically singular.
pub const RCOND_MIN: f64 = 1e-12;

/// Kernel shapes supported by the estimators. Both have support `[-1, 1]`
/// and integrate to one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `K(u) = max(1 - |u|, 0)`; weight vanishes at the support edge.
    #[default]
    Triangular,
    /// `K(u) = 0.5 * 1{|u| <= 1}`; the edge points still get weight 0.5.
    Uniform,
}

impl KernelKind {
    /// Evaluate the kernel at `u`.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Triangular => (1.0 - u.abs()).max(0.0),
            KernelKind::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelKind {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self, RdError> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelKind::Triangular),
            "uniform" | "unif" => Ok(KernelKind::Uniform),
            other => Err(RdError::InvalidConfig(format!(
                "kernel: unknown kind {other:?} (expected \"triangular\" or \"uniform\")"
            ))),
        }
    }
}

/// Evaluate kernel `kind` at `u`. Convenience free function mirroring the
/// method form.
pub fn kernel_eval(kind: KernelKind, u: f64) -> f64 {
    kind.eval(u)
}

/// Side of the cutoff. The cutoff itself (`x = 0`) belongs to the right
/// side, matching the weak inequality in the empirical CDF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    /// Whether `x` lies on this side (`x >= 0` for right, `x < 0` for left).
    pub fn contains(self, x: f64) -> bool {
        match self {
            Side::Right => x >= 0.0,
            Side::Left => x < 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One-sided weighted Gram matrix together with the design metadata needed
/// to interpret it.
#[derive(Clone, Debug)]
pub struct SideGram {
    /// `(order+1) x (order+1)` moment matrix in scaled units `u = x / h`.
    pub gamma: DMatrix<f64>,
    pub side: Side,
    pub order: usize,
    pub bandwidth: f64,
    /// Number of observations with strictly positive weight.
    pub effective_n: usize,
}

impl SideGram {
    /// Inverse of the Gram matrix via Cholesky. The constructor has already
    /// verified positive definiteness up to `RCOND_MIN`, so failure here is
    /// reported as a singular design as well.
    pub fn inverse(&self) -> Result<DMatrix<f64>, RdError> {
        nalgebra::Cholesky::new(self.gamma.clone())
            .map(|c| c.inverse())
            .ok_or_else(|| RdError::SingularDesign {
                side: self.side,
                context: String::new(),
                detail: "Gram matrix not positive definite".to_string(),
            })
    }
}

/// Build the one-sided weighted Gram matrix of polynomial order `order`.
///
/// Fails with `SingularDesign` when fewer than `order + 1` observations
/// carry positive weight or when the reciprocal condition number of the
/// Gram matrix falls below `RCOND_MIN`.
pub fn side_gram(
    x: &[f64],
    h: f64,
    side: Side,
    order: usize,
    kind: KernelKind,
) -> Result<SideGram, RdError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(RdError::InvalidConfig(format!(
            "bandwidth: must be a positive finite number, got {h}"
        )));
    }
    if order < 1 {
        return Err(RdError::InvalidConfig(
            "order: polynomial order must be at least 1".to_string(),
        ));
    }
    let n = x.len();
    let q = order + 1;
    let mut gamma = DMatrix::<f64>::zeros(q, q);
    let mut effective_n = 0usize;
    let mut powers = vec![0.0f64; 2 * order + 1];
    for &xi in x {
        if !side.contains(xi) {
            continue;
        }
        let u = xi / h;
        let w = kind.eval(u) / h;
        if w <= 0.0 {
            continue;
        }
        effective_n += 1;
        powers[0] = w;
        for k in 1..=2 * order {
            powers[k] = powers[k - 1] * u;
        }
        for r in 0..q {
            for s in r..q {
                gamma[(r, s)] += powers[r + s];
            }
        }
    }
    if effective_n < q {
        return Err(RdError::SingularDesign {
            side,
            context: String::new(),
            detail: format!(
                "effective sample size {effective_n} is below the {q} weighted support \
                 points needed for an order-{order} fit (bandwidth {h})"
            ),
        });
    }
    let scale = 1.0 / n as f64;
    for r in 0..q {
        for s in r..q {
            let v = gamma[(r, s)] * scale;
            gamma[(r, s)] = v;
            gamma[(s, r)] = v;
        }
    }
    // Condition check on the symmetric eigenvalues; gamma is PSD by
    // construction, so the smallest eigenvalue doubles as a definiteness
    // check.
    let eig = nalgebra::SymmetricEigen::new(gamma.clone());
    let mut min_abs = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for &lambda in eig.eigenvalues.iter() {
        min_abs = min_abs.min(lambda.abs());
        max_abs = max_abs.max(lambda.abs());
    }
    if !(max_abs > 0.0) || min_abs / max_abs < RCOND_MIN {
        return Err(RdError::SingularDesign {
            side,
            context: String::new(),
            detail: format!(
                "Gram matrix numerically singular (rcond {:.3e} below {RCOND_MIN:.0e})",
                if max_abs > 0.0 {
                    min_abs / max_abs
                } else {
                    0.0
                }
            ),
        });
    }
    Ok(SideGram {
        gamma,
        side,
        order,
        bandwidth: h,
        effective_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triangular_values() {
        let k = KernelKind::Triangular;
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(-1.0), 0.0);
        assert_eq!(k.eval(0.25), 0.75);
        assert_eq!(k.eval(2.0), 0.0);
        assert_eq!(k.eval(-3.5), 0.0);
    }

    #[test]
    fn uniform_values() {
        let k = KernelKind::Uniform;
        assert_eq!(k.eval(0.3), 0.5);
        assert_eq!(k.eval(1.0), 0.5);
        assert_eq!(k.eval(-1.0), 0.5);
        assert_eq!(k.eval(1.0001), 0.0);
        assert_eq!(kernel_eval(k, 0.0), 0.5);
    }

    #[test]
    fn side_membership_is_a_partition() {
        for &x in &[-2.0, -1e-12, 0.0, 1e-12, 3.0] {
            assert_ne!(Side::Right.contains(x), Side::Left.contains(x));
        }
        // The cutoff belongs to the right side.
        assert!(Side::Right.contains(0.0));
    }

    #[test]
    fn single_support_point_is_singular() {
        // One weighted point cannot identify a local linear fit.
        let err = side_gram(&[0.0], 1.0, Side::Right, 1, KernelKind::Triangular).unwrap_err();
        match err {
            RdError::SingularDesign { side, .. } => assert_eq!(side, Side::Right),
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn empty_side_is_singular() {
        let x = [-0.5, -0.2, -0.9];
        assert!(matches!(
            side_gram(&x, 1.0, Side::Right, 1, KernelKind::Triangular),
            Err(RdError::SingularDesign { .. })
        ));
    }

    #[test]
    fn gram_matches_direct_summation() {
        // Independent accumulation of the same moments, looping over (r, s)
        // entries one at a time instead of sharing the power table.
        let mut x = Vec::new();
        let mut state = 123456789u64;
        for _ in 0..100 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64; // in [0,1)
            x.push(2.0 * u - 1.0);
        }
        let h = 0.5;
        let order = 2;
        let g = side_gram(&x, h, Side::Right, order, KernelKind::Triangular).unwrap();
        let n = x.len() as f64;
        for r in 0..=order {
            for s in 0..=order {
                let mut want = 0.0;
                for &xi in &x {
                    if xi >= 0.0 {
                        let u = xi / h;
                        want += KernelKind::Triangular.eval(u) / h * u.powi((r + s) as i32);
                    }
                }
                want /= n;
                assert_relative_eq!(g.gamma[(r, s)], want, max_relative = 1e-12);
            }
        }
        // Uniform-limit sanity: with f(0+) unknown here we just require
        // positive mass and symmetry.
        assert_eq!(g.gamma[(0, 1)], g.gamma[(1, 0)]);
        assert!(g.gamma[(0, 0)] > 0.0);
        assert!(g.effective_n > 3);
    }

    #[test]
    fn effective_n_excludes_zero_weight_points() {
        // Triangular kernel is zero at |u| = 1, uniform is not.
        let x = [0.0, 0.5, 1.0, 1.5];
        let g = side_gram(&x, 1.0, Side::Right, 1, KernelKind::Triangular).unwrap();
        assert_eq!(g.effective_n, 2); // 0.0 and 0.5 only
        let g = side_gram(&x, 1.0, Side::Right, 1, KernelKind::Uniform).unwrap();
        assert_eq!(g.effective_n, 3); // 1.0 keeps weight 0.5
    }

    #[test]
    fn doubling_the_sample_leaves_gamma_unchanged() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 25.0).collect();
        let doubled: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let g1 = side_gram(&x, 0.7, Side::Left, 2, KernelKind::Triangular).unwrap();
        let g2 = side_gram(&doubled, 0.7, Side::Left, 2, KernelKind::Triangular).unwrap();
        for r in 0..3 {
            for s in 0..3 {
                assert_relative_eq!(g1.gamma[(r, s)], g2.gamma[(r, s)], max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn reflection_maps_sides_onto_each_other() {
        // Mirroring the sample swaps the sides and flips the sign of odd
        // moments: gamma_right(x)[r][s] = (-1)^(r+s) gamma_left(-x)[r][s].
        // No point sits exactly at the cutoff.
        let x: Vec<f64> = (1..60).map(|i| (i as f64) / 40.0 - 0.70000001).collect();
        let mirrored: Vec<f64> = x.iter().map(|v| -v).collect();
        let gr = side_gram(&x, 0.6, Side::Right, 3, KernelKind::Triangular).unwrap();
        let gl = side_gram(&mirrored, 0.6, Side::Left, 3, KernelKind::Triangular).unwrap();
        assert_eq!(gr.effective_n, gl.effective_n);
        for r in 0..4 {
            for s in 0..4 {
                let sign = if (r + s) % 2 == 0 { 1.0 } else { -1.0 };
                assert_relative_eq!(gr.gamma[(r, s)], sign * gl.gamma[(r, s)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn rcond_guard_rejects_collinear_designs() {
        // All mass at a single support point (duplicated) with order 2:
        // enough points by count, but the moments are collinear.
        let x = [0.25, 0.25, 0.25, 0.25];
        assert!(matches!(
            side_gram(&x, 1.0, Side::Right, 2, KernelKind::Triangular),
            Err(RdError::SingularDesign { .. })
        ));
    }
}
