//! Randomized invariants of the estimation and testing layers.
//!
//! Each property pins something the estimators must satisfy for *every*
//! input, not just the worked examples: permutation/doubling invariance of
//! the Gram matrix, the reflection identity, equivariance of the jump
//! estimators, scale invariance of the Wald statistic, and monotonicity of
//! every rejection rule along rays.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rdjoint::{
    bonferroni_test, max_test, naive_test, side_gram, tau_z, wald_test, CovarianceEstimate,
    KernelKind, Side, StatisticVector,
};

/// A sample with enough mass on both sides of the cutoff for any fit the
/// properties run (orders up to 3 need at least `order + 2` per side).
fn two_sided_sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 60..160).prop_filter(
        "needs at least 8 points per side, none exactly at the cutoff",
        |x| {
            let right = x.iter().filter(|&&v| v >= 0.0).count();
            right >= 8 && x.len() - right >= 8 && x.iter().all(|&v| v != 0.0)
        },
    )
}

fn kernels() -> impl Strategy<Value = KernelKind> {
    prop_oneof![Just(KernelKind::Triangular), Just(KernelKind::Uniform)]
}

fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&p, &q)| (p - q).abs() / (1.0 + p.abs().max(q.abs())))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The Gram matrix is a symmetric function of the observations.
    #[test]
    fn side_gram_is_permutation_invariant(
        x in two_sided_sample(),
        keys in prop::collection::vec(any::<u64>(), 160),
        h in 0.4f64..1.5,
        order in 1usize..=3,
        kind in kernels(),
    ) {
        let mut indexed: Vec<(u64, f64)> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (keys[i % keys.len()].wrapping_add(i as u64), v))
            .collect();
        indexed.sort_by_key(|&(k, _)| k);
        let shuffled: Vec<f64> = indexed.into_iter().map(|(_, v)| v).collect();

        let g0 = side_gram(&x, h, Side::Right, order, kind).unwrap();
        let g1 = side_gram(&shuffled, h, Side::Right, order, kind).unwrap();
        prop_assert!(max_rel_err(&g0.gamma, &g1.gamma) < 1e-12);
        prop_assert_eq!(g0.effective_n, g1.effective_n);
    }

    /// Duplicating every observation doubles both the sum and the `n` in
    /// the denominator, leaving the Gram matrix unchanged.
    #[test]
    fn side_gram_is_invariant_to_doubling(
        x in two_sided_sample(),
        h in 0.4f64..1.5,
        order in 1usize..=3,
        kind in kernels(),
    ) {
        let doubled: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let g0 = side_gram(&x, h, Side::Right, order, kind).unwrap();
        let g1 = side_gram(&doubled, h, Side::Right, order, kind).unwrap();
        prop_assert!(max_rel_err(&g0.gamma, &g1.gamma) < 1e-12);
    }

    /// Mirroring the sample swaps the sides and flips the sign of the odd
    /// moments: gamma_right(x) = D gamma_left(-x) D with D = diag(1,-1,...).
    /// Negation and the symmetric kernels are exact in floating point, so
    /// the identity holds bitwise when no point sits at the cutoff.
    #[test]
    fn side_gram_reflection_identity(
        x in two_sided_sample(),
        h in 0.4f64..1.5,
        order in 1usize..=3,
        kind in kernels(),
    ) {
        let mirrored: Vec<f64> = x.iter().map(|&v| -v).collect();
        let right = side_gram(&x, h, Side::Right, order, kind).unwrap();
        let left = side_gram(&mirrored, h, Side::Left, order, kind).unwrap();
        for r in 0..=order {
            for s in 0..=order {
                let sign = if (r + s) % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert_eq!(right.gamma[(r, s)], sign * left.gamma[(r, s)]);
            }
        }
    }

    /// Noiseless polynomial outcomes of degree <= l are fitted exactly, so
    /// the estimated jump vanishes.
    #[test]
    fn tau_z_is_exact_on_polynomials(
        x in two_sided_sample(),
        coeffs in prop::collection::vec(-4.0f64..4.0, 1..=3),
        h in 0.5f64..1.5,
        kind in kernels(),
    ) {
        let l = 2usize; // coeffs has degree <= 2
        let z: Vec<f64> = x
            .iter()
            .map(|&v| coeffs.iter().rev().fold(0.0, |acc, &c| acc * v + c))
            .collect();
        let jump = tau_z(&x, &z, h, l, kind).unwrap();
        let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
        prop_assert!(jump.tau.abs() < 1e-8 * scale, "tau = {}", jump.tau);
        prop_assert!((jump.plus_fit.beta[0] - coeffs[0]).abs() < 1e-8 * scale);
    }

    /// z -> c*z + b maps tau -> c*tau.
    #[test]
    fn tau_z_is_location_and_scale_equivariant(
        x in two_sided_sample(),
        noise in prop::collection::vec(-1.0f64..1.0, 160),
        c in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        b in -10.0f64..10.0,
        h in 0.5f64..1.5,
        kind in kernels(),
    ) {
        let z: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| v + noise[i % noise.len()])
            .collect();
        let transformed: Vec<f64> = z.iter().map(|&v| c * v + b).collect();
        let t0 = tau_z(&x, &z, h, 2, kind).unwrap().tau;
        let t1 = tau_z(&x, &transformed, h, 2, kind).unwrap().tau;
        prop_assert!(
            (t1 - c * t0).abs() < 1e-9 * (1.0 + c.abs() * t0.abs() + b.abs()),
            "c*tau = {}, got {}",
            c * t0,
            t1
        );
    }

    /// Rescaling component j of T by c_j and V by c_j*c_k leaves the Wald
    /// statistic unchanged: the quadratic form is invariant under any
    /// diagonal change of units.
    #[test]
    fn wald_statistic_is_scale_invariant(
        t_raw in prop::collection::vec(-3.0f64..3.0, 2..=4),
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        scales in prop::collection::vec(0.05f64..20.0, 4),
        alpha in 0.01f64..0.3,
    ) {
        let dim = t_raw.len();
        let a = DMatrix::from_fn(dim, dim, |r, c| entries[(r * dim + c) % entries.len()]);
        let v = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        let bandwidths = vec![1.0; dim];
        let t0 = StatisticVector::from_taus(100, &bandwidths, &t_raw).unwrap();
        let v0 = CovarianceEstimate::from_full_matrix(v.clone()).unwrap();

        let scaled_t: Vec<f64> = t_raw.iter().zip(&scales).map(|(&t, &s)| t * s).collect();
        let scaled_v = DMatrix::from_fn(dim, dim, |r, c| v[(r, c)] * scales[r] * scales[c]);
        let t1 = StatisticVector::from_taus(100, &bandwidths, &scaled_t).unwrap();
        let v1 = CovarianceEstimate::from_full_matrix(scaled_v).unwrap();

        let w0 = wald_test(&t0, &v0, alpha).unwrap();
        let w1 = wald_test(&t1, &v1, alpha).unwrap();
        prop_assert!(
            (w0.statistic - w1.statistic).abs() <= 1e-8 * (1.0 + w0.statistic.abs()),
            "{} vs {}",
            w0.statistic,
            w1.statistic
        );
        prop_assert_eq!(w0.reject, w1.reject);
    }

    /// Moving the statistic vector outward along a ray (all |t_j| grow
    /// together) never turns a rejection into a non-rejection, for any of
    /// the five procedures.
    #[test]
    fn rejections_are_monotone_along_rays(
        t_raw in prop::collection::vec(-3.0f64..3.0, 1..=4),
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        grow in 1.0f64..5.0,
        alpha in 0.01f64..0.3,
    ) {
        let dim = t_raw.len();
        let a = DMatrix::from_fn(dim, dim, |r, c| entries[(r * dim + c) % entries.len()]);
        let v = CovarianceEstimate::from_full_matrix(
            &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5,
        )
        .unwrap();
        let bandwidths = vec![1.0; dim];
        let near = StatisticVector::from_taus(100, &bandwidths, &t_raw).unwrap();
        let far_raw: Vec<f64> = t_raw.iter().map(|&t| t * grow).collect();
        let far = StatisticVector::from_taus(100, &bandwidths, &far_raw).unwrap();

        let pairs = [
            (naive_test(&near, &v, alpha), naive_test(&far, &v, alpha)),
            (
                bonferroni_test(&near, &v, alpha),
                bonferroni_test(&far, &v, alpha),
            ),
            (wald_test(&near, &v, alpha), wald_test(&far, &v, alpha)),
            (
                max_test(&near, &v, alpha, 2000, 7, false),
                max_test(&far, &v, alpha, 2000, 7, false),
            ),
            (
                max_test(&near, &v, alpha, 2000, 7, true),
                max_test(&far, &v, alpha, 2000, 7, true),
            ),
        ];
        for (near_result, far_result) in pairs {
            let near_result = near_result.unwrap();
            let far_result = far_result.unwrap();
            prop_assert!(
                !near_result.reject || far_result.reject,
                "{:?} rejected near the origin but not farther out",
                near_result.procedure
            );
        }
    }
}
