//! Joint covariance estimation for the scaled jump estimates.
//!
//! The statistic vector stacks `sqrt(n*h_k) * tau_k` for the covariate
//! jumps and `sqrt(n*h_f) * tau_f` for the density jump. Its covariance is
//! block diagonal: covariate jumps correlate with each other through the
//! covariates' joint distribution near the cutoff, while the density jump
//! depends on the running variable alone, so the cross terms are exactly
//! zero by construction.
//!
//! * Covariate block: per-unit conditional (co)variances are estimated
//!   with an `M`-nearest-neighbor residual on the unit's own side,
//!   `sigma_jk(i) = M/(M+1) * (z_ji - nnmean_j(i)) * (z_ki - nnmean_k(i))`,
//!   then propagated through the local polynomial weights of each side.
//! * Density entry: a leave-one-out (jackknife) variance of the CDF
//!   regression, evaluated exactly in `O(n log n)` with sorted suffix
//!   sums; see [`jackknife_variance_f`].

use crate::boundary::{BoundaryFit, Ecdf, FitTarget};
use crate::error::RdError;
use crate::kernel::{side_gram, KernelKind, Side};
use nalgebra::{Cholesky, DMatrix, DVector};

/// Default number of nearest neighbors in the covariate block.
pub const NEIGHBORS_M_DEFAULT: usize = 3;

/// Joint covariance estimate for the scaled statistic vector, together
/// with the settings it was produced under.
#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    /// Full `(d+1) x (d+1)` block-diagonal covariance; the density entry
    /// is last.
    pub v: DMatrix<f64>,
    /// Covariate block (`d x d`).
    pub vz: DMatrix<f64>,
    /// Density variance entry.
    pub vf: f64,
    /// Number of nearest neighbors used in the covariate block.
    pub neighbors_m: usize,
    /// Polynomial orders `(l, p)` of the mean and density fits.
    pub orders: (usize, usize),
    /// Bandwidths `h_1, ..., h_d, h_f`.
    pub bandwidths: Vec<f64>,
}

impl CovarianceEstimate {
    /// Dimension of the full covariance (`d + 1`).
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// Attach provenance metadata (notably for reports).
    pub fn with_provenance(
        mut self,
        neighbors_m: usize,
        orders: (usize, usize),
        bandwidths: Vec<f64>,
    ) -> Self {
        self.neighbors_m = neighbors_m;
        self.orders = orders;
        self.bandwidths = bandwidths;
        self
    }

    /// Wrap an externally supplied full covariance matrix (for example one
    /// read from a file to compute critical values). Must be square and
    /// non-empty.
    pub fn from_full_matrix(v: DMatrix<f64>) -> Result<Self, RdError> {
        if v.nrows() == 0 || v.nrows() != v.ncols() {
            return Err(RdError::InvalidConfig(format!(
                "covariance matrix: expected a non-empty square matrix, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        let dim = v.nrows();
        let vz = v.view((0, 0), (dim - 1, dim - 1)).into_owned();
        let vf = v[(dim - 1, dim - 1)];
        Ok(CovarianceEstimate {
            v,
            vz,
            vf,
            neighbors_m: 0,
            orders: (0, 0),
            bandwidths: Vec::new(),
        })
    }
}

/// Same-side units sorted by `(value, original index)`, the order used for
/// all neighbor searches. The secondary index key makes tie handling
/// deterministic.
struct SideSorted {
    entries: Vec<(f64, usize)>,
}

impl SideSorted {
    fn new(x: &[f64], side: Side) -> Self {
        let mut entries: Vec<(f64, usize)> = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| side.contains(v))
            .map(|(i, &v)| (v, i))
            .collect();
        entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        SideSorted { entries }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    /// Sorted position of original index `i` (which must be on this side).
    fn position_of(&self, value: f64, index: usize) -> usize {
        self.entries
            .partition_point(|&(v, j)| v.total_cmp(&value).then(j.cmp(&index)).is_lt())
    }

    /// Original indices of the `m` nearest same-side neighbors of the unit
    /// at sorted position `pos`, excluding the unit itself. Distance ties
    /// are broken by lower original index, exhaustively: the full tie group
    /// at the cutoff distance is collected before the deterministic
    /// `(distance, index)` sort decides.
    fn m_nearest(&self, pos: usize, m: usize, out: &mut Vec<usize>) {
        let entries = &self.entries;
        let xi = entries[pos].0;
        let mut cands: Vec<(f64, usize)> = Vec::with_capacity(m + 4);
        let mut lo = pos as isize - 1;
        let mut hi = pos + 1;
        while cands.len() < m {
            let dl = (lo >= 0).then(|| (xi - entries[lo as usize].0).abs());
            let dr = (hi < entries.len()).then(|| (entries[hi].0 - xi).abs());
            match (dl, dr) {
                (None, None) => break,
                (Some(a), None) => {
                    cands.push((a, entries[lo as usize].1));
                    lo -= 1;
                }
                (None, Some(b)) => {
                    cands.push((b, entries[hi].1));
                    hi += 1;
                }
                (Some(a), Some(b)) => {
                    if a <= b {
                        cands.push((a, entries[lo as usize].1));
                        lo -= 1;
                    } else {
                        cands.push((b, entries[hi].1));
                        hi += 1;
                    }
                }
            }
        }
        let worst = cands.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        while lo >= 0 && (xi - entries[lo as usize].0).abs() <= worst {
            cands.push(((xi - entries[lo as usize].0).abs(), entries[lo as usize].1));
            lo -= 1;
        }
        while hi < entries.len() && (entries[hi].0 - xi).abs() <= worst {
            cands.push(((entries[hi].0 - xi).abs(), entries[hi].1));
            hi += 1;
        }
        cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(m);
        out.clear();
        out.extend(cands.into_iter().map(|c| c.1));
    }
}

/// Nearest-neighbor conditional (co)variance contribution of unit `i`:
///
/// ```text
/// sigma_jk(i) = 1{side}(x_i) * M/(M+1)
///             * (z_j[i] - mean of z_j over the M nearest same-side neighbors)
///             * (z_k[i] - same for z_k)
/// ```
///
/// Returns 0 when `x_i` lies on the other side (the indicator). Fails when
/// the side has fewer than `M` other units.
pub fn nn_sigma_pair(
    x: &[f64],
    zj: &[f64],
    zk: &[f64],
    i: usize,
    side: Side,
    m_neighbors: usize,
) -> Result<f64, RdError> {
    let n = x.len();
    for (name, col) in [("zj", zj), ("zk", zk)] {
        if col.len() != n {
            return Err(RdError::LengthMismatch {
                x_len: n,
                other_len: col.len(),
                what: name.to_string(),
            });
        }
    }
    if i >= n {
        return Err(RdError::InvalidConfig(format!(
            "unit index {i} out of range for sample of size {n}"
        )));
    }
    if m_neighbors < 1 {
        return Err(RdError::InvalidConfig(
            "neighbors: M must be at least 1".to_string(),
        ));
    }
    if !side.contains(x[i]) {
        return Ok(0.0);
    }
    let sorted = SideSorted::new(x, side);
    if sorted.len() < m_neighbors + 1 {
        return Err(RdError::InsufficientNeighbors {
            side,
            need: m_neighbors,
            have: sorted.len().saturating_sub(1),
        });
    }
    let pos = sorted.position_of(x[i], i);
    let mut neigh = Vec::new();
    sorted.m_nearest(pos, m_neighbors, &mut neigh);
    let mf = m_neighbors as f64;
    let mean_j = neigh.iter().map(|&t| zj[t]).sum::<f64>() / mf;
    let mean_k = neigh.iter().map(|&t| zk[t]).sum::<f64>() / mf;
    Ok(mf / (mf + 1.0) * (zj[i] - mean_j) * (zk[i] - mean_k))
}

/// Covariate block of the joint covariance: `d x d` matrix with entries
///
/// ```text
/// vz[j][k] = sum over sides of sqrt(h_j h_k) *
///            e0' G(h_j)^-1 [ X(h_j)' W(h_j) Sigma_jk W(h_k) X(h_k) / n ] G(h_k)^-1 e0
/// ```
///
/// where `Sigma_jk` is the diagonal matrix of per-unit nearest-neighbor
/// (co)variances. Each unordered pair `(j, k)` is computed once and
/// mirrored, so the result is exactly symmetric.
pub fn covariance_block_z(
    x: &[f64],
    z: &[Vec<f64>],
    h: &[f64],
    l: usize,
    m_neighbors: usize,
    kind: KernelKind,
) -> Result<DMatrix<f64>, RdError> {
    let n = x.len();
    let d = z.len();
    if h.len() != d {
        return Err(RdError::LengthMismatch {
            x_len: d,
            other_len: h.len(),
            what: "bandwidth vector (one entry per covariate)".to_string(),
        });
    }
    for (k, col) in z.iter().enumerate() {
        if col.len() != n {
            return Err(RdError::LengthMismatch {
                x_len: n,
                other_len: col.len(),
                what: format!("covariate column {k}"),
            });
        }
    }
    if m_neighbors < 1 {
        return Err(RdError::InvalidConfig(
            "neighbors: M must be at least 1".to_string(),
        ));
    }
    let mut vz = DMatrix::<f64>::zeros(d, d);
    if d == 0 {
        return Ok(vz);
    }
    let mf = m_neighbors as f64;
    let shrink = mf / (mf + 1.0);
    for side in [Side::Right, Side::Left] {
        let sorted = SideSorted::new(x, side);
        let m_side = sorted.len();
        if m_side < m_neighbors + 1 {
            return Err(RdError::InsufficientNeighbors {
                side,
                need: m_neighbors,
                have: m_side.saturating_sub(1),
            });
        }
        // Nearest-neighbor deviations per unit and covariate.
        let mut dev = vec![vec![0.0f64; m_side]; d];
        let mut neigh = Vec::new();
        for (t, &(_, orig)) in sorted.entries.iter().enumerate() {
            sorted.m_nearest(t, m_neighbors, &mut neigh);
            for (j, col) in z.iter().enumerate() {
                let mean = neigh.iter().map(|&u| col[u]).sum::<f64>() / mf;
                dev[j][t] = col[orig] - mean;
            }
        }
        // Per covariate: b_j[t] = (G(h_j)^-1 e0)' r(u) * K(u)/h_j * dev_j[t].
        // The Gram solve is cached per distinct bandwidth.
        let mut cache: Vec<(f64, DVector<f64>)> = Vec::new();
        let mut b = vec![vec![0.0f64; m_side]; d];
        for j in 0..d {
            let g0 = match cache.iter().find(|(hh, _)| *hh == h[j]) {
                Some((_, g)) => g.clone(),
                None => {
                    let gram = side_gram(x, h[j], side, l, kind)?;
                    let chol = Cholesky::new(gram.gamma.clone()).ok_or_else(|| {
                        RdError::SingularDesign {
                            side,
                            context: String::new(),
                            detail: "Gram matrix not positive definite".to_string(),
                        }
                    })?;
                    let mut e0 = DVector::<f64>::zeros(l + 1);
                    e0[0] = 1.0;
                    let g = chol.solve(&e0);
                    cache.push((h[j], g.clone()));
                    g
                }
            };
            for (t, &(xv, _)) in sorted.entries.iter().enumerate() {
                let u = xv / h[j];
                let w = kind.eval(u) / h[j];
                if w <= 0.0 {
                    continue;
                }
                // Polynomial in u with coefficients g0 (Horner).
                let mut poly = 0.0;
                for &c in g0.iter().rev() {
                    poly = poly * u + c;
                }
                b[j][t] = poly * w * dev[j][t];
            }
        }
        for j in 0..d {
            for k in j..d {
                let dot: f64 = b[j].iter().zip(&b[k]).map(|(a, c)| a * c).sum();
                let contrib = (h[j] * h[k]).sqrt() * shrink * dot / n as f64;
                vz[(j, k)] += contrib;
                if j != k {
                    vz[(k, j)] += contrib;
                }
            }
        }
    }
    Ok(vz)
}

/// One side's jackknife moment matrix `Psi` for the density fit, evaluated
/// exactly with sorted suffix sums.
///
/// The pairwise kernel is `U(i, j) = A(i, j) + A(j, i)` with
/// `A(i, j) = 1{side}(x_i) * W_i * (resp_j(x_i) - c_i)`, where `W_i` is the
/// weighted regressor row `r_p(x_i/h) K(x_i/h)/h`, `resp_j(x_i) =
/// 1{side}(x_j) * 1{x_j <= x_i}` counts same-side mass up to `x_i`
/// (reflected on the left side via the shared comparison in descending
/// order of boundary distance — see below), and `c_i` is the centered
/// fitted CDF value. `Psi` is the covariance of the per-unit mean rows
/// `Rbar_i = (n-1)^-1 sum_{j != i} U(i, j)`:
///
/// ```text
/// Psi = n^-1 sum_i Rbar_i Rbar_i'  -  (n^-1 sum_i Rbar_i)(...)'
/// ```
///
/// Grouping the `j`-sum per unit gives closed forms: on-side rows need the
/// same-side CDF count at `x_i` and the suffix sum of `W` over same-side
/// units with `x_j >= x_i`; every off-side row equals `-Q/(n-1)` with
/// `Q = sum_j W_j c_j`. This reproduces the literal O(n^2) pair sum to
/// machine precision (see the tests) in `O(n log n)`.
fn jackknife_psi_side(
    x: &[f64],
    h: f64,
    p: usize,
    kind: KernelKind,
    side: Side,
    centered: &dyn Fn(f64) -> f64,
) -> DMatrix<f64> {
    let n = x.len();
    let q = p + 1;
    let sorted = SideSorted::new(x, side);
    let m = sorted.len();
    let nf = n as f64;
    let n1 = nf - 1.0;

    // Weighted regressor rows, centered fitted values, same-side CDF counts.
    let xs: Vec<f64> = sorted.entries.iter().map(|e| e.0).collect();
    let mut w = vec![0.0f64; m * q];
    let mut c = vec![0.0f64; m];
    let mut gs = vec![0.0f64; m];
    for (t, &(xv, _)) in sorted.entries.iter().enumerate() {
        let u = xv / h;
        let kw = kind.eval(u) / h;
        if kw > 0.0 {
            let mut pow = kw;
            for r in 0..q {
                w[t * q + r] = pow;
                pow *= u;
            }
        }
        c[t] = centered(xv);
        // Weak-inequality same-side count; xs is sorted ascending so ties
        // are fully included.
        gs[t] = sorted.entries.partition_point(|&(v, _)| v <= xv) as f64 / nf;
    }

    // Q = sum_j W_j c_j and suffix sums over descending x.
    let mut big_q = vec![0.0f64; q];
    for t in 0..m {
        for r in 0..q {
            big_q[r] += w[t * q + r] * c[t];
        }
    }
    let mut suff = vec![0.0f64; (m + 1) * q];
    for t in (0..m).rev() {
        for r in 0..q {
            suff[t * q + r] = suff[(t + 1) * q + r] + w[t * q + r];
        }
    }

    let mut sum_outer = DMatrix::<f64>::zeros(q, q);
    let mut sum_rows = vec![0.0f64; q];
    let mut rbar = vec![0.0f64; q];
    for t in 0..m {
        let xv = xs[t];
        // First sorted position with value >= xv: suffix over x_j >= x_i.
        let pos = xs.partition_point(|&v| v < xv);
        let lead = (nf * gs[t] - 1.0) / n1 - c[t];
        for r in 0..q {
            let wi = w[t * q + r];
            let suffix_i = suff[pos * q + r] - wi;
            rbar[r] = wi * lead + (suffix_i - (big_q[r] - wi * c[t])) / n1;
        }
        for r in 0..q {
            sum_rows[r] += rbar[r];
            for s in r..q {
                sum_outer[(r, s)] += rbar[r] * rbar[s];
            }
        }
    }
    // All (n - m) off-side rows share the same value -Q/(n-1).
    let off = (n - m) as f64;
    if off > 0.0 {
        for r in 0..q {
            let gr = -big_q[r] / n1;
            sum_rows[r] += off * gr;
            for s in r..q {
                sum_outer[(r, s)] += off * gr * (-big_q[s] / n1);
            }
        }
    }
    let mut psi = DMatrix::<f64>::zeros(q, q);
    for r in 0..q {
        for s in r..q {
            let v = sum_outer[(r, s)] / nf - (sum_rows[r] / nf) * (sum_rows[s] / nf);
            psi[(r, s)] = v;
            psi[(s, r)] = v;
        }
    }
    psi
}

/// Jackknife variance of the scaled density jump `sqrt(n*h_f) * tau_f`.
///
/// `fit_plus` and `fit_minus` must be the density fits produced by
/// [`crate::boundary::fit_density_boundary`] for the same `(x, h_f, p)`;
/// their Gram matrices and fitted CDF polynomials are reused here. The
/// left-side response counts mass strictly below the cutoff, so its
/// centering is the fitted anchored CDF plus the anchor `F(0-)` — the
/// fitted value of the raw CDF.
///
/// Each side contributes `e1' G^-1 Psi G^-1 e1`; the sum is divided by
/// `h_f` to put the estimate on the same `sqrt(n*h)` scale as the
/// covariate block.
pub fn jackknife_variance_f(
    x: &[f64],
    h_f: f64,
    p: usize,
    kind: KernelKind,
    fit_plus: &BoundaryFit,
    fit_minus: &BoundaryFit,
) -> Result<f64, RdError> {
    for (fit, side) in [(fit_plus, Side::Right), (fit_minus, Side::Left)] {
        if fit.target != FitTarget::Density
            || fit.side != side
            || fit.bandwidth != h_f
            || fit.gram.order != p
        {
            return Err(RdError::InvalidConfig(format!(
                "jackknife: {side}-side fit does not match the requested density design \
                 (target {:?}, side {}, h {}, order {})",
                fit.target, fit.side, fit.bandwidth, fit.gram.order
            )));
        }
    }
    let n = x.len();
    if n < 2 {
        return Err(RdError::DegenerateSample(
            "jackknife variance needs at least 2 observations".to_string(),
        ));
    }
    for side in [Side::Right, Side::Left] {
        let count = x.iter().filter(|&&v| side.contains(v)).count();
        if count < 2 {
            return Err(RdError::DegenerateSample(format!(
                "jackknife variance needs at least 2 observations on the {side} side, have {count}"
            )));
        }
    }
    let ecdf = Ecdf::new(x);
    let anchor = ecdf.below_cutoff();
    let mut total = 0.0;
    for (fit, side) in [(fit_plus, Side::Right), (fit_minus, Side::Left)] {
        let centered: Box<dyn Fn(f64) -> f64> = match side {
            Side::Right => Box::new(|xv| fit_plus.predict(xv)),
            Side::Left => Box::new(|xv| fit_minus.predict(xv) + anchor),
        };
        let psi = jackknife_psi_side(x, h_f, p, kind, side, centered.as_ref());
        let ginv = fit.gram.inverse()?;
        let sandwich = &ginv * psi * &ginv;
        total += sandwich[(1, 1)];
    }
    Ok(total / h_f)
}

/// Assemble the full block-diagonal covariance from the covariate block and
/// the density entry. Cross terms are exact zeros.
pub fn assemble_v(vz: &DMatrix<f64>, vf: f64) -> CovarianceEstimate {
    let d = vz.nrows();
    let mut v = DMatrix::<f64>::zeros(d + 1, d + 1);
    v.view_mut((0, 0), (d, d)).copy_from(vz);
    v[(d, d)] = vf;
    CovarianceEstimate {
        v,
        vz: vz.clone(),
        vf,
        neighbors_m: 0,
        orders: (0, 0),
        bandwidths: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::fit_density_boundary;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Exhaustive-search oracle: sort every other same-side unit by
    /// `(distance, index)` and take the first `m`.
    fn nn_sigma_pair_oracle(
        x: &[f64],
        zj: &[f64],
        zk: &[f64],
        i: usize,
        side: Side,
        m: usize,
    ) -> f64 {
        if !side.contains(x[i]) {
            return 0.0;
        }
        let mut cands: Vec<(f64, usize)> = x
            .iter()
            .enumerate()
            .filter(|&(t, &v)| t != i && side.contains(v))
            .map(|(t, &v)| ((v - x[i]).abs(), t))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(m);
        let mf = m as f64;
        let mean_j = cands.iter().map(|&(_, t)| zj[t]).sum::<f64>() / mf;
        let mean_k = cands.iter().map(|&(_, t)| zk[t]).sum::<f64>() / mf;
        mf / (mf + 1.0) * (zj[i] - mean_j) * (zk[i] - mean_k)
    }

    #[test]
    fn two_point_example() {
        // Two right-side units, M = 1: sigma(0) = 1/2 * (0 - 2)^2 = 2.
        let x = [0.1, 0.2];
        let z = [0.0, 2.0];
        let s = nn_sigma_pair(&x, &z, &z, 0, Side::Right, 1).unwrap();
        assert_eq!(s, 2.0);
    }

    #[test]
    fn constant_covariate_has_zero_sigma() {
        let x = [0.1, 0.2, 0.3, 0.4];
        let z = [7.0; 4];
        for i in 0..4 {
            assert_eq!(nn_sigma_pair(&x, &z, &z, i, Side::Right, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn off_side_unit_contributes_zero() {
        let x = [-0.1, 0.2, 0.3, 0.4, 0.5];
        let z = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(nn_sigma_pair(&x, &z, &z, 0, Side::Right, 2).unwrap(), 0.0);
    }

    #[test]
    fn too_few_neighbors_is_an_error() {
        let x = [0.1, 0.2, -0.5];
        let z = [1.0, 2.0, 3.0];
        assert!(matches!(
            nn_sigma_pair(&x, &z, &z, 0, Side::Right, 2),
            Err(RdError::InsufficientNeighbors { .. })
        ));
    }

    #[test]
    fn matches_exhaustive_oracle_exactly() {
        let mut rng = stream_rng(0xC0, 0);
        for trial in 0..50 {
            let n = 30;
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    // Round to two decimals to force plenty of ties.
                    let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                    (v * 50.0).round() / 50.0
                })
                .collect();
            let zj: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let zk: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            for side in [Side::Right, Side::Left] {
                let m_side = x.iter().filter(|&&v| side.contains(v)).count();
                for m in [1usize, 3] {
                    if m_side < m + 1 {
                        continue;
                    }
                    for i in 0..n {
                        let got = nn_sigma_pair(&x, &zj, &zk, i, side, m).unwrap();
                        let want = nn_sigma_pair_oracle(&x, &zj, &zk, i, side, m);
                        assert_eq!(got, want, "trial {trial}, unit {i}, side {side}, M {m}");
                    }
                }
            }
        }
    }

    #[test]
    fn duplicate_values_break_ties_by_lower_index() {
        // Unit 4 sits in a group of five identical x values. Its four
        // zero-distance neighbors are indices 0..3; M = 2 must select
        // indices 0 and 1 even though the sorted scan encounters 3 and 2
        // first.
        let x = [0.1, 0.1, 0.1, 0.1, 0.1];
        let z = [10.0, 20.0, 30.0, 40.0, 50.0];
        let s = nn_sigma_pair(&x, &z, &z, 4, Side::Right, 2).unwrap();
        let mean = (10.0 + 20.0) / 2.0;
        let want = 2.0 / 3.0 * (50.0 - mean) * (50.0 - mean);
        assert_eq!(s, want);
    }

    #[test]
    fn identical_columns_give_identical_block_entries() {
        let mut rng = stream_rng(0xC1, 1);
        let n = 400;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let z1: Vec<f64> = x
            .iter()
            .map(|&v| v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z = vec![z1.clone(), z1.clone()];
        let vz = covariance_block_z(&x, &z, &[0.4, 0.4], 2, 3, KernelKind::Triangular).unwrap();
        assert_eq!(vz[(0, 0)], vz[(1, 1)]);
        assert_eq!(vz[(0, 0)], vz[(0, 1)]);
        assert_eq!(vz[(0, 1)], vz[(1, 0)]);
        assert!(vz[(0, 0)] > 0.0);
    }

    #[test]
    fn independent_covariates_have_small_correlation() {
        let mut rng = stream_rng(0xC2, 2);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let z1: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z2: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let vz =
            covariance_block_z(&x, &[z1, z2], &[0.3, 0.3], 2, 3, KernelKind::Triangular).unwrap();
        let corr = vz[(0, 1)] / (vz[(0, 0)] * vz[(1, 1)]).sqrt();
        assert!(corr.abs() < 0.15, "corr = {corr}");
    }

    #[test]
    fn covariate_scale_equivariance() {
        let mut rng = stream_rng(0xC3, 3);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let z1: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z2: Vec<f64> = x
            .iter()
            .map(|&v| 0.5 * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let h = [0.4, 0.4];
        let base = covariance_block_z(
            &x,
            &[z1.clone(), z2.clone()],
            &h,
            2,
            3,
            KernelKind::Triangular,
        )
        .unwrap();
        let c = 3.0;
        let z2s: Vec<f64> = z2.iter().map(|&v| c * v).collect();
        let scaled = covariance_block_z(&x, &[z1, z2s], &h, 2, 3, KernelKind::Triangular).unwrap();
        assert_relative_eq!(scaled[(1, 1)], c * c * base[(1, 1)], max_relative = 1e-12);
        assert_relative_eq!(scaled[(0, 1)], c * base[(0, 1)], max_relative = 1e-12);
        assert_relative_eq!(scaled[(0, 0)], base[(0, 0)], max_relative = 1e-15);
    }

    #[test]
    fn equal_bandwidth_block_is_positive_semidefinite() {
        for seed in 0..20 {
            let mut rng = stream_rng(0xC4, seed);
            let n = 200;
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let d = 4;
            let z: Vec<Vec<f64>> = (0..d)
                .map(|_| {
                    (0..n)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let vz = covariance_block_z(&x, &z, &[0.5; 4], 2, 3, KernelKind::Triangular).unwrap();
            let eig = nalgebra::SymmetricEigen::new(vz.clone());
            let min = eig.eigenvalues.min();
            assert!(
                min >= -1e-10 * vz.trace(),
                "seed {seed}: min eigenvalue {min}"
            );
        }
    }

    #[test]
    fn block_tracks_monte_carlo_variance() {
        // x ~ Uniform[-1,1], z = x^2 + noise. Compare the mean covariance
        // estimate with the across-replication variance of the scaled jump
        // estimate, and both with the asymptotic constant
        // sigma^2 / f(0+) * (e0' M1^-1 M2 M1^-1 e0) per side, where for the
        // triangular kernel and l = 2 the sandwich constant is 10.2857
        // (M1[r,s] = 1/((r+s+1)(r+s+2)), M2[r,s] = 2/((r+s+1)(r+s+2)(r+s+3))).
        let reps = 2000;
        let n = 1000;
        let h = 0.35;
        let mut taus = Vec::with_capacity(reps);
        let mut mean_v = 0.0;
        for r in 0..reps {
            let mut rng = stream_rng(0xC5, r as u64);
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let z: Vec<f64> = x
                .iter()
                .map(|&v| v * v + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let jump = crate::boundary::tau_z(&x, &z, h, 2, KernelKind::Triangular).unwrap();
            taus.push((n as f64 * h).sqrt() * jump.tau);
            let vz = covariance_block_z(&x, &[z], &[h], 2, 3, KernelKind::Triangular).unwrap();
            mean_v += vz[(0, 0)];
        }
        mean_v /= reps as f64;
        let mean_t = taus.iter().sum::<f64>() / reps as f64;
        let var_t = taus
            .iter()
            .map(|&t| (t - mean_t) * (t - mean_t))
            .sum::<f64>()
            / (reps - 1) as f64;
        let ratio = mean_v / var_t;
        assert!(
            (0.85..=1.15).contains(&ratio),
            "estimate/MC ratio = {ratio} (mean_v = {mean_v}, var_t = {var_t})"
        );
        // Asymptotic constant: two sides, sigma^2 = 1, f(0+) = f(0-) = 0.5.
        let theory = 2.0 * 10.2857 / 0.5;
        assert!(
            (mean_v / theory - 1.0).abs() < 0.15,
            "mean_v = {mean_v}, theory = {theory}"
        );
    }

    #[test]
    fn nn_variance_with_all_neighbors_matches_sample_variance() {
        let mut rng = stream_rng(0xC6, 0);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let z: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let side = Side::Right;
        let idx: Vec<usize> = (0..n).filter(|&i| side.contains(x[i])).collect();
        let m = idx.len() - 1;
        let mut avg = 0.0;
        for &i in &idx {
            avg += nn_sigma_pair(&x, &z, &z, i, side, m).unwrap();
        }
        avg /= idx.len() as f64;
        let mean = idx.iter().map(|&i| z[i]).sum::<f64>() / idx.len() as f64;
        let var = idx
            .iter()
            .map(|&i| (z[i] - mean) * (z[i] - mean))
            .sum::<f64>()
            / idx.len() as f64;
        let ratio = avg / var;
        assert!((0.7..=1.3).contains(&ratio), "ratio = {ratio}");
    }

    // ---- jackknife ----

    /// Literal O(n^2) double loop over ordered pairs, used as the oracle
    /// for the suffix-sum evaluation.
    fn jackknife_psi_side_naive(
        x: &[f64],
        h: f64,
        p: usize,
        kind: KernelKind,
        side: Side,
        centered: &dyn Fn(f64) -> f64,
    ) -> DMatrix<f64> {
        let n = x.len();
        let q = p + 1;
        let nf = n as f64;
        let row = |i: usize| -> DVector<f64> {
            let mut w = DVector::<f64>::zeros(q);
            if side.contains(x[i]) {
                let u = x[i] / h;
                let kw = kind.eval(u) / h;
                let mut pow = kw;
                for r in 0..q {
                    w[r] = pow;
                    pow *= u;
                }
            }
            w
        };
        let a = |i: usize, j: usize| -> DVector<f64> {
            if !side.contains(x[i]) {
                return DVector::zeros(q);
            }
            let resp = if side.contains(x[j]) && x[j] <= x[i] {
                1.0
            } else {
                0.0
            };
            row(i) * (resp - centered(x[i]))
        };
        let mut rbars = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = DVector::<f64>::zeros(q);
            for j in 0..n {
                if j != i {
                    acc += a(i, j) + a(j, i);
                }
            }
            rbars.push(acc / (nf - 1.0));
        }
        let mut grand = DVector::<f64>::zeros(q);
        for r in &rbars {
            grand += r;
        }
        grand /= nf;
        let mut psi = DMatrix::<f64>::zeros(q, q);
        for r in &rbars {
            psi += r * r.transpose();
        }
        psi /= nf;
        psi -= &grand * grand.transpose();
        psi
    }

    #[test]
    fn suffix_sum_psi_matches_literal_double_loop() {
        let mut rng = stream_rng(0xC7, 0);
        for trial in 0..4 {
            let n = 250;
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    // Coarse grid so ties are common.
                    let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                    (v * 40.0).round() / 40.0
                })
                .collect();
            let h = 0.5;
            let p = 3;
            let kind = KernelKind::Triangular;
            let ecdf = Ecdf::new(&x);
            let anchor = ecdf.below_cutoff();
            for side in [Side::Right, Side::Left] {
                let fit = fit_density_boundary(&x, h, p, side, kind).unwrap();
                let centered: Box<dyn Fn(f64) -> f64> = match side {
                    Side::Right => Box::new(|xv| fit.predict(xv)),
                    Side::Left => Box::new(|xv| fit.predict(xv) + anchor),
                };
                let fast = jackknife_psi_side(&x, h, p, kind, side, centered.as_ref());
                let naive = jackknife_psi_side_naive(&x, h, p, kind, side, centered.as_ref());
                for r in 0..=p {
                    for s in 0..=p {
                        assert_relative_eq!(
                            fast[(r, s)],
                            naive[(r, s)],
                            max_relative = 1e-11,
                            epsilon = 1e-13
                        );
                    }
                }
            }
            let _ = trial;
        }
    }

    fn density_fits(x: &[f64], h: f64, p: usize, kind: KernelKind) -> (BoundaryFit, BoundaryFit) {
        (
            fit_density_boundary(x, h, p, Side::Right, kind).unwrap(),
            fit_density_boundary(x, h, p, Side::Left, kind).unwrap(),
        )
    }

    #[test]
    fn jackknife_variance_is_nonnegative() {
        for seed in 0..300 {
            let mut rng = stream_rng(0xC8, seed);
            let n = 120;
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (fp, fm) = density_fits(&x, 0.6, 2, KernelKind::Triangular);
            let v = jackknife_variance_f(&x, 0.6, 2, KernelKind::Triangular, &fp, &fm).unwrap();
            assert!(v >= 0.0, "seed {seed}: vf = {v}");
        }
    }

    #[test]
    fn jackknife_tracks_monte_carlo_variance() {
        // x ~ Uniform[-1, 1]; compare the mean estimate with the MC
        // variance of sqrt(n*h) * tau_f and with the asymptotic constant
        // (f(0+) + f(0-)) * 14.0446 for the triangular kernel at p = 3,
        // where 14.0446 = e1' M1^-1 Mf M1^-1 e1 with
        // Mf[r,s] = int int min(u,v) u^r v^s K(u) K(v) du dv.
        let reps = 1500;
        let n = 1000;
        let h = 0.4;
        let p = 3;
        let mut taus = Vec::with_capacity(reps);
        let mut mean_v = 0.0;
        for r in 0..reps {
            let mut rng = stream_rng(0xC9, r as u64);
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (fp, fm) = density_fits(&x, h, p, KernelKind::Triangular);
            let tau = fp.beta[1] - fm.beta[1];
            taus.push((n as f64 * h).sqrt() * tau);
            mean_v += jackknife_variance_f(&x, h, p, KernelKind::Triangular, &fp, &fm).unwrap();
        }
        mean_v /= reps as f64;
        let mean_t = taus.iter().sum::<f64>() / reps as f64;
        let var_t = taus
            .iter()
            .map(|&t| (t - mean_t) * (t - mean_t))
            .sum::<f64>()
            / (reps - 1) as f64;
        let ratio = mean_v / var_t;
        assert!(
            (0.8..=1.2).contains(&ratio),
            "estimate/MC ratio = {ratio} (mean_v = {mean_v}, var_t = {var_t})"
        );
        let theory = (0.5 + 0.5) * 14.0446;
        assert!(
            (mean_v / theory - 1.0).abs() < 0.15,
            "mean_v = {mean_v}, theory = {theory}"
        );
    }

    #[test]
    fn jackknife_rejects_one_point_sides() {
        let x = [0.3, -0.1, -0.2, -0.4, -0.5, -0.6];
        // Build fits on a healthier sample, then feed the thin one: the
        // guard on side counts fires before any mismatch checks matter.
        let healthy = [0.1, 0.2, 0.3, 0.35, 0.4, -0.1, -0.2, -0.3, -0.35, -0.4];
        let (fp, fm) = density_fits(&healthy, 0.6, 2, KernelKind::Triangular);
        assert!(matches!(
            jackknife_variance_f(&x, 0.6, 2, KernelKind::Triangular, &fp, &fm),
            Err(RdError::DegenerateSample(_))
        ));
    }

    #[test]
    fn jackknife_checks_fit_metadata() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 - 19.5) / 20.0).collect();
        let (fp, fm) = density_fits(&x, 0.6, 2, KernelKind::Triangular);
        // Wrong bandwidth.
        assert!(matches!(
            jackknife_variance_f(&x, 0.5, 2, KernelKind::Triangular, &fp, &fm),
            Err(RdError::InvalidConfig(_))
        ));
        // Swapped sides.
        assert!(matches!(
            jackknife_variance_f(&x, 0.6, 2, KernelKind::Triangular, &fm, &fp),
            Err(RdError::InvalidConfig(_))
        ));
    }

    #[test]
    fn assemble_v_is_block_diagonal_with_exact_zeros() {
        let vz = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let cov = assemble_v(&vz, 7.0);
        assert_eq!(cov.dim(), 3);
        assert_eq!(cov.v[(0, 2)], 0.0);
        assert_eq!(cov.v[(2, 0)], 0.0);
        assert_eq!(cov.v[(1, 2)], 0.0);
        assert_eq!(cov.v[(2, 2)], 7.0);
        assert_eq!(cov.v[(0, 1)], 0.5);
        assert_eq!(cov.vf, 7.0);
    }
}
