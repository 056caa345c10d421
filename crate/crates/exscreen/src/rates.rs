//! Theoretical risk-rate functions and the randomized ell-1 sparsifier.
//!
//! Each rate is a minimum over explicit branches (a rank branch, an ell-0
//! branch, and ell-1 branches). Branches whose formula divides by the ell-1
//! norm evaluate to `+inf` when it is zero, so the overall minimum stays
//! well defined; the rates themselves are zero only at the zero vector.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use std::f64::consts::E;

/// Constant relating the ell-0 rate to the two-case ell-1 comparison rate
/// ([`phi_bar`]): 3 + 1/e.
pub const L0_L1_COMPARISON_CONSTANT: f64 = 3.0 + 1.0 / E;

/// Arguments shared by the rate functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateQuery {
    pub n: usize,
    pub m: usize,
    /// Design rank, in `[1, min(M, n)]`.
    pub r: usize,
    /// Noise standard deviation (not the variance).
    pub sigma: f64,
    /// Sparsity level: a number of nonzero coefficients.
    pub s: usize,
    /// An ell-1 norm (or radius); zero disables the ell-1 branches.
    pub l1: f64,
    /// Subset size for the subset aggregation rates.
    pub d: Option<usize>,
}

impl RateQuery {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument(
                "rate query needs n >= 1 and M >= 1".into(),
            ));
        }
        if self.r < 1 || self.r > self.m.min(self.n) {
            return Err(Error::InvalidArgument(format!(
                "rank must lie in [1, min(M, n)] = [1, {}], got {}",
                self.m.min(self.n),
                self.r
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.s > self.m {
            return Err(Error::InvalidArgument(format!(
                "sparsity level {} exceeds M = {}",
                self.s, self.m
            )));
        }
        if !(self.l1 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "l1 must be nonnegative, got {}",
                self.l1
            )));
        }
        if let Some(d) = self.d {
            if d < 1 || d > self.m {
                return Err(Error::InvalidArgument(format!(
                    "subset size must lie in [1, M] = [1, {}], got {d}",
                    self.m
                )));
            }
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }
}

fn rank_branch(q: &RateQuery) -> f64 {
    q.sigma.powi(2) * q.r as f64 / q.nf()
}

/// `c * sigma^2 * s / n * log(1 + eM / (s v 1))`.
fn l0_branch(q: &RateQuery, c: f64) -> f64 {
    c * q.sigma.powi(2) * q.s as f64 / q.nf() * (1.0 + E * q.mf() / (q.s.max(1) as f64)).ln()
}

/// `c1 * sigma * l1 / sqrt(n) * sqrt(log(1 + c2 * e * M * sigma / (l1 sqrt(n))))`,
/// `+inf` at `l1 = 0`.
fn l1_branch(q: &RateQuery, c1: f64, c2: f64) -> f64 {
    if q.l1 == 0.0 {
        return f64::INFINITY;
    }
    c1 * q.sigma * q.l1 / q.nf().sqrt()
        * (1.0 + c2 * E * q.mf() * q.sigma / (q.l1 * q.nf().sqrt()))
            .ln()
            .sqrt()
}

/// Prediction-risk rate with branch constants 9 and 11; zero at the zero
/// vector (`s = 0`, `l1 = 0`).
pub fn phi(q: &RateQuery) -> Result<f64> {
    q.validate()?;
    if q.s == 0 && q.l1 == 0.0 {
        return Ok(0.0);
    }
    Ok(rank_branch(q)
        .min(l0_branch(q, 9.0))
        .min(l1_branch(q, 11.0, 3.0)))
}

/// [`phi`] with the extra branch `4 * l1^2`.
pub fn psi(q: &RateQuery) -> Result<f64> {
    q.validate()?;
    if q.s == 0 && q.l1 == 0.0 {
        return Ok(0.0);
    }
    Ok(rank_branch(q)
        .min(l0_branch(q, 9.0))
        .min(l1_branch(q, 11.0, 3.0))
        .min(4.0 * q.l1 * q.l1))
}

/// Constant-free variant of [`psi`] over sparsity `s >= 1` and radius
/// `l1 > 0` (branch constants all 1).
pub fn zeta(q: &RateQuery) -> Result<f64> {
    q.validate()?;
    if q.s < 1 || !(q.l1 > 0.0) {
        return Err(Error::InvalidArgument(
            "zeta needs s >= 1 and a positive radius".into(),
        ));
    }
    Ok(rank_branch(q)
        .min(l0_branch(q, 1.0))
        .min(l1_branch(q, 1.0, 1.0))
        .min(q.l1 * q.l1))
}

/// Rank branch and ell-0 branch only (constant 9), as they appear in the
/// exact-aggregation risk bound.
pub fn sparsity_risk_rate(q: &RateQuery) -> Result<f64> {
    q.validate()?;
    if q.s == 0 {
        return Ok(0.0);
    }
    Ok(rank_branch(q).min(l0_branch(q, 9.0)))
}

/// Additive remainder of the ell-0 risk bound: `8 sigma^2 log(2) / n`.
pub fn risk_remainder_l0(n: usize, sigma: f64) -> f64 {
    8.0 * sigma * sigma * std::f64::consts::LN_2 / n as f64
}

/// Additive remainder of the ell-1 risk bound:
/// `sigma^2 (9 log(1 + eM) + 8 log 2) / n`.
pub fn risk_remainder_l1(n: usize, m: usize, sigma: f64) -> f64 {
    sigma * sigma * (9.0 * (1.0 + E * m as f64).ln() + 8.0 * std::f64::consts::LN_2) / n as f64
}

/// Largest integer `m >= 1` with
/// `m <= delta sqrt(n) / (sigma sqrt(log(1 + eM/m)))`; 0 when no such `m`
/// exists. Found by ascending scan: the left side grows faster than the
/// right, so the first failure is final. Always at most `delta sqrt(n) / sigma`.
pub fn m_star(delta: f64, n: usize, m: usize, sigma: f64) -> Result<usize> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "m_star needs n >= 1 and M >= 1".into(),
        ));
    }
    if !(delta > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "m_star needs positive delta and sigma".into(),
        ));
    }
    let budget = delta * (n as f64).sqrt();
    let cap = (budget / sigma).ceil() as usize + 1;
    let mut best = 0;
    for cand in 1..=cap {
        let lhs = cand as f64 * sigma * (1.0 + E * m as f64 / cand as f64).ln().sqrt();
        if lhs <= budget {
            best = cand;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Benchmark risk of componentwise keep-or-zero rules in the diagonal
/// model: `2 log(n) * (1/n + sum_i min(theta_i^2, 1/n))`.
pub fn psi01(theta: &DVector<f64>, n: usize) -> Result<f64> {
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "diagonal-model coefficient length",
            expected: n,
            actual: theta.len(),
        });
    }
    let nf = n as f64;
    let body: f64 = theta.iter().map(|t| (t * t).min(1.0 / nf)).sum();
    Ok(2.0 * nf.ln() * (1.0 / nf + body))
}

/// Adaptive diagonal-model rate:
/// `min(M(theta) log n / n, |theta|_1 sqrt(log n / n), |theta|_1^2) + 1/n`.
pub fn psi_star(theta: &DVector<f64>, n: usize) -> Result<f64> {
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "diagonal-model coefficient length",
            expected: n,
            actual: theta.len(),
        });
    }
    let nf = n as f64;
    let l0 = theta.iter().filter(|t| **t != 0.0).count() as f64;
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    Ok((l0 * nf.ln() / nf)
        .min(l1 * (nf.ln() / nf).sqrt())
        .min(l1 * l1)
        + 1.0 / nf)
}

/// The five aggregation settings with distinct optimal remainder rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationKind {
    /// Best single dictionary element.
    ModelSelection,
    /// Best convex combination.
    Convex,
    /// Best linear combination.
    Linear,
    /// Best linear combination of at most D elements.
    LinearSubset,
    /// Best convex combination of at most D elements.
    ConvexSubset,
}

/// Optimal remainder rate for each aggregation setting, moderated by the
/// design rank.
pub fn aggregation_rate(kind: AggregationKind, q: &RateQuery) -> Result<f64> {
    q.validate()?;
    let rank = rank_branch(q);
    let s2n = q.sigma.powi(2) / q.nf();
    let subset = |d: Option<usize>| -> Result<f64> {
        let d = d.ok_or_else(|| {
            Error::InvalidArgument("subset aggregation rates need a subset size D".into())
        })?;
        Ok(s2n * d as f64 * (1.0 + E * q.mf() / d as f64).ln())
    };
    let convex = (s2n * (1.0 + E * q.mf() * q.sigma / q.nf().sqrt()).ln()).sqrt();
    Ok(match kind {
        AggregationKind::ModelSelection => rank.min(s2n * q.mf().ln()),
        AggregationKind::Convex => rank.min(convex),
        AggregationKind::Linear => rank,
        AggregationKind::LinearSubset => rank.min(subset(q.d)?),
        AggregationKind::ConvexSubset => rank.min(subset(q.d)?).min(convex),
    })
}

/// Randomized rounding of a nonzero vector to (at most) `min(k, M(theta))`
/// nonzero coordinates with the same ell-1 norm.
///
/// Draws a multinomial with `K = min(k, M(theta_star))` trials over the
/// categories `p_j = |theta_star_j| / |theta_star|_1` and returns
/// `theta_bar_j = count_j * sign(theta_star_j) * |theta_star|_1 / K`.
/// Unbiased for `theta_star`; deterministic per seed.
pub fn maurey_sparsify(theta_star: &DVector<f64>, k: usize, seed: u64) -> Result<DVector<f64>> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "sparsifier size k must be at least 1".into(),
        ));
    }
    let l1: f64 = theta_star.iter().map(|t| t.abs()).sum();
    let l0 = theta_star.iter().filter(|t| **t != 0.0).count();
    if l0 == 0 {
        return Err(Error::InvalidArgument(
            "cannot sparsify the zero vector".into(),
        ));
    }
    let kk = k.min(l0);
    // Cumulative absolute mass, for inverse-CDF categorical draws.
    let mut cum = Vec::with_capacity(theta_star.len());
    let mut acc = 0.0;
    for t in theta_star.iter() {
        acc += t.abs();
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; theta_star.len()];
    for _ in 0..kk {
        let u: f64 = rng.random::<f64>() * l1;
        let j = cum.partition_point(|c| *c <= u).min(theta_star.len() - 1);
        counts[j] += 1;
    }
    let scale = l1 / kk as f64;
    Ok(DVector::from_fn(theta_star.len(), |j, _| {
        counts[j] as f64 * theta_star[j].signum() * scale
    }))
}

/// Two-case ell-1 comparison rate, at noise level `nu`, for a coefficient
/// vector against a target mean vector `eta` (empirical inner products).
/// Zero at the zero vector. The case split is on whether
/// `<f_theta, eta> <= ||f_theta||^2`.
pub fn phi_bar(
    x: &DMatrix<f64>,
    eta: &DVector<f64>,
    theta: &DVector<f64>,
    nu: f64,
) -> Result<f64> {
    if eta.len() != x.nrows() || theta.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "comparison-rate shapes",
            expected: x.nrows() + x.ncols(),
            actual: eta.len() + theta.len(),
        });
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level nu must be positive, got {nu}"
        )));
    }
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    if l1 == 0.0 {
        return Ok(0.0);
    }
    let n = x.nrows() as f64;
    let m = x.ncols() as f64;
    let main = nu * l1 / n.sqrt() * (1.0 + E * m * nu / (l1 * n.sqrt())).ln().sqrt();
    let f = x * theta;
    let inner = f.dot(eta) / n;
    let norm2 = f.norm_squared() / n;
    Ok(if inner <= norm2 {
        main.min(l1 * l1)
    } else {
        main + nu * nu * (1.0 + E * m).ln() / (L0_L1_COMPARISON_CONSTANT * n)
    })
}
