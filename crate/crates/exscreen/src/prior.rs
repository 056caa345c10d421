//! Sparsity prior over patterns.
//!
//! Pattern weights depend only on the pattern size `k = |p|`, through
//! `w(k) = (k / (2 e M))^k` with the convention `0^0 = 1`. Two variants are
//! supported:
//!
//! * **Full** — `pi(p) = w(|p|) / H` for `|p| < R`, `1/2` for the full
//!   pattern `|p| = M`, and `0` otherwise. The normalizer `H` makes the
//!   sub-`R` block sum to `1/2`.
//! * **Simplified** — `pi(p) = 2 w(|p|) / H` for `|p| < R` and `0`
//!   otherwise (no mass on the full pattern); this is the variant the
//!   Metropolis–Hastings sampler uses.
//!
//! In both cases `H = 2 * sum_{k < R} C(M, k) w(k)`, which always lies in
//! `[2, 4]` because `C(M, k) w(k) <= 2^-k`. A second normalizer that also
//! includes the `k = R` term is exposed as
//! [`PriorSpec::log_normalizer_including_boundary`] for comparison; the
//! crate defaults to the exact normalizer everywhere. The two cancel in all
//! neighbor ratios, so the sampler is unaffected by the choice.

use serde::{Deserialize, Serialize};

use crate::linalg::SparsityPattern;
use crate::util::{k_ln_k, ln_binomial, log_sum_exp};
use crate::{Error, Result};

/// Which prior variant to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// Half the mass on patterns below the rank cutoff, half on the full
    /// pattern.
    Full,
    /// All mass below the rank cutoff; the sampler's prior.
    #[default]
    Simplified,
}

/// A validated prior: variant, dictionary size `M`, rank cutoff `R`, and
/// the cached log-normalizer.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    kind: PriorKind,
    m: usize,
    r: usize,
    log_h: f64,
}

impl PriorSpec {
    /// `R` must satisfy `1 <= R <= M` (callers typically pass the design
    /// rank, which also bounds it by `n`).
    pub fn new(kind: PriorKind, m: usize, r: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("prior needs M >= 1".into()));
        }
        if r == 0 || r > m {
            return Err(Error::InvalidArgument(format!(
                "rank cutoff R = {r} must satisfy 1 <= R <= M = {m}"
            )));
        }
        let log_h = log_normalizer_sum(m, r - 1);
        Ok(Self { kind, m, r, log_h })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `log H` with `H = 2 sum_{k=0}^{R-1} C(M,k) (k/2eM)^k`; the exact
    /// normalizer used by [`PriorSpec::log_prior`].
    pub fn log_normalizer(&self) -> f64 {
        self.log_h
    }

    /// Variant of the normalizer whose sum runs to `k = R` inclusive, i.e.
    /// one term beyond the support. Exposed for diagnostics only.
    pub fn log_normalizer_including_boundary(&self) -> f64 {
        log_normalizer_sum(self.m, self.r)
    }

    /// True when a pattern of size `k` carries positive mass.
    pub fn in_support_size(&self, k: usize) -> bool {
        match self.kind {
            PriorKind::Full => k < self.r || k == self.m,
            PriorKind::Simplified => k < self.r,
        }
    }

    /// Log prior mass of any pattern of size `k` (`-inf` outside support).
    pub fn log_prior_of_size(&self, k: usize) -> f64 {
        match self.kind {
            PriorKind::Full => {
                if k < self.r {
                    log_weight(self.m, k) - self.log_h
                } else if k == self.m {
                    -std::f64::consts::LN_2
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorKind::Simplified => {
                if k < self.r {
                    std::f64::consts::LN_2 + log_weight(self.m, k) - self.log_h
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Log prior mass of a pattern. Depends on the pattern only through its
    /// size (the prior is exchangeable).
    pub fn log_prior(&self, p: &SparsityPattern) -> Result<f64> {
        if p.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "pattern length",
                expected: self.m,
                actual: p.len(),
            });
        }
        Ok(self.log_prior_of_size(p.size()))
    }

    /// `log pi(q) - log pi(p)` for patterns of sizes `kp` and `kq` that
    /// differ by a single flip. For sizes below the rank cutoff this uses
    /// the closed form `kq ln(kq) - kp ln(kp) - (kq - kp) ln(2eM)` in which
    /// the normalizer cancels; moves involving the full pattern fall back
    /// to the normalized difference.
    pub fn log_prior_ratio_sizes(&self, kp: usize, kq: usize) -> f64 {
        if !self.in_support_size(kq) {
            return f64::NEG_INFINITY;
        }
        if !self.in_support_size(kp) {
            return f64::INFINITY;
        }
        if kp < self.r && kq < self.r {
            let omega = kq as f64 - kp as f64;
            k_ln_k(kq) - k_ln_k(kp) - omega * ln_2em(self.m)
        } else {
            self.log_prior_of_size(kq) - self.log_prior_of_size(kp)
        }
    }

    /// Neighbor log prior ratio `log pi(q) - log pi(p)`; errors unless the
    /// patterns differ in exactly one coordinate.
    pub fn log_prior_ratio_neighbors(
        &self,
        p: &SparsityPattern,
        q: &SparsityPattern,
    ) -> Result<f64> {
        if p.len() != self.m || q.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "pattern length",
                expected: self.m,
                actual: if p.len() != self.m { p.len() } else { q.len() },
            });
        }
        if !p.is_neighbor_of(q) {
            return Err(Error::NotNeighbors);
        }
        Ok(self.log_prior_ratio_sizes(p.size(), q.size()))
    }
}

fn ln_2em(m: usize) -> f64 {
    (2.0 * std::f64::consts::E * m as f64).ln()
}

/// `log w(k) = k ln(k) - k ln(2eM)`, with `0 ln 0 = 0`.
fn log_weight(m: usize, k: usize) -> f64 {
    k_ln_k(k) - (k as f64) * ln_2em(m)
}

/// `log(2 sum_{k=0}^{k_max} C(M,k) w(k))`.
fn log_normalizer_sum(m: usize, k_max: usize) -> f64 {
    let terms: Vec<f64> = (0..=k_max.min(m))
        .map(|k| ln_binomial(m, k) + log_weight(m, k))
        .collect();
    std::f64::consts::LN_2 + log_sum_exp(&terms)
}
