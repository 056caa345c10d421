//! Exponential screening: aggregation of restricted least-squares fits.
//!
//! Every sparsity pattern `p` gets the unnormalized log weight
//!
//! ```text
//! log nu(p) = -rss(p) / (4 sigma^2) - |p| / 2 + log prior(p)
//! ```
//!
//! and the estimator is the weighted average of the pattern fits,
//! `theta_tilde = sum_p theta_hat(p) nu(p) / sum_p nu(p)`. [`exact_es`]
//! evaluates the average by enumerating the prior support;
//! [`mh_es`] approximates it by the ergodic average of a
//! Metropolis–Hastings random walk on the pattern hypercube. All weight
//! arithmetic stays in the log domain with shift-by-max normalization.

use std::collections::HashSet;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{
    rank_of_design, restricted_least_squares, rss_of, DesignProblem, IncrementalFit,
    SparsityPattern, DEFAULT_RANK_TOL,
};
use crate::prior::{PriorKind, PriorSpec};
use crate::simgen::derive_seed;
use crate::{Error, Result};

/// Default cap on exhaustive pattern enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Burn-in and averaging horizon of the sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MhParams {
    /// Iterations discarded before averaging starts.
    pub t0: usize,
    /// Iterations averaged after burn-in.
    pub t: usize,
}

impl Default for MhParams {
    fn default() -> Self {
        Self { t0: 3000, t: 7000 }
    }
}

/// How an [`EsEstimate`] was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EsMode {
    Exact,
    MetropolisHastings,
}

/// Pattern size and residual sum of squares after one sampler step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub size: u32,
    pub rss: f64,
}

/// Diagnostics attached to an estimate.
#[derive(Clone, Debug)]
pub struct EsDiagnostics {
    pub t0: usize,
    pub t: usize,
    pub seed: u64,
    /// Fraction of proposals accepted (1 for exact enumeration).
    pub acceptance_rate: f64,
    /// Distinct patterns visited (sampler) or enumerated (exact).
    pub visited_pattern_count: usize,
    /// Per-iteration `(|p|, rss)` after each sampler step; empty for exact.
    pub trace: Vec<TracePoint>,
    /// `log sum_p nu(p)` over the support; exact mode only.
    pub log_evidence: Option<f64>,
    pub warnings: Vec<String>,
}

/// An exponential-screening estimate.
#[derive(Clone, Debug)]
pub struct EsEstimate {
    pub theta: DVector<f64>,
    pub mode: EsMode,
    pub diagnostics: EsDiagnostics,
}

/// Unnormalized log weight `log nu(p)` of one pattern (fits the pattern
/// internally). `-inf` outside the prior support.
pub fn gibbs_log_weight(
    problem: &DesignProblem,
    p: &SparsityPattern,
    spec: &PriorSpec,
) -> Result<f64> {
    check_spec(problem, spec)?;
    let sigma2 = problem.require_sigma2()?;
    let log_prior = spec.log_prior(p)?;
    if log_prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let fit = restricted_least_squares(problem, p, DEFAULT_RANK_TOL)?;
    Ok(log_weight_from_parts(fit.rss, p.size(), sigma2, log_prior))
}

#[inline]
fn log_weight_from_parts(rss: f64, size: usize, sigma2: f64, log_prior: f64) -> f64 {
    -rss / (4.0 * sigma2) - 0.5 * size as f64 + log_prior
}

fn check_spec(problem: &DesignProblem, spec: &PriorSpec) -> Result<()> {
    if spec.m() != problem.m() {
        return Err(Error::DimensionMismatch {
            what: "prior dictionary size",
            expected: problem.m(),
            actual: spec.m(),
        });
    }
    Ok(())
}

/// Number of patterns in the prior support (saturating).
pub fn support_pattern_count(spec: &PriorSpec) -> u128 {
    let m = spec.m() as u128;
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 0..spec.r() as u128 {
        total = total.saturating_add(binom);
        binom = binom
            .saturating_mul(m - k)
            .checked_div(k + 1)
            .unwrap_or(u128::MAX);
    }
    if spec.kind() == PriorKind::Full {
        total = total.saturating_add(1);
    }
    total
}

fn enumerate_support(spec: &PriorSpec) -> impl Iterator<Item = SparsityPattern> + '_ {
    use itertools::Itertools;
    let m = spec.m();
    let sub_r = (0..spec.r()).flat_map(move |k| {
        (0..m).combinations(k).map(move |idx| {
            SparsityPattern::from_indices(m, &idx).expect("indices in range by construction")
        })
    });
    let full = (spec.kind() == PriorKind::Full)
        .then(|| SparsityPattern::full(m))
        .into_iter();
    sub_r.chain(full)
}

/// All pattern log weights over the prior support, with the log evidence.
#[derive(Clone, Debug)]
pub struct GibbsWeights {
    pub patterns: Vec<SparsityPattern>,
    pub log_nu: Vec<f64>,
    /// `log sum_p nu(p)`.
    pub log_evidence: f64,
}

impl GibbsWeights {
    /// Normalized weights `nu(p) / sum nu`.
    pub fn normalized(&self) -> Vec<f64> {
        self.log_nu
            .iter()
            .map(|lw| (lw - self.log_evidence).exp())
            .collect()
    }
}

/// Enumerate the support and compute every log weight. Errors when the
/// support exceeds `cap` patterns.
pub fn enumerate_gibbs_weights(
    problem: &DesignProblem,
    spec: &PriorSpec,
    cap: u128,
) -> Result<GibbsWeights> {
    check_spec(problem, spec)?;
    let sigma2 = problem.require_sigma2()?;
    let support = support_pattern_count(spec);
    if support > cap {
        return Err(Error::EnumerationTooLarge { support, cap });
    }
    let mut patterns = Vec::new();
    let mut log_nu = Vec::new();
    for p in enumerate_support(spec) {
        let fit = restricted_least_squares(problem, &p, DEFAULT_RANK_TOL)?;
        let lp = spec.log_prior_of_size(p.size());
        log_nu.push(log_weight_from_parts(fit.rss, p.size(), sigma2, lp));
        patterns.push(p);
    }
    let log_evidence = crate::util::log_sum_exp(&log_nu);
    Ok(GibbsWeights {
        patterns,
        log_nu,
        log_evidence,
    })
}

/// Exact exponential-screening estimate by exhaustive enumeration of the
/// prior support, using the default enumeration cap.
pub fn exact_es(problem: &DesignProblem, spec: &PriorSpec) -> Result<EsEstimate> {
    exact_es_capped(problem, spec, DEFAULT_ENUMERATION_CAP)
}

/// [`exact_es`] with an explicit enumeration cap.
pub fn exact_es_capped(
    problem: &DesignProblem,
    spec: &PriorSpec,
    cap: u128,
) -> Result<EsEstimate> {
    check_spec(problem, spec)?;
    let sigma2 = problem.require_sigma2()?;
    let support = support_pattern_count(spec);
    if support > cap {
        return Err(Error::EnumerationTooLarge { support, cap });
    }
    // Streaming shift-by-max aggregation: rescale the running sums whenever
    // a new maximum log weight appears.
    let mut max_lw = f64::NEG_INFINITY;
    let mut z = 0.0_f64;
    let mut acc = DVector::zeros(problem.m());
    let mut count = 0usize;
    for p in enumerate_support(spec) {
        let fit = restricted_least_squares(problem, &p, DEFAULT_RANK_TOL)?;
        let lp = spec.log_prior_of_size(p.size());
        let lw = log_weight_from_parts(fit.rss, p.size(), sigma2, lp);
        count += 1;
        if lw == f64::NEG_INFINITY {
            continue;
        }
        if lw > max_lw {
            let rescale = (max_lw - lw).exp(); // < 1; 0 when starting from -inf
            z *= rescale;
            acc *= rescale;
            max_lw = lw;
        }
        let w = (lw - max_lw).exp();
        z += w;
        acc.axpy(w, &fit.theta, 1.0);
    }
    if z <= 0.0 {
        return Err(Error::InvalidArgument(
            "all pattern weights vanished; prior support is empty".into(),
        ));
    }
    let theta = acc / z;
    Ok(EsEstimate {
        theta,
        mode: EsMode::Exact,
        diagnostics: EsDiagnostics {
            t0: 0,
            t: 0,
            seed: 0,
            acceptance_rate: 1.0,
            visited_pattern_count: count,
            trace: Vec::new(),
            log_evidence: Some(max_lw + z.ln()),
            warnings: Vec::new(),
        },
    })
}

/// Metropolis–Hastings approximation of the exponential-screening estimate.
///
/// The chain starts at the empty pattern; each step draws a coordinate
/// uniformly from `0..M`, proposes the single flip, and accepts with
/// probability `min(1, nu(q)/nu(p))` evaluated in the log domain. Proposals
/// outside the prior support are rejected but still consume an iteration.
/// The estimate is the average of the current pattern's least-squares fit
/// over iterations `t0+1 ..= t0+t`.
///
/// Identical inputs produce bitwise-identical output.
pub fn mh_es(
    problem: &DesignProblem,
    spec: &PriorSpec,
    params: &MhParams,
    seed: u64,
) -> Result<EsEstimate> {
    let sigma2 = problem.require_sigma2()?;
    mh_es_with_sigma2(problem, sigma2, spec, params, seed)
}

/// [`mh_es`] with the noise variance supplied explicitly (ignores any
/// variance stored on the problem); used by [`estimate_sigma2`].
pub fn mh_es_with_sigma2(
    problem: &DesignProblem,
    sigma2: f64,
    spec: &PriorSpec,
    params: &MhParams,
    seed: u64,
) -> Result<EsEstimate> {
    check_spec(problem, spec)?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if params.t == 0 {
        return Err(Error::InvalidArgument(
            "averaging horizon t must be at least 1".into(),
        ));
    }
    let m = problem.m();
    let total = params.t0 + params.t;
    let mut warnings = Vec::new();
    if spec.r() == 1 && spec.kind() == PriorKind::Simplified {
        warnings.push(
            "rank cutoff R = 1 leaves only the empty pattern; the chain is degenerate and \
             the estimate is zero"
                .into(),
        );
    }
    if spec.kind() == PriorKind::Full && spec.r() < m {
        warnings.push(
            "full prior with R < M: the full pattern carries prior mass but cannot be \
             reached by single flips"
                .into(),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inc = IncrementalFit::new(problem);
    let mut visited: HashSet<SparsityPattern> = HashSet::new();
    visited.insert(inc.pattern().clone());
    let mut cur_size = 0usize;
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(total);
    let mut sum_theta = DVector::zeros(m);

    for step in 1..=total {
        let j = rng.random_range(0..m);
        let u: f64 = rng.random();
        let adding = !inc.pattern().get(j);
        let new_size = if adding { cur_size + 1 } else { cur_size - 1 };
        let log_prior_ratio = spec.log_prior_ratio_sizes(cur_size, new_size);
        let delta = if log_prior_ratio == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let trial_rss = if adding {
                inc.trial_rss_add(j)?
            } else {
                inc.trial_rss_remove(j)?
            };
            (inc.rss() - trial_rss) / (4.0 * sigma2)
                + 0.5 * (cur_size as f64 - new_size as f64)
                + log_prior_ratio
        };
        if u.ln() < delta.min(0.0) {
            if adding {
                inc.add(j)?;
            } else {
                inc.remove(j)?;
            }
            cur_size = new_size;
            accepted += 1;
            visited.insert(inc.pattern().clone());
        }
        trace.push(TracePoint {
            size: cur_size as u32,
            rss: inc.rss(),
        });
        if step > params.t0 {
            let fit = inc.fit()?;
            sum_theta += &fit.theta;
        }
    }

    let theta = sum_theta / params.t as f64;
    Ok(EsEstimate {
        theta,
        mode: EsMode::MetropolisHastings,
        diagnostics: EsDiagnostics {
            t0: params.t0,
            t: params.t,
            seed,
            acceptance_rate: accepted as f64 / total as f64,
            visited_pattern_count: visited.len(),
            trace,
            log_evidence: None,
            warnings,
        },
    })
}

// ---------------------------------------------------------------------------
// Noise-variance heuristic
// ---------------------------------------------------------------------------

/// Options for [`estimate_sigma2`].
#[derive(Clone, Debug)]
pub struct Sigma2Options {
    /// Departure threshold between a candidate variance and the
    /// residual-based estimate it induces.
    pub alpha: f64,
    /// Ascending positive candidate grid; defaults to
    /// [`default_sigma2_grid`] when `None`.
    pub grid: Option<Vec<f64>>,
    /// Sampler budget per grid point. The default is much shorter than the
    /// sampler's own default: the scan only needs a coarse residual per
    /// point, it runs the sampler once per grid point, and long averaging
    /// horizons smear weight onto many coordinates, which inflates the
    /// small-coefficient count and biases the departure rule upward.
    pub mh: MhParams,
    pub prior: PriorKind,
    pub seed: u64,
}

impl Default for Sigma2Options {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            grid: None,
            mh: MhParams { t0: 200, t: 500 },
            prior: PriorKind::Simplified,
            seed: 0,
        }
    }
}

/// One grid evaluation of the variance scan.
#[derive(Clone, Debug)]
pub struct Sigma2Evaluation {
    pub sigma2: f64,
    /// `|Y - X theta|^2 / (n - M_n(theta))`; `None` when the point was
    /// skipped because `n - M_n <= 0`.
    pub residual_estimate: Option<f64>,
    /// Number of coordinates with `|theta_j| > 1/n`.
    pub m_n: usize,
    pub departure: Option<f64>,
}

/// Result of the variance scan.
#[derive(Clone, Debug)]
pub struct Sigma2Estimate {
    pub sigma2: f64,
    /// True when some grid point departed by more than `alpha`; false means
    /// the scan fell through and returned the largest grid value.
    pub triggered: bool,
    pub evaluations: Vec<Sigma2Evaluation>,
    pub warnings: Vec<String>,
}

/// Default candidate grid: 40 log-spaced points spanning
/// `[0.05, 4] * var(Y)` (unbiased sample variance).
pub fn default_sigma2_grid(problem: &DesignProblem) -> Result<Vec<f64>> {
    let y = problem.y();
    let n = y.len();
    let mean = y.sum() / n as f64;
    let var = if n > 1 {
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    if !(var > 0.0) {
        return Err(Error::InvalidArgument(
            "response has zero sample variance; supply an explicit sigma2 grid".into(),
        ));
    }
    let lo = (0.05 * var).ln();
    let hi = (4.0 * var).ln();
    let points = 40;
    Ok((0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Scan an ascending variance grid and return the first candidate whose
/// induced residual-based variance estimate departs from it by more than
/// `alpha`.
///
/// For each grid value `s^2` the sampler runs with the noise variance
/// replaced by `s^2`; the scan compares `s^2` against
/// `|Y - X theta|^2 / (n - M_n(theta))` where `M_n` counts coordinates
/// above `1/n` in absolute value. Grid points with `n - M_n <= 0` are
/// skipped with a warning. If no point triggers, the largest grid value is
/// returned with `triggered = false`.
pub fn estimate_sigma2(problem: &DesignProblem, opts: &Sigma2Options) -> Result<Sigma2Estimate> {
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_sigma2_grid(problem)?,
    };
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sigma2 grid is empty".into()));
    }
    if grid.iter().any(|s| !(*s > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sigma2 grid must be strictly ascending and positive".into(),
        ));
    }
    let n = problem.n();
    let rank = rank_of_design(problem, DEFAULT_RANK_TOL);
    let spec = PriorSpec::new(opts.prior, problem.m(), rank.max(1))?;
    let mut evaluations = Vec::new();
    let mut warnings = Vec::new();
    for (i, &s2) in grid.iter().enumerate() {
        let est = mh_es_with_sigma2(
            problem,
            s2,
            &spec,
            &opts.mh,
            derive_seed(opts.seed, 0x5163, i as u64),
        )?;
        let m_n = est
            .theta
            .iter()
            .filter(|v| v.abs() > 1.0 / n as f64)
            .count();
        if m_n >= n {
            warnings.push(format!(
                "grid point {s2:.6} skipped: n - M_n = {} <= 0",
                n as i64 - m_n as i64
            ));
            evaluations.push(Sigma2Evaluation {
                sigma2: s2,
                residual_estimate: None,
                m_n,
                departure: None,
            });
            continue;
        }
        let residual = rss_of(problem, &est.theta)? / (n - m_n) as f64;
        let departure = (residual - s2).abs();
        evaluations.push(Sigma2Evaluation {
            sigma2: s2,
            residual_estimate: Some(residual),
            m_n,
            departure: Some(departure),
        });
        if departure > opts.alpha {
            return Ok(Sigma2Estimate {
                sigma2: s2,
                triggered: true,
                evaluations,
                warnings,
            });
        }
    }
    let last = *grid.last().unwrap();
    warnings.push("no grid point departed by more than alpha; returning the largest".into());
    Ok(Sigma2Estimate {
        sigma2: last,
        triggered: false,
        evaluations,
        warnings,
    })
}
