//! Comparison estimators: coordinate-descent Lasso (with KKT
//! certification), cross-validated Lasso, threshold-and-refit, exhaustive
//! best-subset selection with a data-driven penalty, and soft thresholding.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{restricted_least_squares, DesignProblem, SparsityPattern, DEFAULT_RANK_TOL};
use crate::{Error, Result};

/// Settings for [`lasso`] and [`lasso_cv`].
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LassoConfig {
    /// Penalty level; `None` uses [`default_lambda`] (needs the problem's
    /// noise variance).
    pub lambda: Option<f64>,
    /// Maximum full coordinate sweeps.
    pub max_iters: usize,
    /// KKT tolerance certifying optimality.
    pub tol: f64,
    /// Fold count for [`lasso_cv`].
    pub cv_folds: usize,
    /// Candidate penalties for [`lasso_cv`]; `None` uses
    /// [`default_lambda_grid`].
    pub lambda_grid: Option<Vec<f64>>,
    /// Seed of the fold shuffle.
    pub cv_seed: u64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iters: 10_000,
            tol: 1e-6,
            cv_folds: 10,
            lambda_grid: None,
            cv_seed: 0,
        }
    }
}

/// The standard penalty level `sigma * sqrt(8 log(M) / n)`.
pub fn default_lambda(problem: &DesignProblem) -> Result<f64> {
    let sigma2 = problem.require_sigma2()?;
    Ok(sigma2.sqrt() * (8.0 * (problem.m() as f64).ln() / problem.n() as f64).sqrt())
}

/// Smallest penalty that forces the all-zero solution:
/// `(2/n) max_j |X_j' Y|`.
pub fn lambda_max(problem: &DesignProblem) -> f64 {
    let n = problem.n() as f64;
    (0..problem.m())
        .map(|j| (problem.x().column(j).dot(problem.y()) * 2.0 / n).abs())
        .fold(0.0, f64::max)
}

/// Default cross-validation grid: 50 log-spaced penalties descending from
/// [`lambda_max`] to `1e-3` of it.
pub fn default_lambda_grid(problem: &DesignProblem) -> Vec<f64> {
    let top = lambda_max(problem).max(f64::MIN_POSITIVE);
    let points = 50;
    (0..points)
        .map(|i| top * 10f64.powf(-3.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// A certified Lasso solution.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub theta: DVector<f64>,
    /// Objective `(1/n)|Y - X theta|^2 + lambda |theta|_1` after each sweep
    /// (first entry: the all-zero start).
    pub objective_trace: Vec<f64>,
    /// Largest KKT violation at the returned point.
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub lambda: f64,
}

fn objective(problem: &DesignProblem, residual: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    residual.norm_squared() / problem.n() as f64
        + lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Largest violation of the subgradient conditions at `theta`:
/// `|(2/n) X_j'(Y - X theta)| <= lambda` for zero coordinates and
/// `= lambda * sign(theta_j)` for active ones.
pub fn lasso_kkt_residual(problem: &DesignProblem, theta: &DVector<f64>, lambda: f64) -> f64 {
    let n = problem.n() as f64;
    let residual = problem.y() - problem.x() * theta;
    let mut worst = 0.0f64;
    for j in 0..problem.m() {
        let g = 2.0 * problem.x().column(j).dot(&residual) / n;
        let violation = if theta[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * theta[j].signum()).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Coordinate descent on `(1/n)|Y - X theta|^2 + lambda |theta|_1` from a
/// warm start, sweeping until the KKT residual drops below `tol`.
fn coordinate_descent(
    problem: &DesignProblem,
    lambda: f64,
    warm: DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<LassoFit> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lasso penalty must be positive, got {lambda}"
        )));
    }
    let x = problem.x();
    let n = problem.n() as f64;
    let m = problem.m();
    let norms_sq: Vec<f64> = (0..m).map(|j| x.column(j).norm_squared()).collect();
    let mut theta = warm;
    let mut residual = problem.y() - x * &theta;
    let mut trace = vec![objective(problem, &residual, &theta, lambda)];
    let half_n_lambda = n * lambda / 2.0;
    for sweep in 1..=max_iters {
        for j in 0..m {
            if norms_sq[j] == 0.0 {
                continue; // a zero column never helps the fit
            }
            let old = theta[j];
            let rho = x.column(j).dot(&residual) + norms_sq[j] * old;
            let new = soft(rho, half_n_lambda) / norms_sq[j];
            if new != old {
                residual.axpy(old - new, &x.column(j).into_owned(), 1.0);
                theta[j] = new;
            }
        }
        trace.push(objective(problem, &residual, &theta, lambda));
        let kkt = lasso_kkt_residual(problem, &theta, lambda);
        if kkt <= tol {
            return Ok(LassoFit {
                theta,
                objective_trace: trace,
                kkt_residual: kkt,
                sweeps: sweep,
                lambda,
            });
        }
    }
    Err(Error::LassoNoConvergence {
        sweeps: max_iters,
        kkt: lasso_kkt_residual(problem, &theta, lambda),
    })
}

/// Lasso solution with full diagnostics; errors when the KKT conditions are
/// not certified within `max_iters` sweeps.
pub fn lasso_fit(problem: &DesignProblem, cfg: &LassoConfig) -> Result<LassoFit> {
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => default_lambda(problem)?,
    };
    coordinate_descent(
        problem,
        lambda,
        DVector::zeros(problem.m()),
        cfg.max_iters,
        cfg.tol,
    )
}

/// Lasso coefficients (see [`lasso_fit`] for diagnostics).
pub fn lasso(problem: &DesignProblem, cfg: &LassoConfig) -> Result<DVector<f64>> {
    Ok(lasso_fit(problem, cfg)?.theta)
}

fn subproblem(problem: &DesignProblem, rows: &[usize]) -> Result<DesignProblem> {
    let x = DMatrix::from_fn(rows.len(), problem.m(), |i, j| problem.x()[(rows[i], j)]);
    let y = DVector::from_fn(rows.len(), |i, _| problem.y()[rows[i]]);
    DesignProblem::from_xy(x, y)
}

/// KKT tolerance of the fold fits inside [`lasso_cv`]. Held-out error
/// comparison does not need certificate-grade optima, and the grid's tail
/// (tiny penalties on overcomplete designs) converges slowly past this
/// point; only the returned full-data refit is held to `cfg.tol`.
const CV_PATH_TOL: f64 = 1e-4;

/// Cross-validated Lasso: fold assignment by seeded shuffle, penalties
/// swept in descending order with warm starts (fold fits at the relaxed
/// [`CV_PATH_TOL`]), held-out error `(1/|fold|)|Y_fold - X_fold theta|^2`
/// averaged over folds, ties broken toward the larger penalty, final refit
/// on the full data at the configured tolerance.
pub fn lasso_cv(problem: &DesignProblem, cfg: &LassoConfig) -> Result<DVector<f64>> {
    let n = problem.n();
    if cfg.cv_folds < 2 || cfg.cv_folds > n {
        return Err(Error::InvalidArgument(format!(
            "fold count must lie in [2, n] = [2, {n}], got {}",
            cfg.cv_folds
        )));
    }
    let mut grid = match &cfg.lambda_grid {
        Some(g) => g.clone(),
        None => default_lambda_grid(problem),
    };
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidArgument(
            "penalty grid must be nonempty and positive".into(),
        ));
    }
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    grid.dedup();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.cv_seed);
    order.shuffle(&mut rng);

    let mut held_out = vec![0.0f64; grid.len()];
    for fold in 0..cfg.cv_folds {
        let lo = fold * n / cfg.cv_folds;
        let hi = (fold + 1) * n / cfg.cv_folds;
        let test: Vec<usize> = order[lo..hi].to_vec();
        let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        let train_problem = subproblem(problem, &train)?;
        let x_test = DMatrix::from_fn(test.len(), problem.m(), |i, j| {
            problem.x()[(test[i], j)]
        });
        let y_test = DVector::from_fn(test.len(), |i, _| problem.y()[test[i]]);
        let mut warm = DVector::zeros(problem.m());
        for (gi, &lambda) in grid.iter().enumerate() {
            let fit = coordinate_descent(
                &train_problem,
                lambda,
                warm,
                cfg.max_iters,
                cfg.tol.max(CV_PATH_TOL),
            )?;
            warm = fit.theta;
            let err = (&y_test - &x_test * &warm).norm_squared() / test.len().max(1) as f64;
            held_out[gi] += err / cfg.cv_folds as f64;
        }
    }

    // Descending grid + strict improvement: ties resolve to the larger penalty.
    let mut best = 0;
    for gi in 1..grid.len() {
        if held_out[gi] < held_out[best] {
            best = gi;
        }
    }
    lasso(
        problem,
        &LassoConfig {
            lambda: Some(grid[best]),
            lambda_grid: None,
            ..cfg.clone()
        },
    )
}

/// Default refit threshold `sigma * sqrt(2 log(M) / n)`.
pub fn default_gauss_threshold(problem: &DesignProblem) -> Result<f64> {
    let sigma2 = problem.require_sigma2()?;
    Ok(sigma2.sqrt() * (2.0 * (problem.m() as f64).ln() / problem.n() as f64).sqrt())
}

/// Keep the coordinates of `base` strictly above `threshold` in magnitude
/// and refit them by (minimum-norm) least squares; everything else is zero.
pub fn lasso_gauss(
    problem: &DesignProblem,
    base: &DVector<f64>,
    threshold: f64,
) -> Result<DVector<f64>> {
    if base.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            what: "base coefficient length",
            expected: problem.m(),
            actual: base.len(),
        });
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let idx: Vec<usize> = (0..base.len())
        .filter(|j| base[*j].abs() > threshold)
        .collect();
    let pattern = SparsityPattern::from_indices(problem.m(), &idx)?;
    Ok(restricted_least_squares(problem, &pattern, DEFAULT_RANK_TOL)?.theta)
}

/// Settings for [`bic`].
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BicConfig {
    /// Penalty shape parameter.
    pub a: f64,
    /// Refuse to enumerate more than this many patterns.
    pub exhaustive_cap: u128,
}

impl Default for BicConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            exhaustive_cap: 1 << 20,
        }
    }
}

/// Per-pattern penalty of the best-subset criterion:
/// `(2 sigma^2 / n) * (1 + ((2+a)/(1+a)) sqrt(L) + ((1+a)/a) L) * k` with
/// `L = 2 log(eM / (k v 1))`.
pub fn bic_penalty(k: usize, m: usize, n: usize, sigma2: f64, a: f64) -> f64 {
    let l = 2.0 * (std::f64::consts::E * m as f64 / (k.max(1) as f64)).ln();
    2.0 * sigma2 / n as f64
        * (1.0 + (2.0 + a) / (1.0 + a) * l.sqrt() + (1.0 + a) / a * l)
        * k as f64
}

/// Exhaustive best-subset selection minimizing `(1/n) rss(p) + penalty(|p|)`
/// over all `2^M` patterns. Ties break toward the smaller pattern, then
/// lexicographically (patterns are visited size-ascending, lexicographic
/// within a size, and only strict improvement replaces the incumbent).
pub fn bic(problem: &DesignProblem, cfg: &BicConfig) -> Result<DVector<f64>> {
    if !(cfg.a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty parameter a must be positive, got {}",
            cfg.a
        )));
    }
    let sigma2 = problem.require_sigma2()?;
    let m = problem.m();
    let total: u128 = if m >= 128 { u128::MAX } else { 1u128 << m };
    if total > cfg.exhaustive_cap {
        return Err(Error::EnumerationTooLarge {
            support: total,
            cap: cfg.exhaustive_cap,
        });
    }
    use itertools::Itertools;
    let n = problem.n();
    let mut best_value = f64::INFINITY;
    let mut best_theta = DVector::zeros(m);
    for k in 0..=m {
        let pen = bic_penalty(k, m, n, sigma2, cfg.a);
        for idx in (0..m).combinations(k) {
            let pattern = SparsityPattern::from_indices(m, &idx)?;
            let fit = restricted_least_squares(problem, &pattern, DEFAULT_RANK_TOL)?;
            let value = fit.rss / n as f64 + pen;
            if value < best_value {
                best_value = value;
                best_theta = fit.theta;
            }
        }
    }
    Ok(best_theta)
}

/// Componentwise `sign(y_j) * max(|y_j| - t, 0)`.
pub fn soft_threshold(y: &DVector<f64>, t: f64) -> DVector<f64> {
    assert!(t >= 0.0, "threshold must be nonnegative, got {t}");
    DVector::from_fn(y.len(), |j, _| soft(y[j], t))
}
