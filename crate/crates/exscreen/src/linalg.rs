//! Design/response containers and pattern-restricted least squares.
//!
//! A *sparsity pattern* selects a subset of dictionary columns; the
//! restricted least-squares fit minimizes `|Y - X theta|^2` over vectors
//! supported on that subset, breaking rank-deficient ties by the
//! minimum-Euclidean-norm solution. [`IncrementalFit`] maintains a thin QR
//! factorization of the selected columns so that single-column flips cost
//! `O(n * |p|)` instead of a fresh factorization, which is what makes the
//! Metropolis–Hastings sampler in [`crate::es`] affordable.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative singular-value cutoff for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Default number of committed single-column updates between full QR
/// refactorizations of [`IncrementalFit`].
pub const DEFAULT_REFACTOR_EVERY: usize = 250;

// ---------------------------------------------------------------------------
// SparsityPattern
// ---------------------------------------------------------------------------

/// Subset of dictionary columns, stored as a bit vector of length `M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparsityPattern {
    bits: Vec<bool>,
    size: usize,
}

impl SparsityPattern {
    /// The empty pattern on `m` columns.
    pub fn zeros(m: usize) -> Self {
        Self {
            bits: vec![false; m],
            size: 0,
        }
    }

    /// The full pattern on `m` columns.
    pub fn full(m: usize) -> Self {
        Self {
            bits: vec![true; m],
            size: m,
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let size = bits.iter().filter(|b| **b).count();
        Self { bits, size }
    }

    /// Pattern on `m` columns with the given members set.
    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let mut p = Self::zeros(m);
        for &j in indices {
            if j >= m {
                return Err(Error::InvalidArgument(format!(
                    "pattern index {j} out of range for m = {m}"
                )));
            }
            if !p.bits[j] {
                p.bits[j] = true;
                p.size += 1;
            }
        }
        Ok(p)
    }

    /// Support of a coefficient vector (exact non-zeros).
    pub fn support_of(theta: &DVector<f64>) -> Self {
        Self::from_bits(theta.iter().map(|t| *t != 0.0).collect())
    }

    /// Number of columns `M`.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of selected columns `|p|`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn set(&mut self, j: usize, value: bool) {
        if self.bits[j] != value {
            self.bits[j] = value;
            if value {
                self.size += 1;
            } else {
                self.size -= 1;
            }
        }
    }

    /// Copy of the pattern with coordinate `j` toggled.
    pub fn flipped(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.set(j, !out.bits[j]);
        out
    }

    /// Member indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, b)| b.then_some(j))
            .collect()
    }

    /// True when the two patterns differ in exactly one coordinate.
    pub fn is_neighbor_of(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .bits
                .iter()
                .zip(other.bits.iter())
                .filter(|(a, b)| a != b)
                .count()
                == 1
    }

    /// Size of the symmetric difference with `other`.
    pub fn symmetric_difference_size(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

// ---------------------------------------------------------------------------
// DesignProblem
// ---------------------------------------------------------------------------

/// A regression problem: design `X` (`n x M`), response `Y`, and optional
/// noise variance, true coefficients, and true mean vector.
///
/// When `mean` is absent but `theta_star` is given, `mean = X * theta_star`
/// is filled in at construction.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: Option<f64>,
    theta_star: Option<DVector<f64>>,
    mean: Option<DVector<f64>>,
}

impl DesignProblem {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        sigma2: Option<f64>,
        theta_star: Option<DVector<f64>>,
        mean: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (n, m) = x.shape();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(
                "design must have at least one row and one column".into(),
            ));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: n,
                actual: y.len(),
            });
        }
        if let Some(t) = &theta_star {
            if t.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "theta_star length",
                    expected: m,
                    actual: t.len(),
                });
            }
        }
        if let Some(f) = &mean {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "mean length",
                    expected: n,
                    actual: f.len(),
                });
            }
        }
        if let Some(s2) = sigma2 {
            if !(s2 > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma2 must be positive, got {s2}"
                )));
            }
        }
        let mean = mean.or_else(|| theta_star.as_ref().map(|t| &x * t));
        Ok(Self {
            x,
            y,
            sigma2,
            theta_star,
            mean,
        })
    }

    /// Bare problem with only a design and a response.
    pub fn from_xy(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::new(x, y, None, None, None)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Number of observations (rows).
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Dictionary size (columns).
    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn require_sigma2(&self) -> Result<f64> {
        self.sigma2.ok_or(Error::MissingSigma2)
    }

    pub fn set_sigma2(&mut self, sigma2: f64) {
        self.sigma2 = Some(sigma2);
    }

    pub fn theta_star(&self) -> Option<&DVector<f64>> {
        self.theta_star.as_ref()
    }

    /// True mean vector when known (given directly or implied by `theta_star`).
    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    /// Empirical squared norm of column `j`: `|X_j|^2 / n`.
    pub fn column_norm_sq(&self, j: usize) -> f64 {
        self.x.column(j).norm_squared() / self.n() as f64
    }

    /// Columns whose empirical squared norm exceeds `1 + tol`, with the
    /// offending value. The library warns on these rather than rejecting:
    /// its guarantees are calibrated to unit-norm dictionaries.
    pub fn column_norm_violations(&self, tol: f64) -> Vec<(usize, f64)> {
        (0..self.m())
            .filter_map(|j| {
                let nsq = self.column_norm_sq(j);
                (nsq > 1.0 + tol).then_some((j, nsq))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Restricted least squares
// ---------------------------------------------------------------------------

/// Least-squares fit restricted to a sparsity pattern.
#[derive(Clone, Debug)]
pub struct PatternFit {
    /// Coefficients, full length `M`; zero off the pattern.
    pub theta: DVector<f64>,
    /// Residual sum of squares `|Y - X theta|^2` (unnormalized).
    pub rss: f64,
    /// Effective rank of the selected columns.
    pub r_p: usize,
}

fn gather_columns(x: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut sub = DMatrix::zeros(n, indices.len());
    for (c, &j) in indices.iter().enumerate() {
        sub.set_column(c, &x.column(j));
    }
    sub
}

/// Minimum-norm least squares of `Y` on the columns selected by `p`.
///
/// Rank decisions use singular values relative to the largest one with the
/// cutoff `rank_tol` (see [`DEFAULT_RANK_TOL`]). The empty pattern yields
/// `theta = 0`, `rss = |Y|^2`, `r_p = 0`.
pub fn restricted_least_squares(
    problem: &DesignProblem,
    p: &SparsityPattern,
    rank_tol: f64,
) -> Result<PatternFit> {
    if p.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            what: "pattern length",
            expected: problem.m(),
            actual: p.len(),
        });
    }
    let m = problem.m();
    let mut theta = DVector::zeros(m);
    let indices = p.indices();
    if indices.is_empty() {
        return Ok(PatternFit {
            theta,
            rss: problem.y().norm_squared(),
            r_p: 0,
        });
    }
    let sub = gather_columns(problem.x(), &indices);
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        // All selected columns are zero: the fit is the zero vector.
        return Ok(PatternFit {
            theta,
            rss: problem.y().norm_squared(),
            r_p: 0,
        });
    }
    let eps = rank_tol * smax;
    let r_p = svd.rank(eps);
    let beta = svd
        .solve(problem.y(), eps)
        .map_err(|e| Error::InvalidArgument(format!("svd solve failed: {e}")))?;
    for (c, &j) in indices.iter().enumerate() {
        theta[j] = beta[c];
    }
    let resid = problem.y() - &sub * &beta;
    Ok(PatternFit {
        theta,
        rss: resid.norm_squared(),
        r_p,
    })
}

/// Rank of the full design under the relative cutoff `rank_tol`.
pub fn rank_of_design(problem: &DesignProblem, rank_tol: f64) -> usize {
    let svd = problem.x().clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    svd.rank(rank_tol * smax)
}

/// Residual sum of squares `|Y - X theta|^2` of an arbitrary coefficient
/// vector (not necessarily a least-squares fit).
pub fn rss_of(problem: &DesignProblem, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            what: "theta length",
            expected: problem.m(),
            actual: theta.len(),
        });
    }
    Ok((problem.y() - problem.x() * theta).norm_squared())
}

// ---------------------------------------------------------------------------
// IncrementalFit: thin QR with column add/remove
// ---------------------------------------------------------------------------

/// Incremental restricted least squares under single-column pattern flips.
///
/// Internally keeps a thin QR factorization `X_p = Q R` of a maximal
/// linearly independent subset of the selected columns (Gram–Schmidt with
/// one reorthogonalization pass on insert, Givens rotations on delete),
/// together with `Q^T Y` and a running residual sum of squares. Columns
/// whose residual after projection is below `rank_tol * |column|` are held
/// aside as dependent; while any are present, full fits fall back to the
/// from-scratch minimum-norm solver so the returned coefficients keep the
/// minimum-norm contract.
///
/// Every `refactor_every` committed flips the factorization is rebuilt from
/// the raw columns to bound numerical drift.
pub struct IncrementalFit<'a> {
    problem: &'a DesignProblem,
    rank_tol: f64,
    refactor_every: usize,
    pattern: SparsityPattern,
    /// Column indices inside the QR factor, in factor order.
    qr_members: Vec<usize>,
    /// Selected columns held aside as linearly dependent.
    dependent: Vec<usize>,
    q_cols: Vec<DVector<f64>>,
    /// `r_cols[c]` holds rows `0..=c` of column `c` of `R`.
    r_cols: Vec<Vec<f64>>,
    qty: Vec<f64>,
    rss: f64,
    commits_since_refactor: usize,
    cached_fit: Option<PatternFit>,
}

impl<'a> IncrementalFit<'a> {
    /// Start from the empty pattern.
    pub fn new(problem: &'a DesignProblem) -> Self {
        Self::with_options(problem, DEFAULT_RANK_TOL, DEFAULT_REFACTOR_EVERY)
    }

    pub fn with_options(problem: &'a DesignProblem, rank_tol: f64, refactor_every: usize) -> Self {
        Self {
            problem,
            rank_tol,
            refactor_every: refactor_every.max(1),
            pattern: SparsityPattern::zeros(problem.m()),
            qr_members: Vec::new(),
            dependent: Vec::new(),
            q_cols: Vec::new(),
            r_cols: Vec::new(),
            qty: Vec::new(),
            rss: problem.y().norm_squared(),
            commits_since_refactor: 0,
            cached_fit: None,
        }
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    /// Running residual sum of squares of the current pattern.
    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// Effective rank of the current pattern.
    pub fn r_p(&self) -> usize {
        self.q_cols.len()
    }

    /// Orthogonalize column `j` against the current `Q` (one
    /// reorthogonalization pass) and return `(residual, residual_norm)`.
    fn orthogonalize(&self, j: usize) -> (DVector<f64>, f64) {
        let mut r = self.problem.x().column(j).clone_owned();
        for _ in 0..2 {
            for q in &self.q_cols {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let norm = r.norm();
        (r, norm)
    }

    fn is_dependent_norm(&self, j: usize, residual_norm: f64) -> bool {
        let col_norm = self.problem.x().column(j).norm();
        residual_norm <= self.rank_tol * col_norm
    }

    /// RSS the pattern would have after adding column `j` (no commit).
    pub fn trial_rss_add(&self, j: usize) -> Result<f64> {
        if self.pattern.get(j) {
            return Err(Error::InvalidArgument(format!(
                "column {j} is already in the pattern"
            )));
        }
        let (r, norm) = self.orthogonalize(j);
        if self.is_dependent_norm(j, norm) {
            return Ok(self.rss);
        }
        let z = r.dot(self.problem.y()) / norm;
        Ok((self.rss - z * z).max(0.0))
    }

    /// RSS the pattern would have after removing column `j` (no commit).
    pub fn trial_rss_remove(&self, j: usize) -> Result<f64> {
        if !self.pattern.get(j) {
            return Err(Error::InvalidArgument(format!(
                "column {j} is not in the pattern"
            )));
        }
        if self.dependent.contains(&j) {
            // Dropping a dependent column leaves the span unchanged.
            return Ok(self.rss);
        }
        if !self.dependent.is_empty() {
            // A dependent column may cover for the removed one; only the
            // from-scratch solve knows. Rare path, correctness first.
            let fit =
                restricted_least_squares(self.problem, &self.pattern.flipped(j), self.rank_tol)?;
            return Ok(fit.rss);
        }
        let i = self.qr_position(j);
        let k = self.q_cols.len();
        let mut r_tail: Vec<Vec<f64>> = self.r_cols[i + 1..].to_vec();
        let mut qty = self.qty.clone();
        for t in 0..r_tail.len() {
            let c = i + t; // new index of this column after the deletion
            let (gc, gs) = givens(r_tail[t][c], r_tail[t][c + 1]);
            rotate_pair_in_cols(&mut r_tail[t..], c, gc, gs);
            let (a, b) = (qty[c], qty[c + 1]);
            qty[c] = gc * a + gs * b;
            qty[c + 1] = -gs * a + gc * b;
        }
        Ok(self.rss + qty[k - 1] * qty[k - 1])
    }

    fn qr_position(&self, j: usize) -> usize {
        self.qr_members
            .iter()
            .position(|&c| c == j)
            .expect("column expected in QR factor")
    }

    /// Commit: add column `j` to the pattern.
    pub fn add(&mut self, j: usize) -> Result<()> {
        if self.pattern.get(j) {
            return Err(Error::InvalidArgument(format!(
                "column {j} is already in the pattern"
            )));
        }
        let (mut r, norm) = self.orthogonalize(j);
        if self.is_dependent_norm(j, norm) {
            self.dependent.push(j);
        } else {
            r /= norm;
            let z = r.dot(self.problem.y());
            // Column of R: projections of x_j on the existing basis, then norm.
            let xj = self.problem.x().column(j);
            let mut r_col: Vec<f64> = self.q_cols.iter().map(|q| q.dot(&xj)).collect();
            r_col.push(norm);
            self.q_cols.push(r);
            self.r_cols.push(r_col);
            self.qty.push(z);
            self.qr_members.push(j);
            self.rss = (self.rss - z * z).max(0.0);
        }
        self.pattern.set(j, true);
        self.after_commit();
        Ok(())
    }

    /// Commit: remove column `j` from the pattern.
    pub fn remove(&mut self, j: usize) -> Result<()> {
        if !self.pattern.get(j) {
            return Err(Error::InvalidArgument(format!(
                "column {j} is not in the pattern"
            )));
        }
        if let Some(pos) = self.dependent.iter().position(|&c| c == j) {
            self.dependent.remove(pos);
            self.pattern.set(j, false);
            self.after_commit();
            return Ok(());
        }
        self.pattern.set(j, false);
        if !self.dependent.is_empty() {
            // Dependent columns may become independent once `j` leaves.
            self.refactorize();
            self.cached_fit = None;
            return Ok(());
        }
        let i = self.qr_position(j);
        let k = self.q_cols.len();
        self.r_cols.remove(i);
        self.qr_members.remove(i);
        for c in i..k - 1 {
            let (gc, gs) = givens(self.r_cols[c][c], self.r_cols[c][c + 1]);
            rotate_pair_in_cols(&mut self.r_cols[c..], c, gc, gs);
            let (a, b) = (self.qty[c], self.qty[c + 1]);
            self.qty[c] = gc * a + gs * b;
            self.qty[c + 1] = -gs * a + gc * b;
            // Q <- Q G^T mixes columns c and c+1 with the same coefficients.
            let qa = self.q_cols[c].clone();
            let qb = self.q_cols[c + 1].clone();
            self.q_cols[c] = &qa * gc + &qb * gs;
            self.q_cols[c + 1] = &qa * -gs + &qb * gc;
            self.r_cols[c].truncate(c + 1);
        }
        let z_last = self.qty[k - 1];
        self.rss += z_last * z_last;
        self.qty.truncate(k - 1);
        self.q_cols.truncate(k - 1);
        self.after_commit();
        Ok(())
    }

    fn after_commit(&mut self) {
        self.cached_fit = None;
        self.commits_since_refactor += 1;
        if self.commits_since_refactor >= self.refactor_every {
            self.refactorize();
        }
    }

    /// Rebuild the factorization from the raw columns (ascending index
    /// order) and recompute the residual exactly.
    pub fn refactorize(&mut self) {
        let indices = self.pattern.indices();
        self.qr_members.clear();
        self.dependent.clear();
        self.q_cols.clear();
        self.r_cols.clear();
        self.qty.clear();
        for j in indices {
            let (mut r, norm) = self.orthogonalize(j);
            if self.is_dependent_norm(j, norm) {
                self.dependent.push(j);
            } else {
                r /= norm;
                let xj = self.problem.x().column(j);
                let mut r_col: Vec<f64> = self.q_cols.iter().map(|q| q.dot(&xj)).collect();
                r_col.push(norm);
                let z = r.dot(self.problem.y());
                self.q_cols.push(r);
                self.r_cols.push(r_col);
                self.qty.push(z);
                self.qr_members.push(j);
            }
        }
        // Exact residual: Y - Q (Q^T Y).
        let mut resid = self.problem.y().clone();
        for (q, z) in self.q_cols.iter().zip(self.qty.iter()) {
            resid.axpy(-*z, q, 1.0);
        }
        self.rss = resid.norm_squared();
        self.commits_since_refactor = 0;
        self.cached_fit = None;
    }

    /// Least-squares fit of the current pattern (cached until the next
    /// commit). Identical contract to [`restricted_least_squares`].
    pub fn fit(&mut self) -> Result<&PatternFit> {
        if self.cached_fit.is_none() {
            let fit = if self.dependent.is_empty() {
                let k = self.q_cols.len();
                let mut beta = vec![0.0; k];
                for c in (0..k).rev() {
                    let mut v = self.qty[c];
                    for l in c + 1..k {
                        v -= self.r_cols[l][c] * beta[l];
                    }
                    beta[c] = v / self.r_cols[c][c];
                }
                let mut theta = DVector::zeros(self.problem.m());
                for (c, &j) in self.qr_members.iter().enumerate() {
                    theta[j] = beta[c];
                }
                PatternFit {
                    theta,
                    rss: self.rss,
                    r_p: k,
                }
            } else {
                restricted_least_squares(self.problem, &self.pattern, self.rank_tol)?
            };
            self.cached_fit = Some(fit);
        }
        Ok(self.cached_fit.as_ref().unwrap())
    }
}

/// Givens coefficients `(c, s)` with `c*a + s*b = hypot(a, b)` and
/// `-s*a + c*b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

/// Apply a Givens rotation to rows `(row, row + 1)` of every column in
/// `cols` that is long enough to have both entries.
fn rotate_pair_in_cols(cols: &mut [Vec<f64>], row: usize, gc: f64, gs: f64) {
    for col in cols.iter_mut() {
        if col.len() > row + 1 {
            let (a, b) = (col[row], col[row + 1]);
            col[row] = gc * a + gs * b;
            col[row + 1] = -gs * a + gc * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, m: usize, seed: u64) -> DesignProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        DesignProblem::from_xy(x, y).unwrap()
    }

    #[test]
    fn empty_pattern_returns_zero_fit_and_full_rss() {
        let problem = random_problem(6, 4, 1);
        let fit =
            restricted_least_squares(&problem, &SparsityPattern::zeros(4), DEFAULT_RANK_TOL)
                .unwrap();
        assert_eq!(fit.theta, DVector::zeros(4));
        assert_eq!(fit.rss, problem.y().norm_squared());
        assert_eq!(fit.r_p, 0);
    }

    #[test]
    fn interpolating_pattern_has_zero_rss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(8, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta_star = DVector::from_vec(vec![1.0, -2.0, 0.0, 0.5, 0.0]);
        let y = &x * &theta_star;
        let problem = DesignProblem::from_xy(x.clone(), y.clone()).unwrap();
        let p = SparsityPattern::from_indices(5, &[0, 1, 3]).unwrap();
        let fit = restricted_least_squares(&problem, &p, DEFAULT_RANK_TOL).unwrap();
        assert!(fit.rss <= 1e-9 * y.norm_squared().max(1.0));
        let yhat = &x * &fit.theta;
        assert!((yhat - &y).norm() <= 1e-9 * y.norm());
    }

    #[test]
    fn duplicated_columns_get_the_minimum_norm_split() {
        // Two identical columns of ones; Y = (3,3,3). Any split a + b = 3
        // fits exactly; the minimum-norm split is (1.5, 1.5).
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![3.0, 3.0, 3.0]);
        let problem = DesignProblem::from_xy(x, y).unwrap();
        let fit =
            restricted_least_squares(&problem, &SparsityPattern::full(2), DEFAULT_RANK_TOL)
                .unwrap();
        assert!(fit.rss.abs() < 1e-18);
        assert_eq!(fit.r_p, 1);
        assert!((fit.theta[0] - 1.5).abs() < 1e-12);
        assert!((fit.theta[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rank_of_design_counts_independent_columns() {
        let problem =
            DesignProblem::from_xy(DMatrix::identity(3, 3), DVector::zeros(3).add_scalar(1.0))
                .unwrap();
        assert_eq!(rank_of_design(&problem, DEFAULT_RANK_TOL), 3);

        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let problem = DesignProblem::from_xy(x, DVector::zeros(3)).unwrap();
        assert_eq!(rank_of_design(&problem, DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn rss_of_hand_computed_example() {
        // X = I2, Y = (1, 2), theta = (1, 1): residual (0, 1), rss = 1.
        let problem = DesignProblem::from_xy(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        let theta = DVector::from_vec(vec![1.0, 1.0]);
        assert!((rss_of(&problem, &theta).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rss_of_zero_vector_is_response_norm() {
        let problem = random_problem(5, 3, 3);
        let rss = rss_of(&problem, &DVector::zeros(3)).unwrap();
        assert_eq!(rss, problem.y().norm_squared());
    }

    #[test]
    fn minimum_norm_solution_is_bitwise_deterministic() {
        let problem = random_problem(10, 20, 4);
        let p = SparsityPattern::from_indices(20, &[0, 3, 5, 7, 11, 13, 17, 19, 2, 8, 9, 12])
            .unwrap();
        let a = restricted_least_squares(&problem, &p, DEFAULT_RANK_TOL).unwrap();
        let b = restricted_least_squares(&problem, &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.rss, b.rss);
    }

    #[test]
    fn incremental_add_then_remove_restores_the_fit() {
        let problem = random_problem(12, 6, 5);
        let mut inc = IncrementalFit::new(&problem);
        for j in [0, 2, 4] {
            inc.add(j).unwrap();
        }
        let before = inc.fit().unwrap().clone();
        inc.add(5).unwrap();
        inc.remove(5).unwrap();
        let after = inc.fit().unwrap().clone();
        assert!((before.rss - after.rss).abs() <= 1e-8 * before.rss.max(1.0));
        assert!((before.theta.clone() - after.theta.clone()).amax() <= 1e-7);
        assert_eq!(before.r_p, after.r_p);
    }

    #[test]
    fn incremental_duplicate_column_keeps_rss_and_rank() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![3.0, 3.0, 3.0]);
        let problem = DesignProblem::from_xy(x, y).unwrap();
        let mut inc = IncrementalFit::new(&problem);
        inc.add(0).unwrap();
        let rss1 = inc.rss();
        let r1 = inc.r_p();
        assert!(inc.trial_rss_add(1).unwrap() - rss1 == 0.0);
        inc.add(1).unwrap();
        assert_eq!(inc.rss(), rss1);
        assert_eq!(inc.r_p(), r1);
        // Minimum-norm contract still honored through the fallback path.
        let fit = inc.fit().unwrap();
        assert!((fit.theta[0] - 1.5).abs() < 1e-10);
        assert!((fit.theta[1] - 1.5).abs() < 1e-10);
        // Removing the dependent column hands the weight back.
        inc.remove(1).unwrap();
        let fit = inc.fit().unwrap();
        assert!((fit.theta[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn incremental_matches_from_scratch_on_a_long_random_walk() {
        let problem = random_problem(40, 20, 6);
        let mut inc = IncrementalFit::new(&problem);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pattern = SparsityPattern::zeros(20);
        for step in 0..500 {
            let j = rng.random_range(0..20);
            if pattern.get(j) {
                let trial = inc.trial_rss_remove(j).unwrap();
                inc.remove(j).unwrap();
                assert!((trial - inc.rss()).abs() <= 1e-8 * trial.max(1.0));
            } else {
                let trial = inc.trial_rss_add(j).unwrap();
                inc.add(j).unwrap();
                assert!((trial - inc.rss()).abs() <= 1e-8 * trial.max(1.0));
            }
            pattern.set(j, !pattern.get(j));
            if step % 7 == 0 {
                let direct =
                    restricted_least_squares(&problem, &pattern, DEFAULT_RANK_TOL).unwrap();
                let fit = inc.fit().unwrap();
                assert!(
                    (fit.rss - direct.rss).abs() <= 1e-8 * direct.rss.max(1.0),
                    "rss drift at step {step}: {} vs {}",
                    fit.rss,
                    direct.rss
                );
                assert!((fit.theta.clone() - direct.theta.clone()).amax() <= 1e-7);
                assert_eq!(fit.r_p, direct.r_p);
            }
        }
    }

    #[test]
    fn pattern_basic_operations() {
        let mut p = SparsityPattern::zeros(5);
        assert_eq!(p.size(), 0);
        p.set(2, true);
        p.set(4, true);
        assert_eq!(p.size(), 2);
        assert_eq!(p.indices(), vec![2, 4]);
        let q = p.flipped(2);
        assert_eq!(q.size(), 1);
        assert!(p.is_neighbor_of(&q));
        assert!(!p.is_neighbor_of(&p.clone()));
        assert_eq!(p.symmetric_difference_size(&q), 1);
        let from_theta =
            SparsityPattern::support_of(&DVector::from_vec(vec![0.0, 1e-300, 0.0, -2.0, 0.0]));
        assert_eq!(from_theta.indices(), vec![1, 3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Growing the pattern never increases the residual.
        #[test]
        fn rss_is_monotone_under_pattern_growth(seed in 0u64..500, extra in 0usize..8) {
            let problem = random_problem(15, 10, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let base_indices: Vec<usize> = (0..10).filter(|_| rng.random::<bool>()).collect();
            let p = SparsityPattern::from_indices(10, &base_indices).unwrap();
            let mut q = p.clone();
            for _ in 0..extra {
                q.set(rng.random_range(0..10), true);
            }
            let fp = restricted_least_squares(&problem, &p, DEFAULT_RANK_TOL).unwrap();
            let fq = restricted_least_squares(&problem, &q, DEFAULT_RANK_TOL).unwrap();
            prop_assert!(fq.rss <= fp.rss + 1e-9 * fp.rss.max(1.0));
        }

        /// The fit is always supported on the pattern.
        #[test]
        fn fit_is_supported_on_pattern(seed in 0u64..500) {
            let problem = random_problem(12, 9, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
            let idx: Vec<usize> = (0..9).filter(|_| rng.random::<bool>()).collect();
            let p = SparsityPattern::from_indices(9, &idx).unwrap();
            let fit = restricted_least_squares(&problem, &p, DEFAULT_RANK_TOL).unwrap();
            for j in 0..9 {
                if !p.get(j) {
                    prop_assert_eq!(fit.theta[j], 0.0);
                }
            }
        }
    }
}
