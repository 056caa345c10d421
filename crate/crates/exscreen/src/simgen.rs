//! Seeded generators for synthetic designs, signals, and responses.
//!
//! Everything here is a pure function of its arguments: the same spec and
//! seed produce bitwise-identical output on every run and thread count.
//! Seeds for independent streams (design, noise, per-replication work) are
//! derived with [`derive_seed`] so generation order never matters.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::DesignProblem;
use crate::{Error, Result};

/// Random-design families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// `X[i,j] ~ N(0,1)` i.i.d.
    GaussianIid,
    /// `X[i,j] = ±1` i.i.d. with equal probability.
    RademacherIid,
    /// `X[i,j] = e_{ij} * sqrt(n / r_tilde)` for the first `r_tilde` rows
    /// (`e_{ij}` i.i.d. Rademacher), zero below: every column has empirical
    /// norm 1 and the matrix has rank at most `r_tilde`.
    RankRestrictedRademacher,
    /// `X = sqrt(n) * I` (requires `M = n`), so `X'X / n = I`.
    DiagonalIdentity,
}

/// A design-generation request.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub m: usize,
    /// Row cutoff for [`DesignKind::RankRestrictedRademacher`]; ignored by
    /// the other kinds.
    #[serde(default)]
    pub r_tilde: Option<usize>,
    pub seed: u64,
}

impl DesignSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument(
                "design dimensions must be positive".into(),
            ));
        }
        match self.kind {
            DesignKind::RankRestrictedRademacher => {
                let r = self.r_tilde.ok_or_else(|| {
                    Error::InvalidArgument(
                        "rank-restricted designs need r_tilde".into(),
                    )
                })?;
                if r < 1 || r > self.n.min(self.m) {
                    return Err(Error::InvalidArgument(format!(
                        "r_tilde must lie in [1, min(n, M)] = [1, {}], got {r}",
                        self.n.min(self.m)
                    )));
                }
            }
            DesignKind::DiagonalIdentity => {
                if self.m != self.n {
                    return Err(Error::InvalidArgument(format!(
                        "diagonal-identity designs need M = n, got M = {}, n = {}",
                        self.m, self.n
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Shape/parameter checks of a design spec, without generating anything.
pub(crate) fn validate_design_spec(spec: &DesignSpec) -> Result<()> {
    spec.validate()
}

/// Generate the design matrix for a spec.
pub fn generate_design_matrix(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = match spec.kind {
        DesignKind::GaussianIid => {
            DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
        DesignKind::RademacherIid => {
            DMatrix::from_fn(n, m, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
        DesignKind::RankRestrictedRademacher => {
            let r = spec.r_tilde.unwrap();
            let scale = (n as f64 / r as f64).sqrt();
            DMatrix::from_fn(n, m, |i, _| {
                if i < r {
                    if rng.random::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                } else {
                    0.0
                }
            })
        }
        DesignKind::DiagonalIdentity => DMatrix::from_diagonal_element(n, n, (n as f64).sqrt()),
    };
    Ok(x)
}

/// Generate a design wrapped in a [`DesignProblem`] with a zero response
/// placeholder (attach a real response via [`generate_response`] and a new
/// problem construction).
pub fn generate_design(spec: &DesignSpec) -> Result<DesignProblem> {
    let x = generate_design_matrix(spec)?;
    let y = DVector::zeros(spec.n);
    DesignProblem::new(x, y, None, None, None)
}

/// The staircase signal: 1 on the first `s` coordinates, 0 elsewhere.
pub fn generate_signal(m: usize, s: usize) -> Result<DVector<f64>> {
    if s < 1 || s > m {
        return Err(Error::InvalidArgument(format!(
            "signal sparsity must lie in [1, M] = [1, {m}], got {s}"
        )));
    }
    Ok(DVector::from_fn(m, |j, _| if j < s { 1.0 } else { 0.0 }))
}

/// `Y = X theta_star + sigma xi` with standard Gaussian noise.
pub fn generate_response(
    x: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    sigma2: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if x.ncols() != theta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "signal length",
            expected: x.ncols(),
            actual: theta_star.len(),
        });
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be nonnegative, got {sigma2}"
        )));
    }
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = x * theta_star;
    for v in y.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(y)
}

/// Observations `y_i = theta_i + eps_i / sqrt(n)` with standard Gaussian
/// `eps` (the sequence-model counterpart of the diagonal design).
pub fn generate_sequence_model(theta: &DVector<f64>, n: usize, seed: u64) -> Result<DVector<f64>> {
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "sequence-model length",
            expected: n,
            actual: theta.len(),
        });
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DVector::from_fn(n, |i, _| {
        theta[i] + scale * rng.sample::<f64, _>(StandardNormal)
    }))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of one work item from a root seed, a stream label, and
/// an index within the stream. The composition avalanches each input, so
/// items can be generated in any order (or in parallel) without collisions
/// between nearby (root, stream, index) triples.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root).wrapping_add(stream)).wrapping_add(index))
}
