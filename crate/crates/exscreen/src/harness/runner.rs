//! Replication runner: generate, estimate, measure, summarize.
//!
//! Replications run in parallel; every random input is derived from the
//! root seed, the stream label, and the replication index, and results are
//! collected in replication order, so output is identical for any worker
//! count.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{
    bic, default_gauss_threshold, lasso, lasso_cv, lasso_gauss, BicConfig, LassoConfig,
};
use crate::es::{estimate_sigma2, exact_es, mh_es, MhParams, Sigma2Options};
use crate::harness::config::{
    EstimatorSpec, ExperimentConfig, OutputFormat, Sigma2Setting,
};
use crate::linalg::{rank_of_design, DesignProblem, DEFAULT_RANK_TOL};
use crate::prior::{PriorKind, PriorSpec};
use crate::simgen::{derive_seed, generate_design_matrix, generate_response, generate_signal, DesignKind};
use crate::util::mean_sd;
use crate::{Error, Result};

/// Seed-derivation stream labels (`derive_seed(root, STREAM, replication)`).
const STREAM_DESIGN: u64 = 1;
const STREAM_RESPONSE: u64 = 2;
const STREAM_SIGMA2: u64 = 3;
const STREAM_ESTIMATOR_BASE: u64 = 16;

/// Metrics of one estimator on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub experiment: String,
    pub replication: usize,
    pub estimator: String,
    /// `|X(theta_hat - theta_star)|^2 / n`.
    pub pred_error: f64,
    /// `|theta_hat - theta_star|^2`.
    pub est_error: f64,
    /// Symmetric-difference count; see [`model_selection_error`].
    pub ms_error: usize,
    /// Variance handed to the estimators on this replication.
    pub sigma2: f64,
    /// Seed of this estimator's own randomness.
    pub seed: u64,
    /// Seconds spent in the estimator; held in memory only, never emitted,
    /// so output files stay identical across machines and runs.
    #[serde(skip, default)]
    pub wall_time: f64,
}

/// One estimator failure (recorded, not fatal to the run).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub estimator: String,
    pub message: String,
}

/// Ratio of total model-selection errors against the reference estimator;
/// `Undefined` when the reference total is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RamsValue {
    Defined(f64),
    Undefined,
}

impl Serialize for RamsValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RamsValue::Defined(v) => serializer.serialize_f64(*v),
            RamsValue::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for RamsValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(RamsValue::Defined(v)),
            Raw::Text(t) if t == "undefined" => Ok(RamsValue::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"undefined\", got \"{t}\""
            ))),
        }
    }
}

/// Per-estimator mean and standard deviation of each metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub successes: usize,
    pub failures: usize,
    pub pred_error_mean: f64,
    pub pred_error_sd: f64,
    pub est_error_mean: f64,
    pub est_error_sd: f64,
    pub ms_error_mean: f64,
    pub ms_error_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rams: Option<RamsValue>,
}

/// Run provenance emitted alongside the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub design_kind: DesignKind,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub sigma2: Sigma2Setting,
    pub noise_sigma2: f64,
    pub replications: usize,
    pub root_seed: u64,
    pub es: MhParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_estimator: Option<String>,
    /// Fixed sentence pinning down which dimension label means what.
    pub dimension_convention: String,
}

pub(crate) const DIMENSION_CONVENTION: &str =
    "n = sample size (design rows); M = dictionary size (design columns); S = signal sparsity";

/// Everything a run produces, in deterministic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metadata: RunMetadata,
    pub summaries: Vec<EstimatorSummary>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<FailureRecord>,
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Count of coordinates selected wrongly in either direction:
/// `|theta_hat_j| > 1/n` where `theta_star_j = 0`, plus `theta_hat_j = 0`
/// where `|theta_star_j| > 1/n`.
///
/// The two sides are deliberately asymmetric (an exact-zero test on one, a
/// `1/n` threshold on the other): averaged estimators are never exactly
/// zero, so they are charged only for coordinates clearly away from zero,
/// while sparse estimators are charged for every miss of a clearly nonzero
/// truth.
pub fn model_selection_error(
    theta_hat: &DVector<f64>,
    theta_star: &DVector<f64>,
    n: usize,
) -> Result<usize> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "coefficient lengths",
            expected: theta_star.len(),
            actual: theta_hat.len(),
        });
    }
    let cut = 1.0 / n as f64;
    let mut count = 0;
    for j in 0..theta_hat.len() {
        if theta_hat[j].abs() > cut && theta_star[j] == 0.0 {
            count += 1;
        }
        if theta_hat[j] == 0.0 && theta_star[j].abs() > cut {
            count += 1;
        }
    }
    Ok(count)
}

/// Total model-selection errors of a candidate relative to a reference,
/// over matched replications.
pub fn rams(candidate: &[usize], reference: &[usize]) -> Result<RamsValue> {
    if candidate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            what: "replication counts",
            expected: reference.len(),
            actual: candidate.len(),
        });
    }
    let ref_total: usize = reference.iter().sum();
    if ref_total == 0 {
        return Ok(RamsValue::Undefined);
    }
    let cand_total: usize = candidate.iter().sum();
    Ok(RamsValue::Defined(cand_total as f64 / ref_total as f64))
}

// ---------------------------------------------------------------------------
// Estimator dispatch
// ---------------------------------------------------------------------------

/// Run one configured estimator on a prepared problem. `rank` is the
/// design rank (prior cutoff for the screening estimators); `seed` drives
/// any estimator-internal randomness.
pub fn run_estimator(
    spec: &EstimatorSpec,
    problem: &DesignProblem,
    rank: usize,
    defaults: &MhParams,
    seed: u64,
) -> Result<DVector<f64>> {
    match spec {
        EstimatorSpec::Es { prior, t0, t, .. } => {
            let kind = prior.unwrap_or(PriorKind::Simplified);
            let prior_spec = PriorSpec::new(kind, problem.m(), rank)?;
            let params = MhParams {
                t0: t0.unwrap_or(defaults.t0),
                t: t.unwrap_or(defaults.t),
            };
            Ok(mh_es(problem, &prior_spec, &params, seed)?.theta)
        }
        EstimatorSpec::ExactEs { prior, .. } => {
            let kind = prior.unwrap_or(PriorKind::Full);
            let prior_spec = PriorSpec::new(kind, problem.m(), rank)?;
            Ok(exact_es(problem, &prior_spec)?.theta)
        }
        EstimatorSpec::Lasso { lambda, .. } => lasso(
            problem,
            &LassoConfig {
                lambda: *lambda,
                ..Default::default()
            },
        ),
        EstimatorSpec::LassoCv {
            folds, lambda_grid, ..
        } => lasso_cv(
            problem,
            &LassoConfig {
                cv_folds: folds.unwrap_or(10),
                lambda_grid: lambda_grid.clone(),
                cv_seed: seed,
                ..Default::default()
            },
        ),
        EstimatorSpec::LassoGauss {
            lambda, threshold, ..
        } => {
            let base = lasso(
                problem,
                &LassoConfig {
                    lambda: *lambda,
                    ..Default::default()
                },
            )?;
            let cut = match threshold {
                Some(t) => *t,
                None => default_gauss_threshold(problem)?,
            };
            lasso_gauss(problem, &base, cut)
        }
        EstimatorSpec::LassoGaussCv {
            folds,
            lambda_grid,
            threshold,
            ..
        } => {
            let base = lasso_cv(
                problem,
                &LassoConfig {
                    cv_folds: folds.unwrap_or(10),
                    lambda_grid: lambda_grid.clone(),
                    cv_seed: seed,
                    ..Default::default()
                },
            )?;
            let cut = match threshold {
                Some(t) => *t,
                None => default_gauss_threshold(problem)?,
            };
            lasso_gauss(problem, &base, cut)
        }
        EstimatorSpec::Bic { a, cap, .. } => bic(
            problem,
            &BicConfig {
                a: a.unwrap_or(1.0),
                exhaustive_cap: cap.map(u128::from).unwrap_or(1 << 20),
            },
        ),
    }
}

// ---------------------------------------------------------------------------
// The runner
// ---------------------------------------------------------------------------

struct ReplicationOutput {
    records: Vec<ReplicationRecord>,
    failures: Vec<FailureRecord>,
}

fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationOutput> {
    let root = cfg.root_seed;
    let design_spec = cfg.design.to_spec(derive_seed(root, STREAM_DESIGN, rep as u64));
    let x = generate_design_matrix(&design_spec)?;
    let theta_star = generate_signal(cfg.design.m, cfg.s)?;
    let y = generate_response(
        &x,
        &theta_star,
        cfg.noise_variance(),
        derive_seed(root, STREAM_RESPONSE, rep as u64),
    )?;
    let mut problem = DesignProblem::new(x, y, None, Some(theta_star.clone()), None)?;
    let rank = rank_of_design(&problem, DEFAULT_RANK_TOL).max(1);
    let sigma2 = match cfg.sigma2 {
        Sigma2Setting::Value(v) => v,
        Sigma2Setting::Auto => {
            estimate_sigma2(
                &problem,
                &Sigma2Options {
                    alpha: cfg.sigma2_alpha.unwrap_or(1.0),
                    seed: derive_seed(root, STREAM_SIGMA2, rep as u64),
                    ..Default::default()
                },
            )?
            .sigma2
        }
    };
    problem.set_sigma2(sigma2);

    let n = problem.n();
    let mut records = Vec::with_capacity(cfg.estimators.len());
    let mut failures = Vec::new();
    for (i, est) in cfg.estimators.iter().enumerate() {
        let seed = derive_seed(root, STREAM_ESTIMATOR_BASE + i as u64, rep as u64);
        let started = Instant::now();
        match run_estimator(est, &problem, rank, &cfg.es, seed) {
            Ok(theta_hat) => {
                let diff = &theta_hat - &theta_star;
                records.push(ReplicationRecord {
                    experiment: cfg.id.clone(),
                    replication: rep,
                    estimator: est.display_name(),
                    pred_error: (problem.x() * &diff).norm_squared() / n as f64,
                    est_error: diff.norm_squared(),
                    ms_error: model_selection_error(&theta_hat, &theta_star, n)?,
                    sigma2,
                    seed,
                    wall_time: started.elapsed().as_secs_f64(),
                });
            }
            Err(e) => failures.push(FailureRecord {
                replication: rep,
                estimator: est.display_name(),
                message: e.to_string(),
            }),
        }
    }
    Ok(ReplicationOutput { records, failures })
}

/// Run every configured estimator on every replication. Record order is
/// (replication, estimator-roster position); summaries follow the roster.
/// Deterministic for a fixed config and root seed, for any thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outputs: Vec<ReplicationOutput> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for out in outputs {
        records.extend(out.records);
        failures.extend(out.failures);
    }

    let summaries = summarize(cfg, &records, &failures);
    Ok(ExperimentResult {
        metadata: RunMetadata {
            experiment: cfg.id.clone(),
            design_kind: cfg.design.kind,
            n: cfg.design.n,
            m: cfg.design.m,
            s: cfg.s,
            sigma2: cfg.sigma2,
            noise_sigma2: cfg.noise_variance(),
            replications: cfg.replications,
            root_seed: cfg.root_seed,
            es: cfg.es,
            reference_estimator: cfg.reference_estimator.clone(),
            dimension_convention: DIMENSION_CONVENTION.to_string(),
        },
        summaries,
        records,
        failures,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    records: &[ReplicationRecord],
    failures: &[FailureRecord],
) -> Vec<EstimatorSummary> {
    let reference = cfg.reference_estimator.as_deref();
    cfg.estimators
        .iter()
        .map(|est| {
            let name = est.display_name();
            let mine: Vec<&ReplicationRecord> =
                records.iter().filter(|r| r.estimator == name).collect();
            let (pred_mean, pred_sd) =
                mean_sd(&mine.iter().map(|r| r.pred_error).collect::<Vec<_>>());
            let (est_mean, est_sd) =
                mean_sd(&mine.iter().map(|r| r.est_error).collect::<Vec<_>>());
            let (ms_mean, ms_sd) =
                mean_sd(&mine.iter().map(|r| r.ms_error as f64).collect::<Vec<_>>());
            let rams_value = reference.map(|ref_name| {
                // Pair by replication: only replications where both the
                // candidate and the reference succeeded enter the ratio.
                let mut cand = Vec::new();
                let mut refr = Vec::new();
                for r in &mine {
                    if let Some(other) = records
                        .iter()
                        .find(|o| o.estimator == ref_name && o.replication == r.replication)
                    {
                        cand.push(r.ms_error);
                        refr.push(other.ms_error);
                    }
                }
                rams(&cand, &refr).expect("paired vectors have equal length")
            });
            EstimatorSummary {
                estimator: name.clone(),
                successes: mine.len(),
                failures: failures.iter().filter(|f| f.estimator == name).count(),
                pred_error_mean: pred_mean,
                pred_error_sd: pred_sd,
                est_error_mean: est_mean,
                est_error_sd: est_sd,
                ms_error_mean: ms_mean,
                ms_error_sd: ms_sd,
                rams: rams_value,
            }
        })
        .collect()
}

/// Resolve the output settings: CLI flags override the config block;
/// defaults are `results.csv` in the working directory.
pub fn resolve_output(
    cfg: &ExperimentConfig,
    out_flag: Option<std::path::PathBuf>,
    format_flag: Option<OutputFormat>,
) -> (std::path::PathBuf, OutputFormat) {
    let path = out_flag
        .or_else(|| cfg.output.as_ref().map(|o| o.path.clone()))
        .unwrap_or_else(|| std::path::PathBuf::from("results.csv"));
    let format = format_flag
        .or_else(|| cfg.output.as_ref().map(|o| o.format))
        .unwrap_or(OutputFormat::Csv);
    (path, format)
}
