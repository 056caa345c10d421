//! Declarative experiment configuration (the document format the CLI's
//! `run --config` file deserializes into).

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::es::MhParams;
use crate::prior::PriorKind;
use crate::simgen::{DesignKind, DesignSpec};
use crate::{Error, Result};

/// Design family and shape; the per-replication seed is derived by the
/// runner, so none is configured here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub kind: DesignKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_tilde: Option<usize>,
}

impl DesignConfig {
    pub fn to_spec(&self, seed: u64) -> DesignSpec {
        DesignSpec {
            kind: self.kind,
            n: self.n,
            m: self.m,
            r_tilde: self.r_tilde,
            seed,
        }
    }
}

/// The noise variance handed to estimators: a number, or `"auto"` to run
/// the variance-scan heuristic once per replication.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sigma2Setting {
    Value(f64),
    Auto,
}

impl Serialize for Sigma2Setting {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma2Setting::Value(v) => serializer.serialize_f64(*v),
            Sigma2Setting::Auto => serializer.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma2Setting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Sigma2Setting::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Sigma2Setting::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "sigma2 must be a positive number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    pub format: OutputFormat,
}

/// One estimator to run per replication, with its parameters. Omitted
/// parameters fall back to the standard defaults (penalty
/// `sigma sqrt(8 log M / n)`, threshold `sigma sqrt(2 log M / n)`, ten
/// folds, the experiment's sampler horizons).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    /// Sampler-based exponential screening.
    Es {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<PriorKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<usize>,
    },
    /// Enumerated exponential screening (small supports only).
    ExactEs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<PriorKind>,
    },
    Lasso {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    LassoCv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        folds: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_grid: Option<Vec<f64>>,
    },
    /// Lasso base, hard threshold, least-squares refit.
    LassoGauss {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    /// Cross-validated Lasso base, hard threshold, least-squares refit.
    LassoGaussCv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        folds: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_grid: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
    },
    /// Exhaustive best-subset selection.
    Bic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<u64>,
    },
}

impl EstimatorSpec {
    /// Configured name, or the kind's slug.
    pub fn display_name(&self) -> String {
        let (explicit, slug) = match self {
            EstimatorSpec::Es { name, .. } => (name, "es"),
            EstimatorSpec::ExactEs { name, .. } => (name, "exact-es"),
            EstimatorSpec::Lasso { name, .. } => (name, "lasso"),
            EstimatorSpec::LassoCv { name, .. } => (name, "lasso-cv"),
            EstimatorSpec::LassoGauss { name, .. } => (name, "lasso-gauss"),
            EstimatorSpec::LassoGaussCv { name, .. } => (name, "lasso-gauss-cv"),
            EstimatorSpec::Bic { name, .. } => (name, "bic"),
        };
        explicit.clone().unwrap_or_else(|| slug.to_string())
    }
}

/// A full replication experiment: design family, signal, noise, estimator
/// roster, and output destination.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub design: DesignConfig,
    /// Signal sparsity: the first `s` coefficients are 1.
    pub s: usize,
    /// Variance handed to the estimators.
    pub sigma2: Sigma2Setting,
    /// Variance of the generated noise; defaults to `s / 9`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma2: Option<f64>,
    pub estimators: Vec<EstimatorSpec>,
    pub replications: usize,
    #[serde(default)]
    pub root_seed: u64,
    /// Denominator of the relative model-selection summary column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_estimator: Option<String>,
    /// Default sampler horizons for `es` estimators.
    #[serde(default)]
    pub es: MhParams,
    /// Departure threshold of the `"auto"` variance scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_alpha: Option<f64>,
    /// Replication-level estimator failures tolerated before the CLI exits
    /// with the failure status.
    #[serde(default)]
    pub max_estimator_failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_id() -> String {
    "experiment".to_string()
}

impl ExperimentConfig {
    /// Variance used when generating responses.
    pub fn noise_variance(&self) -> f64 {
        self.noise_sigma2.unwrap_or(self.s as f64 / 9.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidArgument(
                "replications must be at least 1".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one estimator is required".into(),
            ));
        }
        if self.s < 1 || self.s > self.design.m {
            return Err(Error::InvalidArgument(format!(
                "signal sparsity must lie in [1, M] = [1, {}], got {}",
                self.design.m, self.s
            )));
        }
        if let Sigma2Setting::Value(v) = self.sigma2 {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma2 must be positive, got {v}"
                )));
            }
        }
        if let Some(v) = self.noise_sigma2 {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "noise_sigma2 must be nonnegative, got {v}"
                )));
            }
        }
        let names: Vec<String> = self.estimators.iter().map(|e| e.display_name()).collect();
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate estimator name \"{name}\"; set distinct `name` fields"
                )));
            }
        }
        if let Some(reference) = &self.reference_estimator {
            if !names.iter().any(|n| n == reference) {
                return Err(Error::InvalidArgument(format!(
                    "reference estimator \"{reference}\" is not among the configured \
                     estimators {names:?}"
                )));
            }
        }
        // Shape constraints surface early rather than at generation time.
        self.design.to_spec(0).validate_shape()?;
        Ok(())
    }
}

impl DesignSpec {
    pub(crate) fn validate_shape(&self) -> Result<()> {
        // Reuse the generator's checks without materializing a matrix.
        crate::simgen::validate_design_spec(self)
    }
}
