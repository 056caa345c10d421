//! `exscreen` — experiment runner, data ingestion, and rate calculators
//! for sparse regression by exponential screening.
//!
//! Exit codes: 0 on success, 1 for configuration/usage/data errors, 2 when
//! estimator failures exceed the configured tolerance.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exscreen::harness::{
    emit_results, ingest_csv, resolve_output, run_estimator, run_experiment, EstimatorSpec,
    ExperimentConfig, IngestLayout, OutputFormat, RamsValue,
};
use exscreen::linalg::{rank_of_design, DEFAULT_RANK_TOL};
use exscreen::prior::PriorKind;
use exscreen::rates::{aggregation_rate, phi, psi, zeta, AggregationKind, RateQuery};

#[derive(Parser)]
#[command(
    name = "exscreen",
    version,
    about = "Sparse regression by exponential screening: replication \
             experiments, data ingestion, and risk-rate calculators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replication experiment described by a TOML config file.
    Run(RunArgs),
    /// Parse a design/response CSV pair and report its shape.
    Ingest(IngestArgs),
    /// Evaluate a closed-form risk-rate function.
    Rates(RatesArgs),
    /// Run a single estimator on ingested data and print the coefficients.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment definition (TOML mirroring the library's ExperimentConfig).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Output path: CSV stem (three files) or JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; overrides the config's output block.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker-pool size for replications (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Design matrix CSV, one observation per row; header auto-detected.
    #[arg(long)]
    design: PathBuf,
    /// Single-column response CSV.
    #[arg(long)]
    response: Option<PathBuf>,
    /// 1-based design column holding the response instead.
    #[arg(long, conflicts_with = "response")]
    response_col: Option<usize>,
    /// Known noise variance to attach to the problem.
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateKindArg {
    /// Sparsity-or-l1 prediction rate.
    Phi,
    /// As phi, additionally capped by the squared l1 norm.
    Psi,
    /// Unit-constant variant of psi used in lower bounds.
    Zeta,
    /// Optimal rate of model-selection aggregation.
    ModelSelection,
    /// Optimal rate of convex aggregation.
    Convex,
    /// Optimal rate of linear aggregation.
    Linear,
    /// Optimal rate of linear aggregation over D-subsets.
    LinearSubset,
    /// Optimal rate of convex aggregation over D-subsets.
    ConvexSubset,
}

#[derive(Args)]
struct RatesArgs {
    /// Which rate function to evaluate.
    #[arg(value_enum)]
    kind: RateKindArg,
    /// Sample size (design rows).
    #[arg(long)]
    n: usize,
    /// Dictionary size (design columns).
    #[arg(long)]
    m: usize,
    /// Design rank; defaults to min(n, m).
    #[arg(long)]
    r: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Sparsity of the target coefficient vector.
    #[arg(long, default_value_t = 0)]
    s: usize,
    /// l1 norm of the target coefficient vector.
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    /// Subset size for the subset aggregation rates.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Es,
    ExactEs,
    Lasso,
    LassoCv,
    LassoGauss,
    LassoGaussCv,
    Bic,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Full,
    Simplified,
}

impl From<PriorArg> for PriorKind {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Full => PriorKind::Full,
            PriorArg::Simplified => PriorKind::Simplified,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Design matrix CSV, one observation per row; header auto-detected.
    #[arg(long)]
    design: PathBuf,
    /// Single-column response CSV.
    #[arg(long)]
    response: Option<PathBuf>,
    /// 1-based design column holding the response instead.
    #[arg(long, conflicts_with = "response")]
    response_col: Option<usize>,
    /// Noise variance (required by the screening, default-penalty lasso,
    /// thresholding, and subset-selection estimators).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Which estimator to run.
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Lasso penalty; defaults to sigma*sqrt(8 log M / n).
    #[arg(long)]
    lambda: Option<f64>,
    /// Coefficient threshold of the refitting estimators; defaults to
    /// sigma*sqrt(2 log M / n).
    #[arg(long)]
    threshold: Option<f64>,
    /// Cross-validation fold count.
    #[arg(long)]
    folds: Option<usize>,
    /// Sampler burn-in horizon.
    #[arg(long)]
    t0: Option<usize>,
    /// Sampler averaging horizon.
    #[arg(long)]
    t: Option<usize>,
    /// Sparsity prior of the screening estimators.
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    /// Penalty scale of the subset-selection estimator.
    #[arg(long)]
    bic_a: Option<f64>,
    /// Seed for the estimator's own randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors carrying their exit code: configuration/data problems exit 1,
/// estimator failures exit 2.
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Estimator errors that arise from the data (non-convergence, blown
/// enumeration caps) are runtime failures; everything else is a
/// configuration problem.
fn estimator_err(e: exscreen::Error) -> CliError {
    match e {
        exscreen::Error::LassoNoConvergence { .. } | exscreen::Error::EnumerationTooLarge { .. } => {
            CliError::Runtime(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors; everything else clap
            // rejects is a usage/config problem and must exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Estimate(args) => cmd_estimate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.root_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.replications = reps;
    }
    cfg.validate().map_err(config_err)?;

    let result = match args.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(config_err)?
            .install(|| run_experiment(&cfg)),
        None => run_experiment(&cfg),
    }
    .map_err(config_err)?;

    let (path, format) = resolve_output(&cfg, args.out, args.format.map(Into::into));
    let written = emit_results(&result, &path, format).map_err(config_err)?;

    println!(
        "{}: {} replications, {} estimators, {} failure(s)",
        result.metadata.experiment,
        result.metadata.replications,
        result.summaries.len(),
        result.failures.len()
    );
    println!(
        "{:<18} {:>4} {:>4} {:>22} {:>22} {:>16} {:>10}",
        "estimator", "ok", "fail", "pred_error", "est_error", "ms_error", "rams"
    );
    for s in &result.summaries {
        let rams = match s.rams {
            Some(RamsValue::Defined(v)) => format!("{v:.3}"),
            Some(RamsValue::Undefined) => "undefined".to_string(),
            None => "-".to_string(),
        };
        println!(
            "{:<18} {:>4} {:>4} {:>13.4} ({:.4}) {:>13.4} ({:.4}) {:>9.2} ({:.2}) {:>10}",
            s.estimator,
            s.successes,
            s.failures,
            s.pred_error_mean,
            s.pred_error_sd,
            s.est_error_mean,
            s.est_error_sd,
            s.ms_error_mean,
            s.ms_error_sd,
            rams
        );
    }
    for p in &written {
        println!("wrote {}", p.display());
    }

    if result.failures.len() > cfg.max_estimator_failures {
        return Err(CliError::Runtime(format!(
            "{} estimator failure(s) exceed the allowed {}",
            result.failures.len(),
            cfg.max_estimator_failures
        )));
    }
    Ok(())
}

fn layout_of(
    response: Option<PathBuf>,
    response_col: Option<usize>,
    sigma2: Option<f64>,
) -> IngestLayout {
    IngestLayout {
        response_column: response_col,
        response_path: response,
        sigma2,
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let layout = layout_of(args.response, args.response_col, args.sigma2);
    let report = ingest_csv(&args.design, &layout).map_err(config_err)?;
    let json = serde_json::json!({
        "n": report.n,
        "m": report.m,
        "design_had_header": report.design_had_header,
        "response_had_header": report.response_had_header,
        "sigma2": report.problem.sigma2(),
        "column_norm_warnings": report.column_norm_warnings
            .iter()
            .map(|(col, ratio)| serde_json::json!({"column": col, "sq_norm_over_n": ratio}))
            .collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&json).map_err(config_err)?);
    Ok(())
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliError> {
    let query = RateQuery {
        n: args.n,
        m: args.m,
        r: args.r.unwrap_or_else(|| args.n.min(args.m)),
        sigma: args.sigma,
        s: args.s,
        l1: args.l1,
        d: args.d,
    };
    let value = match args.kind {
        RateKindArg::Phi => phi(&query),
        RateKindArg::Psi => psi(&query),
        RateKindArg::Zeta => zeta(&query),
        RateKindArg::ModelSelection => aggregation_rate(AggregationKind::ModelSelection, &query),
        RateKindArg::Convex => aggregation_rate(AggregationKind::Convex, &query),
        RateKindArg::Linear => aggregation_rate(AggregationKind::Linear, &query),
        RateKindArg::LinearSubset => aggregation_rate(AggregationKind::LinearSubset, &query),
        RateKindArg::ConvexSubset => aggregation_rate(AggregationKind::ConvexSubset, &query),
    }
    .map_err(config_err)?;
    println!("{value}");
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let layout = layout_of(args.response, args.response_col, args.sigma2);
    let report = ingest_csv(&args.design, &layout).map_err(config_err)?;
    let problem = report.problem;

    let spec = match args.estimator {
        EstimatorArg::Es => EstimatorSpec::Es {
            name: None,
            prior: args.prior.map(Into::into),
            t0: args.t0,
            t: args.t,
        },
        EstimatorArg::ExactEs => EstimatorSpec::ExactEs {
            name: None,
            prior: args.prior.map(Into::into),
        },
        EstimatorArg::Lasso => EstimatorSpec::Lasso {
            name: None,
            lambda: args.lambda,
        },
        EstimatorArg::LassoCv => EstimatorSpec::LassoCv {
            name: None,
            folds: args.folds,
            lambda_grid: None,
        },
        EstimatorArg::LassoGauss => EstimatorSpec::LassoGauss {
            name: None,
            lambda: args.lambda,
            threshold: args.threshold,
        },
        EstimatorArg::LassoGaussCv => EstimatorSpec::LassoGaussCv {
            name: None,
            folds: args.folds,
            lambda_grid: None,
            threshold: args.threshold,
        },
        EstimatorArg::Bic => EstimatorSpec::Bic {
            name: None,
            a: args.bic_a,
            cap: None,
        },
    };

    let rank = rank_of_design(&problem, DEFAULT_RANK_TOL).max(1);
    let theta = run_estimator(&spec, &problem, rank, &Default::default(), args.seed)
        .map_err(estimator_err)?;

    let json = serde_json::json!({
        "estimator": spec.display_name(),
        "n": problem.n(),
        "m": problem.m(),
        "sigma2": problem.sigma2(),
        "seed": args.seed,
        "theta": theta.iter().copied().collect::<Vec<f64>>(),
    });
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&json).map_err(config_err)?
    );
    match &args.out {
        Some(path) => fs::write(path, text).map_err(config_err)?,
        None => print!("{text}"),
    }
    Ok(())
}
