//! Simulation harness: experiment configs, a deterministic replication
//! runner, and CSV/JSON emission plus dataset ingestion.

mod config;
mod io;
mod runner;

pub use config::{
    DesignConfig, EstimatorSpec, ExperimentConfig, OutputConfig, OutputFormat, Sigma2Setting,
};
pub use io::{
    emit_results, ingest_csv, write_matrix_csv, write_vector_csv, IngestLayout, IngestReport,
    RECORD_HEADER, SUMMARY_HEADER,
};
pub use runner::{
    model_selection_error, rams, resolve_output, run_estimator, run_experiment,
    EstimatorSummary, ExperimentResult, FailureRecord, RamsValue, ReplicationRecord, RunMetadata,
};
