//! Round trips through the harness file formats, the large external-data
//! ingestion shape, and consistency between the emitted summary table and
//! the emitted long-format rows.

use std::fs;

use exscreen::harness::{
    emit_results, ingest_csv, run_experiment, write_matrix_csv, write_vector_csv, DesignConfig,
    EstimatorSpec, ExperimentConfig, ExperimentResult, IngestLayout, OutputFormat,
    Sigma2Setting, RECORD_HEADER,
};
use exscreen::es::MhParams;
use exscreen::simgen::{generate_design_matrix, DesignKind, DesignSpec};

fn small_config(replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        id: "io-suite".to_string(),
        design: DesignConfig {
            kind: DesignKind::GaussianIid,
            n: 20,
            m: 12,
            r_tilde: None,
        },
        s: 2,
        sigma2: Sigma2Setting::Value(1.0),
        noise_sigma2: None,
        estimators: vec![
            EstimatorSpec::Es {
                name: None,
                prior: None,
                t0: Some(100),
                t: Some(300),
            },
            EstimatorSpec::Lasso {
                name: None,
                lambda: None,
            },
        ],
        replications,
        root_seed: 7,
        reference_estimator: Some("lasso".to_string()),
        es: MhParams { t0: 3000, t: 7000 },
        sigma2_alpha: None,
        max_estimator_failures: 0,
        output: None,
    }
}

/// The handwritten-digits shape: 256 samples against a 7290-column
/// dictionary, written out and ingested back without loss.
#[test]
fn digits_scale_ingest_round_trips() {
    let n = 256usize;
    let m = 7290usize;
    let x = generate_design_matrix(&DesignSpec {
        kind: DesignKind::RademacherIid,
        n,
        m,
        r_tilde: None,
        seed: 99,
    })
    .unwrap();
    let y = exscreen::simgen::generate_sequence_model(&nalgebra::DVector::zeros(n), n, 100)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let design_path = dir.path().join("design.csv");
    let response_path = dir.path().join("response.csv");
    write_matrix_csv(&design_path, &x).unwrap();
    write_vector_csv(&response_path, &y).unwrap();

    let report = ingest_csv(
        &design_path,
        &IngestLayout {
            response_column: None,
            response_path: Some(response_path),
            sigma2: Some(1.0),
        },
    )
    .unwrap();
    assert_eq!(report.n, n);
    assert_eq!(report.m, m);
    assert!(!report.design_had_header);
    assert_eq!(report.problem.x(), &x);
    assert_eq!(report.problem.y(), &y);
    assert_eq!(report.problem.sigma2(), Some(1.0));
}

/// Summary means must equal the arithmetic mean of the long-format rows as
/// emitted (parsing the CSV text back, not reusing in-memory values).
#[test]
fn emitted_summary_matches_emitted_rows() {
    let result = run_experiment(&small_config(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("out.csv");
    emit_results(&result, &base, OutputFormat::Csv).unwrap();

    let long = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let mut lines = long.lines();
    assert_eq!(
        lines.next().unwrap(),
        RECORD_HEADER.join(","),
        "long-format header mismatch"
    );
    // column indices: estimator 2, pred 3, est 4, ms 5.
    let mut sums: std::collections::BTreeMap<String, (f64, f64, f64, usize)> =
        Default::default();
    let mut last_rep: i64 = -1;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let rep: i64 = cells[1].parse().unwrap();
        assert!(rep >= last_rep, "rows out of replication order");
        last_rep = rep;
        let e = sums.entry(cells[2].to_string()).or_default();
        e.0 += cells[3].parse::<f64>().unwrap();
        e.1 += cells[4].parse::<f64>().unwrap();
        e.2 += cells[5].parse::<f64>().unwrap();
        e.3 += 1;
    }
    let summary = fs::read_to_string(dir.path().join("out_summary.csv")).unwrap();
    let mut checked = 0;
    for line in summary.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let (sp, se, sm, count) = sums[cells[1]];
        let k = count as f64;
        for (emitted, recomputed) in [
            (cells[4].parse::<f64>().unwrap(), sp / k),
            (cells[6].parse::<f64>().unwrap(), se / k),
            (cells[8].parse::<f64>().unwrap(), sm / k),
        ] {
            assert!(
                (emitted - recomputed).abs() <= 1e-12,
                "summary mean {emitted} vs recomputed {recomputed} for {}",
                cells[1]
            );
        }
        checked += 1;
    }
    assert_eq!(checked, 2);
}

/// The JSON emission parses back into the same result (timings are not
/// part of the output contract and deserialize as zero).
#[test]
fn json_emission_round_trips() {
    let result = run_experiment(&small_config(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    emit_results(&result, &path, OutputFormat::Json).unwrap();
    let parsed: ExperimentResult =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let mut stripped = result.clone();
    for r in &mut stripped.records {
        r.wall_time = 0.0;
    }
    assert_eq!(parsed.metadata, stripped.metadata);
    assert_eq!(parsed.summaries, stripped.summaries);
    assert_eq!(parsed.records, stripped.records);
    assert_eq!(parsed.failures, stripped.failures);
}

/// One replication: means equal the single observation and the standard
/// deviations are reported as zero.
#[test]
fn single_replication_reports_zero_sd() {
    let result = run_experiment(&small_config(1)).unwrap();
    assert_eq!(result.records.len(), 2);
    for s in &result.summaries {
        let record = result
            .records
            .iter()
            .find(|r| r.estimator == s.estimator)
            .unwrap();
        assert_eq!(s.successes, 1);
        assert_eq!(s.pred_error_mean, record.pred_error);
        assert_eq!(s.est_error_mean, record.est_error);
        assert_eq!(s.pred_error_sd, 0.0);
        assert_eq!(s.est_error_sd, 0.0);
        assert_eq!(s.ms_error_sd, 0.0);
    }
}
