//! Result emission and dataset ingestion.
//!
//! Floats are written with Rust's shortest-round-trip `Display` formatting,
//! so equal results produce byte-identical files on every platform.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::harness::config::OutputFormat;
use crate::harness::runner::{ExperimentResult, RamsValue};
use crate::linalg::DesignProblem;
use crate::{Error, Result};

/// Column order of the per-replication CSV.
pub const RECORD_HEADER: [&str; 8] = [
    "experiment",
    "replication",
    "estimator",
    "pred_error",
    "est_error",
    "ms_error",
    "sigma2",
    "seed",
];

/// Column order of the summary CSV.
pub const SUMMARY_HEADER: [&str; 11] = [
    "experiment",
    "estimator",
    "successes",
    "failures",
    "pred_error_mean",
    "pred_error_sd",
    "est_error_mean",
    "est_error_sd",
    "ms_error_mean",
    "ms_error_sd",
    "rams",
];

/// Write results to `path`.
///
/// CSV format produces three files from the same stem: `<stem>.csv`
/// (records), `<stem>_summary.csv`, and `<stem>_meta.json`. JSON format
/// produces the single file `path` holding the whole [`ExperimentResult`].
/// Returns the paths written.
pub fn emit_results(
    result: &ExperimentResult,
    path: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    match format {
        OutputFormat::Csv => {
            let records = path.with_extension("csv");
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "results".to_string());
            let summary = path.with_file_name(format!("{stem}_summary.csv"));
            let meta = path.with_file_name(format!("{stem}_meta.json"));
            fs::write(&records, records_csv(result))?;
            fs::write(&summary, summary_csv(result))?;
            let mut meta_file = fs::File::create(&meta)?;
            serde_json::to_writer_pretty(&mut meta_file, &result.metadata)?;
            meta_file.write_all(b"\n")?;
            Ok(vec![records, summary, meta])
        }
        OutputFormat::Json => {
            let mut file = fs::File::create(path)?;
            serde_json::to_writer_pretty(&mut file, result)?;
            file.write_all(b"\n")?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

fn records_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    out.push_str(&RECORD_HEADER.join(","));
    out.push('\n');
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.experiment,
            r.replication,
            r.estimator,
            r.pred_error,
            r.est_error,
            r.ms_error,
            r.sigma2,
            r.seed
        ));
    }
    out
}

fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    out.push_str(&SUMMARY_HEADER.join(","));
    out.push('\n');
    for s in &result.summaries {
        let rams = match s.rams {
            Some(RamsValue::Defined(v)) => v.to_string(),
            Some(RamsValue::Undefined) => "undefined".to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            result.metadata.experiment,
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
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Where the response lives relative to the design CSV.
#[derive(Clone, Debug, Default)]
pub struct IngestLayout {
    /// 1-based column of the design file holding the response.
    pub response_column: Option<usize>,
    /// Separate single-column CSV holding the response.
    pub response_path: Option<PathBuf>,
    /// Known noise variance to attach, if any.
    pub sigma2: Option<f64>,
}

/// What ingestion found, alongside the assembled problem.
#[derive(Debug)]
pub struct IngestReport {
    pub problem: DesignProblem,
    pub n: usize,
    pub m: usize,
    pub design_had_header: bool,
    pub response_had_header: bool,
    /// Columns whose squared norm exceeds the sample size (tolerance
    /// 1e-6), i.e. data that violates the normalization the risk bounds
    /// assume; `(column, squared_norm / n)` pairs, 1-based columns.
    pub column_norm_warnings: Vec<(usize, f64)>,
}

/// Parse a numeric CSV with optional header. The header is auto-detected:
/// if any cell of the first row fails to parse as a float, the row is
/// treated as a header and skipped.
fn read_numeric_csv(path: &Path) -> Result<(Vec<Vec<f64>>, bool)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut had_header = false;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 {
            let parsed: Option<Vec<f64>> = record
                .iter()
                .map(|cell| cell.trim().parse::<f64>().ok())
                .collect();
            match parsed {
                Some(first) if !first.is_empty() => {
                    check_finite(&first, 1)?;
                    rows.push(first);
                }
                _ => had_header = true,
            }
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedCell {
                row: i + 1,
                col: j + 1,
                content: cell.to_string(),
            })?;
            row.push(v);
        }
        check_finite(&row, i + 1)?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::InvalidArgument(format!(
                "row {} has {} cells, expected {}",
                i + 1,
                row.len(),
                width
            )));
        }
    }
    Ok((rows, had_header))
}

fn check_finite(row: &[f64], row_idx: usize) -> Result<()> {
    for (j, v) in row.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::MalformedCell {
                row: row_idx,
                col: j + 1,
                content: v.to_string(),
            });
        }
    }
    Ok(())
}

/// Read a design (and response) from CSV files and assemble a problem.
///
/// Exactly one of `layout.response_column` and `layout.response_path` must
/// be set. Column norms are checked against the `|X_j|^2 <= n` convention
/// and violations are reported, not rejected.
pub fn ingest_csv(design_path: &Path, layout: &IngestLayout) -> Result<IngestReport> {
    match (layout.response_column, &layout.response_path) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "give either a response column or a response file, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "a response column or a response file is required".into(),
            ))
        }
        _ => {}
    }
    let (mut rows, design_had_header) = read_numeric_csv(design_path)?;
    let mut response_had_header = false;
    let y: Vec<f64> = if let Some(col) = layout.response_column {
        let width = rows[0].len();
        if col == 0 || col > width {
            return Err(Error::InvalidArgument(format!(
                "response column {col} out of range 1..={width}"
            )));
        }
        rows.iter_mut().map(|row| row.remove(col - 1)).collect()
    } else {
        let path = layout.response_path.as_ref().unwrap();
        let (resp_rows, header) = read_numeric_csv(path)?;
        response_had_header = header;
        if resp_rows.iter().any(|r| r.len() != 1) {
            return Err(Error::InvalidArgument(
                "response file must have exactly one column".into(),
            ));
        }
        resp_rows.into_iter().map(|r| r[0]).collect()
    };
    let n = rows.len();
    let m = rows[0].len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "design has no predictor columns".into(),
        ));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: n,
            actual: y.len(),
        });
    }
    let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let problem = DesignProblem::new(x, DVector::from_vec(y), layout.sigma2, None, None)?;
    let column_norm_warnings = problem
        .column_norm_violations(1e-6)
        .into_iter()
        .map(|(j, ratio)| (j + 1, ratio))
        .collect();
    Ok(IngestReport {
        n,
        m,
        design_had_header,
        response_had_header,
        column_norm_warnings,
        problem,
    })
}

/// Write a matrix as a headerless CSV, one row per line, `Display`
/// formatting (parses back to the identical float).
pub fn write_matrix_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&x[(i, j)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a vector as a single-column headerless CSV.
pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..v.len() {
        out.push_str(&v[i].to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn ingest_with_response_column_and_no_header() {
        let d = dir();
        let design = d.path().join("data.csv");
        fs::write(&design, "1.0,2.0,7.5\n3.0,4.0,-1.25\n").unwrap();
        let report = ingest_csv(
            &design,
            &IngestLayout {
                response_column: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((report.n, report.m), (2, 2));
        assert!(!report.design_had_header);
        assert_eq!(report.problem.y()[0], 7.5);
        assert_eq!(report.problem.y()[1], -1.25);
        assert_eq!(report.problem.x()[(1, 1)], 4.0);
    }

    #[test]
    fn ingest_detects_headers_and_separate_response() {
        let d = dir();
        let design = d.path().join("x.csv");
        let response = d.path().join("y.csv");
        fs::write(&design, "a,b\n1,2\n3,4\n").unwrap();
        fs::write(&response, "y\n10\n20\n").unwrap();
        let report = ingest_csv(
            &design,
            &IngestLayout {
                response_path: Some(response),
                sigma2: Some(1.5),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.design_had_header);
        assert!(report.response_had_header);
        assert_eq!(report.problem.sigma2(), Some(1.5));
        assert_eq!(report.problem.y()[1], 20.0);
    }

    #[test]
    fn malformed_cells_are_located_one_based() {
        let d = dir();
        let design = d.path().join("bad.csv");
        fs::write(&design, "1,2\n3,oops\n").unwrap();
        let err = ingest_csv(
            &design,
            &IngestLayout {
                response_column: Some(1),
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::MalformedCell { row, col, content } => {
                assert_eq!((row, col), (2, 2));
                assert_eq!(content, "oops");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let d = dir();
        let design = d.path().join("inf.csv");
        fs::write(&design, "1,inf\n3,4\n").unwrap();
        let err = ingest_csv(
            &design,
            &IngestLayout {
                response_column: Some(1),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedCell { row: 1, col: 2, .. }));
    }

    #[test]
    fn layout_must_pick_exactly_one_response_source() {
        let d = dir();
        let design = d.path().join("x.csv");
        fs::write(&design, "1,2\n").unwrap();
        assert!(ingest_csv(&design, &IngestLayout::default()).is_err());
        assert!(ingest_csv(
            &design,
            &IngestLayout {
                response_column: Some(1),
                response_path: Some(design.clone()),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn oversized_columns_are_reported_not_rejected() {
        let d = dir();
        let design = d.path().join("x.csv");
        // Column 1 has squared norm 100 over n = 2 rows.
        fs::write(&design, "10,1,0\n0,1,1\n").unwrap();
        let report = ingest_csv(
            &design,
            &IngestLayout {
                response_column: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.column_norm_warnings.len(), 1);
        let (col, ratio) = report.column_norm_warnings[0];
        assert_eq!(col, 1);
        assert!((ratio - 50.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_and_vector_csv_round_trip_exactly() {
        let d = dir();
        let xp = d.path().join("m.csv");
        let x = DMatrix::from_fn(3, 2, |i, j| {
            (i as f64 + 1.0) / 3.0 * if j == 0 { 1.0 } else { -0.1 }
        });
        write_matrix_csv(&xp, &x).unwrap();
        let (rows, header) = read_numeric_csv(&xp).unwrap();
        assert!(!header);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(rows[i][j], x[(i, j)]);
            }
        }
        let vp = d.path().join("v.csv");
        let v = DVector::from_vec(vec![0.1, -2.5e-17, 3.0]);
        write_vector_csv(&vp, &v).unwrap();
        let (rows, _) = read_numeric_csv(&vp).unwrap();
        assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![
            0.1, -2.5e-17, 3.0
        ]);
    }
}
