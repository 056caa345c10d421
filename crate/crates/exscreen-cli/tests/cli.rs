//! End-to-end checks of the command-line interface: exit codes, output
//! determinism across thread counts, and agreement between the subcommands
//! and the library they wrap.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exscreen"))
}

fn run_config(dir: &Path, stem: &str, extra: &[&str]) -> Output {
    let config = dir.join("exp.toml");
    fs::write(
        &config,
        r#"
id = "cli-suite"
s = 2
sigma2 = 1.0
replications = 4
root_seed = 11
reference_estimator = "lasso"

[design]
kind = "gaussian-iid"
n = 20
m = 12

[es]
t0 = 100
t = 300

[[estimators]]
kind = "es"

[[estimators]]
kind = "lasso"
"#,
    )
    .unwrap();
    let mut cmd = bin();
    cmd.arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join(format!("{stem}.csv")))
        .args(extra);
    cmd.output().unwrap()
}

fn emitted_bytes(dir: &Path, stem: &str) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = ["", "_summary", "_meta"]
        .iter()
        .map(|suffix| {
            let ext = if suffix == &"_meta" { "json" } else { "csv" };
            let name = format!("{stem}{suffix}.{ext}");
            (name.clone(), fs::read(dir.join(name)).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_outputs_are_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_config(dir.path(), "a", &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run_config(dir.path(), "b", &[]);
    assert!(b.status.success());
    let c = run_config(dir.path(), "c", &["--threads", "1"]);
    assert!(c.status.success());
    let d = run_config(dir.path(), "d", &["--threads", "8"]);
    assert!(d.status.success());

    let reference: Vec<Vec<u8>> = emitted_bytes(dir.path(), "a")
        .into_iter()
        .map(|(_, bytes)| bytes)
        .collect();
    for stem in ["b", "c", "d"] {
        let other: Vec<Vec<u8>> = emitted_bytes(dir.path(), stem)
            .into_iter()
            .map(|(_, bytes)| bytes)
            .collect();
        assert_eq!(reference, other, "stem {stem} differs from reference run");
    }
}

#[test]
fn config_errors_exit_one() {
    let missing = bin()
        .args(["run", "--config", "/nonexistent/exp.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "replications = 0\n").unwrap();
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimator_failures_beyond_threshold_exit_two_but_still_write() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fail.toml");
    // A subset-selection cap far below 2^M makes every replication fail.
    fs::write(
        &config,
        r#"
id = "failure-threshold"
s = 2
sigma2 = 1.0
replications = 3
max_estimator_failures = 0

[design]
kind = "gaussian-iid"
n = 15
m = 25

[[estimators]]
kind = "lasso"

[[estimators]]
kind = "bic"
cap = 100
"#,
    )
    .unwrap();
    let out_path = dir.path().join("fail.csv");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(&out_path).unwrap();
    // Lasso records survive; the failing estimator contributes none.
    assert!(records.lines().count() > 1);
    assert!(!records.contains(",bic,"));
}

#[test]
fn rates_subcommand_matches_the_library() {
    let out = bin()
        .args([
            "rates", "psi", "--n", "100", "--m", "200", "--sigma", "1.0", "--s", "5", "--l1",
            "2.5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let printed: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let expected = exscreen::rates::psi(&exscreen::rates::RateQuery {
        n: 100,
        m: 200,
        r: 100,
        sigma: 1.0,
        s: 5,
        l1: 2.5,
        d: None,
    })
    .unwrap();
    assert_eq!(printed, expected);

    // Argument errors surface as config errors.
    let bad = bin()
        .args(["rates", "zeta", "--n", "100", "--m", "200", "--sigma", "1.0"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ingest_and_estimate_run_on_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("data.csv");
    // Last column is the response; include a header to exercise detection.
    let mut text = String::from("x1,x2,x3,y\n");
    let rows = [
        [1.0, 0.0, 0.5, 1.9],
        [0.0, 1.0, -0.5, -1.1],
        [1.0, 1.0, 0.25, 1.2],
        [0.5, -1.0, 0.75, 1.4],
        [-0.5, 0.5, -0.25, -0.7],
        [0.25, 0.75, 1.0, 0.9],
    ];
    for row in rows {
        text.push_str(&format!("{},{},{},{}\n", row[0], row[1], row[2], row[3]));
    }
    fs::write(&design, text).unwrap();

    let out = bin()
        .arg("ingest")
        .arg("--design")
        .arg(&design)
        .args(["--response-col", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 6);
    assert_eq!(report["m"], 3);
    assert_eq!(report["design_had_header"], true);

    let est = bin()
        .arg("estimate")
        .arg("--design")
        .arg(&design)
        .args([
            "--response-col",
            "4",
            "--sigma2",
            "0.25",
            "--estimator",
            "exact-es",
        ])
        .output()
        .unwrap();
    assert!(est.status.success(), "{}", String::from_utf8_lossy(&est.stderr));
    let result: serde_json::Value = serde_json::from_slice(&est.stdout).unwrap();
    assert_eq!(result["estimator"], "exact-es");
    assert_eq!(result["theta"].as_array().unwrap().len(), 3);
}
