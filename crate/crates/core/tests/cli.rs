use std::process::{Command, Output};

use serde_json::Value;

fn geoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoflow"))
        .args(args)
        .env_remove("GEOFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn torus_self_count_report() {
    let out = geoflow(&["count", "--metric", "torus", "--x", "0,0", "--T", "2.5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["command"], "count");
    assert_eq!(r["results"]["count"], 21);
    assert!(r["config"]["seed"].is_number());
}

#[test]
fn antipodal_count_exits_with_degenerate_code() {
    let out = geoflow(&[
        "count", "--metric", "sphere", "--x", "0,0,1", "--y", "0,0,-1", "--T", "4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["results"]["degenerate"], true);
}

#[test]
fn config_errors_exit_with_one() {
    let out = geoflow(&["count", "--metric", "klein-bottle", "--x", "0,0", "--T", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = geoflow(&["count", "--metric", "torus", "--eps", "0.1", "--x", "0,0", "--T", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = geoflow(&["entropy", "--metric", "torus", "--Tsteps", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_flags_corrupt_metric() {
    let out = geoflow(&["validate", "--metric", "corrupt-example"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["results"]["pass"], false);
    let text = r.to_string();
    assert!(text.contains("non-positive-definite"), "{text}");
}

#[test]
fn entropy_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "entropy",
        "--metric",
        "sphere",
        "--method",
        "jacobi-det",
        "--samples",
        "200",
        "--Tmax",
        "10",
        "--seed",
        "4",
    ];
    let a = geoflow(&args);
    let b = geoflow(&[&args[..], &["--threads", "1", "--out", dir.path().to_str().unwrap()]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["config"]["seed"], 4);
    assert_eq!(r["exploratory"], false);
    assert_eq!(r["results"][0]["estimate"]["h"], 0.0);
    let file = std::fs::read(dir.path().join("entropy.json")).unwrap();
    assert_eq!(file, a.stdout);
    let csv = std::fs::read_to_string(dir.path().join("series-jacobi-det.csv")).unwrap();
    assert!(csv.starts_with("T,value"));
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn csv_format_prints_series() {
    let out = geoflow(&[
        "entropy",
        "--metric",
        "torus",
        "--method",
        "jacobi-det",
        "--samples",
        "20",
        "--Tsteps",
        "5",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("T,value"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"metric": "torus", "x": "0,0", "T": 1.5, "seed": 9}"#).unwrap();
    let out = geoflow(&["count", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["count"], 9);
    assert_eq!(r["config"]["seed"], 9);
    let out = geoflow(&["count", "--config", cfg.to_str().unwrap(), "--T", "2.5"]);
    assert_eq!(report(&out)["results"]["count"], 21);

    std::fs::write(&cfg, r#"{"metric": "torus", "bogus": 1}"#).unwrap();
    let out = geoflow(&["count", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tube_reports_radius() {
    let out = geoflow(&["tube", "--K", "-1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let tau = r["results"]["radius"]["tau"].as_f64().unwrap();
    assert!((tau - std::f64::consts::FRAC_PI_2).abs() < 1e-3);

    let out = geoflow(&["tube", "--K", "1"]);
    let r = report(&out);
    assert_eq!(r["results"]["radius"]["tau_max"], 5.0);
}

#[test]
fn paternain_entropy_is_marked_exploratory() {
    let out = geoflow(&[
        "entropy",
        "--metric",
        "paternain",
        "--eps",
        "0.05",
        "--method",
        "jacobi-det",
        "--samples",
        "50",
        "--Tmax",
        "8",
        "--Tsteps",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["exploratory"], true);
    assert_eq!(r["config"]["metric"]["params"]["eps"], 0.05);
}
