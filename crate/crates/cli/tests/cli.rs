use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn riskscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskscope"))
        .args(args)
        .output()
        .expect("run riskscope")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn patient_args<'a>(cmd: &'a str, f: &'a Path) -> Vec<String> {
    vec![
        cmd.to_string(),
        "--data".into(),
        f.join("patients.csv").display().to_string(),
        "--schema".into(),
        f.join("patients.schema.json").display().to_string(),
        "--query".into(),
        f.join("queries/patient_count.json").display().to_string(),
        "--workers".into(),
        "1".into(),
    ]
}

fn run(args: Vec<String>, extra: &[&str]) -> Output {
    let mut all: Vec<&str> = args.iter().map(String::as_str).collect();
    all.extend_from_slice(extra);
    riskscope(&all)
}

#[test]
fn analyze_reports_the_patient_ratios() {
    let f = fixtures();
    let v = json(&run(patient_args("analyze", &f), &["--grid", "1,0.1,0.01"]));
    assert_eq!(v["report_version"], 1);
    let ratios: Vec<f64> = v["rows"].as_array().unwrap()[1..].iter().map(|r| r["ratio"].as_f64().unwrap()).collect();
    for (got, want) in ratios.iter().zip([0.5, 10.0 / 11.0, 100.0 / 101.0]) {
        assert!((got - want).abs() < 1e-12);
    }

    let g = json(&run(patient_args("analyze", &f), &["--grid", "1", "--mechanism", "gaussian", "--delta", "1e-5"]));
    assert_eq!(g["mechanism"], "gaussian");
    let sigma = (2.0 * (1.25f64 / 1e-5).ln()).sqrt();
    let row = &g["rows"][1];
    assert!((row["rdr_min"].as_f64().unwrap() - sigma).abs() < 1e-9);
    assert!((row["rdr_max"].as_f64().unwrap() - (1.0 + sigma * sigma).sqrt()).abs() < 1e-9);
}

#[test]
fn missing_bounds_exit_with_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("s.json");
    std::fs::write(&schema, r#"{"columns":[{"name":"v","kind":"integer"}]}"#).unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "v\n1\n2\n").unwrap();
    let query = dir.path().join("q.json");
    std::fs::write(&query, r#"{"kind":"sum","target":"v"}"#).unwrap();
    let out = riskscope(&[
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--query",
        query.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bounds"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(riskscope(&["analyze"]).status.code(), Some(2));
    assert_eq!(riskscope(&["find-eps", "--nope"]).status.code(), Some(2));
}

#[test]
fn svt_runs_are_byte_identical_per_seed() {
    let f = fixtures();
    let args = ["--algorithm", "svt", "--tau-var", "0.01", "--seed", "77"];
    let a = run(patient_args("find-eps", &f), &args);
    let b = run(patient_args("find-eps", &f), &args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn exhausted_grid_is_a_decision_not_an_error() {
    let f = fixtures();
    let v = json(&run(patient_args("find-eps", &f), &["--tau-p", "1"]));
    assert_eq!(v["decision"], "Rejected");
    assert_eq!(v["result"]["status"], "NoSuitableEpsilon");
}

#[test]
fn smaller_tau_never_chooses_a_smaller_epsilon() {
    let f = fixtures();
    let mut last = 0.0;
    for tau in ["0.95", "0.75", "0.5", "0.25", "0.05"] {
        let v = json(&run(patient_args("find-eps", &f), &["--tau-p", tau]));
        let eps = v["result"]["chosen_epsilon"].as_f64().unwrap();
        assert!(eps >= last, "tau {tau}: {eps} < {last}");
        last = eps;
    }
}

#[test]
fn session_replay_and_odometer_show() {
    let f = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    let q = std::fs::read_to_string(f.join("queries/patient_count.json")).unwrap();
    let step = |tau: f64| format!(r#"{{"query": {q}, "preference": {{"min_max_ratio": {{"tau_p": {tau}}}}}, "grid": [1, 0.1, 0.01], "seed": 5}}"#);
    std::fs::write(&script, format!("[{}, {}]", step(0.9), step(0.0))).unwrap();
    let journal = dir.path().join("patients.jsonl");
    let v = json(&riskscope(&[
        "session",
        "replay",
        "--data",
        f.join("patients.csv").to_str().unwrap(),
        "--schema",
        f.join("patients.schema.json").to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--journal",
        journal.to_str().unwrap(),
    ]));
    assert_eq!(v["decisions"][0]["eps_c_after"], "0.100");
    assert_eq!(v["decisions"][1]["candidates"], serde_json::json!([1.0]));
    assert_eq!(v["decisions"][1]["eps_c_after"], "1.100");
    assert_eq!(v["odometer"]["eps_c"], "1.100");

    let shown = json(&riskscope(&["odometer", "show", "--journal", journal.to_str().unwrap()]));
    assert_eq!(shown, v["odometer"]);
    let missing = riskscope(&["odometer", "show", "--journal", dir.path().join("x.jsonl").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn fixture_generation_reproduces_the_checked_in_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = riskscope(&["fixtures", "gen", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    for name in [
        "patients.csv",
        "patients.schema.json",
        "adult.schema.json",
        "adult_1k.csv",
        "queries/patient_count.json",
        "queries/q1.json",
        "queries/q5.json",
    ] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(fixtures().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn bench_writes_csv() {
    let out = riskscope(&["bench", "--sizes", "500,1k", "--runs", "1", "--min-time-ms", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("op,query,rows,unique,workers,run,seconds"));
    assert_eq!(lines.count(), 2);
}
