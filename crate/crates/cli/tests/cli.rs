use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_definetti"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("DEFINETTI_THREADS", t.to_string()),
        None => cmd.env_remove("DEFINETTI_THREADS"),
    };
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn limit_uniform_two_particles() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"schema": 1, "ensemble": {"kind": "uniform", "d": 1}, "m": 2}"#);
    let out = tmp.path().join("out");
    let o = run(&["limit", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out.join("limit.json"));
    let entries = v["density"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 9);
    for (k, e) in entries.iter().enumerate() {
        let expected = if k % 4 == 0 { 1.0 / 3.0 } else { 0.0 };
        assert_eq!(e[0].as_f64().unwrap(), expected);
        assert_eq!(e[1].as_f64().unwrap(), 0.0);
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["command"], "limit");
    assert_eq!(manifest["config"]["limit"], "uniform");
}

#[test]
fn sweep_uniform_writes_one_row_per_n() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema": 1, "command": "sweep", "ensemble": {"kind": "uniform", "d": 1}, "m": 1, "n_list": [8, 16, 32]}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,m,beta,scaled,trace_distance,sigma_ref,wall_time_s");
    assert_eq!(lines.len(), 4);
    // the uniform ensemble reduces to S_m exactly at every n
    for line in &lines[1..] {
        let dist: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(dist <= 1e-15);
    }
}

#[test]
fn noninteracting_sweep_decreases() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema": 1, "ensemble": {"kind": "noninteracting", "d": 1, "beta": 1.0, "scaled": true,
            "epsilons": [0.0, 1.0]}, "n_list": [50, 100, 200], "output": {"format": "csv"}}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let d: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    assert_eq!(read_json(&out.join("manifest.json"))["summary"]["strictly_decreasing"], true);
}

#[test]
fn invalid_config_exits_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for (name, text) in [
        ("broken.json", "{ not json"),
        ("unknown.json", r#"{"schema": 1, "ensemble": {"kind": "uniform", "d": 1}, "surprise": true}"#),
        ("schema.json", r#"{"schema": 7, "ensemble": {"kind": "uniform", "d": 1}}"#),
        ("wrong_command.json", r#"{"schema": 1, "command": "sample", "ensemble": {"kind": "uniform", "d": 1}}"#),
        ("no_eps.json", r#"{"schema": 1, "ensemble": {"kind": "noninteracting", "d": 1}}"#),
    ] {
        let cfg = write_config(tmp.path(), name, text);
        let o = run(&["limit", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
        assert_eq!(code(&o), 2, "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(name), "error should name the config: {err}");
        assert!(!out.exists(), "{name} produced artifacts");
    }
    let o = run(&["limit", tmp.path().join("missing.json").to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn capacity_error_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema": 1, "ensemble": {"kind": "meanfield", "n": 5000, "d": 1, "beta": 1.0,
            "t": {"dim": 2, "factors": 1, "local_dim": 2, "entries": [[0,0],[0,0],[0,0],[1,0]]}}}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["reduce", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

const T01: &str = r#"{"dim": 2, "factors": 1, "local_dim": 2, "entries": [[0,0],[0,0],[0,0],[1,0]]}"#;
const HALF_I: &str = r#"{"dim": 2, "factors": 1, "local_dim": 2, "entries": [[0.5,0],[0,0],[0,0],[0.5,0]]}"#;

fn verify_config(t: &str, extra: &str) -> String {
    format!(
        r#"{{"schema": 1, "ensemble": {{"kind": "meanfield", "n": 8, "d": 1, "beta": 1.0, "t": {t}}},
            "m": 1, "n_list": [6, 8, 10], {extra}}}"#
    )
}

#[test]
fn verify_claim_pass_and_threshold_failure() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(tmp.path(), "good.json", &verify_config(T01, r#""verify": {"kind": "claim", "j": 1}"#));
    let out = tmp.path().join("good");
    let o = run(&["verify", "claim", good.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("verify-claim.csv").exists());

    // deviations must decrease along n_list as given
    let text = verify_config(T01, r#""verify": {"kind": "claim", "j": 1}"#).replace("[6, 8, 10]", "[10, 6, 8]");
    let unsorted = write_config(tmp.path(), "unsorted.json", &text);
    let out = tmp.path().join("unsorted");
    let o = run(&["verify", "claim", unsorted.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 4);
    assert_eq!(read_json(&out.join("manifest.json"))["status"], "threshold_failed");

    // W = I: both sides agree at every n
    let flat = write_config(tmp.path(), "flat.json", &verify_config(HALF_I, r#""verify": {"kind": "claim", "j": 2}"#));
    let o = run(&["verify", "claim", flat.to_str().unwrap(), "--out", tmp.path().join("flat").to_str().unwrap()], None);
    assert_eq!(code(&o), 0);

    let zero = write_config(tmp.path(), "zero.json", &verify_config(HALF_I, r#""verify": {"kind": "claim", "j": 0}"#));
    let o = run(&["verify", "claim", zero.to_str().unwrap(), "--out", tmp.path().join("zero").to_str().unwrap()], None);
    assert_eq!(code(&o), 0);

    let mismatch = run(&["verify", "series", good.to_str().unwrap()], None);
    assert_eq!(code(&mismatch), 2);
}

#[test]
fn verify_series_and_free_energy() {
    let tmp = TempDir::new().unwrap();
    let series = write_config(tmp.path(), "s.json", &verify_config(T01, r#""verify": {"kind": "series", "order": 4}"#));
    let out = tmp.path().join("s");
    let o = run(&["verify", "series", series.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out.join("verify-series.json"));
    assert!(v["deviation"].as_f64().unwrap() <= v["remainder_bound"].as_f64().unwrap());

    let fe = write_config(tmp.path(), "f.json", &verify_config(T01, r#""verify": {"kind": "free-energy", "perturbations": 4}"#));
    let out = tmp.path().join("f");
    let o = run(&["verify", "free-energy", fe.to_str().unwrap(), "--samples", "20000", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("verify-free-energy.json"))["trials"].as_array().unwrap().len(), 4);
}

fn sample_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "sample.json",
        r#"{"schema": 1, "ensemble": {"kind": "noninteracting", "d": 2, "beta": 1.5, "epsilons": [0.0, 0.5, 1.0]},
            "m": 2, "mc": {"samples": 40000, "seed": 11}}"#,
    )
}

fn sweep_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "sweep.json",
        &format!(
            r#"{{"schema": 1, "ensemble": {{"kind": "meanfield", "d": 1, "beta": 1.0, "scaled": true, "t": {T01},
                "v": {{"dim": 4, "factors": 2, "local_dim": 2, "entries": [[0.5,0],[0,0],[0,0],[0,0],
                [0,0],[0,0],[0.5,0],[0,0], [0,0],[0.5,0],[0,0],[0,0], [0,0],[0,0],[0,0],[0.5,0]]}}}},
                "m": 1, "n_list": [4, 8, 16], "limit": "meanfield", "mc": {{"samples": 50000, "seed": 3}}}}"#
        ),
    )
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_worker_counts() {
    let tmp = TempDir::new().unwrap();
    for (command, cfg, artifact) in
        [("sample", sample_config(tmp.path()), "sample.json"), ("sweep", sweep_config(tmp.path()), "sweep.csv")]
    {
        let mut outputs = Vec::new();
        for (k, threads) in [Some(1), Some(1), Some(4), None].into_iter().enumerate() {
            let out = tmp.path().join(format!("{command}-{k}"));
            let o = run(&[command, cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], threads);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            outputs.push(fs::read(out.join(artifact)).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{command} artifacts differ");
    }
}

#[test]
fn manifest_reruns_the_job() {
    let tmp = TempDir::new().unwrap();
    let cfg = sample_config(tmp.path());
    let first = tmp.path().join("first");
    let o = run(&["sample", cfg.to_str().unwrap(), "--seed", "5", "--out", first.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    let manifest = read_json(&first.join("manifest.json"));
    assert_eq!(manifest["seed"], 5);
    let mut again = manifest["config"].clone();
    let second = tmp.path().join("second");
    again["output"]["path"] = Value::String(second.to_str().unwrap().into());
    let cfg2 = write_config(tmp.path(), "again.json", &again.to_string());
    let o = run(&["sample", cfg2.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(first.join("sample.json")).unwrap(), fs::read(second.join("sample.json")).unwrap());

    let other = tmp.path().join("other");
    run(&["sample", cfg.to_str().unwrap(), "--seed", "6", "--out", other.to_str().unwrap()], None);
    assert_ne!(fs::read(first.join("sample.json")).unwrap(), fs::read(other.join("sample.json")).unwrap());
}

#[test]
fn reduce_reports_diagonal_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"schema": 1, "ensemble": {"kind": "noninteracting", "n": 2, "d": 1, "beta": 0.6931471805599453,
            "epsilons": [0.0, 1.0]}, "m": 1, "output": {"format": "csv"}}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["reduce", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("reduce.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let g: f64 = rows[0][2].parse().unwrap();
    let e: f64 = rows[3][2].parse().unwrap();
    assert!((g - 5.0 / 7.0).abs() < 1e-12 && (e - 2.0 / 7.0).abs() < 1e-12);
}
