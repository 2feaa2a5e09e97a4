//! Black-box tests of the binary: exit codes, output files, reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qdspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn rastrigin_config(out: &Path, budget: usize) -> String {
    format!(
        r#"
problem = "rastrigin"
seed = 11
output = "{}"

[problem_params]
dimension = 2

[engine]
landmarks = 10
rank_cutoff = 2
eval_budget = {budget}
max_effort = 32
"#,
        out.display()
    )
}

#[test]
fn run_writes_all_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = write_config(dir.path(), &rastrigin_config(&out_a, 150));

    let status = qdspace(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(status.status.success(), "{status:?}");
    for name in ["history.jsonl", "landmarks.json", "config.echo.json", "manifest.json"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    let history = fs::read_to_string(out_a.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 150);
    // Indices strictly increase from zero.
    for (i, line) in history.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["index"].as_u64().unwrap() as usize, i);
    }

    // Same config, different output dir, more workers: identical bytes.
    let status = qdspace(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out_b.to_str().unwrap(),
        "--workers",
        "3",
    ]);
    assert!(status.status.success());
    let history_b = fs::read_to_string(out_b.join("history.jsonl")).unwrap();
    assert_eq!(history, history_b);
}

#[test]
fn budget_below_initial_states_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // L = 10 gives T = 24 by default; a budget of 20 is invalid.
    let cfg = write_config(dir.path(), &rastrigin_config(&out, 20));
    let status = qdspace(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut body = rastrigin_config(&out, 150);
    body.push_str("\nmystery_knob = true\n");
    let cfg = write_config(dir.path(), &body);
    let status = qdspace(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let status = qdspace(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn score_writes_matching_csv_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &rastrigin_config(&out, 150));
    assert!(qdspace(&["run", "--config", cfg.to_str().unwrap()]).status.success());

    let status = qdspace(&["score", "--run", out.to_str().unwrap()]);
    assert!(status.status.success(), "{status:?}");
    let csv = fs::read_to_string(out.join("scores.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epoch,num_evals,qd,wqd,magnitude");

    let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
    let max_epoch = history
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["birth"].as_u64().unwrap()
        })
        .max()
        .unwrap();
    assert_eq!(csv.lines().count() as u64, 1 + max_epoch);
    let last = csv.lines().last().unwrap();
    let evals: u64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(evals, 150);

    let again = qdspace(&["score", "--run", out.to_str().unwrap()]);
    assert!(again.status.success());
    let csv_again = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(csv, csv_again);
}

#[test]
fn bounds_uniform_sweep_matches_harmonic_lower_bound() {
    let n = 16usize;
    let harmonic = |k: usize| (1..=k).map(|i| 1.0 / i as f64).sum::<f64>();
    for m in 1..=n {
        let status = qdspace(&[
            "bounds",
            "--n",
            "16",
            "--m",
            &m.to_string(),
            "--c",
            "16",
            "--dist",
            "uniform",
        ]);
        assert!(status.status.success());
        let v: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
        let expected = n as f64 * (harmonic(n) - harmonic(n - m));
        let lower = v["lower"].as_f64().unwrap();
        assert!(
            (lower - expected).abs() < 1e-9,
            "m={m}: {lower} vs {expected}"
        );
        // Exact is feasible at n = 16, so the sandwich collapses.
        let exact = v["exact"].as_f64().unwrap();
        let upper = v["upper"].as_f64().unwrap();
        assert_eq!(lower, exact);
        assert_eq!(upper, exact);
    }
}

#[test]
fn bounds_beyond_exact_limit_omits_exact() {
    let status = qdspace(&["bounds", "--n", "20", "--m", "10", "--c", "20", "--dist", "uniform"]);
    assert!(status.status.success());
    let v: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    assert!(v["exact"].is_null());
    assert!(v["lower"].as_f64().unwrap() > 1.0);
    assert!(v["upper"].as_f64().unwrap() >= v["lower"].as_f64().unwrap());
}

#[test]
fn bounds_rejects_bad_distribution_spec() {
    let status = qdspace(&["bounds", "--n", "4", "--m", "2", "--c", "4", "--dist", "cauchy"]);
    assert_eq!(status.status.code(), Some(2));
    let status = qdspace(&["bounds", "--m", "2", "--c", "4", "--dist", "list:0.5,0.5"]);
    assert!(status.status.success());
}

#[test]
fn all_registry_problems_run_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    for (name, extra) in [
        ("int-rastrigin", "lambda = 50\ndimension = 2"),
        ("sk", "dimension = 10"),
        ("labs", "dimension = 12"),
    ] {
        let out = dir.path().join(name);
        let body = format!(
            r#"
problem = "{name}"
seed = 3
output = "{}"

[problem_params]
{extra}

[engine]
landmarks = 5
rank_cutoff = 2
eval_budget = 60
max_effort = 16
"#,
            out.display()
        );
        let cfg = dir.path().join(format!("{name}.toml"));
        fs::write(&cfg, body).unwrap();
        let status = qdspace(&["run", "--config", cfg.to_str().unwrap()]);
        assert!(status.status.success(), "{name}: {status:?}");
        let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
        assert_eq!(history.lines().count(), 60, "{name}");
        let score = qdspace(&["score", "--run", out.to_str().unwrap()]);
        assert!(score.status.success(), "{name} score: {score:?}");
    }
}

#[test]
fn baseline_algorithm_runs_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("baseline");
    let mut body = rastrigin_config(&out, 150);
    body.push_str("\n[engine.extra]\n");
    // Invalid: engine.extra is unknown.
    let cfg = write_config(dir.path(), &body);
    assert_eq!(
        qdspace(&["run", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let body = rastrigin_config(&out, 150).replace(
        "max_effort = 32",
        "max_effort = 32\nalgorithm = \"baseline\"\nbaseline_bandwidth = 0.2",
    );
    let cfg = write_config(dir.path(), &body);
    let status = qdspace(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(status.status.success(), "{status:?}");
    let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 150);
}
