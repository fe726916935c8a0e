use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn episim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_episim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SEIR: &str = r#"{
  "params": { "beta": 0.02, "sigma": 0.2, "gamma": 0.03 },
  "contact_source": { "kind": "explicit", "generator": { "model": "erdos_renyi", "p_edge": 0.004 }, "n": 2000 },
  "run": { "iterations": 60, "initial_infected": 0.005 }
}"#;

const TESTED: &str = r#"{
  "model": { "testing": true, "tracing": true, "death": true },
  "params": { "beta": 0.3, "sigma": 0.25, "gamma": 0.05, "gamma_t": 0.05,
              "theta_i": 0.1, "kappa_i": 0.8, "omega": 0.01, "omega_t": 0.01,
              "t_tracing": 3, "p": 0.1 },
  "contact_source": { "kind": "explicit", "generator": { "model": "barabasi_albert", "m": 3 }, "n": 1500, "activation": 0.5 },
  "schedule": [ { "start": 10, "end": 30, "params": { "beta": 0.1 } } ],
  "run": { "iterations": 40, "initial_infected": 0.01 }
}"#;

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ok.json", SEIR);
    let out = episim(&["validate", "ok.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("2000 agents"));

    write(dir.path(), "bad.json", "{\n  \"params\": { \"beta\": \"abc\" }\n}");
    let out = episim(&["validate", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.beta") && err.contains("line 2"), "{err}");

    write(dir.path(), "semantic.json", r#"{ "model": { "icu": true }, "params": { "beta": 3 } }"#);
    let out = episim(&["validate", "semantic.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("icu requires testing") && err.contains("beta"), "{err}");

    let out = episim(&["validate", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn meanfield_writes_a_self_describing_series() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "seir.json", SEIR);
    let out = episim(&["meanfield", "seir.json", "--out", "mf.csv", "--fidelity", "as-written"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("mf.csv")).unwrap();
    assert!(text.contains("# scenario_hash="));
    assert!(text.contains("# fidelity=as_written"));
    assert!(text.contains("iteration,S,E,I,R\n"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 61);
    for row in rows {
        let total: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    let json = episim(&["meanfield", "seir.json", "--format", "json", "--method", "euler", "--dt", "0.5"], dir.path());
    assert_eq!(json.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&json.stdout).contains("\"mode\": \"meanfield\""));
}

#[test]
fn unstable_euler_step_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "fast.json",
        r#"{ "model": { "death": true }, "params": { "beta": 0.5, "sigma": 0.5, "gamma": 0.6, "omega": 0.5 }, "run": { "iterations": 5 } }"#,
    );
    let out = episim(&["meanfield", "fast.json", "--method", "euler"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_needs_a_contact_source() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mf.json", r#"{ "params": { "beta": 0.1 } }"#);
    let out = episim(&["simulate", "mf.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_output_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tested.json", TESTED);
    let a = episim(&["simulate", "tested.json", "--seed", "5", "--out", "a.csv"], dir.path());
    let b = episim(&["simulate", "tested.json", "--seed", "5", "--out", "b.csv"], dir.path());
    let c = episim(
        &["simulate", "tested.json", "--seed", "5", "--threads", "4", "--out", "c.csv", "--trace", "c.jsonl"],
        dir.path(),
    );
    for out in [&a, &b, &c] {
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv"), read("c.csv"));
    assert!(String::from_utf8_lossy(&c.stderr).contains("0 invariant violations"));
    let text = String::from_utf8(read("a.csv")).unwrap();
    assert!(text.contains("# seed=5"));
    assert_eq!(data_rows(&text).len(), 41);
}

#[test]
fn seed_sweep_writes_runs_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "seir.json", SEIR);
    let out = episim(&["simulate", "seir.json", "--seeds", "3", "--jobs", "2", "--out", "runs.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(agg.contains("# kind=aggregate"));
    assert!(agg.contains("# seeds=1 2 3"));
    assert!(agg.contains("iteration,S_mean,S_std,E_mean,E_std,I_mean,I_std,R_mean,R_std\n"));

    // Re-aggregating the per-seed files reproduces the sweep's aggregate.
    let again = episim(
        &["aggregate", "runs.seed1.csv", "runs.seed2.csv", "runs.seed3.csv"],
        dir.path(),
    );
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), agg);
}

#[test]
fn aggregate_rejects_mixed_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "seir.json", SEIR);
    write(dir.path(), "tested.json", TESTED);
    for (cfg, out) in [("seir.json", "a.csv"), ("tested.json", "b.csv")] {
        let run = episim(&["simulate", cfg, "--out", out], dir.path());
        assert_eq!(run.status.code(), Some(0));
    }
    let out = episim(&["aggregate", "a.csv", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}
