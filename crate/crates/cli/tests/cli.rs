use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ddq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn recommend_prints_parameters() {
    let v = stdout_json(&ddq(&[
        "recommend", "--states", "9", "--actions", "4", "--epsilon", "0.06", "--delta", "0.1", "--gamma", "0.8",
    ]));
    assert_eq!(v["m1"], 131_349_272u64);
    assert_eq!(v["m2"], 5_964_449_616u64);
    assert_eq!(v["vi_sweeps"], 42);
}

#[test]
fn solve_accepts_grid_and_mdp_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    let out = ddq(&["default-grid"]);
    assert!(out.status.success());
    fs::write(&grid, &out.stdout).unwrap();
    let v = stdout_json(&ddq(&["solve", path(&grid)]));
    assert_eq!(v["policy"].as_array().unwrap().len(), 9);

    let mdp = dir.path().join("mdp.json");
    fs::write(
        &mdp,
        r#"{"num_states":2,"num_actions":1,"gamma":0.8,"rewards":[[0.0],[1.0]],
            "transitions":[[[0.0,1.0]],[[0.0,1.0]]]}"#,
    )
    .unwrap();
    let v = stdout_json(&ddq(&["solve", path(&mdp)]));
    let vs: Vec<f64> = serde_json::from_value(v["v_star"].clone()).unwrap();
    assert!((vs[0] - 4.0).abs() < 1e-9 && (vs[1] - 5.0).abs() < 1e-9, "{vs:?}");
}

#[test]
fn run_then_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let v = stdout_json(&ddq(&[
        "run", "--algo", "ddq", "--m1", "65", "--m2", "175", "--epsilon", "0.06", "--seed", "7", "--horizon", "3000",
        "--trace", path(&trace),
    ]));
    assert_eq!(v["result"]["seed"], 7);
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 3000);

    let report = stdout_json(&ddq(&["audit", "--trace", path(&trace)]));
    assert_eq!(report["hard_pass"], true);
    assert_eq!(report["escape_recount"], v["result"]["escape_events"]);
}

#[test]
fn audit_fails_on_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = ddq(&["run", "--seed", "1", "--horizon", "2000", "--trace", path(&trace)]);
    assert!(out.status.success());

    // raise the first recorded value change above its old value
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let rec = lines
        .iter_mut()
        .find(|r| r["q_changes"].as_array().is_some_and(|c| !c.is_empty()))
        .expect("some update in 2000 steps");
    let old = rec["q_changes"][0]["old"].as_f64().unwrap();
    rec["q_changes"][0]["new"] = serde_json::json!(old + 0.5);
    let body: Vec<String> = lines.iter().map(|r| r.to_string()).collect();
    fs::write(&trace, body.join("\n") + "\n").unwrap();

    let out = ddq(&["audit", "--trace", path(&trace)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hard failure"));
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, summary) = (dir.path().join("runs.csv"), dir.path().join("summary.json"));
    let args = [
        "bench", "--algos", "ddq,delayed_q,rmax", "--seeds", "1..2", "--horizon", "1500", "--workers", "2",
        "--csv", path(&csv), "--summary", path(&summary),
    ];
    assert!(ddq(&args).status.success());
    let first = fs::read_to_string(&csv).unwrap();
    assert_eq!(first.lines().count(), 7);
    assert!(first.starts_with("run_id,algorithm,seed,m1,m2,"));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["algorithms"].as_array().unwrap().len(), 3);

    assert!(ddq(&args).status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap(), first);
}

#[test]
fn rejects_bad_arguments() {
    assert!(!ddq(&["run", "--m2", "bogus"]).status.success());
    assert!(!ddq(&["run", "--algo", "sarsa"]).status.success());
    assert!(!ddq(&["bench", "--seeds", "5..1"]).status.success());
    assert!(!ddq(&["solve", "/nonexistent.json"]).status.success());
}
