use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn featimp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featimp")).args(args).current_dir(dir).output().unwrap()
}

fn simulate(dir: &TempDir, dgp: &str, n: usize) -> PathBuf {
    let out = dir.path().join(format!("{dgp}.csv"));
    let o = featimp(&["simulate", "--dgp", dgp, "--n", &n.to_string(), "--seed", "3", "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_d", 50);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,x3,x4,x5,y");
    assert_eq!(text.lines().count(), 51);
    let truth = read_json(&dir.path().join("dgp_d.truth.json"));
    assert!(truth.to_string().contains("x5"));
}

#[test]
fn analyze_writes_schema_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_g", 1_000);
    let out = dir.path().join("r.json");
    let o = featimp(
        &["analyze", "--data", csv.to_str().unwrap(), "--target", "y", "--method", "loco", "--seed", "1", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let keys = ["schema_version", "method", "loss", "learner", "seed", "config", "features", "runtime_ms"];
    let pos: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["method"], "loco");
    assert!(v["config"]["tool_version"].is_string());
    let feats = v["features"].as_array().unwrap();
    assert_eq!(feats.len(), 2);
    for f in feats {
        for k in ["name", "importance", "std_error", "ci_low", "ci_high", "p_value"] {
            assert!(f.get(k).is_some(), "missing {k}");
        }
    }
    assert!(feats[1]["importance"].as_f64().unwrap() > feats[0]["importance"].as_f64().unwrap());
}

#[test]
fn config_replay_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_g", 500);
    let first = dir.path().join("a.json");
    let o = featimp(
        &["analyze", "--data", csv.to_str().unwrap(), "--target", "y", "--method", "pfi", "--seed", "5", "--ci-resamples", "5", "--out", first.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let drop_runtime = |t: &str| t.lines().filter(|l| !l.contains("\"runtime_ms\"")).collect::<Vec<_>>().join("\n");
    let before = std::fs::read_to_string(&first).unwrap();
    // replaying a result file reuses its config block, including --out
    let o = featimp(&["analyze", "--config", first.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let after = std::fs::read_to_string(&first).unwrap();
    assert_eq!(drop_runtime(&before), drop_runtime(&after));
}

#[test]
fn ci_and_adjusted_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_g4", 800);
    let out = dir.path().join("r.json");
    let o = featimp(
        &["analyze", "--data", csv.to_str().unwrap(), "--target", "y", "--method", "cfi", "--adjust", "holm", "--seed", "2", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    for f in v["features"].as_array().unwrap() {
        let p = f["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(f["ci_low"].as_f64().unwrap() <= f["ci_high"].as_f64().unwrap());
    }
    assert!(v["features"][1]["p_value"].as_f64().unwrap() < 0.01);
}

#[test]
fn report_exports_tidy_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_d", 1_000);
    let out = dir.path().join("r.json");
    let o = featimp(
        &["analyze", "--data", csv.to_str().unwrap(), "--target", "y", "--method", "pfi", "--learner", "ols-interactions", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tidy = dir.path().join("r.csv");
    let o = featimp(&["report", "--in", out.to_str().unwrap(), "--out", tidy.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&tidy).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["feature", "method", "estimate", "ci_low", "ci_high", "relative_importance"]
    );
    let rel: Vec<f64> = rdr.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(rel.len(), 5);
    assert_eq!(rel.iter().cloned().fold(f64::MIN, f64::max), 1.0);
}

#[test]
fn verify_counterexamples_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = featimp(&["verify", "--suite", "counterexamples", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("confirmed").count(), 5, "{stdout}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_g", 100);
    let data = csv.to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["analyze", "--data", data, "--target", "y", "--method", "rfi"],
        &["analyze", "--data", data, "--target", "y", "--method", "nope"],
        &["analyze", "--data", data, "--target", "y", "--method", "rfi", "--cond-set", "x9"],
        &["analyze", "--data", data, "--target", "y", "--method", "pfi", "--pimp", "3"],
        &["verify", "--suite", "nope"],
    ];
    for args in cases {
        let o = featimp(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    std::fs::write(dir.path().join("bad.json"), "{\"bogus\": 1}").unwrap();
    assert_eq!(featimp(&["analyze", "--config", "bad.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(&dir, "dgp_g", 100);
    let data = csv.to_str().unwrap();
    let o = featimp(&["analyze", "--data", data, "--target", "z", "--method", "pfi"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = featimp(&["analyze", "--data", "missing.csv", "--target", "y", "--method", "pfi"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(dir.path().join("ragged.csv"), "x1,y\n1,2\n3\n").unwrap();
    let o = featimp(&["analyze", "--data", "ragged.csv", "--target", "y", "--method", "pfi"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
