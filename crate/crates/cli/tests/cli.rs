use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rwre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwre")).args(args).output().expect("spawn rwre")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const BETA31: &str = r#"{"family":"beta","a":3.0,"b":1.0}"#;

#[test]
fn analyze_env_prints_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "env.json", BETA31);
    let out = rwre(&["analyze-env", "--config", cfg.to_str().unwrap(), "--x", "8103.083927575384"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["profile"]["alpha"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((v["profile"]["rho0"].as_f64().unwrap() - 1.5).abs() < 1e-8);
    assert_eq!(v["window"]["n0"], 6);
    assert_eq!(v["window"]["n2"], 9);
}

#[test]
fn analyze_env_accepts_an_experiment_document() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &format!(r#"{{"env":{BETA31},"seed":1,"replicas":10}}"#));
    let target = dir.path().join("analysis.json");
    let out = rwre(&["analyze-env", "--config", cfg.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert!(v["window"].is_null());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_env = write(dir.path(), "bad.json", r#"{"family":"beta","a":-1.0,"b":1.0}"#);
    assert_eq!(rwre(&["analyze-env", "--config", bad_env.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(rwre(&["identities", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let wrong = write(
        dir.path(),
        "wrong.json",
        &format!(r#"{{"env":{BETA31},"seed":1,"replicas":10,"experiment":"thm-wn","n_grid":[10]}}"#),
    );
    assert_eq!(rwre(&["identities", "--config", wrong.to_str().unwrap()]).status.code(), Some(2));
    let no_grid = write(dir.path(), "nogrid.json", &format!(r#"{{"env":{BETA31},"seed":1,"replicas":10}}"#));
    assert_eq!(rwre(&["identities", "--config", no_grid.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn regime_violations_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let eps = write(
        dir.path(),
        "eps.json",
        &format!(
            r#"{{"env":{BETA31},"seed":1,"replicas":10,"n_grid":[100],"x_rule":{{"rule":"epsilon_n","epsilon":0.5}}}}"#
        ),
    );
    let out = rwre(&["thm-main1", "--config", eps.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    let lattice = write(
        dir.path(),
        "lattice.json",
        r#"{"env":{"family":"two_point","a1":2.0,"a2":0.25,"p":0.5},"seed":1,"replicas":10,"n_grid":[4],"rho_grid":[-0.5]}"#,
    );
    assert_eq!(rwre(&["bahadur-rao", "--config", lattice.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ids.json",
        &format!(r#"{{"env":{BETA31},"seed":3,"replicas":200,"n_grid":[10],"identity_x":8103.083927575384}}"#),
    );
    let csv = dir.path().join("ids.csv");
    let out = rwre(&["identities", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("experiment,n,x,estimate,se,normalizer,ratio,ratio_se,replicas,flags"));
    assert!(text.contains("identity=lemma2_residual"));
    let summary = dir.path().join("ids.csv.summary.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(v["checks"]["t_n_bookkeeping_n10"], true);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().any(|l| l == "PASS w_partition_n10"), "{stderr}");

    // seed override changes the sample
    let other = dir.path().join("other.csv");
    rwre(&["identities", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "4"]);
    assert_ne!(text, std::fs::read_to_string(other).unwrap());
}
