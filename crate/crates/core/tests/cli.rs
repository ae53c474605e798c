use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsg"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dsg-cli-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn tiny_run_writes_three_files() {
    let dir = scratch("tiny");
    let prefix = dir.join("run");
    let out = bin().args(["--nodes", "4", "--requests", "10", "--out"]).arg(&prefix).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["avg_cost", "ws_bound", "max_height", "max_direct_link_level", "violations"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    let trace = std::fs::read_to_string(dir.join("run.trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,u,v,alpha,d,rho,total,messages,max_bits,height,dummies,ws_T,ws_logT,direct_link_level");
    assert_eq!(trace.lines().count(), 11);
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("run.summary.json")).unwrap()).unwrap();
    assert_eq!(written, summary);
    assert!(dir.join("run.topology.json").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn walkthrough_replay_matches() {
    let a = assets();
    let out = bin()
        .arg("--scenario")
        .arg(a.join("walkthrough.json"))
        .arg("--replay")
        .arg(a.join("walkthrough.replay"))
        .output()
        .unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["scenario_match"], true, "{summary}");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn same_config_same_trace() {
    let dir = scratch("det");
    for tag in ["a", "b"] {
        let st = bin()
            .args(["--nodes", "12", "--requests", "40", "--workload", "zipf(1.3)", "--seed", "7", "--out"])
            .arg(dir.join(tag))
            .output()
            .unwrap();
        assert!(st.status.code().is_some());
    }
    let a = std::fs::read(dir.join("a.trace.csv")).unwrap();
    let b = std::fs::read(dir.join("b.trace.csv")).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn parallel_seeds_write_one_set_per_seed() {
    let dir = scratch("par");
    let out = bin().args(["--nodes", "6", "--requests", "5", "--seed", "3", "--parallel-seeds", "2", "--out"]).arg(dir.join("p")).output().unwrap();
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(dir.join("p.seed3.trace.csv").exists());
    assert!(dir.join("p.seed4.trace.csv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_file_and_errors() {
    let dir = scratch("cfg");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 5, "requests": 3, "workload": {"kind": "repeated_pair", "p": 1.0}}"#).unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["requests"], 3);

    std::fs::write(&cfg, r#"{"n": 5, "nodes": 3}"#).unwrap();
    assert_eq!(bin().arg("--config").arg(&cfg).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["--nodes", "1"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["--replay", "/nonexistent/file"]).output().unwrap().status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn violations_set_the_exit_code() {
    let out = bin().args(["--nodes", "16", "--requests", "30"]).output().unwrap();
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = if summary["violations"] == 0 { 0 } else { 1 };
    assert_eq!(out.status.code(), Some(expected));
}
