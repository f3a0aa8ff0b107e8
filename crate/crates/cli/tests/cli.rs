use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mvpure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvpure")).args(args).output().expect("binary runs")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn validate_shipped_configs() {
    for name in ["configs/default.json", "configs/desk.json"] {
        let out = mvpure(&["validate", "--config", repo_file(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
    }
}

#[test]
fn demo_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvpure(&["demo", "--out", dir.path().to_str().unwrap(), "--filters", "LCMV_R,ZERO", "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "summary.csv", "config-echo.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let results = lines(&dir.path().join("results.csv"));
    assert!(results[0].starts_with("run,seed,sinr_db"));
    // 5 runs x 5 SINR points x 2 filters
    assert_eq!(results.len() - 1, 50);
}

#[test]
fn sweep_emits_one_summary_row_per_filter_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvpure(&[
        "sweep",
        "--param",
        "sinr_db",
        "--values",
        "-5,0,5",
        "--filters",
        "LCMV_N,NULLING_N,RANDOM",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = lines(&dir.path().join("summary.csv"));
    assert_eq!(summary.len() - 1, 9);
    assert!(summary[1..].iter().any(|r| r.starts_with("-5,")));
}

#[test]
fn seed_override_changes_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = mvpure(&["demo", "--filters", "LCMV_R", "--seed", seed, "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_ne!(lines(&a.path().join("summary.csv")), lines(&b.path().join("summary.csv")));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mvpure(&[]).status.code(), Some(2));
    assert_eq!(mvpure(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mvpure(&["sweep", "--param", "volume", "--values", "1"]).status.code(), Some(2));
    assert_eq!(mvpure(&["demo", "--filters", "NOT_A_FILTER"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"m": 4}"#).unwrap();
    assert_eq!(mvpure(&["validate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(mvpure(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_1() {
    let out = mvpure(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn help_and_version_succeed() {
    assert!(mvpure(&["--help"]).status.success());
    assert!(mvpure(&["--version"]).status.success());
}
