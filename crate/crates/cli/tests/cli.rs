use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn grantscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grantscope"))
        .args(args)
        .current_dir(dir)
        .env_remove("SLACK_WEBHOOK_URL")
        .env_remove("GRANTSCOPE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout_lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

#[test]
fn replay_scan_twice() {
    let dir = tempfile::tempdir().unwrap();
    let scores = fixtures().join("risk-scores.json");
    let out = grantscope(dir.path(), &["score", "--import", scores.to_str().unwrap(), "--model", "fx"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let replay = fixtures().join("tenant");
    let scan = ["scan", "--once", "--dry-run", "--replay", replay.to_str().unwrap(), "--score-model", "fx@v1"];
    let first = grantscope(dir.path(), &scan);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let lines = stdout_lines(&first);
    let summary = lines.last().unwrap();
    assert_eq!(summary["total"], 7);
    assert_eq!(summary["new"], 7);
    let payloads = lines.len() - 1;
    assert_eq!(payloads, summary["alerts"].as_array().unwrap().len());
    assert!(payloads > 0);

    let second = grantscope(dir.path(), &scan);
    let lines = stdout_lines(&second);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["new"], 0);
    assert_eq!(lines[0]["changed"], 0);
    assert_eq!(lines[0]["alerts"].as_array().unwrap().len(), 0);
}

#[test]
fn scrape_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let md = fixtures().join("permissions-reference.md");
    let out = grantscope(dir.path(), &["scrape", "--input", md.to_str().unwrap(), "--output", "perms.json"]);
    assert!(out.status.success());
    let out = grantscope(dir.path(), &["scrape", "--validate", "perms.json"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["record_count"], 412);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"spike": {"theta": 9}}"#).unwrap();
    let out = grantscope(dir.path(), &["--config", "bad.json", "scan", "--once"]);
    assert_eq!(out.status.code(), Some(1));

    let empty = dir.path().join("empty-replay");
    std::fs::create_dir(&empty).unwrap();
    std::fs::write(empty.join("manifest.json"), "{}").unwrap();
    let out = grantscope(dir.path(), &["scan", "--once", "--replay", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let replay = fixtures().join("tenant");
    let out = grantscope(
        dir.path(),
        &["scan", "--once", "--replay", replay.to_str().unwrap(), "--state-db", "missing/dir/state.db"],
    );
    assert_eq!(out.status.code(), Some(3));

    let out = grantscope(dir.path(), &["analyze", "--risk-cache", "nope.db", "stats"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_formats() {
    let dir = tempfile::tempdir().unwrap();
    let scores = fixtures().join("risk-scores.json");
    for model in ["a", "b"] {
        let out = grantscope(dir.path(), &["score", "--import", scores.to_str().unwrap(), "--model", model, "--prompt-version", "v0"]);
        assert!(out.status.success());
    }
    let out = grantscope(dir.path(), &["analyze", "agreement", "--left", "a", "--right", "b", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["diff_histogram"]["0"], 12);

    let out = grantscope(dir.path(), &["analyze", "distribution", "--model", "a", "--filter", r"\.All", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("score,count,percent"));

    let out = grantscope(dir.path(), &["analyze", "ngrams", "--n", "3"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("metric: Jaccard"));
}
