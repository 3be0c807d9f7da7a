use std::path::Path;
use std::process::{Command, Output};

fn aspectrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aspectrag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let synth = aspectrag(&["synth", "--out", s(&data)]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));

    let run = aspectrag(&[
        "pipeline",
        "--dataset",
        s(&data.join("dataset.jsonl")),
        "--corpus",
        s(&data.join("corpus.jsonl")),
        "--out",
        s(&out),
        "--aspect-mode",
        "gold",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    let stats: Vec<serde_json::Value> = stdout
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let stages: Vec<&str> = stats.iter().map(|v| v["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["index", "aspects", "retrieve", "pool", "silver", "rank", "pairs", "eval"]);
    assert_eq!(stats[3]["count"], 20);
    assert!(stdout.contains("ranker.NCOM\t"));
    assert!(out.join("report.json").exists());
}

#[test]
fn missing_artifact_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(aspectrag(&["synth", "--out", s(&data)]).status.success());
    let run = aspectrag(&[
        "rank",
        "--dataset",
        s(&data.join("dataset.jsonl")),
        "--corpus",
        s(&data.join("corpus.jsonl")),
        "--out",
        s(&dir.path().join("out")),
        "--aspect-mode",
        "gold",
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("missing artifact: pool"));
}

#[test]
fn config_overrides_and_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"k": 5, "aspect_mode": "gold"}"#).unwrap();
    let out = aspectrag(&["config", "--config", s(&file), "--mu", "0.2", "--workers", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let (json, fp) = text.rsplit_once("fingerprint ").unwrap();
    let config: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!((config["k"].as_u64(), config["mu"].as_f64()), (Some(5), Some(0.2)));
    assert_eq!(config["aspect_mode"], "gold");
    assert_eq!(fp.trim().len(), 16);

    let single = aspectrag(&["config", "--config", s(&file), "--mu", "0.2"]);
    let single = String::from_utf8(single.stdout).unwrap();
    assert!(single.ends_with(&format!("fingerprint {}", fp)));

    let profile = aspectrag(&["config", "--profile", "wikiasp"]);
    let profile: serde_json::Value =
        serde_json::from_str(String::from_utf8(profile.stdout).unwrap().rsplit_once("fingerprint ").unwrap().0).unwrap();
    assert_eq!(profile["pool_capacity"], 270);
}

#[test]
fn bad_arguments_are_rejected() {
    let bad_profile = aspectrag(&["config", "--profile", "nope"]);
    assert_eq!(bad_profile.status.code(), Some(2));
    let bad_k = aspectrag(&["config", "--k", "0"]);
    assert_eq!(bad_k.status.code(), Some(2));
}
