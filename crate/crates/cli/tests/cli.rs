use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/testdata/toy")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surveyeval"))
        .args(args)
        .env_remove("JUDGE_API_KEY")
        .env_remove("EMBED_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn run_stages(out: &Path, stages: &[&str]) {
    let manifest = toy().join("manifest.json");
    for stage in stages {
        let o = run(&[stage, "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn full_run_with_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (out, manifest) = (dir.path().to_str().unwrap(), toy().join("manifest.json"));
    let manifest = manifest.to_str().unwrap();

    let o = run(&["ingest", "--manifest", manifest, "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("9 surveys, 6 pairs"));

    for stage in ["decompose", "embed", "evaluate"] {
        let o = run(&[stage, "--manifest", manifest, "--out", out, "--verify"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("verify: 0 mismatch(es)"), "{stage}: {}", stdout(&o));
    }

    let o = run(&["report", "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("| System |"));
    assert!(dir.path().join("report.md").is_file());

    let o = run(&["report", "--format", "json", "--out", out]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["surveys"].as_array().unwrap().len(), 9);

    let o = run(&["arena", "--manifest", manifest, "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("| alpha |"));
    assert!(dir.path().join("arena.json").is_file());
}

#[test]
fn config_file_paths_resolve_beside_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("surveyeval.toml");
    fs::copy(toy().join("surveyeval.toml"), &config).unwrap();
    let manifest = toy().join("manifest.json");
    for stage in ["decompose", "embed", "evaluate"] {
        let o = run(&[stage, "--config", config.to_str().unwrap(), "--manifest", manifest.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(dir.path().join("out/report.json").is_file());
    assert!(dir.path().join("out/cache/judge.jsonl").is_file());
}

#[test]
fn invalid_input_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "temperature = 3.0\n").unwrap();
    let manifest = toy().join("manifest.json");
    assert_eq!(code(&run(&["ingest", "--config", bad.to_str().unwrap(), "--manifest", manifest.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["ingest", "--manifest", "/nonexistent/manifest.json", "--out", out])), 2);
    assert_eq!(code(&run(&["ingest", "--out", out])), 2);
    // Embedding before decomposition.
    assert_eq!(code(&run(&["embed", "--manifest", manifest.to_str().unwrap(), "--out", out])), 2);
}

#[test]
fn offline_cache_miss_exits_with_provider_status() {
    let dir = tempfile::tempdir().unwrap();
    run_stages(dir.path(), &["decompose", "embed"]);
    let manifest = toy().join("manifest.json");
    let o = run(&[
        "evaluate",
        "--offline",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("offline"));
}

#[test]
fn tampered_report_exits_with_verify_status() {
    let dir = tempfile::tempdir().unwrap();
    run_stages(dir.path(), &["decompose", "embed", "evaluate"]);
    let path = dir.path().join("report.json");
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let metric = &mut json["surveys"][0]["metrics"][0]["raw"];
    *metric = serde_json::json!(metric.as_f64().unwrap() / 2.0 + 0.5);
    fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();

    let manifest = toy().join("manifest.json");
    let o =
        run(&["report", "--verify", "--manifest", manifest.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("verify: 0 mismatch(es)"));
}

#[test]
fn criteria_lists_templates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["criteria", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("children_coherence"));
    let o = run(&["criteria", "generate", "--dimension", "content", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("- "));
}
