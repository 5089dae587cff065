use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rai_impact::embedding::load_vectors;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rai-impact")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Copy of the fixture config with absolute input paths and `edit` applied.
fn config_with(dir: &Path, edit: impl FnOnce(String) -> String) -> PathBuf {
    let fx = fixtures().canonicalize().unwrap();
    let text = fs::read_to_string(fx.join("config.toml"))
        .unwrap()
        .replace("\"papers.jsonl\"", &format!("{:?}", fx.join("papers.jsonl")))
        .replace("\"patents.jsonl\"", &format!("{:?}", fx.join("patents.jsonl")))
        .replace("\"repos.jsonl\"", &format!("{:?}", fx.join("repos.jsonl")))
        .replace("\"../data/keywords.tsv\"", &format!("{:?}", fx.join("../data/keywords.tsv")));
    let path = dir.join("config.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn run_on_fixture_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("report");
    let cfg = fixtures().join("config.toml");
    let res = cli(&["run", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("rq1_impact.csv").is_file());
}

#[test]
fn validate_accepts_fixture_config() {
    let res = cli(&["validate", "-c", fixtures().join("config.toml").to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
}

#[test]
fn missing_config_is_a_validation_error() {
    let res = cli(&["validate", "-c", "/nonexistent/config.toml"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn missing_seed_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), |t| t.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n"));
    let res = cli(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("seed"), "{}", stderr(&res));
}

#[test]
fn unknown_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), |t| t.replace("seed = ", "sede = 1\nseed = "));
    assert_eq!(code(&cli(&["validate", "-c", cfg.to_str().unwrap()])), 2);
}

#[test]
fn missing_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), |t| t.replace("repos.jsonl", "no-such-file.jsonl"));
    let res = cli(&["validate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
}

#[test]
fn stage_without_inputs_fails_with_stage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("config.toml");
    let out = tmp.path().join("empty");
    let res = cli(&["metrics", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
    assert!(out.join("STALE").is_file());
}

#[test]
fn malformed_input_under_strict_mode_fails_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let papers = tmp.path().join("papers.jsonl");
    let mut body = fs::read_to_string(fixtures().join("papers.jsonl")).unwrap();
    body.push_str("{not json\n");
    fs::write(&papers, body).unwrap();
    let cfg = config_with(tmp.path(), |t| {
        let fx = fixtures().canonicalize().unwrap();
        t.replace(&format!("{:?}", fx.join("papers.jsonl")), &format!("{papers:?}"))
            .replace("[classify]", "[filter]\nstrict = true\n\n[classify]")
    });
    let out = tmp.path().join("out");
    let res = cli(&["ingest", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
}

#[test]
fn embed_mock_output_loads_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("texts.tsv");
    fs::write(&input, "doc:a\tfairness in ranking\ndoc:b\tprivacy attacks on models\n\ndoc:c\tcarbon cost of training\n").unwrap();
    for text in [false, true] {
        let output = tmp.path().join(if text { "v.txt" } else { "v.bin" });
        let mut args = vec![
            "embed-mock",
            "--input",
            input.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
            "--dim",
            "64",
        ];
        if text {
            args.push("--text");
        }
        let res = cli(&args);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        let (store, report) = load_vectors(&output, true).unwrap();
        assert!(report.rejected.is_empty());
        assert_eq!(store.len(), 3);
        assert_eq!(store.dim(), 64);
        assert_eq!(store.model_id(), "mock-hash-v1-d64-s0");
        let s = store.similarity("doc:a", "doc:a").unwrap().value();
        assert!((s - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn embed_mock_rejects_lines_without_key() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("texts.tsv");
    fs::write(&input, "no tab here\n").unwrap();
    let output = tmp.path().join("v.bin");
    let res = cli(&["embed-mock", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert_ne!(code(&res), 0);
}

#[test]
fn synth_writes_a_runnable_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let res = cli(&["synth", "--out", tmp.path().to_str().unwrap(), "--papers", "30", "--patents", "10"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for f in ["papers.jsonl", "patents.jsonl", "repos.jsonl", "planted_links.csv"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
}
