use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_guidedel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(stdout.lines().last().unwrap_or("null")).unwrap_or(serde_json::Value::Null)
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let last = stderr.lines().last().expect("error line on stderr");
    serde_json::from_str(last).expect("error line is JSON")
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// Synthetic data, dictionaries, scorer and retriever in a fresh directory.
    fn new() -> Self {
        let w = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&["--seed", "5", "synth", "--out-dir", &w.s(""), "--docs", "80", "--test-docs", "20", "--entities", "24", "--families", "8"]);
        ok(&["build-kb", "--input", &w.s("kb.jsonl"), "--output", &w.s("kb.jsonl")]);
        ok(&[
            "build-dicts", "--kb", &w.s("kb.jsonl"), "--corpus", &w.s("train.jsonl"),
            "--dict-out", &w.s("dict.json"), "--e2m-out", &w.s("e2m.json"),
        ]);
        ok(&["train-scorer", "--kb", &w.s("kb.jsonl"), "--corpus", &w.s("train.jsonl"), "--output", &w.s("scorer.bin")]);
        ok(&[
            "--seed", "2", "train-retriever", "--kb", &w.s("kb.jsonl"), "--corpus", &w.s("train.jsonl"),
            "--encoder-out", &w.s("enc.bin"), "--index-out", &w.s("index.bin"),
            "--epochs", "3", "--dim", "16", "--buckets", "1024",
        ]);
        w
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.p(name).to_string_lossy().into_owned()
    }

    fn link(&self, extra: &[&str], out: &str) -> serde_json::Value {
        let mut args = vec![
            "link".to_string(),
            "--input".into(), self.s("test.jsonl"),
            "--output".into(), self.s(out),
            "--kb".into(), self.s("kb.jsonl"),
            "--scorer".into(), self.s("scorer.bin"),
            "--e2m".into(), self.s("e2m.json"),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn pipeline_runs_and_is_deterministic() {
    let w = Workspace::new();
    let dense = ["--encoder", &w.s("enc.bin"), "--index", &w.s("index.bin")];

    let a = w.link(&[&dense[..], &["--k", "3"]].concat(), "guided_a.jsonl");
    assert_eq!(a["mode"], "guided");
    w.link(&[&dense[..], &["--k", "3", "--parallelism", "4"]].concat(), "guided_b.jsonl");
    assert_eq!(read(&w.p("guided_a.jsonl")), read(&w.p("guided_b.jsonl")));

    let v = w.link(&["--mode", "vanilla", "--beam-size", "2"], "vanilla.jsonl");
    assert_eq!(v["mode"], "vanilla");
    assert!(v["lm_forwards"].as_u64().unwrap() > a["lm_forwards"].as_u64().unwrap());

    let record: serde_json::Value =
        serde_json::from_str(fs::read_to_string(w.p("guided_a.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    for key in ["doc_id", "text", "annotations", "lm_forwards", "generated"] {
        assert!(record.get(key).is_some(), "missing {key}");
    }
    assert!(record.get("wall_time_ms").is_none());

    // predictions are valid dataset files for eval
    let out = run(&["eval", "--pred", &w.s("guided_a.jsonl"), "--gold", &w.s("test.jsonl"), "--kb", &w.s("kb.jsonl")]);
    assert!(out.status.success());

    // retraining with the same seed reproduces the artifacts byte for byte
    ok(&[
        "--seed", "2", "train-retriever", "--kb", &w.s("kb.jsonl"), "--corpus", &w.s("train.jsonl"),
        "--encoder-out", &w.s("enc2.bin"), "--index-out", &w.s("index2.bin"),
        "--epochs", "3", "--dim", "16", "--buckets", "1024",
    ]);
    assert_eq!(read(&w.p("enc.bin")), read(&w.p("enc2.bin")));
    assert_eq!(read(&w.p("index.bin")), read(&w.p("index2.bin")));
}

#[test]
fn eval_identical_files_and_threshold() {
    let w = Workspace::new();
    let report = w.s("report.json");
    let out = run(&[
        "eval", "--pred", &w.s("test.jsonl"), "--gold", &w.s("test.jsonl"), "--kb", &w.s("kb.jsonl"),
        "--min-f1", "1.0", "--output", &report,
    ]);
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["f1"], 1.0);

    w.link(&["--mode", "vanilla"], "vanilla.jsonl");
    let out = run(&[
        "eval", "--pred", &w.s("vanilla.jsonl"), "--gold", &w.s("test.jsonl"), "--kb", &w.s("kb.jsonl"),
        "--min-f1", "0.99",
    ]);
    assert_eq!(error_json(&out)["error"], "ThresholdError");
}

#[test]
fn bench_reports_zero_variance_counts() {
    let w = Workspace::new();
    let json = w.s("bench.json");
    let out = run(&[
        "--seed", "9", "bench", "--input", &w.s("test.jsonl"), "--kb", &w.s("kb.jsonl"), "--scorer",
        &w.s("scorer.bin"), "--e2m", &w.s("e2m.json"), "--repeats", "3", "--parallelism", "2", "--output", &json,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("guided") && table.contains("vanilla"));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for row in rows.as_array().unwrap() {
        assert_eq!(row["lm_forwards_std"], 0.0);
        assert_eq!(row["f1_std"], 0.0);
        assert_eq!(row["repeats"], 3);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let w = Workspace::new();
    fs::write(w.p("cfg.toml"), "[link]\nmode = \"vanilla\"\nbeam_size = 1\n").unwrap();
    let cfg = w.s("cfg.toml");
    let v = w.link(&["--config", &cfg], "a.jsonl");
    assert_eq!(v["mode"], "vanilla");
    let g = w.link(&["--config", &cfg, "--mode", "guided"], "b.jsonl");
    assert_eq!(g["mode"], "guided");

    fs::write(w.p("bad.toml"), "[link]\nbeam = 1\n").unwrap();
    let out = run(&["--config", &w.s("bad.toml"), "eval", "--pred", "x", "--gold", "x", "--kb", "x"]);
    assert_eq!(error_json(&out)["error"], "ConfigError");
}

#[test]
fn icl_prompts_and_replayed_responses() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    fs::write(
        p("kb.jsonl"),
        "{\"title\":\"Steve Jobs\",\"description\":\"co-founder\"}\n{\"title\":\"Apple Inc.\",\"description\":\"company\"}\n",
    )
    .unwrap();
    fs::write(p("docs.jsonl"), "{\"doc_id\":\"d1\",\"text\":\"Steve became CEO of Apple.\"}\n").unwrap();

    ok(&["link", "--mode", "icl-prompt", "--input", &p("docs.jsonl"), "--output", &p("prompts.jsonl"), "--kb", &p("kb.jsonl")]);
    let req: serde_json::Value = serde_json::from_str(fs::read_to_string(p("prompts.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(req["doc_id"], "d1");
    assert_eq!(req["params"]["temperature"], 0.0);
    assert_eq!(req["params"]["max_tokens"], 300);
    assert!(req["prompt"].as_str().unwrap().contains("Steve became CEO of Apple."));

    let response = "1. mention: \"Steve\" | context: \"Steve became CEO\" | entity: Steve Jobs\n\
                    2. mention: \"Apple\" | context: \"CEO of Apple.\" | entity: Apple Inc.\n\
                    3. mention: \"CEO\" | context: \"became CEO of\" | entity: Chief executive officer";
    let line = serde_json::json!({ "doc_id": "d1", "response": response });
    fs::write(p("responses.jsonl"), format!("{line}\n")).unwrap();
    let summary = ok(&[
        "link", "--mode", "icl-prompt", "--input", &p("docs.jsonl"), "--output", &p("pred.jsonl"),
        "--kb", &p("kb.jsonl"), "--responses", &p("responses.jsonl"),
    ]);
    assert_eq!(summary["diagnostics"]["accepted"], 2);
    assert_eq!(summary["diagnostics"]["out_of_kb"], 1);
    let pred: serde_json::Value = serde_json::from_str(fs::read_to_string(p("pred.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(
        pred["annotations"],
        serde_json::json!([
            {"start": 0, "end": 5, "entity": "Steve Jobs"},
            {"start": 20, "end": 25, "entity": "Apple Inc."}
        ])
    );
}

#[test]
fn errors_are_single_line_json() {
    let out = run(&["link", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "UsageError");

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl").to_string_lossy().into_owned();
    let out = run(&["build-kb", "--input", &missing, "--output", &missing]);
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.trim().lines().count(), 1);
    assert_eq!(error_json(&out)["error"], "IoError");

    fs::write(dir.path().join("dup.jsonl"), "{\"title\":\"A\"}\n{\"title\":\"A\"}\n").unwrap();
    let dup = dir.path().join("dup.jsonl").to_string_lossy().into_owned();
    let out = run(&["build-kb", "--input", &dup, "--output", &missing]);
    assert_eq!(error_json(&out)["error"], "DuplicateTitleError");

    fs::write(dir.path().join("docs.jsonl"), "{\"doc_id\":\"d\",\"text\":\"x\"}\n").unwrap();
    let docs = dir.path().join("docs.jsonl").to_string_lossy().into_owned();
    fs::write(dir.path().join("kb.jsonl"), "{\"title\":\"A\"}\n").unwrap();
    let kb = dir.path().join("kb.jsonl").to_string_lossy().into_owned();
    let out = run(&["link", "--input", &docs, "--output", &missing, "--kb", &kb]);
    assert_eq!(error_json(&out)["error"], "ConfigError");
}
