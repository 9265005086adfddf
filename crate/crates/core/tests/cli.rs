use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fragscan::corpus::load_corpus;
use fragscan::inference::{labels_to_spans, load_predictions, save_predictions, Prediction};
use tempfile::TempDir;

fn fragscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragscan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fragscan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    fragscan(dir, args).status.code().unwrap()
}

fn generated(n_docs: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["generate", "--n-docs", n_docs, "--seed", "3"]);
    dir
}

#[test]
fn stats_prints_four_label_rows() {
    let dir = generated("10");
    let out = ok(dir.path(), &["stats"]);
    let lines: Vec<&str> = out.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 5, "{out}");
    for col in ["Label", "Count", "Mean length symbols", "Mean length tokens"] {
        assert!(lines[0].contains(col), "{out}");
    }
    for (line, name) in lines[1..]
        .iter()
        .zip(["Human", "NLTK-replace", "ChatGPT", "Summarized"])
    {
        assert!(line.starts_with(name), "{out}");
    }
}

#[test]
fn untrained_pipeline_runs_end_to_end() {
    let dir = generated("12");
    let d = dir.path();
    ok(d, &["train", "--epochs", "0", "--window", "40"]);
    for f in ["model.ckpt", "vocab.json", "history.jsonl"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read_to_string(d.join("history.jsonl")).unwrap(), "");
    ok(d, &["predict"]);
    let gold = load_corpus(d.join("corpus.jsonl")).unwrap();
    let preds = load_predictions(d.join("predictions.jsonl")).unwrap();
    assert_eq!(preds.len(), gold.len());
    for (p, g) in preds.iter().zip(&gold) {
        assert_eq!(p.doc_id, g.doc_id);
        assert_eq!(p.word_labels.len(), g.len());
        assert_eq!(p.annotations.first().unwrap().start_char, 0);
        assert_eq!(p.annotations.last().unwrap().end_char, g.char_len());
    }
    ok(d, &["evaluate"]);
    assert!(d.join("report.txt").is_file());
    assert!(d.join("report.json").is_file());
}

#[test]
fn evaluating_gold_against_itself_scores_one() {
    let dir = generated("8");
    let d = dir.path();
    let gold = load_corpus(d.join("corpus.jsonl")).unwrap();
    let preds: Vec<Prediction> = gold
        .iter()
        .map(|doc| Prediction {
            doc_id: doc.doc_id.clone(),
            word_labels: doc.token_labels.clone(),
            annotations: labels_to_spans(doc, &doc.token_labels).unwrap(),
        })
        .collect();
    save_predictions(d.join("predictions.jsonl"), &preds).unwrap();
    for mode in ["per_document_mean", "corpus_pooled"] {
        let out = ok(d, &["evaluate", "--mode", mode]);
        assert!(out.lines().nth(1).unwrap().ends_with("1.00  1.00  1.00"), "{out}");
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        assert_eq!(json["macro_f1"], 1.0);
        assert_eq!(json["aggregation_mode"], mode);
    }
}

fn snapshot(d: &Path, files: &[&str]) -> Vec<Vec<u8>> {
    files.iter().map(|f| fs::read(d.join(f)).unwrap()).collect()
}

#[test]
fn commands_are_idempotent_without_timestamps() {
    let dir = generated("12");
    let d = dir.path();
    let files = [
        "corpus.jsonl",
        "vocab.json",
        "model.ckpt",
        "history.jsonl",
        "predictions.jsonl",
        "report.txt",
        "report.json",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(d, &["generate", "--n-docs", "12", "--seed", "3"]);
        ok(d, &["train", "--epochs", "1", "--window", "40", "--no-timestamp"]);
        ok(d, &["predict"]);
        ok(d, &["evaluate", "--no-timestamp"]);
        runs.push(snapshot(d, &files));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn timestamps_appear_unless_disabled() {
    let dir = generated("8");
    let d = dir.path();
    ok(d, &["train", "--epochs", "0", "--window", "40"]);
    let header = |p: PathBuf| {
        let bytes = fs::read(p).unwrap();
        let end = bytes.iter().position(|&b| b == b'\n').unwrap();
        String::from_utf8(bytes[..end].to_vec()).unwrap()
    };
    assert!(header(d.join("model.ckpt")).contains("created_at"));
    ok(d, &["train", "--epochs", "0", "--window", "40", "--no-timestamp"]);
    assert!(!header(d.join("model.ckpt")).contains("created_at"));
}

#[test]
fn sweep_emits_one_row_per_window() {
    let dir = generated("10");
    let d = dir.path();
    let out = ok(d, &["train", "--epochs", "1", "--sweep", "30,60", "--no-timestamp"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert!(lines[0].starts_with("Encoder + window"));
    assert!(lines[1].starts_with("Encoder + 30"));
    assert!(lines[2].starts_with("Encoder + 60"));
    assert_eq!(fs::read_to_string(d.join("report.txt")).unwrap(), out);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = generated("8");
    let d = dir.path();
    fs::write(
        d.join("run.json"),
        r#"{"train": {"window": 25, "epochs": 0}, "paths": {"checkpoint": "from_file.ckpt"}}"#,
    )
    .unwrap();
    ok(d, &["train", "--config", "run.json", "--window", "33"]);
    let bytes = fs::read(d.join("from_file.ckpt")).unwrap();
    let end = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[..end]).unwrap();
    assert_eq!(header["meta"]["window"], 33);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["stats", "--bogus"]), 1);
    assert_eq!(code(d, &["stats", "--mode", "pooled"]), 1);
    // missing input
    assert_eq!(code(d, &["stats"]), 1);
    assert_eq!(code(d, &["generate", "--tau", "1.5"]), 1);
    fs::write(d.join("bad.json"), "{\"nope\": 1}").unwrap();
    assert_eq!(code(d, &["stats", "--config", "bad.json"]), 1);
    fs::write(d.join("corpus.jsonl"), "{\"doc_id\": 1}\n").unwrap();
    assert_eq!(code(d, &["stats"]), 1);
    // output directory that cannot be created is a runtime failure
    assert_eq!(
        code(d, &["generate", "--n-docs", "2", "--corpus", "no/such/dir/c.jsonl"]),
        2
    );
}

#[test]
fn failed_validation_writes_nothing() {
    let dir = generated("6");
    let d = dir.path();
    // no checkpoint yet
    assert_eq!(code(d, &["predict"]), 1);
    assert!(!d.join("predictions.jsonl").exists());
    assert_eq!(code(d, &["evaluate"]), 1);
    assert!(!d.join("report.txt").exists());
    assert_eq!(code(d, &["train", "--dropout", "1.0"]), 1);
    assert!(!d.join("model.ckpt").exists());
    assert!(!d.join("vocab.json").exists());
}
