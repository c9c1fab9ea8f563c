use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn stylehan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylehan"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("STYLEHAN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stylehan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    stylehan(dir, args).status.code().expect("exit code")
}

/// Small synthetic corpus `c.jsonl` + `c.tagged` in a fresh directory.
fn corpus(authors: usize, docs: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--authors", &authors.to_string(), "--docs-per-author", &docs.to_string(), "--seed", "3", "--out", "c"],
    );
    dir
}

const FAST: [&str; 6] = ["--data", "c.jsonl", "--tagged", "c.tagged", "--epochs", "2"];

fn train(dir: &Path, out: &str) -> PathBuf {
    let mut args = vec!["train"];
    args.extend(FAST);
    args.extend(["--mode", "style", "--seed", "7", "--out", out]);
    ok(dir, &args);
    dir.join(out)
}

#[test]
fn synth_writes_one_line_per_document_deterministically() {
    let dir = corpus(2, 3);
    let jsonl = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 6);
    let tagged = fs::read(dir.path().join("c.tagged")).unwrap();
    ok(dir.path(), &["synth", "--authors", "2", "--docs-per-author", "3", "--seed", "3", "--out", "d"]);
    assert_eq!(fs::read_to_string(dir.path().join("d.jsonl")).unwrap(), jsonl);
    assert_eq!(fs::read(dir.path().join("d.tagged")).unwrap(), tagged);
}

#[test]
fn synth_retag_replaces_tags_but_keeps_text() {
    let dir = corpus(2, 2);
    ok(dir.path(), &["synth", "--authors", "2", "--docs-per-author", "2", "--seed", "3", "--out", "r", "--retag"]);
    let a = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let b = fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_writes_checkpoint_and_history_and_is_repeatable() {
    let dir = corpus(2, 6);
    let first = fs::read(train(dir.path(), "m.shn")).unwrap();
    assert_eq!(&first[..4], b"SHAN");
    let history = fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,val_loss,val_acc"));
    assert_eq!(history.lines().count(), 3);
    let second = fs::read(train(dir.path(), "n.shn")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let dir = corpus(2, 2);
    let out = stylehan(dir.path(), &["train", "--data", "c.jsonl", "--mode", "bogus", "--out", "x.shn"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mode"));
    assert!(!dir.path().join("x.shn").exists());
}

#[test]
fn missing_data_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = stylehan(dir.path(), &["train", "--data", "nope.jsonl", "--out", "x.shn"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
}

#[test]
fn predict_is_deterministic_with_padded_attention() {
    let dir = corpus(2, 6);
    train(dir.path(), "m.shn");
    fs::write(dir.path().join("in.txt"), "Our council finds another quiet forest. We must repair some river.").unwrap();
    let a = ok(dir.path(), &["predict", "--model", "m.shn", "--input", "in.txt"]);
    let b = ok(dir.path(), &["predict", "--model", "m.shn", "--input", "in.txt"]);
    assert_eq!(a, b);
    let v: Value = serde_json::from_str(&a).unwrap();
    let probs: Vec<f64> = v["probabilities"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert_eq!(probs.len(), 2);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let authors = v["authors"].as_array().unwrap();
    let best = if probs[1] > probs[0] { 1 } else { 0 };
    assert_eq!(v["author"], authors[best]);
    let attention = v["attention"].as_object().unwrap();
    assert_eq!(attention.keys().collect::<Vec<_>>(), ["lexical", "syntactic"]);
    for weights in attention.values() {
        let w: Vec<f64> = weights.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(w.len(), 16);
        assert!(w[2..].iter().all(|&x| x == 0.0));
        assert!((w[0] + w[1] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn eval_reports_accuracy_and_confusion() {
    let dir = corpus(2, 6);
    train(dir.path(), "m.shn");
    let out = ok(dir.path(), &["eval", "--model", "m.shn", "--data", "c.jsonl", "--tagged", "c.tagged"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["total"], 12);
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let confusion: u64 = v["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()))
        .sum();
    assert_eq!(confusion, 12);
}

#[test]
fn eval_rejects_unknown_authors() {
    let dir = corpus(2, 6);
    train(dir.path(), "m.shn");
    ok(dir.path(), &["synth", "--authors", "3", "--docs-per-author", "2", "--out", "three"]);
    assert_eq!(code(dir.path(), &["eval", "--model", "m.shn", "--data", "three.jsonl", "--tagged", "three.tagged"]), 1);
}

#[test]
fn gradcheck_passes_and_lists_every_group() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(dir.path(), &["gradcheck"])).unwrap();
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["groups"].as_array().unwrap().iter().map(|g| g["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 30);
    assert!(names.contains(&"lexical.embedding") && names.contains(&"classifier.b_c"));
}

#[test]
fn corrupted_gradient_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = stylehan(dir.path(), &["gradcheck", "--corrupt-grad", "lexical.lstm.fwd.w_hh=1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(code(dir.path(), &["gradcheck", "--corrupt-grad", "no.such.group"]), 2);
}

#[test]
fn ablate_reports_four_modes_with_shared_splits() {
    let dir = corpus(2, 6);
    let mut args = vec!["ablate"];
    args.extend(FAST);
    args.extend(["--runs", "2"]);
    let v: Value = serde_json::from_str(&ok(dir.path(), &args)).unwrap();
    let modes = v["modes"].as_array().unwrap();
    let names: Vec<&str> = modes.iter().map(|m| m["mode"].as_str().unwrap()).collect();
    assert_eq!(names, ["syntactic", "lexical", "style", "combined-embed"]);
    for m in modes {
        let runs = m["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0]["seed"], 0);
        for r in runs {
            let a = r["accuracy"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
    }
}

#[test]
fn sweep_emits_one_csv_row_per_value() {
    let dir = corpus(2, 6);
    let mut args = vec!["sweep"];
    args.extend(FAST);
    args.extend(["--runs", "1", "--param", "sentences-per-doc", "--values", "10,20,30,40"]);
    let csv = ok(dir.path(), &args);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,accuracy");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("10,"));

    let mut bad = vec!["sweep"];
    bad.extend(FAST);
    bad.extend(["--param", "sentences-per-doc", "--values", "0,10"]);
    assert_eq!(code(dir.path(), &bad), 2);
    let mut unknown = vec!["sweep"];
    unknown.extend(FAST);
    unknown.extend(["--param", "filters", "--values", "10"]);
    assert_eq!(code(dir.path(), &unknown), 2);
}

#[test]
fn config_file_is_applied_and_flags_override_it() {
    let dir = corpus(2, 6);
    fs::write(dir.path().join("run.cfg"), "# short run\nepochs = 3\nmode = lexical\n").unwrap();
    let mut args = vec!["train", "--data", "c.jsonl", "--tagged", "c.tagged", "--config", "run.cfg", "--out", "a.shn"];
    let v: Value = serde_json::from_str(&ok(dir.path(), &args)).unwrap();
    assert_eq!(v["mode"], "lexical");
    assert_eq!(fs::read_to_string(dir.path().join("a.history.csv")).unwrap().lines().count(), 4);

    args.extend(["--epochs", "1", "--mode", "syntactic"]);
    *args.iter_mut().find(|a| **a == "a.shn").unwrap() = "b.shn";
    let v: Value = serde_json::from_str(&ok(dir.path(), &args)).unwrap();
    assert_eq!(v["mode"], "syntactic");
    assert_eq!(fs::read_to_string(dir.path().join("b.history.csv")).unwrap().lines().count(), 2);

    fs::write(dir.path().join("bad.cfg"), "epochs = 1\ncolour = blue\n").unwrap();
    let out = stylehan(dir.path(), &["train", "--data", "c.jsonl", "--config", "bad.cfg", "--out", "c.shn"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));
}

#[test]
fn tag_marks_punctuation_and_keeps_dataset_order() {
    let dir = corpus(2, 2);
    fs::write(dir.path().join("in.txt"), "The cat sat on the mat. Did it ( really ) stay?").unwrap();
    let out = ok(dir.path(), &["tag", "--input", "in.txt"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].ends_with("._."), "{}", lines[0]);
    assert!(lines[1].contains("(_(") && lines[1].contains(")_)") && lines[1].ends_with("?_?"));

    ok(dir.path(), &["tag", "--input", "c.jsonl", "--out", "t.tagged"]);
    let tagged = fs::read_to_string(dir.path().join("t.tagged")).unwrap();
    assert_eq!(tagged.split("\n\n").count(), 4);
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stylehan"))
        .args(["gradcheck"])
        .current_dir(dir.path())
        .env("STYLEHAN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_stylehan"))
        .args(["gradcheck"])
        .current_dir(dir.path())
        .env("STYLEHAN_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
