use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn seqtod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqtod"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn gen(dir: &Path, seed: &str) {
    let out = seqtod(&["gen-corpus", "--out", dir.to_str().unwrap(), "--seed", seed, "--train", "20", "--test", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn gen_corpus_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen(a.path(), "7");
    gen(b.path(), "7");
    for f in ["train.jsonl", "test.jsonl", "db.json", "ontology.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.path().join("train.jsonl")).unwrap().lines().count(), 20);
}

#[test]
fn oracle_eval_replays_gold() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "3");
    let d = dir.path();
    let out = seqtod(&[
        "eval", "--corpus", &p(d, "test.jsonl"), "--db", &p(d, "db.json"), "--ontology", &p(d, "ontology.json"),
        "--out", &p(d, "eval"), "--belief-mode", "oracle", "--db-mode", "oracle", "--action-mode", "oracle",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(report["joint_accuracy"], 1.0);
    assert_eq!(report["combined"], 200.0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["db_mode"], "oracle");
    assert_eq!(manifest["corpus_sha256"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(d.join("eval/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn usage_errors_exit_one() {
    let out = seqtod(&["gen-corpus", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = seqtod(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = seqtod(&["gen-corpus", "--out", dir.path().to_str().unwrap(), "--noise-type", "t4", "--noise-rate", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = seqtod(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "5");
    let d = dir.path();
    let out = seqtod(&["audit", "--corpus", &p(d, "missing.jsonl"), "--out", &p(d, "flags.csv")]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(d.join("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = seqtod(&["audit", "--corpus", &p(d, "bad.jsonl"), "--out", &p(d, "flags.csv")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:1"), "{err}");
    assert!(!err.contains("panicked"));
}

#[test]
fn audit_finds_injected_noise() {
    let clean = tempfile::tempdir().unwrap();
    gen(clean.path(), "9");
    let out = seqtod(&["audit", "--corpus", &p(clean.path(), "train.jsonl"), "--db", &p(clean.path(), "db.json"), "--out", &p(clean.path(), "flags.csv")]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("0 flags"));

    let noisy = tempfile::tempdir().unwrap();
    let out = seqtod(&[
        "gen-corpus", "--out", noisy.path().to_str().unwrap(), "--seed", "9", "--train", "20", "--test", "5", "--noise-type", "t2",
        "--noise-rate", "0.3",
    ]);
    assert!(out.status.success());
    let records = fs::read_to_string(noisy.path().join("noise.csv")).unwrap();
    assert!(records.lines().count() > 1);
    let out = seqtod(&["audit", "--corpus", &p(noisy.path(), "train.jsonl"), "--out", &p(noisy.path(), "flags.csv")]);
    assert!(out.status.success());
    let flags = fs::read_to_string(noisy.path().join("flags.csv")).unwrap();
    assert!(flags.lines().skip(1).all(|l| l.contains(",T2,")), "{flags}");
    assert_eq!(flags.lines().count(), records.lines().count());
}

#[test]
fn train_eval_and_chat_run() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "4");
    let d = dir.path();
    let out = seqtod(&["train", "--corpus", &p(d, "train.jsonl"), "--out", &p(d, "bad"), "--steps", "3", "--dim", "16", "--lr", "0"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let out = seqtod(&[
        "train", "--corpus", &p(d, "train.jsonl"), "--db", &p(d, "db.json"), "--out", &p(d, "model"), "--steps", "3", "--layers", "1",
        "--dim", "16", "--heads", "2", "--batch", "2", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("model/model.ckpt").exists());
    assert_eq!(fs::read_to_string(d.join("model/loss.csv")).unwrap().lines().count(), 4);

    let out = seqtod(&[
        "eval", "--checkpoint", &p(d, "model/model.ckpt"), "--corpus", &p(d, "test.jsonl"), "--db", &p(d, "db.json"), "--out",
        &p(d, "eval"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["checkpoint_sha256"].as_str().unwrap().len(), 64);

    let mut child = Command::new(env!("CARGO_BIN_EXE_seqtod"))
        .args(["chat", "--checkpoint", &p(d, "model/model.ckpt"), "--db", &p(d, "db.json")])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all("i need a hotel in the north\n<|belief|> ,,, zzz 日本\nbook it please\n\n".as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("system>").count(), 3, "{text}");
    assert_eq!(text.matches("belief:").count(), 3);
}
