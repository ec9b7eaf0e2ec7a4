mod common;

use std::fs;
use std::process::{Command, Output};

use common::*;
use decompeval::compilecheck::CheckMode;
use decompeval::corpus_io::load_corpus;
use decompeval::pipeline::generate_hypotheses;
use decompeval::stub::{StubConfig, StubReply, StubServer};

fn decompeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decompeval"))
        .args(args)
        .env("DECOMPEVAL_DART", "/nonexistent/dart")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(rel: &str) -> String {
    fixture(rel).display().to_string()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&decompeval(&[])), 1);
    assert_eq!(code(&decompeval(&["stats", "wilson", "x", "34"])), 1);
    assert_eq!(code(&decompeval(&["run", "--config", "/nonexistent/run.toml"])), 1);
    assert_eq!(code(&decompeval(&["--help"])), 0);
}

#[test]
fn stats_calculators() {
    let o = decompeval(&["stats", "wilson", "27", "34"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("lower=0.6320"), "{}", stdout(&o));
    let o = decompeval(&["stats", "zt", "17", "34", "15", "34"]);
    assert!(stdout(&o).contains("p=0.62") || stdout(&o).contains("p=0.63"), "{}", stdout(&o));
    let o = decompeval(&["stats", "meanci", "71.3", "25.4", "73"]);
    assert!(stdout(&o).contains("lower=65.47"), "{}", stdout(&o));
    assert_eq!(code(&decompeval(&["stats", "wilson", "1", "0"])), 1);
}

#[test]
fn corpus_commands() {
    let o = decompeval(&["corpus", "validate", &path("mini_corpus.jsonl")]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = decompeval(&["corpus", "validate", &path("invalid_records.jsonl")]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout(&o).lines().count(), 6);
    assert_eq!(code(&decompeval(&["corpus", "validate", &path("manifest_drift.jsonl")])), 2);
    assert_eq!(code(&decompeval(&["corpus", "validate", "/nonexistent/c.jsonl"])), 2);

    let o = decompeval(&["corpus", "stats", &path("manifests/dart_swift_train.jsonl")]);
    assert!(stdout(&o).contains("total/train\t1000"), "{}", stdout(&o));
    let o = decompeval(&["corpus", "stats", "--json", &path("manifests/test.jsonl")]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.to_string().contains("73") && v.to_string().contains("34"), "{v}");
}

#[test]
fn eval_subcommands_and_tool_errors() {
    let corpus = load_corpus(&fixture("e2e_corpus.jsonl")).unwrap();
    let stub = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::EchoReference(corpus.records))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), &[("echo", stub.url())], 2, CheckMode::Syntax);
    let hyps = generate_hypotheses(&cfg).unwrap().remove(0);
    let hyps = hyps.display().to_string();
    let corpus = path("e2e_corpus.jsonl");

    let out = dir.path().join("cb.jsonl");
    let o = decompeval(&[
        "eval",
        "codebleu",
        "--corpus",
        &corpus,
        "--hypotheses",
        &hyps,
        "--splits",
        "test",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 5);

    let o = decompeval(&[
        "eval",
        "compile-at-k",
        "--corpus",
        &corpus,
        "--hypotheses",
        &hyps,
        "--splits",
        "test-natural",
        "--mode",
        "syntax",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // The default check needs the dart compiler, which is pointed elsewhere.
    let o =
        decompeval(&["eval", "compile-at-k", "--corpus", &corpus, "--hypotheses", &hyps, "--splits", "test-natural"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("DECOMPEVAL_DART"));

    // A hypothesis file that is not JSON lines is a data error.
    let junk = dir.path().join("junk.jsonl");
    fs::write(&junk, "not json\n").unwrap();
    let o = decompeval(&["eval", "codebleu", "--corpus", &corpus, "--hypotheses", junk.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_and_render() {
    let corpus = load_corpus(&fixture("e2e_corpus.jsonl")).unwrap();
    let stub = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::EchoReference(corpus.records))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(&dir.path().join("out"), &[("echo", stub.url())], 2, CheckMode::Syntax);
    let config = dir.path().join("run.toml");
    fs::write(&config, cfg.to_toml()).unwrap();

    let o = decompeval(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    for src in ["report.json", "report.csv"] {
        let o = decompeval(&["report", "render", out.join(src).to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o).trim_end(), md.trim_end());
    }
    let lock = fs::read_to_string(out.join("run-config.lock")).unwrap();
    assert!(lock.contains("# corpus sha256 "));

    // Overriding the mode on the command line brings the compiler back in.
    let o = decompeval(&["run", "--config", config.to_str().unwrap(), "--mode", "dart-aot"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
