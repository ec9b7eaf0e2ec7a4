//! Full runs against the stub endpoint with the grammar-based check, so
//! they need no compiler.

mod common;

use std::fs;

use common::*;
use decompeval::client::read_hypotheses;
use decompeval::compilecheck::{read_outcomes, CheckMode};
use decompeval::config::ReportFormat;
use decompeval::corpus_io::load_corpus;
use decompeval::pipeline::{generate_hypotheses, run_evaluation};
use decompeval::report::{parse_csv, EvaluationReport};
use decompeval::stub::{StubConfig, StubReply, StubServer};
use decompeval_core::inference::ReasoningMarkers;

fn echo_stub() -> StubServer {
    let corpus = load_corpus(&fixture("e2e_corpus.jsonl")).unwrap();
    StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::EchoReference(corpus.records))).unwrap()
}

#[test]
fn echoed_references_score_perfectly_at_any_job_count() {
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for jobs in [1, 8] {
        let stub = echo_stub();
        let dir = tempfile::tempdir().unwrap();
        let cfg = run_config(dir.path(), &[("echo", stub.url())], jobs, CheckMode::Syntax);
        let r = run_evaluation(&cfg).unwrap();
        assert_eq!(r.codebleu[0].n, 5);
        assert!((r.codebleu[0].mean - 1.0).abs() < 1e-9);
        for row in &r.compile {
            assert_eq!((row.successes, row.n), (5, 5), "k={}", row.k);
        }
        let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("| 100.0 |"), "{md}");
        assert!(md.contains("100.0% ("), "{md}");
        // 5 CodeBLEU items ask for one attempt, 5 compile items for five.
        assert_eq!(stub.requests().len(), 5 + 25);
        let hyps = read_hypotheses(&dir.path().join("hypotheses/echo.jsonl"), &ReasoningMarkers::default()).unwrap();
        assert_eq!(hyps.len(), 30);
        let outcomes = read_outcomes(&dir.path().join("outcomes/echo.compile.jsonl")).unwrap();
        assert!(outcomes.iter().all(|o| o.first_success_attempt == Some(0)));
        reports.push(r);
        files.push(["report.md", "report.csv", "report.json"].map(|f| fs::read(dir.path().join(f)).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(files[0], files[1]);
}

#[test]
fn reports_round_trip_through_json_and_csv() {
    let stub = echo_stub();
    let broken = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::Invalid)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), &[("echo", stub.url()), ("broken", broken.url())], 2, CheckMode::Syntax);
    let r = run_evaluation(&cfg).unwrap();
    let json = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(EvaluationReport::from_json(&json).unwrap(), r);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let back = parse_csv(&csv).unwrap();
    assert_eq!(back.render(ReportFormat::Csv).unwrap(), csv);

    let broken_rows: Vec<_> = r.compile.iter().filter(|row| row.label == "broken").collect();
    assert!(broken_rows.iter().all(|row| row.successes == 0));
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| broken | 0 | no compiled outputs |"), "{md}");
    assert_eq!(r.ztests.len(), 2);
    assert!(r.ztests.iter().all(|t| t.a_successes + t.b_successes == 5));
}

#[test]
fn prerecorded_hypotheses_replace_the_endpoint() {
    let stub = echo_stub();
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), &[("echo", stub.url())], 4, CheckMode::Syntax);
    let paths = generate_hypotheses(&cfg).unwrap();
    assert_eq!(paths.len(), 1);
    drop(stub);

    let out = tempfile::tempdir().unwrap();
    let mut offline = run_config(out.path(), &[("echo", "http://127.0.0.1:9/unused".into())], 4, CheckMode::Syntax);
    offline.models[0].endpoint = None;
    offline.models[0].hypotheses = Some(paths[0].clone());
    let r = run_evaluation(&offline).unwrap();
    assert!((r.codebleu[0].mean - 1.0).abs() < 1e-9);
}

#[test]
fn unreachable_endpoint_is_an_external_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg =
        run_config(dir.path(), &[("gone", "http://127.0.0.1:9/v1/chat/completions".into())], 1, CheckMode::Syntax);
    if let Some(e) = cfg.models[0].endpoint.as_mut() {
        e.max_retries = 1;
        e.backoff_ms = 1;
        e.timeout_secs = 2;
    }
    let err = run_evaluation(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}
