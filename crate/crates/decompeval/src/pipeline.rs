//! End-to-end evaluation run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use decompeval_core::compile::{attempt_schedule, CompileAtKResult};
use decompeval_core::corpus::{validate_record, Corpus};
use decompeval_core::inference::{build_prompt, DecodingPolicy, Hypothesis};
use decompeval_core::similarity::{Analysis, CodeBleuReport};
use decompeval_core::stats;
use decompeval_core::FunctionRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::client::{generate_all, read_hypotheses, write_hypotheses, Client, GenRequest};
use crate::compilecheck::{compile_at_k, write_outcomes, CheckItem, Checker};
use crate::config::{ModelEntry, RunConfig};
use crate::corpus_io::load_corpus;
use crate::error::Error;
use crate::report::{compile_rows, ztest_rows, CodeBleuRow, CompiledOnlyRow, EvaluationReport};
use crate::syntax;

/// Loads a corpus and rejects invariant violations and manifest drift.
pub fn load_valid_corpus(path: &Path) -> Result<Corpus, Error> {
    let corpus = load_corpus(path)?;
    for r in &corpus.records {
        let v = validate_record(r);
        if !v.is_empty() {
            let msg = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(Error::data("corpus", msg).at(r.id.clone()));
        }
    }
    let drift = corpus.manifest_mismatches();
    if !drift.is_empty() {
        let msg = drift.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(Error::data("corpus", msg));
    }
    Ok(corpus)
}

/// Per-item CodeBLEU line in `outcomes/<model>.codebleu.jsonl`.
#[derive(Debug, Serialize)]
struct CodeBleuOutcome<'a> {
    item_id: &'a str,
    attempt_index: u32,
    #[serde(flatten)]
    score: &'a CodeBleuReport,
}

/// What one model produced and how it scored.
#[derive(Debug, Clone)]
pub struct ModelResult {
    pub label: String,
    pub hypotheses: Vec<Hypothesis>,
    pub codebleu: Vec<(String, CodeBleuReport)>,
    pub compile: Option<CompileAtKResult>,
    pub compiled_only: Vec<(String, f64)>,
}

struct Selection<'a> {
    codebleu: Vec<&'a FunctionRecord>,
    compile: Vec<&'a FunctionRecord>,
    skipped: usize,
}

fn select<'a>(corpus: &'a Corpus, cfg: &RunConfig, checker: Option<&Checker>) -> Selection<'a> {
    let mut by_id: Vec<&FunctionRecord> = corpus.records.iter().collect();
    by_id.sort_by(|a, b| a.id.cmp(&b.id));
    let codebleu = by_id.iter().copied().filter(|r| cfg.corpus.codebleu_splits.contains(&r.split)).collect();
    let candidates: Vec<&FunctionRecord> =
        by_id.iter().copied().filter(|r| cfg.corpus.compile_splits.contains(&r.split)).collect();
    let compile: Vec<&FunctionRecord> =
        candidates.iter().copied().filter(|r| checker.is_none_or(|c| c.supports(r.language))).collect();
    Selection { skipped: candidates.len() - compile.len(), codebleu, compile }
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), Error> {
    let io = |e| Error::io("output", path, e);
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in rows {
        writeln!(f, "{}", serde_json::to_string(&r).expect("rows serialize")).map_err(io)?;
    }
    f.flush().map_err(io)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Obtains hypotheses for one model: from its endpoint, or from its
/// pre-recorded file.
fn hypotheses_for(
    model: &ModelEntry,
    cfg: &RunConfig,
    corpus: &Corpus,
    wanted: &BTreeMap<&str, (&FunctionRecord, usize)>,
    template: &str,
) -> Result<Vec<Hypothesis>, Error> {
    let markers = &cfg.inference.markers;
    if let Some(path) = &model.hypotheses {
        let all = read_hypotheses(path, markers)?;
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for h in all {
            if corpus.get(&h.item_id).is_none() {
                return Err(Error::data("hypotheses", format!("{}: unknown item", path.display())).at(h.item_id));
            }
            if !seen.insert((h.item_id.clone(), h.attempt_index)) {
                return Err(Error::data(
                    "hypotheses",
                    format!("{}: attempt {} appears twice", path.display(), h.attempt_index),
                )
                .at(h.item_id));
            }
            if wanted.contains_key(h.item_id.as_str()) {
                out.push(h);
            }
        }
        out.sort_by(|a, b| (&a.item_id, a.attempt_index).cmp(&(&b.item_id, b.attempt_index)));
        return Ok(out);
    }
    let endpoint = model.endpoint.clone().expect("validated: endpoint or hypotheses");
    let plan = attempt_schedule(cfg.compile.k).map_err(|e| Error::usage("schedule", e.to_string()))?;
    let mut requests = Vec::new();
    for (id, (record, attempts)) in wanted {
        let prompt = build_prompt(record, template).map_err(|e| Error::usage("prompt", e.to_string()))?;
        for (i, base) in plan.attempts.iter().take(*attempts).enumerate() {
            let seed = cfg.inference.seed.wrapping_add(i as u64);
            let policy = DecodingPolicy { max_tokens: cfg.inference.max_tokens, seed: Some(seed), ..*base };
            requests.push(GenRequest {
                item_id: (*id).to_string(),
                attempt_index: i as u32,
                prompt: prompt.clone(),
                policy,
                fallback_seed: seed,
            });
        }
    }
    let client = Client::new(endpoint, cfg.inference.jobs)?;
    Ok(generate_all(&client, &requests, cfg.inference.jobs, markers)?)
}

/// Items scored for compile@k need k attempts; CodeBLEU-only items need one.
fn attempts_wanted<'a>(sel: &Selection<'a>, k: usize) -> BTreeMap<&'a str, (&'a FunctionRecord, usize)> {
    let mut wanted = BTreeMap::new();
    for r in &sel.codebleu {
        wanted.insert(r.id.as_str(), (*r, 1));
    }
    for r in &sel.compile {
        wanted.insert(r.id.as_str(), (*r, k));
    }
    wanted
}

/// Generation only: queries every endpoint model and writes
/// `hypotheses/<label>.jsonl`. Returns the files written.
pub fn generate_hypotheses(cfg: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    cfg.validate()?;
    let corpus = load_valid_corpus(&cfg.corpus.path)?;
    let template = cfg.prompt_template()?;
    let sel = select(&corpus, cfg, None);
    let wanted = attempts_wanted(&sel, cfg.compile.k);
    let dir = cfg.output.dir.join("hypotheses");
    fs::create_dir_all(&dir).map_err(|e| Error::io("output", &dir, e))?;
    let mut written = Vec::new();
    for model in cfg.models.iter().filter(|m| m.endpoint.is_some()) {
        let hypotheses = hypotheses_for(model, cfg, &corpus, &wanted, &template)?;
        let path = dir.join(format!("{}.jsonl", model.label));
        write_hypotheses(&path, &hypotheses)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the whole evaluation and writes every artifact under the output
/// directory.
pub fn run_evaluation(cfg: &RunConfig) -> Result<EvaluationReport, Error> {
    cfg.validate()?;
    let corpus = load_valid_corpus(&cfg.corpus.path)?;
    let corpus_bytes = fs::read(&cfg.corpus.path).map_err(|e| Error::io("corpus", &cfg.corpus.path, e))?;
    let template = cfg.prompt_template()?;

    let needs_compile = !cfg.corpus.compile_splits.is_empty();
    let checker = if needs_compile { Some(Checker::new(cfg.compile.mode, cfg.toolchain.clone())?) } else { None };
    let sel = select(&corpus, cfg, checker.as_ref());
    if sel.codebleu.is_empty() && sel.compile.is_empty() {
        return Err(Error::data("corpus", "no records in the selected splits"));
    }

    let out = &cfg.output.dir;
    let hyp_dir = out.join("hypotheses");
    let outcome_dir = out.join("outcomes");
    for d in [out, &hyp_dir, &outcome_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io("output", d, e))?;
    }

    let wanted = attempts_wanted(&sel, cfg.compile.k);
    let references: BTreeMap<&str, Analysis> =
        wanted.values().map(|(r, _)| (r.id.as_str(), syntax::analyze(&r.source, r.language))).collect();

    let mut results = Vec::new();
    for model in &cfg.models {
        let hypotheses = hypotheses_for(model, cfg, &corpus, &wanted, &template)?;
        write_hypotheses(&hyp_dir.join(format!("{}.jsonl", model.label)), &hypotheses)?;
        let result = score_model(cfg, &model.label, hypotheses, &sel, &references, checker.as_ref())?;
        write_lines(
            &outcome_dir.join(format!("{}.codebleu.jsonl", model.label)),
            result.codebleu.iter().map(|(id, score)| CodeBleuOutcome { item_id: id, attempt_index: 0, score }),
        )?;
        if let Some(c) = &result.compile {
            write_outcomes(&outcome_dir.join(format!("{}.compile.jsonl", model.label)), c)?;
        }
        results.push(result);
    }

    let report = build_report(cfg, &results, &sel, &sha256_hex(&corpus_bytes))?;
    report.verify()?;
    for &format in &cfg.output.formats {
        let path = out.join(format!("report.{}", format.extension()));
        fs::write(&path, report.render(format)?).map_err(|e| Error::io("output", &path, e))?;
    }
    let lock = out.join("run-config.lock");
    let lock_text = format!(
        "# corpus sha256 {}\n# dart {}\n{}",
        sha256_hex(&corpus_bytes),
        cfg.toolchain
            .resolve(crate::toolchain::Tool::Dart)
            .map_or_else(|_| "not found".to_string(), |p| p.display().to_string()),
        cfg.to_toml()
    );
    fs::write(&lock, lock_text).map_err(|e| Error::io("output", &lock, e))?;
    Ok(report)
}

fn score_model(
    cfg: &RunConfig,
    label: &str,
    hypotheses: Vec<Hypothesis>,
    sel: &Selection<'_>,
    references: &BTreeMap<&str, Analysis>,
    checker: Option<&Checker>,
) -> Result<ModelResult, Error> {
    let mut by_item: BTreeMap<&str, Vec<&Hypothesis>> = BTreeMap::new();
    for h in &hypotheses {
        by_item.entry(&h.item_id).or_default().push(h);
    }
    let codes = |id: &str| -> Vec<String> {
        // Attempts in order, stopping at the first gap.
        let mut out = Vec::new();
        for (i, h) in by_item.get(id).into_iter().flatten().enumerate() {
            if h.attempt_index as usize != i {
                break;
            }
            out.push(h.code.clone());
        }
        out
    };
    let score = |record: &FunctionRecord, code: &str| -> Result<CodeBleuReport, Error> {
        let reference = &references[record.id.as_str()];
        syntax::codebleu_against(code, reference, &cfg.codebleu.for_language(record.language))
            .map_err(|e| Error::data("codebleu", e.to_string()).at(record.id.clone()))
    };

    let mut codebleu = Vec::new();
    for r in &sel.codebleu {
        let first = codes(&r.id)
            .into_iter()
            .next()
            .ok_or_else(|| Error::data("codebleu", format!("model {label} has no attempt 0")).at(r.id.clone()))?;
        codebleu.push((r.id.clone(), score(r, &first)?));
    }

    let mut compile = None;
    let mut compiled_only = Vec::new();
    if let (Some(checker), false) = (checker, sel.compile.is_empty()) {
        let items: Vec<CheckItem> = sel
            .compile
            .iter()
            .map(|r| CheckItem { id: r.id.clone(), language: r.language, hypotheses: codes(&r.id) })
            .collect();
        let k = cfg.compile.k;
        let result = compile_at_k(&items, checker, k, cfg.compile.jobs, cfg.compile.confidence)?;
        if result.successes_at(1) > result.successes_at(k) {
            return Err(Error::data("compile-check", format!("compile@1 exceeds compile@{k} for {label}")));
        }
        for (item, r) in items.iter().zip(&sel.compile) {
            let res = result.per_item.iter().find(|p| p.item_id == item.id).expect("every item is tallied");
            if let Some(i) = res.first_success_attempt {
                compiled_only.push((r.id.clone(), score(r, &item.hypotheses[i])?.combined));
            }
        }
        compile = Some(result);
    }
    Ok(ModelResult { label: label.to_string(), hypotheses, codebleu, compile, compiled_only })
}

fn build_report(
    cfg: &RunConfig,
    results: &[ModelResult],
    sel: &Selection<'_>,
    corpus_sha: &str,
) -> Result<EvaluationReport, Error> {
    let conf = cfg.compile.confidence;
    let stat_err = |e: stats::StatsError| Error::data("stats", e.to_string());
    let mut meta = BTreeMap::new();
    let splits = |s: &[decompeval_core::Split]| s.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(",");
    meta.insert("corpus".into(), file_name(&cfg.corpus.path));
    meta.insert("corpus_sha256".into(), corpus_sha.to_string());
    meta.insert("codebleu_splits".into(), splits(&cfg.corpus.codebleu_splits));
    meta.insert("compile_splits".into(), splits(&cfg.corpus.compile_splits));
    meta.insert("codebleu_items".into(), sel.codebleu.len().to_string());
    meta.insert("compile_items".into(), sel.compile.len().to_string());
    if sel.skipped > 0 {
        meta.insert(
            "compile_items_skipped".into(),
            format!("{} (language not supported by {})", sel.skipped, cfg.compile.mode.as_str()),
        );
    }
    meta.insert("confidence".into(), conf.to_string());
    meta.insert("k".into(), cfg.compile.k.to_string());
    meta.insert("check_mode".into(), cfg.compile.mode.as_str().to_string());
    let plan = attempt_schedule(cfg.compile.k).map_err(|e| Error::usage("schedule", e.to_string()))?;
    meta.insert(
        "decoding".into(),
        format!(
            "temperature {} top_p {} max_tokens {} beams {:?}",
            plan.attempts[0].temperature,
            plan.attempts[0].top_p,
            cfg.inference.max_tokens,
            plan.beams()
        ),
    );
    meta.insert(
        "codebleu_config".into(),
        format!(
            "weights {:?} max_n {} keyword_weight {}",
            cfg.codebleu.weights, cfg.codebleu.max_n, cfg.codebleu.keyword_weight
        ),
    );
    meta.insert("codebleu_hypothesis".into(), "attempt 0 (first beam-1 attempt)".into());
    meta.insert("compiled_only_hypothesis".into(), "first compiling attempt".into());

    let mut report = EvaluationReport {
        meta,
        codebleu: Vec::new(),
        compile: Vec::new(),
        ztests: Vec::new(),
        compiled_only: Vec::new(),
    };
    for (m, r) in cfg.models.iter().zip(results) {
        let mut seeds: Vec<u64> = r.hypotheses.iter().filter_map(|h| h.policy.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let fallbacks = r.hypotheses.iter().filter(|h| h.beam_fallback).count();
        let mut note = if seeds.is_empty() {
            "none recorded".to_string()
        } else {
            seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        };
        if fallbacks > 0 {
            note.push_str(&format!("; {fallbacks} beam attempts sampled instead"));
        }
        report.meta.insert(format!("seeds.{}", r.label), note);

        if !r.codebleu.is_empty() {
            let scores: Vec<f64> = r.codebleu.iter().map(|(_, s)| s.combined).collect();
            let s = stats::aggregate_scores(&scores, conf).map_err(stat_err)?;
            report.codebleu.push(CodeBleuRow::new(&r.label, m.params.clone(), &s));
        }
        if let Some(c) = &r.compile {
            let mut ks = vec![c.k];
            if c.k > 1 {
                ks.push(1);
            }
            report.compile.extend(compile_rows(&r.label, c, &ks).map_err(stat_err)?);
            let summary = if r.compiled_only.is_empty() {
                None
            } else {
                let scores: Vec<f64> = r.compiled_only.iter().map(|(_, s)| *s).collect();
                Some((&stats::aggregate_scores(&scores, conf).map_err(stat_err)?).into())
            };
            report.compiled_only.push(CompiledOnlyRow { label: r.label.clone(), summary });
        }
    }
    report.ztests = ztest_rows(&report.compile).map_err(stat_err)?;
    Ok(report)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| PathBuf::from(p).display().to_string())
}
