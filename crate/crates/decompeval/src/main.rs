use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decompeval::binpipe::{build_pair, PairSpec};
use decompeval::client::read_hypotheses;
use decompeval::compilecheck::{compile_at_k, write_outcomes, CheckItem, CheckMode, Checker};
use decompeval::config::{CodeBleuSection, ReportFormat, RunConfig};
use decompeval::corpus_io::{load_corpus, save_corpus};
use decompeval::error::Error;
use decompeval::pipeline::{generate_hypotheses, load_valid_corpus, run_evaluation};
use decompeval::report::{parse_csv, EvaluationReport};
use decompeval::stub::{StubConfig, StubReply, StubServer};
use decompeval::syntax;
use decompeval::toolchain::ToolchainConfig;
use decompeval_core::corpus::{summarize_composition, validate_record, Corpus};
use decompeval_core::inference::{Hypothesis, ReasoningMarkers};
use decompeval_core::stats::{self, ContinuityCorrection};
use decompeval_core::{Language, Split};

#[derive(Parser)]
#[command(name = "decompeval", version, about = "Build decompilation corpora and score decompiler output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, validate or summarize a corpus file.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Query the configured endpoints and write hypothesis files.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score a hypothesis file on its own.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Re-render a saved report.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Interval and test calculators.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Full evaluation from a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long)]
        mode: Option<CheckMode>,
    },
    /// Serve the deterministic stub endpoint until interrupted.
    StubServe {
        #[arg(long, default_value = "127.0.0.1:8089")]
        addr: String,
        #[arg(long, value_enum, default_value_t = StubKind::EchoReference)]
        reply: StubKind,
        /// Corpus whose references are echoed.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Reply text for `--reply canned`.
        #[arg(long)]
        text: Option<String>,
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
        #[arg(long)]
        reject_beam: bool,
        /// Require the bearer token held in this environment variable.
        #[arg(long)]
        api_key_env: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StubKind {
    EchoReference,
    Canned,
    Invalid,
    Malformed,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Compile, disassemble and extract every pair spec into a corpus.
    Build {
        /// Line-delimited pair specs.
        #[arg(long)]
        specs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with toolchain settings.
        #[arg(long)]
        toolchain: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        timeout_secs: Option<u64>,
    },
    /// Check record invariants, duplicate ids and the manifest.
    Validate { path: PathBuf },
    /// Composition table.
    Stats {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct HypothesisInput {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    hypotheses: PathBuf,
    /// Splits to score, comma separated.
    #[arg(long, value_delimiter = ',')]
    splits: Vec<Split>,
    /// Per-item output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// CodeBLEU of attempt 0 against each reference.
    Codebleu {
        #[command(flatten)]
        input: HypothesisInput,
    },
    /// compile@k over the first k attempts of each item.
    CompileAtK {
        #[command(flatten)]
        input: HypothesisInput,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long, default_value = "dart-aot")]
        mode: CheckMode,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    Render {
        /// A report.json or report.csv file.
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Wilson score interval for successes out of n.
    Wilson {
        successes: u64,
        n: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Normal interval for a mean.
    Meanci {
        mean: f64,
        sd: f64,
        n: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Pooled two-proportion z-test.
    Zt {
        s1: u64,
        n1: u64,
        s2: u64,
        n2: u64,
        #[arg(long)]
        yates: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Corpus(c) => corpus_cmd(c),
        Command::Gen { config, jobs } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(j) = jobs {
                cfg.inference.jobs = j;
            }
            for p in generate_hypotheses(&cfg)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Eval(e) => eval_cmd(e),
        Command::Report(ReportCmd::Render { path, format }) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::io("report", &path, e))?;
            let report = if path.extension().is_some_and(|e| e == "csv") {
                parse_csv(&text)?
            } else {
                EvaluationReport::from_json(&text)?
            };
            let format = match format {
                Format::Markdown => ReportFormat::Markdown,
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            print!("{}", report.render(format)?);
            Ok(())
        }
        Command::Stats(s) => stats_cmd(s),
        Command::Run { config, jobs, k, timeout_secs, mode } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(j) = jobs {
                cfg.compile.jobs = j;
                cfg.inference.jobs = j;
            }
            if let Some(k) = k {
                cfg.compile.k = k;
            }
            if let Some(t) = timeout_secs {
                cfg.toolchain.timeout_secs = t;
            }
            if let Some(m) = mode {
                cfg.compile.mode = m;
            }
            let report = run_evaluation(&cfg)?;
            print!("{}", report.render(ReportFormat::Markdown)?);
            eprintln!("artifacts written to {}", cfg.output.dir.display());
            Ok(())
        }
        Command::StubServe { addr, reply, corpus, text, fail_first, reject_beam, api_key_env } => {
            let reply = match reply {
                StubKind::EchoReference => {
                    let path = corpus.ok_or_else(|| Error::usage("stub", "--corpus is required for echo-reference"))?;
                    StubReply::EchoReference(load_corpus(&path)?.records)
                }
                StubKind::Canned => {
                    StubReply::Canned(text.ok_or_else(|| Error::usage("stub", "--text is required for canned"))?)
                }
                StubKind::Invalid => StubReply::Invalid,
                StubKind::Malformed => StubReply::Malformed,
            };
            let api_key = match api_key_env {
                Some(var) => Some(std::env::var(&var).map_err(|_| Error::usage("stub", format!("{var} is not set")))?),
                None => None,
            };
            let server = StubServer::start(&addr, StubConfig { reply, fail_first, reject_beam, api_key })
                .map_err(|e| Error::external("stub", e.to_string()))?;
            eprintln!("serving on {}", server.url());
            server.wait();
            Ok(())
        }
    }
}

fn toolchain_from(path: Option<&Path>, timeout: Option<u64>) -> Result<ToolchainConfig, Error> {
    let mut cfg = match path {
        None => ToolchainConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::usage("toolchain", format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::usage("toolchain", format!("{}: {e}", p.display())))?
        }
    };
    if let Some(t) = timeout {
        cfg.timeout_secs = t;
    }
    Ok(cfg.with_env_overrides())
}

fn corpus_cmd(cmd: CorpusCmd) -> Result<(), Error> {
    match cmd {
        CorpusCmd::Build { specs, out, toolchain, jobs, timeout_secs } => {
            let cfg = toolchain_from(toolchain.as_deref(), timeout_secs)?;
            let specs = read_specs(&specs)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::external("corpus", e.to_string()))?;
            let built: Vec<_> = pool.install(|| {
                use rayon::prelude::*;
                specs.par_iter().map(|s| build_pair(s, &cfg)).collect()
            });
            let mut records = Vec::new();
            let mut first_err = None;
            for r in built {
                match r {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        let e = Error::from(e);
                        eprintln!("error: {e}");
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
            let corpus = Corpus::from_records(records);
            save_corpus(&corpus, &out)?;
            println!("{} records written to {}", corpus.len(), out.display());
            Ok(())
        }
        CorpusCmd::Validate { path } => {
            let corpus = load_corpus(&path)?;
            let mut bad = 0;
            for (i, r) in corpus.records.iter().enumerate() {
                for v in validate_record(r) {
                    if r.id.trim().is_empty() {
                        println!("record #{}: {v}", i + 1);
                    } else {
                        println!("{}: {v}", r.id);
                    }
                    bad += 1;
                }
            }
            for m in corpus.manifest_mismatches() {
                println!("manifest: {m}");
                bad += 1;
            }
            if bad > 0 {
                return Err(Error::data("validate", format!("{bad} problems found")));
            }
            println!("{} records ok", corpus.len());
            Ok(())
        }
        CorpusCmd::Stats { path, json } => {
            let corpus = load_corpus(&path)?;
            let (summary, declared) = if corpus.is_empty() {
                // A manifest-only file describes a corpus without carrying it.
                (None, true)
            } else {
                (Some(summarize_composition(&corpus.records)), false)
            };
            let counts: Vec<(String, u64)> = match &summary {
                Some(s) => s.counts.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
                None => corpus.manifest.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
            };
            if json {
                let map: serde_json::Map<String, serde_json::Value> =
                    counts.iter().map(|(k, n)| (k.clone(), (*n).into())).collect();
                println!("{}", serde_json::Value::Object(map));
                return Ok(());
            }
            if declared {
                println!("# counts declared by the manifest (file holds no records)");
            }
            for (k, n) in &counts {
                println!("{k}\t{n}");
            }
            for split in Split::ALL {
                let total: u64 = counts.iter().filter(|(k, _)| k.ends_with(&format!("/{split}"))).map(|(_, n)| n).sum();
                if total > 0 {
                    println!("total/{split}\t{total}");
                }
            }
            Ok(())
        }
    }
}

fn read_specs(path: &Path) -> Result<Vec<PairSpec>, Error> {
    let f = fs::File::open(path).map_err(|e| Error::io("corpus", path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io("corpus", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data("corpus", format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Hypotheses grouped by item, attempts in order.
type Item = (String, Language, String, Vec<Hypothesis>);

fn load_inputs(input: &HypothesisInput) -> Result<(Corpus, Vec<Item>), Error> {
    let corpus = load_valid_corpus(&input.corpus)?;
    let hyps = read_hypotheses(&input.hypotheses, &ReasoningMarkers::default())?;
    let mut items = Vec::new();
    let mut records: Vec<_> =
        corpus.records.iter().filter(|r| input.splits.is_empty() || input.splits.contains(&r.split)).collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    for r in records {
        let mut mine: Vec<Hypothesis> = hyps.iter().filter(|h| h.item_id == r.id).cloned().collect();
        mine.sort_by_key(|h| h.attempt_index);
        items.push((r.id.clone(), r.language, r.source.clone(), mine));
    }
    Ok((corpus, items))
}

fn eval_cmd(cmd: EvalCmd) -> Result<(), Error> {
    match cmd {
        EvalCmd::Codebleu { input } => {
            let (_, items) = load_inputs(&input)?;
            let section = CodeBleuSection::default();
            let mut scores = Vec::new();
            let mut lines = String::new();
            for (id, lang, reference, hyps) in &items {
                let h = hyps
                    .iter()
                    .find(|h| h.attempt_index == 0)
                    .ok_or_else(|| Error::data("codebleu", "no attempt 0").at(id.clone()))?;
                let r = syntax::codebleu(&h.code, reference, &section.for_language(*lang))
                    .map_err(|e| Error::data("codebleu", e.to_string()).at(id.clone()))?;
                scores.push(r.combined);
                lines.push_str(&serde_json::json!({"item_id": id, "codebleu": r}).to_string());
                lines.push('\n');
            }
            if let Some(out) = &input.out {
                fs::write(out, lines).map_err(|e| Error::io("codebleu", out, e))?;
            }
            let s = stats::aggregate_scores(&scores, input.confidence)
                .map_err(|e| Error::data("codebleu", e.to_string()))?;
            println!(
                "n={} mean={} sd={} lower={} upper={} min={} max={}",
                s.n, s.mean, s.sd, s.interval.lower, s.interval.upper, s.min, s.max
            );
            Ok(())
        }
        EvalCmd::CompileAtK { input, k, jobs, timeout_secs, mode } => {
            let (_, items) = load_inputs(&input)?;
            let checker = Checker::new(mode, toolchain_from(None, timeout_secs)?)?;
            let items: Vec<CheckItem> = items
                .into_iter()
                .filter(|(_, lang, _, _)| checker.supports(*lang))
                .map(|(id, language, _, hyps)| CheckItem {
                    id,
                    language,
                    hypotheses: hyps.into_iter().map(|h| h.code).collect(),
                })
                .collect();
            let result = compile_at_k(&items, &checker, k, jobs, input.confidence)?;
            if let Some(out) = &input.out {
                write_outcomes(out, &result)?;
            }
            let mut ks = vec![k];
            if k > 1 {
                ks.push(1);
            }
            for j in ks {
                let iv = result.interval_at(j).map_err(|e| Error::data("compile-check", e.to_string()))?;
                println!(
                    "k={j} successes={} n={} rate={} lower={} upper={}",
                    result.successes_at(j),
                    result.n,
                    iv.point,
                    iv.lower,
                    iv.upper
                );
            }
            Ok(())
        }
    }
}

fn stats_cmd(cmd: StatsCmd) -> Result<(), Error> {
    let err = |e: stats::StatsError| Error::usage("stats", e.to_string());
    match cmd {
        StatsCmd::Wilson { successes, n, confidence } => {
            let iv = stats::wilson_interval(successes, n, confidence).map_err(err)?;
            println!("point={} lower={} upper={}", iv.point, iv.lower, iv.upper);
        }
        StatsCmd::Meanci { mean, sd, n, confidence } => {
            let iv = stats::normal_mean_ci(mean, sd, n, confidence).map_err(err)?;
            println!("point={} lower={} upper={}", iv.point, iv.lower, iv.upper);
        }
        StatsCmd::Zt { s1, n1, s2, n2, yates } => {
            let c = if yates { ContinuityCorrection::Yates } else { ContinuityCorrection::None };
            let t = stats::two_proportion_z(s1, n1, s2, n2, c).map_err(err)?;
            println!("z={} p={} pooled={}", t.z, t.p_two_sided, t.pooled_proportion);
        }
    }
    Ok(())
}
