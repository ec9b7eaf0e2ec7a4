//! compile@k against a real toolchain.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use decompeval_core::compile::{evaluate_item, tally, CompileAtKResult, CompileError, CompileOutcome, ItemResult};
use decompeval_core::Language;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binpipe::ENTRY_FUNCTION;
use crate::syntax;
use crate::toolchain::{run_tool, ScratchDir, Tool, ToolError, ToolchainConfig};

/// What counts as "compiles".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    /// `dart compile aot-snapshot` exits 0.
    #[default]
    DartAot,
    /// `dart analyze` reports no errors.
    DartAnalyze,
    /// The bundled grammar parses the candidate without errors. No
    /// compiler involved. Accepts type errors, so it over-counts.
    Syntax,
}

impl CheckMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckMode::DartAot => "dart-aot",
            CheckMode::DartAnalyze => "dart-analyze",
            CheckMode::Syntax => "syntax",
        }
    }

    pub fn required_tools(self) -> &'static [Tool] {
        match self {
            CheckMode::DartAot | CheckMode::DartAnalyze => &[Tool::Dart],
            CheckMode::Syntax => &[],
        }
    }
}

impl std::str::FromStr for CheckMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dart-aot" => Ok(CheckMode::DartAot),
            "dart-analyze" => Ok(CheckMode::DartAnalyze),
            "syntax" => Ok(CheckMode::Syntax),
            other => Err(format!("unknown check mode {other:?} (dart-aot, dart-analyze, syntax)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("{mode} checks only apply to Dart candidates")]
    UnsupportedLanguage { mode: &'static str },
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("could not build a worker pool: {0}")]
    Pool(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Appends an empty entry function when the candidate has none. The
/// candidate's own lines are left untouched.
pub fn wrap_candidate(code: &str) -> String {
    if syntax::dart_top_level_functions(code).iter().any(|f| f.name == "main") {
        return code.to_string();
    }
    let mut out = code.to_string();
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    out.push('\n');
    out.push_str(ENTRY_FUNCTION);
    out.push('\n');
    out
}

/// Compiles candidates and remembers outcomes by content.
#[derive(Debug)]
pub struct Checker {
    pub mode: CheckMode,
    pub toolchain: ToolchainConfig,
    cache: Mutex<HashMap<[u8; 32], CompileOutcome>>,
}

impl Checker {
    pub fn new(mode: CheckMode, toolchain: ToolchainConfig) -> Result<Self, CheckError> {
        toolchain.validate(mode.required_tools())?;
        Ok(Checker { mode, toolchain, cache: Mutex::new(HashMap::new()) })
    }

    /// Number of distinct candidates compiled so far.
    pub fn compiled(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Whether candidates in `language` can be checked in this mode.
    pub fn supports(&self, language: Language) -> bool {
        self.mode == CheckMode::Syntax || language == Language::Dart
    }

    pub fn check(&self, code: &str, language: Language) -> Result<CompileOutcome, CheckError> {
        let mut hasher = Sha256::new();
        hasher.update(language.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(code.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let outcome = compile_check(code, self.mode, language, &self.toolchain)?;
        self.cache.lock().expect("cache lock").insert(key, outcome.clone());
        Ok(outcome)
    }
}

/// Checks one candidate in a private scratch directory. A timeout is a
/// failed outcome, not an error; errors mean the tool itself could not run.
pub fn compile_check(
    code: &str,
    mode: CheckMode,
    language: Language,
    cfg: &ToolchainConfig,
) -> Result<CompileOutcome, CheckError> {
    let start = Instant::now();
    if mode == CheckMode::Syntax {
        let diags = syntax::diagnostics(code, language);
        let blank = code.trim().is_empty();
        let diagnostics = if blank {
            "empty candidate".to_string()
        } else {
            diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
        };
        return Ok(CompileOutcome {
            success: !blank && diags.is_empty(),
            diagnostics,
            wall_time_secs: start.elapsed().as_secs_f64(),
            timed_out: false,
        });
    }
    if language != Language::Dart {
        return Err(CheckError::UnsupportedLanguage { mode: mode.as_str() });
    }
    let dart = cfg.resolve(Tool::Dart)?;
    let digest = Sha256::digest(code.as_bytes());
    let id = format!("check-{:02x}{:02x}{:02x}{:02x}", digest[0], digest[1], digest[2], digest[3]);
    let scratch = ScratchDir::create(&cfg.scratch_root, &id)?;
    let file = scratch.path().join("candidate.dart");
    fs::write(&file, wrap_candidate(code)).map_err(|source| CheckError::Io { path: file, source })?;
    let args: &[&str] = match mode {
        CheckMode::DartAot => &["compile", "aot-snapshot", "candidate.dart", "-o", "candidate.aot"],
        _ => &["analyze", "--no-fatal-warnings", "candidate.dart"],
    };
    let out = run_tool(&dart, args, scratch.path(), cfg.timeout())?;
    let success = out.success();
    // Candidate failures are expected and not worth keeping around.
    scratch.finish(true);
    Ok(CompileOutcome {
        success,
        diagnostics: out.diagnostics(),
        wall_time_secs: out.wall_time.as_secs_f64(),
        timed_out: out.timed_out,
    })
}

/// One item's hypotheses in attempt order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckItem {
    pub id: String,
    pub language: Language,
    pub hypotheses: Vec<String>,
}

/// Evaluates every item on `jobs` workers. The result is ordered by item id
/// and does not depend on `jobs` or completion order.
pub fn compile_at_k(
    items: &[CheckItem],
    checker: &Checker,
    k: usize,
    jobs: usize,
    confidence: f64,
) -> Result<CompileAtKResult, CheckError> {
    if k == 0 {
        return Err(CompileError::ZeroK.into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CheckError::Pool(e.to_string()))?;
    let fatal: Mutex<Option<CheckError>> = Mutex::new(None);
    let per_item: Vec<ItemResult> = pool.install(|| {
        use rayon::prelude::*;
        items
            .par_iter()
            .map(|item| {
                evaluate_item(&item.id, &item.hypotheses, k, true, |code| match checker.check(code, item.language) {
                    Ok(o) => o,
                    Err(e) => {
                        let msg = e.to_string();
                        fatal.lock().expect("error slot").get_or_insert(e);
                        CompileOutcome::failure(msg)
                    }
                })
            })
            .collect()
    });
    if let Some(e) = fatal.into_inner().expect("error slot") {
        return Err(e);
    }
    Ok(tally(k, per_item, confidence)?)
}

/// Writes one [`ItemResult`] per line.
pub fn write_outcomes(path: &Path, result: &CompileAtKResult) -> Result<(), CheckError> {
    let io = |source| CheckError::Io { path: path.to_owned(), source };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for item in &result.per_item {
        let line = serde_json::to_string(item).expect("outcomes serialize");
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_outcomes(path: &Path) -> Result<Vec<ItemResult>, CheckError> {
    let io = |source| CheckError::Io { path: path.to_owned(), source };
    let f = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CheckError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
