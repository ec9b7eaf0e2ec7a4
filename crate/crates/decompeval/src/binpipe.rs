//! Source → binary → listing → record.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use decompeval_core::asm::{self, ExtractError};
use decompeval_core::corpus::{validate_record, Violation};
use decompeval_core::{FunctionRecord, Language, Optimization, Provenance, Split};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompeval_core::asm::AssemblyFunction;

use crate::syntax;
use crate::toolchain::{run_tool, ScratchDir, Tool, ToolError, ToolchainConfig};

pub const ENTRY_POINT_PRAGMA: &str = "@pragma('vm:entry-point')";
pub const ENTRY_FUNCTION: &str = "void main() {}";

#[derive(Debug, Error)]
pub enum BinpipeError {
    #[error("source does not parse:\n{}", .diagnostics.join("\n"))]
    Unparseable { diagnostics: Vec<String> },
    #[error("compiler failed (exit {exit_code:?}):\n{diagnostics}")]
    CompileFailure { exit_code: Option<i32>, diagnostics: String },
    #[error("{tool} timed out after {secs}s")]
    Timeout { tool: &'static str, secs: u64 },
    #[error("artifact {0} is missing or empty")]
    EmptyArtifact(PathBuf),
    #[error("disassembler failed:\n{0}")]
    Disassembly(String),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("record violates invariants: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl BinpipeError {
    /// Whether the failure lies with an external tool rather than the input.
    pub fn is_tool_failure(&self) -> bool {
        matches!(
            self,
            BinpipeError::Tool(_)
                | BinpipeError::Timeout { .. }
                | BinpipeError::Disassembly(_)
                | BinpipeError::Io { .. }
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BinpipeError + '_ {
    move |source| BinpipeError::Io { path: path.to_owned(), source }
}

/// Marks every top-level function as an entry point so AOT tree shaking
/// keeps it, and appends an empty `main` when the unit has none.
pub fn prepare_dart_unit(source: &str) -> Result<String, BinpipeError> {
    let diags = syntax::diagnostics(source, Language::Dart);
    if !diags.is_empty() {
        return Err(BinpipeError::Unparseable { diagnostics: diags.iter().map(ToString::to_string).collect() });
    }
    let functions = syntax::dart_top_level_functions(source);
    let mut out = String::with_capacity(source.len() + 32 * functions.len());
    let mut copied = 0;
    for f in &functions {
        if f.annotations.iter().any(|a| is_entry_pragma(a)) {
            continue;
        }
        out.push_str(&source[copied..f.start]);
        let line_start = source[..f.start].rfind('\n').map_or(0, |i| i + 1);
        let prefix = &source[line_start..f.start];
        if prefix.chars().all(char::is_whitespace) {
            out.push_str(ENTRY_POINT_PRAGMA);
            out.push('\n');
            out.push_str(prefix);
        } else {
            out.push_str(ENTRY_POINT_PRAGMA);
            out.push(' ');
        }
        copied = f.start;
    }
    out.push_str(&source[copied..]);
    if !functions.iter().any(|f| f.name == "main") {
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
        out.push_str(ENTRY_POINT_PRAGMA);
        out.push('\n');
        out.push_str(ENTRY_FUNCTION);
        out.push('\n');
    }
    Ok(out)
}

fn is_entry_pragma(annotation: &str) -> bool {
    let compact: String = annotation.chars().filter(|c| !c.is_whitespace()).collect();
    compact == "@pragma('vm:entry-point')" || compact == "@pragma(\"vm:entry-point\")"
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryArtifact {
    pub path: PathBuf,
    pub language: Language,
    pub optimization: Optimization,
    pub compiler_diagnostics: String,
}

/// Compiles `source` inside `work_dir`: Dart through the AOT snapshot
/// pipeline, Swift to an object file with optimizations off.
pub fn compile_source(
    source: &str,
    language: Language,
    cfg: &ToolchainConfig,
    work_dir: &Path,
) -> Result<BinaryArtifact, BinpipeError> {
    let (tool, file, artifact, args): (Tool, &str, &str, Vec<String>) = match language {
        Language::Dart => (
            Tool::Dart,
            "unit.dart",
            "unit.aot",
            ["compile", "aot-snapshot", "unit.dart", "-o", "unit.aot"].map(String::from).to_vec(),
        ),
        Language::Swift => (
            Tool::Swift,
            "unit.swift",
            "unit.o",
            vec![
                cfg.swift_opt_flag.clone(),
                "-parse-as-library".into(),
                "-module-name".into(),
                "unit".into(),
                "-c".into(),
                "unit.swift".into(),
                "-o".into(),
                "unit.o".into(),
            ],
        ),
    };
    let program = cfg.resolve(tool)?;
    let src_path = work_dir.join(file);
    fs::write(&src_path, source).map_err(io_err(&src_path))?;
    let out = run_tool(&program, &args, work_dir, cfg.timeout())?;
    if out.timed_out {
        return Err(BinpipeError::Timeout { tool: tool.name(), secs: cfg.timeout_secs });
    }
    if !out.success() {
        return Err(BinpipeError::CompileFailure { exit_code: out.exit_code, diagnostics: out.diagnostics() });
    }
    let path = work_dir.join(artifact);
    match fs::metadata(&path) {
        Ok(m) if m.len() > 0 => {}
        _ => return Err(BinpipeError::EmptyArtifact(path)),
    }
    Ok(BinaryArtifact {
        path,
        language,
        optimization: language.required_optimization(),
        compiler_diagnostics: out.diagnostics(),
    })
}

/// Full Intel-syntax listing of the artifact's executable sections.
pub fn disassemble(artifact: &BinaryArtifact, cfg: &ToolchainConfig) -> Result<String, BinpipeError> {
    match fs::metadata(&artifact.path) {
        Ok(m) if m.len() > 0 => {}
        _ => return Err(BinpipeError::EmptyArtifact(artifact.path.clone())),
    }
    let program = cfg.resolve(Tool::Disassembler)?;
    let dir = artifact.path.parent().unwrap_or(Path::new("."));
    let args = [std::ffi::OsStr::new("-d"), "-M".as_ref(), "intel".as_ref(), "-w".as_ref(), artifact.path.as_os_str()];
    let out = run_tool(&program, &args, dir, cfg.timeout())?;
    if out.timed_out {
        return Err(BinpipeError::Timeout { tool: Tool::Disassembler.name(), secs: cfg.timeout_secs });
    }
    if !out.success() || !out.stdout.contains("Disassembly of section") {
        return Err(BinpipeError::Disassembly(out.diagnostics()));
    }
    Ok(out.stdout)
}

pub fn extract_function(listing: &str, symbol: &str) -> Result<AssemblyFunction, BinpipeError> {
    Ok(asm::extract_function(listing, symbol)?)
}

/// Input for one corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub id: String,
    pub language: Language,
    pub source: String,
    /// Function to extract; its source-level name.
    pub symbol: String,
    pub provenance: Provenance,
    pub origin: String,
    #[serde(default)]
    pub reasoning: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Compile,
    Disassemble,
    Extract,
    Validate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Prepare => "prepare",
            Stage::Compile => "compile",
            Stage::Disassemble => "disassemble",
            Stage::Extract => "extract",
            Stage::Validate => "validate",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed for {id}: {source}{}", .kept.as_ref().map(|p| format!(" (scratch kept at {})", p.display())).unwrap_or_default())]
pub struct StageError {
    pub stage: Stage,
    pub id: String,
    pub kept: Option<PathBuf>,
    #[source]
    pub source: BinpipeError,
}

/// compile → disassemble → extract, in a scratch directory derived from the
/// record id that is removed only when every stage succeeds.
pub fn build_pair(spec: &PairSpec, cfg: &ToolchainConfig) -> Result<FunctionRecord, StageError> {
    let fail = |stage, source, kept| StageError { stage, id: spec.id.clone(), kept, source };
    let unit = match spec.language {
        Language::Dart => prepare_dart_unit(&spec.source).map_err(|e| fail(Stage::Prepare, e, None))?,
        Language::Swift => spec.source.clone(),
    };
    let scratch = ScratchDir::create(&cfg.scratch_root, &spec.id).map_err(|e| fail(Stage::Compile, e.into(), None))?;

    let staged = (|| {
        let artifact = compile_source(&unit, spec.language, cfg, scratch.path()).map_err(|e| (Stage::Compile, e))?;
        let listing = disassemble(&artifact, cfg).map_err(|e| (Stage::Disassemble, e))?;
        let function = extract_function(&listing, &spec.symbol).map_err(|e| (Stage::Extract, e))?;
        Ok::<_, (Stage, BinpipeError)>((artifact, function))
    })();
    let (artifact, function) = match staged {
        Ok(v) => v,
        Err((stage, e)) => {
            let kept = scratch.finish(false);
            return Err(fail(stage, e, kept));
        }
    };
    scratch.finish(true);

    let record = FunctionRecord {
        id: spec.id.clone(),
        language: spec.language,
        source: spec.source.clone(),
        assembly: function.labeled(),
        provenance: spec.provenance,
        origin: spec.origin.clone(),
        optimization: artifact.optimization,
        reasoning: spec.reasoning.clone(),
        split: spec.split,
    };
    let violations = validate_record(&record);
    if !violations.is_empty() {
        return Err(fail(Stage::Validate, BinpipeError::Invalid(violations), None));
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pragma_and_entry_function() {
        let got = prepare_dart_unit("int f(int x){return x;}").unwrap();
        assert_eq!(
            got,
            "@pragma('vm:entry-point')\nint f(int x){return x;}\n\n@pragma('vm:entry-point')\nvoid main() {}\n"
        );
        assert!(syntax::parses(&got, Language::Dart));
    }

    #[test]
    fn existing_main_is_kept_single() {
        let got = prepare_dart_unit("void main() {\n  print(1);\n}\n").unwrap();
        assert_eq!(got, "@pragma('vm:entry-point')\nvoid main() {\n  print(1);\n}\n");
    }

    #[test]
    fn idempotent() {
        let once = prepare_dart_unit("int a() => 1;\n  int b() => 2;\n").unwrap();
        assert_eq!(prepare_dart_unit(&once).unwrap(), once);
        assert_eq!(once.matches("vm:entry-point").count(), 3);
    }

    #[test]
    fn unparseable_unit_reports_diagnostics() {
        match prepare_dart_unit("int f( {") {
            Err(BinpipeError::Unparseable { diagnostics }) => assert!(!diagnostics.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_artifact_is_an_error() {
        let a = BinaryArtifact {
            path: "/nonexistent/unit.aot".into(),
            language: Language::Dart,
            optimization: Optimization::AotDefault,
            compiler_diagnostics: String::new(),
        };
        assert!(matches!(disassemble(&a, &ToolchainConfig::default()), Err(BinpipeError::EmptyArtifact(_))));
    }
}
