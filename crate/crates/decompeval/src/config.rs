//! Run configuration: one TOML file per evaluation run.

use std::fs;
use std::path::{Path, PathBuf};

use decompeval_core::inference::{ReasoningMarkers, DEFAULT_MAX_TOKENS};
use decompeval_core::similarity::CodeBleuConfig;
use decompeval_core::{Language, Split};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::EndpointConfig;
use crate::compilecheck::CheckMode;
use crate::toolchain::{ToolError, ToolchainConfig};

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../fixtures/prompt_template.txt");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    /// Splits scored with CodeBLEU.
    #[serde(default = "default_codebleu_splits")]
    pub codebleu_splits: Vec<Split>,
    /// Splits scored with compile@k.
    #[serde(default = "default_compile_splits")]
    pub compile_splits: Vec<Split>,
}

fn default_codebleu_splits() -> Vec<Split> {
    vec![Split::Test]
}
fn default_compile_splits() -> Vec<Split> {
    vec![Split::TestNatural]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeBleuSection {
    pub weights: [f64; 4],
    pub max_n: usize,
    pub keyword_weight: f64,
}

impl Default for CodeBleuSection {
    fn default() -> Self {
        let d = CodeBleuConfig::default();
        CodeBleuSection { weights: d.weights, max_n: d.max_n, keyword_weight: d.keyword_weight }
    }
}

impl CodeBleuSection {
    pub fn for_language(&self, language: Language) -> CodeBleuConfig {
        CodeBleuConfig { weights: self.weights, max_n: self.max_n, keyword_weight: self.keyword_weight, language }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompileSection {
    pub k: usize,
    pub jobs: usize,
    pub mode: CheckMode,
    pub confidence: f64,
}

impl Default for CompileSection {
    fn default() -> Self {
        CompileSection { k: 5, jobs: 4, mode: CheckMode::DartAot, confidence: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    /// Prompt template file; the bundled template when absent.
    pub template: Option<PathBuf>,
    pub jobs: usize,
    /// Attempt i is sampled with seed `seed + i`.
    pub seed: u64,
    pub max_tokens: u32,
    pub markers: ReasoningMarkers,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            template: None,
            jobs: 4,
            seed: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
            markers: ReasoningMarkers::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub label: String,
    /// Free-form size note shown in the CodeBLEU table.
    #[serde(default)]
    pub params: Option<String>,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    /// Pre-recorded hypothesis file used instead of an endpoint.
    #[serde(default)]
    pub hypotheses: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub toolchain: ToolchainConfig,
    #[serde(default)]
    pub codebleu: CodeBleuSection,
    #[serde(default)]
    pub compile: CompileSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(rename = "model")]
    pub models: Vec<ModelEntry>,
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory; toolchain paths honour the `DECOMPEVAL_*`
    /// environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg =
            Self::from_toml(&text).map_err(|message| ConfigError::Syntax { path: path.to_owned(), message })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.toolchain = cfg.toolchain.with_env_overrides();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.output.dir);
        if let Some(t) = self.inference.template.as_mut() {
            fix(t);
        }
        for m in &mut self.models {
            if let Some(h) = m.hypotheses.as_mut() {
                fix(h);
            }
        }
        fix(&mut self.toolchain.scratch_root);
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.compile.k == 0 {
            return bad("compile.k must be at least 1".into());
        }
        if self.compile.jobs == 0 || self.inference.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if !(self.compile.confidence > 0.0 && self.compile.confidence < 1.0) {
            return bad(format!("compile.confidence {} is outside (0, 1)", self.compile.confidence));
        }
        if self.inference.max_tokens == 0 {
            return bad("inference.max_tokens must be at least 1".into());
        }
        self.codebleu
            .for_language(Language::Dart)
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("codebleu: {e}")))?;
        if self.corpus.codebleu_splits.is_empty() && self.corpus.compile_splits.is_empty() {
            return bad("corpus selects no splits".into());
        }
        if !self.corpus.path.is_file() {
            return bad(format!("corpus file {} does not exist", self.corpus.path.display()));
        }
        if let Some(t) = &self.inference.template {
            if !t.is_file() {
                return bad(format!("prompt template {} does not exist", t.display()));
            }
        }
        if self.models.is_empty() {
            return bad("at least one [[model]] is required".into());
        }
        let mut labels: Vec<&str> = self.models.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("model label {:?} is used twice", w[0]));
        }
        for m in &self.models {
            if m.label.trim().is_empty() || m.label.contains(['/', '\\']) {
                return bad(format!("model label {:?} must be non-empty and contain no path separators", m.label));
            }
            match (&m.endpoint, &m.hypotheses) {
                (Some(_), None) => {}
                (None, Some(h)) if h.is_file() => {}
                (None, Some(h)) => return bad(format!("hypothesis file {} does not exist", h.display())),
                _ => return bad(format!("model {:?} needs exactly one of endpoint or hypotheses", m.label)),
            }
        }
        if self.toolchain.timeout_secs == 0 {
            return Err(ToolError::ZeroTimeout.into());
        }
        Ok(())
    }

    pub fn prompt_template(&self) -> Result<String, ConfigError> {
        match &self.inference.template {
            None => Ok(DEFAULT_PROMPT_TEMPLATE.to_string()),
            Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.clone(), source }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[corpus]
path = "corpus.jsonl"

[[model]]
label = "base"
endpoint = { url = "http://127.0.0.1:8080/v1/chat/completions", model = "m" }

[output]
dir = "out"
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.compile.k, 5);
        assert_eq!(c.compile.mode, CheckMode::DartAot);
        assert_eq!(c.corpus.codebleu_splits, vec![Split::Test]);
        assert_eq!(c.corpus.compile_splits, vec![Split::TestNatural]);
        assert_eq!(c.models[0].endpoint.as_ref().unwrap().max_retries, 3);
        c.resolve_paths(Path::new("/runs/a"));
        assert_eq!(c.corpus.path, Path::new("/runs/a/corpus.jsonl"));
        assert_eq!(c.output.dir, Path::new("/runs/a/out"));
        let again = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[output]", "[output]\ncolour = 1");
        assert!(RunConfig::from_toml(&text).unwrap_err().contains("colour"));
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.resolve_paths(dir.path());
        c.validate().unwrap();

        let mut k0 = c.clone();
        k0.compile.k = 0;
        assert!(k0.validate().is_err());

        let mut missing = c.clone();
        missing.corpus.path = dir.path().join("nope.jsonl");
        assert!(missing.validate().unwrap_err().to_string().contains("nope.jsonl"));

        let mut both = c.clone();
        both.models[0].hypotheses = Some(dir.path().join("corpus.jsonl"));
        assert!(both.validate().is_err());

        let mut twice = c.clone();
        twice.models.push(c.models[0].clone());
        assert!(twice.validate().unwrap_err().to_string().contains("twice"));
    }

    #[test]
    fn bundled_template_has_both_placeholders() {
        assert!(DEFAULT_PROMPT_TEMPLATE.contains("{{assembly}}"));
        assert!(DEFAULT_PROMPT_TEMPLATE.contains("{{language}}"));
    }
}
