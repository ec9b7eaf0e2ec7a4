#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use decompeval::compilecheck::CheckMode;
use decompeval::config::RunConfig;
use decompeval::toolchain::{Tool, ToolchainConfig};
use decompeval_core::Language;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn language_of(path: &Path) -> Language {
    match path.extension().and_then(|e| e.to_str()) {
        Some("dart") => Language::Dart,
        Some("swift") => Language::Swift,
        other => panic!("no language for extension {other:?}"),
    }
}

/// Fixture snippets in a directory, sorted by file name.
pub fn snippets(dir: &str) -> Vec<(String, Language, String)> {
    let mut out: Vec<_> = fs::read_dir(fixture(dir))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("dart" | "swift")))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, language_of(&p), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Renames every identifier leaf consistently across the whole file.
pub fn rename_identifiers(code: &str, language: Language) -> String {
    let (lang, leaf): (tree_sitter::Language, &str) = match language {
        Language::Dart => (tree_sitter_dart::LANGUAGE.into(), "identifier"),
        Language::Swift => (tree_sitter_swift::LANGUAGE.into(), "simple_identifier"),
    };
    let mut parser = tree_sitter::Parser::new();
    parser.set_language(&lang).unwrap();
    let tree = parser.parse(code, None).unwrap();
    let mut spans = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if node.kind() == leaf && node.child_count() == 0 {
            spans.push(node.byte_range());
        }
        let mut cursor = node.walk();
        stack.extend(node.children(&mut cursor));
    }
    spans.sort_by_key(|r| r.start);
    let mut names: HashMap<&str, String> = HashMap::new();
    let mut out = String::with_capacity(code.len());
    let mut at = 0;
    for r in spans {
        let old = &code[r.clone()];
        let n = names.len();
        let new = names.entry(old).or_insert_with(|| format!("renamed{n}"));
        out.push_str(&code[at..r.start]);
        out.push_str(new);
        at = r.end;
    }
    out.push_str(&code[at..]);
    out
}

pub fn dart_path() -> Option<PathBuf> {
    ToolchainConfig::default().with_env_overrides().resolve(Tool::Dart).ok()
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ExpectedSnippet {
    pub file: String,
    pub compiles: bool,
    pub kind: Option<String>,
}

#[derive(serde::Deserialize)]
struct ExpectedFile {
    snippet: Vec<ExpectedSnippet>,
}

pub fn compile_suite() -> Vec<(ExpectedSnippet, String)> {
    let exp: ExpectedFile = toml::from_str(&read_fixture("compile/expected.toml")).unwrap();
    exp.snippet
        .into_iter()
        .map(|s| {
            let code = read_fixture(&format!("compile/{}", s.file));
            (s, code)
        })
        .collect()
}

/// One run of the full pipeline over the end-to-end corpus against stub
/// endpoints given as (label, url).
pub fn run_config(out: &Path, endpoints: &[(&str, String)], jobs: usize, mode: CheckMode) -> RunConfig {
    let mut text = format!(
        "[corpus]\npath = {:?}\n\n[compile]\nk = 5\njobs = {jobs}\nmode = \"{}\"\n\n[inference]\njobs = {jobs}\nseed = 7\n\n[output]\ndir = {:?}\nformats = [\"markdown\", \"csv\", \"json\"]\n",
        fixture("e2e_corpus.jsonl"),
        mode.as_str(),
        out,
    );
    for (label, url) in endpoints {
        text.push_str(&format!(
            "\n[[model]]\nlabel = \"{label}\"\n\n[model.endpoint]\nurl = \"{url}\"\nmodel = \"{label}\"\nbackoff_ms = 10\n"
        ));
    }
    let mut cfg = RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    cfg.toolchain = cfg.toolchain.with_env_overrides();
    cfg
}
