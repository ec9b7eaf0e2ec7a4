//! Line-delimited corpus files.
//!
//! The first line may be a manifest object
//! `{"type":"manifest","counts":{"dart/natural/train":246,...}}`; every other
//! non-blank line is one record with exactly the fields of
//! [`FunctionRecord`], in that order when written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use decompeval_core::corpus::{CompositionKey, Corpus, Manifest};
use decompeval_core::{FunctionRecord, Language, Optimization, Provenance, Split};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
}

const FIELDS: [&str; 9] =
    ["id", "language", "source", "assembly", "provenance", "origin", "optimization", "reasoning", "split"];

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusIoError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusIoError::Io { path: path.to_owned(), source })?;
    parse_corpus(&text)
}

/// Parses corpus text. Without a manifest line the manifest is taken to be
/// the records' own composition.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusIoError> {
    let mut manifest: Option<Manifest> = None;
    let mut records = Vec::new();
    let mut lines_of = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| CorpusIoError::Line { line, message: format!("not a JSON object: {e}") })?;
        let Value::Object(obj) = value else {
            return Err(CorpusIoError::Line { line, message: "expected a JSON object".into() });
        };
        if obj.contains_key("type") {
            if seen_content {
                return Err(CorpusIoError::Line { line, message: "manifest must be the first line".into() });
            }
            manifest = Some(parse_manifest(&obj, line)?);
        } else {
            records.push(record_from_object(&obj, line)?);
            lines_of.push(line);
        }
        seen_content = true;
    }
    if let Some(&(a, b)) = decompeval_core::corpus::duplicate_ids(&records).first() {
        return Err(CorpusIoError::DuplicateId { id: records[a].id.clone(), first: lines_of[a], second: lines_of[b] });
    }
    Ok(match manifest {
        Some(manifest) => Corpus { records, manifest },
        None => Corpus::from_records(records),
    })
}

fn parse_manifest(obj: &Map<String, Value>, line: usize) -> Result<Manifest, CorpusIoError> {
    let field_err = |field: &str, message: String| CorpusIoError::Field { line, field: field.into(), message };
    if obj.get("type").and_then(Value::as_str) != Some("manifest") {
        return Err(field_err("type", "expected \"manifest\"".into()));
    }
    if let Some(k) = obj.keys().find(|k| *k != "type" && *k != "counts") {
        return Err(field_err(k, "unknown manifest field".into()));
    }
    let Some(Value::Object(counts)) = obj.get("counts") else {
        return Err(field_err("counts", "expected an object".into()));
    };
    let mut manifest = Manifest::new();
    for (key, n) in counts {
        let k: CompositionKey = key.parse().map_err(|e| field_err("counts", format!("bad key {key:?}: {e}")))?;
        let n =
            n.as_u64().ok_or_else(|| field_err("counts", format!("count for {key} is not a non-negative integer")))?;
        manifest.insert(k, n);
    }
    Ok(manifest)
}

fn record_from_object(obj: &Map<String, Value>, line: usize) -> Result<FunctionRecord, CorpusIoError> {
    let err = |field: &str, message: String| CorpusIoError::Field { line, field: field.into(), message };
    if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(err(k, "unknown field".into()));
    }
    let string = |field: &str| -> Result<String, CorpusIoError> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(err(field, format!("expected a string, found {}", kind_of(other)))),
            None => Err(err(field, "missing".into())),
        }
    };
    fn parsed<T: std::str::FromStr>(
        s: String,
        field: &str,
        err: impl Fn(&str, String) -> CorpusIoError,
    ) -> Result<T, CorpusIoError>
    where
        T::Err: std::fmt::Display,
    {
        s.parse().map_err(|e: T::Err| err(field, e.to_string()))
    }
    // Checked in canonical field order.
    let id = string("id")?;
    let language = parsed::<Language>(string("language")?, "language", err)?;
    let source = string("source")?;
    let assembly = string("assembly")?;
    let provenance = parsed::<Provenance>(string("provenance")?, "provenance", err)?;
    let origin = string("origin")?;
    let optimization = parsed::<Optimization>(string("optimization")?, "optimization", err)?;
    let reasoning = match obj.get("reasoning") {
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(err("reasoning", format!("expected a string or null, found {}", kind_of(other)))),
        None => return Err(err("reasoning", "missing".into())),
    };
    let split = parsed::<Split>(string("split")?, "split", err)?;
    Ok(FunctionRecord { id, language, source, assembly, provenance, origin, optimization, reasoning, split })
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Canonical text: manifest line, then one record per line, each ending in
/// a newline.
pub fn render_corpus(corpus: &Corpus) -> String {
    #[derive(serde::Serialize)]
    struct ManifestLine {
        r#type: &'static str,
        counts: std::collections::BTreeMap<String, u64>,
    }
    let line =
        ManifestLine { r#type: "manifest", counts: corpus.manifest.iter().map(|(k, n)| (k.to_string(), *n)).collect() };
    let mut out = serde_json::to_string(&line).expect("manifest always serializes");
    out.push('\n');
    for r in &corpus.records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusIoError> {
    let io = |source| CorpusIoError::Io { path: path.to_owned(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(render_corpus(corpus).as_bytes()).map_err(io)?;
    Ok(())
}
