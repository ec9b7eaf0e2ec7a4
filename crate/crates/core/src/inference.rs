//! Decoding policy, prompt construction and extraction of code from raw
//! model output.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FunctionRecord, Language};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingPolicy {
    pub temperature: f64,
    pub top_p: f64,
    pub beam: u32,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const PARITY_TEMPERATURE: f64 = 0.2;
pub const PARITY_TOP_P: f64 = 0.99;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

impl DecodingPolicy {
    /// Temperature 0.2, top-p 0.99, beam 1: the policy every model is scored under.
    pub fn parity() -> Self {
        DecodingPolicy {
            temperature: PARITY_TEMPERATURE,
            top_p: PARITY_TOP_P,
            beam: 1,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn with_beam(self, beam: u32) -> Self {
        DecodingPolicy { beam, ..self }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(PolicyError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PolicyError::TopP(self.top_p));
        }
        if self.beam == 0 {
            return Err(PolicyError::Beam);
        }
        if self.max_tokens == 0 {
            return Err(PolicyError::MaxTokens);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("top_p must lie in (0, 1], got {0}")]
    TopP(f64),
    #[error("beam width must be at least 1")]
    Beam,
    #[error("max_tokens must be at least 1")]
    MaxTokens,
}

/// One generated candidate for a corpus item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub item_id: String,
    pub attempt_index: u32,
    pub policy: DecodingPolicy,
    pub raw: String,
    pub code: String,
    /// The endpoint refused beam search and this attempt was sampled with a
    /// distinct seed instead.
    #[serde(default)]
    pub beam_fallback: bool,
}

impl Hypothesis {
    pub fn new(
        item_id: &str,
        attempt_index: u32,
        policy: DecodingPolicy,
        raw: String,
        markers: &ReasoningMarkers,
    ) -> Self {
        let code = strip_and_extract(&raw, markers);
        Hypothesis { item_id: item_id.to_string(), attempt_index, policy, raw, code, beam_fallback: false }
    }

    /// Whether `code` is what extraction yields for `raw`.
    pub fn is_consistent(&self, markers: &ReasoningMarkers) -> bool {
        strip_and_extract(&self.raw, markers) == self.code
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt template lacks the {0} placeholder")]
    MissingPlaceholder(&'static str),
}

pub const ASSEMBLY_PLACEHOLDER: &str = "{{assembly}}";
pub const LANGUAGE_PLACEHOLDER: &str = "{{language}}";

pub fn language_display_name(language: Language) -> &'static str {
    match language {
        Language::Dart => "Dart",
        Language::Swift => "Swift",
    }
}

/// Substitutes `{{language}}` and `{{assembly}}` in `template`. The assembly
/// is inserted verbatim and never re-scanned for placeholders.
pub fn build_prompt(record: &FunctionRecord, template: &str) -> Result<String, PromptError> {
    if !template.contains(ASSEMBLY_PLACEHOLDER) {
        return Err(PromptError::MissingPlaceholder(ASSEMBLY_PLACEHOLDER));
    }
    if !template.contains(LANGUAGE_PLACEHOLDER) {
        return Err(PromptError::MissingPlaceholder(LANGUAGE_PLACEHOLDER));
    }
    let lang = language_display_name(record.language);
    let mut out = String::with_capacity(template.len() + record.assembly.len());
    for (i, piece) in template.split(ASSEMBLY_PLACEHOLDER).enumerate() {
        if i > 0 {
            out.push_str(&record.assembly);
        }
        out.push_str(&piece.replace(LANGUAGE_PLACEHOLDER, lang));
    }
    Ok(out)
}

/// Delimiters of a reasoning trace in raw model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningMarkers {
    pub open: String,
    pub close: String,
}

impl Default for ReasoningMarkers {
    fn default() -> Self {
        ReasoningMarkers { open: "<think>".to_string(), close: "</think>".to_string() }
    }
}

/// Removes reasoning spans, then returns the first fenced code block,
/// preferring one with a language tag; without fences the stripped text is
/// returned as is. Blocks nested inside the chosen block are unwrapped until
/// none remain, which makes the function idempotent.
pub fn strip_and_extract(raw: &str, markers: &ReasoningMarkers) -> String {
    let stripped = strip_reasoning(raw, markers);
    let mut current = stripped;
    // Each round strictly shrinks the text, so this terminates.
    while let Some(inner) = first_fence(&current) {
        if inner == current {
            break;
        }
        current = inner;
    }
    current
}

fn strip_reasoning(raw: &str, markers: &ReasoningMarkers) -> String {
    if markers.open.is_empty() || markers.close.is_empty() {
        return raw.to_string();
    }
    let mut text = raw.to_string();
    let mut touched = false;
    while let Some(start) = text.find(&markers.open) {
        touched = true;
        let after = start + markers.open.len();
        match text[after..].find(&markers.close) {
            Some(rel) => text.replace_range(start..after + rel + markers.close.len(), ""),
            None => text.truncate(start),
        }
    }
    // A close marker without an opener: the trace started before the output.
    if let Some(pos) = text.rfind(&markers.close) {
        touched = true;
        text.replace_range(..pos + markers.close.len(), "");
    }
    if touched {
        text.trim().to_string()
    } else {
        text
    }
}

struct Fence {
    tagged: bool,
    body: String,
}

fn fence_open(line: &str) -> Option<(usize, &str)> {
    let t = line.trim_start();
    let ticks = t.bytes().take_while(|&b| b == b'`').count();
    if ticks < 3 {
        return None;
    }
    let info = t[ticks..].trim();
    if info.contains('`') {
        return None;
    }
    Some((ticks, info))
}

fn fences(text: &str) -> Vec<Fence> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some((ticks, info)) = fence_open(lines[i]) else {
            i += 1;
            continue;
        };
        let mut j = i + 1;
        let mut closed = false;
        while j < lines.len() {
            if let Some((t, rest)) = fence_open(lines[j]) {
                if t >= ticks && rest.is_empty() {
                    closed = true;
                    break;
                }
            }
            j += 1;
        }
        out.push(Fence { tagged: !info.is_empty(), body: lines[i + 1..j].join("\n") });
        i = if closed { j + 1 } else { j };
    }
    out
}

fn first_fence(text: &str) -> Option<String> {
    let all = fences(text);
    let pick = all.iter().find(|f| f.tagged).or_else(|| all.first())?;
    Some(pick.body.clone())
}
