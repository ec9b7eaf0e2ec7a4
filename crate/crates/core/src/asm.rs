//! Disassembly listing handling: line classification, normalization and
//! per-function extraction.
//!
//! Input is the textual output of an objdump-style disassembler in Intel
//! syntax. Normalization drops addresses and encoding bytes, collapses
//! whitespace, and rewrites intra-function branch targets to `.L<n>` labels
//! numbered by first appearance within each function.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

/// Classification of one listing line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line<'a> {
    Blank,
    /// `Disassembly of section .text:`
    Section(&'a str),
    /// `0000000000001139 <f>:` or the normalized `<f>:`
    Function {
        address: Option<u64>,
        symbol: &'a str,
    },
    /// `.L3:`
    LocalLabel(&'a str),
    Instruction {
        address: Option<u64>,
        bytes: usize,
        text: &'a str,
    },
    /// Wrapped encoding bytes of a long instruction.
    Continuation {
        bytes: usize,
    },
    Other(&'a str),
}

pub fn classify(line: &str) -> Line<'_> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Line::Blank;
    }
    if let Some(rest) = trimmed.strip_prefix("Disassembly of section ") {
        if let Some(name) = rest.strip_suffix(':') {
            return Line::Section(name);
        }
    }
    if let Some(label) = trimmed.strip_suffix(">:") {
        if let Some(open) = label.find('<') {
            let prefix = label[..open].trim();
            let symbol = &label[open + 1..];
            if prefix.is_empty() {
                return Line::Function { address: None, symbol };
            }
            if let Some(address) = parse_hex(prefix) {
                return Line::Function { address: Some(address), symbol };
            }
        }
    }
    if is_local_label_def(trimmed) {
        return Line::LocalLabel(&trimmed[..trimmed.len() - 1]);
    }
    let indented = line.starts_with([' ', '\t']);
    if indented {
        if let Some((addr, rest)) = trimmed.split_once(':') {
            if let Some(address) = parse_hex(addr) {
                if rest.starts_with('\t') || rest.is_empty() {
                    return address_line(address, rest);
                }
            }
        }
        return Line::Instruction { address: None, bytes: 0, text: trimmed };
    }
    Line::Other(trimmed)
}

fn address_line(address: u64, rest: &str) -> Line<'_> {
    let mut fields = rest.split('\t').filter(|f| !f.trim().is_empty());
    let Some(first) = fields.next() else {
        return Line::Continuation { bytes: 0 };
    };
    match hex_byte_count(first) {
        Some(bytes) => {
            // Everything after the byte column is the instruction.
            let start = rest.find(first).unwrap_or(0) + first.len();
            let text = rest[start..].trim();
            if text.is_empty() {
                Line::Continuation { bytes }
            } else {
                Line::Instruction { address: Some(address), bytes, text }
            }
        }
        None => Line::Instruction { address: Some(address), bytes: 0, text: rest.trim() },
    }
}

fn parse_hex(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

fn hex_byte_count(field: &str) -> Option<usize> {
    let mut n = 0;
    for chunk in field.split_whitespace() {
        if chunk.len() != 2 || !chunk.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        n += 1;
    }
    (n > 0).then_some(n)
}

fn is_local_label_def(s: &str) -> bool {
    s.strip_suffix(':').is_some_and(is_local_label)
}

fn is_local_label(s: &str) -> bool {
    s.strip_prefix(".L").is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Splits `sym+0x1f` into the symbol and offset.
fn split_target(target: &str) -> (&str, Option<u64>) {
    if let Some((sym, off)) = target.rsplit_once("+0x") {
        if let Ok(v) = u64::from_str_radix(off, 16) {
            return (sym, Some(v));
        }
    }
    (target, None)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum LabelKey {
    Address(u64),
    Named(String),
}

enum Piece<'a> {
    Text(&'a str),
    Local(LabelKey),
}

/// Instruction text split into literal pieces and local-label references.
fn instruction_pieces<'a>(text: &'a str, current: Option<&str>, local_targets: &BTreeSet<u64>) -> Vec<Piece<'a>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        // `<hexaddr> <sym+0xoff>` pairs carry an absolute address.
        if let Some(next) = tokens.get(i + 1) {
            if let (Some(addr), Some(target)) =
                (parse_hex(tok), next.strip_prefix('<').and_then(|t| t.strip_suffix('>')))
            {
                let (sym, _) = split_target(target);
                if Some(sym) == current && local_targets.contains(&addr) {
                    out.push(Piece::Local(LabelKey::Address(addr)));
                } else {
                    out.push(Piece::Text(next));
                }
                i += 2;
                continue;
            }
        }
        if is_local_label(tok) {
            out.push(Piece::Local(LabelKey::Named(tok.to_string())));
        } else {
            out.push(Piece::Text(tok));
        }
        i += 1;
    }
    out
}

/// Normalizes the lines of one function region (label line excluded).
fn normalize_region(lines: &[&str], symbol: Option<&str>) -> Vec<String> {
    let classified: Vec<Line<'_>> = lines.iter().map(|l| classify(l)).collect();
    let addresses: BTreeSet<u64> = classified
        .iter()
        .filter_map(|l| match l {
            Line::Instruction { address: Some(a), .. } => Some(*a),
            _ => None,
        })
        .collect();

    let targets: BTreeSet<u64> = classified
        .iter()
        .filter_map(|l| match l {
            Line::Instruction { text, .. } => Some(instruction_pieces(text, symbol, &addresses)),
            _ => None,
        })
        .flatten()
        .filter_map(|p| match p {
            Piece::Local(LabelKey::Address(a)) => Some(a),
            _ => None,
        })
        .collect();

    let mut numbering: BTreeMap<LabelKey, usize> = BTreeMap::new();
    let mut number = |key: LabelKey| -> String {
        let next = numbering.len();
        let n = *numbering.entry(key).or_insert(next);
        format!(".L{n}")
    };

    let mut out = Vec::new();
    for line in &classified {
        match line {
            Line::LocalLabel(name) => {
                out.push(format!("{}:", number(LabelKey::Named((*name).to_string()))));
            }
            Line::Instruction { address, text, .. } => {
                if let Some(a) = address {
                    if targets.contains(a) {
                        out.push(format!("{}:", number(LabelKey::Address(*a))));
                    }
                }
                let pieces = instruction_pieces(text, symbol, &addresses);
                let mut rendered = String::from("  ");
                for (i, piece) in pieces.into_iter().enumerate() {
                    if i > 0 {
                        rendered.push(' ');
                    }
                    match piece {
                        Piece::Text(t) => rendered.push_str(t),
                        Piece::Local(key) => rendered.push_str(&number(key)),
                    }
                }
                out.push(rendered);
            }
            _ => {}
        }
    }
    out
}

/// Normalizes a whole listing. Section headers and function labels are kept
/// (without addresses); file banners, blank lines and wrapped byte lines are
/// dropped. The result ends with a newline unless empty.
pub fn normalize_listing(listing: &str) -> String {
    let lines: Vec<&str> = listing.lines().collect();
    let mut out: Vec<String> = Vec::new();
    let mut region_start = 0;
    let mut region_symbol: Option<&str> = None;

    let flush = |out: &mut Vec<String>, range: Range<usize>, sym: Option<&str>| {
        out.extend(normalize_region(&lines[range], sym));
    };

    for (i, line) in lines.iter().enumerate() {
        match classify(line) {
            Line::Section(name) => {
                flush(&mut out, region_start..i, region_symbol);
                out.push(format!("Disassembly of section {name}:"));
                region_start = i + 1;
                region_symbol = None;
            }
            Line::Function { symbol, .. } => {
                flush(&mut out, region_start..i, region_symbol);
                out.push(format!("<{symbol}>:"));
                region_start = i + 1;
                region_symbol = Some(symbol);
            }
            _ => {}
        }
    }
    flush(&mut out, region_start..lines.len(), region_symbol);
    join_lines(&out)
}

fn join_lines(lines: &[String]) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

/// One function cut out of a listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyFunction {
    /// The label as it appears in the listing (possibly mangled).
    pub symbol: String,
    /// Normalized instructions and local labels, without the function label.
    pub body: String,
    /// Encoded size in bytes.
    pub byte_length: usize,
    /// Line range of the body in the source listing, label excluded.
    pub lines: Range<usize>,
}

impl AssemblyFunction {
    /// Body prefixed with its function label.
    pub fn labeled(&self) -> String {
        format!("<{}>:\n{}", self.symbol, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractError {
    NotFound { symbol: String },
    Ambiguous { symbol: String, candidates: Vec<String> },
    Degenerate { symbol: String, reason: &'static str },
}

impl core::error::Error for ExtractError {}

impl fmt::Display for ExtractError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractError::NotFound { symbol } => write!(f, "symbol `{symbol}` not found in listing"),
            ExtractError::Ambiguous { symbol, candidates } => {
                write!(f, "symbol `{symbol}` matches several labels: {}", candidates.join(", "))
            }
            ExtractError::Degenerate { symbol, reason } => {
                write!(f, "function `{symbol}` is degenerate: {reason}")
            }
        }
    }
}

/// Function labels in listing order with the line range of each body.
pub fn function_spans(listing: &str) -> Vec<(String, Range<usize>)> {
    let lines: Vec<&str> = listing.lines().collect();
    let mut spans: Vec<(String, Range<usize>)> = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, line) in lines.iter().enumerate() {
        match classify(line) {
            Line::Function { symbol, .. } => {
                if let Some((s, start)) = open.take() {
                    spans.push((s, start..i));
                }
                open = Some((symbol.to_string(), i + 1));
            }
            Line::Section(_) => {
                if let Some((s, start)) = open.take() {
                    spans.push((s, start..i));
                }
            }
            _ => {}
        }
    }
    if let Some((s, start)) = open {
        spans.push((s, start..lines.len()));
    }
    spans
}

/// Whether a listing label refers to the source-level name `wanted`.
///
/// Exact matches win. Otherwise the name must appear as a whole
/// `_`-delimited component (Dart AOT labels such as
/// `Precompiled_Library_fib_1234`) or as a length-prefixed identifier
/// (Swift mangling, e.g. `$s4main3fibyS2iF`).
pub fn label_matches(label: &str, wanted: &str) -> bool {
    if label == wanted {
        return true;
    }
    if wanted.is_empty() {
        return false;
    }
    if label.trim_start_matches('_') == wanted {
        return true;
    }
    if label.split(['_', '.', ':', '@']).any(|part| part == wanted) {
        return true;
    }
    let prefixed = format!("{}{}", wanted.len(), wanted);
    let mut from = 0;
    while let Some(pos) = label[from..].find(&prefixed) {
        let at = from + pos;
        let before_is_digit = label[..at].bytes().last().is_some_and(|b| b.is_ascii_digit());
        if !before_is_digit {
            return true;
        }
        from = at + 1;
    }
    false
}

pub fn extract_function(listing: &str, symbol: &str) -> Result<AssemblyFunction, ExtractError> {
    let spans = function_spans(listing);
    let chosen = match spans.iter().find(|(s, _)| s == symbol) {
        Some(exact) => exact.clone(),
        None => {
            let matches: Vec<&(String, Range<usize>)> =
                spans.iter().filter(|(s, _)| label_matches(s, symbol)).collect();
            match matches.as_slice() {
                [] => return Err(ExtractError::NotFound { symbol: symbol.to_string() }),
                [one] => (*one).clone(),
                many => {
                    return Err(ExtractError::Ambiguous {
                        symbol: symbol.to_string(),
                        candidates: many.iter().map(|(s, _)| s.clone()).collect(),
                    })
                }
            }
        }
    };
    let (label, range) = chosen;
    let lines: Vec<&str> = listing.lines().collect();
    let region = &lines[range.clone()];

    let mut bytes = 0usize;
    let mut first_addr = None;
    let mut instructions = 0usize;
    for l in region {
        match classify(l) {
            Line::Instruction { address, bytes: b, .. } => {
                instructions += 1;
                bytes += b;
                if first_addr.is_none() {
                    first_addr = address;
                }
            }
            Line::Continuation { bytes: b } => bytes += b,
            _ => {}
        }
    }
    if instructions == 0 {
        return Err(ExtractError::Degenerate {
            symbol: label,
            reason: "no instructions between this label and the next",
        });
    }
    if bytes == 0 {
        // No encoding column: fall back to the distance to the next label.
        let next_addr = lines.get(range.end).and_then(|l| match classify(l) {
            Line::Function { address, .. } => address,
            _ => None,
        });
        if let (Some(start), Some(end)) = (first_addr, next_addr) {
            bytes = end.saturating_sub(start) as usize;
        }
    }
    if bytes == 0 {
        return Err(ExtractError::Degenerate {
            symbol: label,
            reason: "listing carries no encoding bytes or addresses",
        });
    }
    let body = join_lines(&normalize_region(region, Some(&label)));
    Ok(AssemblyFunction { symbol: label, body, byte_length: bytes, lines: range })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "\nt.o:     file format elf64-x86-64\n\n\nDisassembly of section .text:\n\n\
0000000000000000 <g>:\n   0:\tf3 0f 1e fa          \tendbr64 \n   4:\t55                   \tpush   rbp\n  15:\tc3                   \tret    \n\n\
0000000000000016 <f>:\n  16:\t55                   \tpush   rbp\n  17:\teb 02                \tjmp    1b <f+0x5>\n  19:\t74 fe                \tje     19 <f+0x3>\n  1b:\te8 00 00 00 00       \tcall   0 <g>\n  20:\tc3                   \tret    \n";

    #[test]
    fn classifies_objdump_lines() {
        assert_eq!(classify("Disassembly of section .text:"), Line::Section(".text"));
        assert_eq!(classify("0000000000000016 <f>:"), Line::Function { address: Some(0x16), symbol: "f" });
        assert_eq!(
            classify("  1b:\te8 00 00 00 00       \tcall   0 <g>"),
            Line::Instruction { address: Some(0x1b), bytes: 5, text: "call   0 <g>" }
        );
        assert_eq!(
            classify("  1b:\tcall   0 <g>"),
            Line::Instruction { address: Some(0x1b), bytes: 0, text: "call   0 <g>" }
        );
        assert_eq!(classify("  22:\t00 00 "), Line::Continuation { bytes: 2 });
        assert_eq!(classify(".L0:"), Line::LocalLabel(".L0"));
        assert_eq!(classify("t.o:     file format elf64-x86-64"), Line::Other("t.o:     file format elf64-x86-64"));
    }

    #[test]
    fn normalization_rewrites_local_targets() {
        let n = normalize_listing(TWO);
        let expected = "Disassembly of section .text:\n<g>:\n  endbr64\n  push rbp\n  ret\n\
<f>:\n  push rbp\n  jmp .L0\n.L1:\n  je .L1\n.L0:\n  call <g>\n  ret\n";
        assert_eq!(n, expected);
        assert_eq!(normalize_listing(&n), n);
    }

    #[test]
    fn extraction_is_bounded_by_next_label() {
        let g = extract_function(TWO, "g").unwrap();
        assert_eq!(g.body, "  endbr64\n  push rbp\n  ret\n");
        assert_eq!(g.byte_length, 6);
        let f = extract_function(TWO, "f").unwrap();
        assert!(!f.body.contains("endbr64"));
        assert_eq!(f.byte_length, 1 + 2 + 2 + 5 + 1);
        assert!(g.lines.end <= f.lines.start);
    }

    #[test]
    fn missing_symbol() {
        assert_eq!(extract_function(TWO, "h"), Err(ExtractError::NotFound { symbol: "h".to_string() }));
    }

    #[test]
    fn empty_body_is_degenerate() {
        let listing = "0000000000000000 <a>:\n0000000000000004 <b>:\n   4:\tc3\tret\n";
        assert!(matches!(extract_function(listing, "a"), Err(ExtractError::Degenerate { .. })));
    }

    #[test]
    fn address_span_fallback() {
        let listing = "0000000000000010 <a>:\n  10:\tpush   rbp\n  11:\tret\n0000000000000018 <b>:\n  18:\tret\n";
        assert_eq!(extract_function(listing, "a").unwrap().byte_length, 8);
    }

    #[test]
    fn mangled_label_matching() {
        assert!(label_matches("Precompiled_Library_fib_1234", "fib"));
        assert!(label_matches("$s4main3fibyS2iF", "fib"));
        assert!(label_matches("_fib", "fib"));
        assert!(!label_matches("Precompiled_fibonacci_12", "fib"));
        assert!(!label_matches("$s4main13fibyS2iF", "fib"));
    }

    #[test]
    fn ambiguous_match_lists_candidates() {
        let listing = "0000000000000000 <A_run_1>:\n   0:\tc3\tret\n0000000000000001 <B_run_2>:\n   1:\tc3\tret\n";
        match extract_function(listing, "run") {
            Err(ExtractError::Ambiguous { candidates, .. }) => assert_eq!(candidates.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(extract_function(listing, "A_run_1").is_ok());
    }
}
