//! Total lexer for Dart and Swift source text.
//!
//! Comments are dropped, string literals (including interpolations) stay as
//! single tokens, and keywords come from the per-language lists under
//! `grammars/`. Bytes the lexer cannot place become `Other` tokens.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;

const DART_KEYWORDS: &str = include_str!("../../grammars/dart/keywords.txt");
const SWIFT_KEYWORDS: &str = include_str!("../../grammars/swift/keywords.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Literal,
    Operator,
    Punctuation,
    Other,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Keyword => "keyword",
            TokenKind::Identifier => "identifier",
            TokenKind::Literal => "literal",
            TokenKind::Operator => "operator",
            TokenKind::Punctuation => "punctuation",
            TokenKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

/// Tokens in source order; no token has empty text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

/// A language's keyword list.
#[derive(Debug, Clone)]
pub struct Keywords {
    words: BTreeSet<&'static str>,
}

impl Keywords {
    pub fn for_language(language: Language) -> Self {
        let data = match language {
            Language::Dart => DART_KEYWORDS,
            Language::Swift => SWIFT_KEYWORDS,
        };
        Keywords { words: data.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect() }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

// Longest first within each length class; matched greedily.
const OPERATORS: &[&str] = &[
    ">>>=", "...?", "===", "!==", "??=", ">>=", "<<=", "~/=", ">>>", "...", "..<", "?..", "&&=", "||=", "==", "!=",
    "<=", ">=", "&&", "||", "??", "?.", "..", "=>", "->", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "<<", ">>", "~/", "+", "-", "*", "/", "%", "=", "<", ">", "!", "?", "~", "&", "|", "^", "@", "#",
];

const PUNCTUATION: &[u8] = b"()[]{},;.:";

pub fn tokenize(code: &str, language: Language) -> TokenSeq {
    let keywords = Keywords::for_language(language);
    tokenize_with(code, language, &keywords)
}

pub fn tokenize_with(code: &str, language: Language, keywords: &Keywords) -> TokenSeq {
    let mut lexer = Lexer { src: code, bytes: code.as_bytes(), pos: 0, language };
    let mut tokens = Vec::new();
    while let Some((start, kind)) = lexer.next_token() {
        let text = &code[start..lexer.pos];
        let kind = match kind {
            TokenKind::Identifier if keywords.contains(text) => TokenKind::Keyword,
            k => k,
        };
        tokens.push(Token { text: text.to_string(), kind });
    }
    TokenSeq { tokens }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    language: Language,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'$'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

impl Lexer<'_> {
    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.bytes[self.pos..].starts_with(s.as_bytes())
    }

    fn next_token(&mut self) -> Option<(usize, TokenKind)> {
        loop {
            self.skip_whitespace();
            if self.starts_with("//") {
                self.skip_line_comment();
            } else if self.starts_with("/*") {
                self.skip_block_comment();
            } else {
                break;
            }
        }
        let start = self.pos;
        let b = self.peek(0)?;
        let kind = if let Some(end) = self.string_end(self.pos) {
            self.pos = end;
            TokenKind::Literal
        } else if b.is_ascii_digit() || (b == b'.' && self.peek(1).is_some_and(|c| c.is_ascii_digit())) {
            self.scan_number();
            TokenKind::Literal
        } else if is_ident_start(b) {
            while self.peek(0).is_some_and(is_ident_continue) {
                self.pos += 1;
            }
            TokenKind::Identifier
        } else if b == b'`' && self.language == Language::Swift {
            self.scan_backtick_identifier()
        } else if let Some(op) = OPERATORS.iter().find(|op| self.starts_with(op)) {
            self.pos += op.len();
            TokenKind::Operator
        } else if PUNCTUATION.contains(&b) {
            self.pos += 1;
            TokenKind::Punctuation
        } else {
            let ch = self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
            self.pos += ch;
            TokenKind::Other
        };
        Some((start, kind))
    }

    fn skip_whitespace(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn skip_line_comment(&mut self) {
        while let Some(b) = self.peek(0) {
            if b == b'\n' {
                break;
            }
            self.pos += 1;
        }
    }

    // Both languages nest block comments.
    fn skip_block_comment(&mut self) {
        let mut depth = 0usize;
        while self.pos < self.bytes.len() {
            if self.starts_with("/*") {
                depth += 1;
                self.pos += 2;
            } else if self.starts_with("*/") {
                depth -= 1;
                self.pos += 2;
                if depth == 0 {
                    return;
                }
            } else {
                self.pos += 1;
            }
        }
    }

    fn scan_number(&mut self) {
        let hex = self.starts_with("0x") || self.starts_with("0X");
        let binary = self.language == Language::Swift && (self.starts_with("0b") || self.starts_with("0o"));
        if hex || binary {
            self.pos += 2;
            while self.peek(0).is_some_and(|c| c.is_ascii_hexdigit() || c == b'_') {
                self.pos += 1;
            }
            return;
        }
        let digits = |lx: &mut Self| {
            while lx.peek(0).is_some_and(|c| c.is_ascii_digit() || c == b'_') {
                lx.pos += 1;
            }
        };
        digits(self);
        if self.peek(0) == Some(b'.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(0), Some(b'e' | b'E')) {
            let sign = usize::from(matches!(self.peek(1), Some(b'+' | b'-')));
            if self.peek(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1 + sign;
                digits(self);
            }
        }
    }

    fn scan_backtick_identifier(&mut self) -> TokenKind {
        let rest = &self.bytes[self.pos + 1..];
        match rest.iter().position(|&b| b == b'`' || b == b'\n') {
            Some(i) if rest[i] == b'`' && i > 0 => {
                self.pos += i + 2;
                TokenKind::Identifier
            }
            _ => {
                self.pos += 1;
                TokenKind::Other
            }
        }
    }

    /// End offset of a string literal starting at `at`, if one starts there.
    fn string_end(&self, at: usize) -> Option<usize> {
        match self.language {
            Language::Dart => dart_string_end(self.bytes, at),
            Language::Swift => swift_string_end(self.bytes, at),
        }
    }
}

fn dart_string_end(b: &[u8], at: usize) -> Option<usize> {
    let mut i = at;
    let raw = b.get(i) == Some(&b'r') && matches!(b.get(i + 1), Some(b'\'' | b'"'));
    if raw {
        i += 1;
    }
    let quote = *b.get(i)?;
    if quote != b'\'' && quote != b'"' {
        return None;
    }
    let triple = b.get(i + 1) == Some(&quote) && b.get(i + 2) == Some(&quote);
    let delim_len = if triple { 3 } else { 1 };
    i += delim_len;
    while i < b.len() {
        let c = b[i];
        if !raw && c == b'\\' {
            i += 2;
            continue;
        }
        if !triple && c == b'\n' {
            return Some(i);
        }
        if c == quote && (!triple || (b.get(i + 1) == Some(&quote) && b.get(i + 2) == Some(&quote))) {
            return Some(i + delim_len);
        }
        if !raw && c == b'$' && b.get(i + 1) == Some(&b'{') {
            i = balanced_end(b, i + 2, b'{', b'}', dart_string_end);
            continue;
        }
        i += 1;
    }
    Some(b.len())
}

fn swift_string_end(b: &[u8], at: usize) -> Option<usize> {
    let mut i = at;
    let mut hashes = 0;
    while b.get(i) == Some(&b'#') {
        hashes += 1;
        i += 1;
    }
    if b.get(i) != Some(&b'"') {
        return None;
    }
    let triple = b.get(i + 1) == Some(&b'"') && b.get(i + 2) == Some(&b'"');
    let delim_len = if triple { 3 } else { 1 };
    i += delim_len;
    let closes_at = |j: usize| -> bool {
        let quotes_ok = if triple { b[j..].starts_with(b"\"\"\"") } else { b[j] == b'"' };
        quotes_ok && b[j + delim_len..].iter().take(hashes).filter(|&&c| c == b'#').count() == hashes
    };
    while i < b.len() {
        let c = b[i];
        if c == b'\\' && b[i + 1..].iter().take(hashes).filter(|&&h| h == b'#').count() == hashes {
            let after = i + 1 + hashes;
            if b.get(after) == Some(&b'(') {
                i = balanced_end(b, after + 1, b'(', b')', swift_string_end);
            } else {
                i = after + 1;
            }
            continue;
        }
        if !triple && c == b'\n' {
            return Some(i);
        }
        if c == b'"' && closes_at(i) {
            return Some(i + delim_len + hashes);
        }
        i += 1;
    }
    Some(b.len())
}

/// Scans an interpolation body up to its closing delimiter, skipping nested
/// strings. Returns the offset just past the closer (or the input end).
fn balanced_end(b: &[u8], mut i: usize, open: u8, close: u8, nested: fn(&[u8], usize) -> Option<usize>) -> usize {
    let mut depth = 1usize;
    while i < b.len() {
        if let Some(end) = nested(b, i) {
            i = end.max(i + 1);
            continue;
        }
        if b[i] == open {
            depth += 1;
        } else if b[i] == close {
            depth -= 1;
            if depth == 0 {
                return i + 1;
            }
        }
        i += 1;
    }
    b.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn kinds(code: &str, lang: Language) -> Vec<(String, TokenKind)> {
        tokenize(code, lang).tokens.into_iter().map(|t| (t.text, t.kind)).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("", Language::Dart).is_empty());
        assert!(tokenize("  // only a comment\n", Language::Swift).is_empty());
    }

    #[test]
    fn simple_declaration() {
        use TokenKind::*;
        let got = kinds("var x = 1;", Language::Dart);
        let want = vec![
            ("var".to_string(), Keyword),
            ("x".to_string(), Identifier),
            ("=".to_string(), Operator),
            ("1".to_string(), Literal),
            (";".to_string(), Punctuation),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn dart_strings_with_interpolation_are_single_tokens() {
        let toks = tokenize(r#"print('a ${b["k"]} c' + r'\n' + """x'y""");"#, Language::Dart);
        let lits: Vec<&str> =
            toks.tokens.iter().filter(|t| t.kind == TokenKind::Literal).map(|t| t.text.as_str()).collect();
        assert_eq!(lits, [r#"'a ${b["k"]} c'"#, r"r'\n'", r#""""x'y""""#]);
    }

    #[test]
    fn swift_strings_and_interpolation() {
        let toks = tokenize(r##"let s = "hi \(f("x")) there"; let r = #"a"b"#"##, Language::Swift);
        let lits: Vec<&str> =
            toks.tokens.iter().filter(|t| t.kind == TokenKind::Literal).map(|t| t.text.as_str()).collect();
        assert_eq!(lits, [r#""hi \(f("x")) there""#, r##"#"a"b"#"##]);
    }

    #[test]
    fn nested_block_comments_are_dropped() {
        let toks = tokenize("a /* x /* y */ z */ b", Language::Swift);
        assert_eq!(toks.texts().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn operators_and_numbers() {
        let toks = tokenize("x ~/= 0x1F >>> 2.5e-3 ?? .5", Language::Dart);
        assert_eq!(toks.texts().collect::<Vec<_>>(), ["x", "~/=", "0x1F", ">>>", "2.5e-3", "??", ".5"]);
    }

    #[test]
    fn unlexable_bytes_become_other() {
        let toks = tokenize("a \\ é", Language::Dart);
        assert_eq!(toks.tokens[1].kind, TokenKind::Other);
        assert_eq!(toks.tokens[2].text, "é");
        assert!(toks.tokens.iter().all(|t| !t.text.is_empty()));
    }

    #[test]
    fn unterminated_string_stops_at_line_end() {
        let toks = tokenize("var s = 'abc\nvar t", Language::Dart);
        assert_eq!(toks.tokens[3].text, "'abc");
        assert_eq!(toks.tokens[4].text, "var");
    }

    #[test]
    fn keyword_lists_load() {
        assert!(Keywords::for_language(Language::Dart).contains("late"));
        assert!(Keywords::for_language(Language::Swift).contains("guard"));
        assert!(!Keywords::for_language(Language::Swift).contains("# Swift"));
    }
}
