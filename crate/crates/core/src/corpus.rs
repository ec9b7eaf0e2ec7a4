//! Parallel-corpus data model: assembly ↔ source records, their invariants
//! and composition accounting.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Dart,
    Swift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Natural,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Optimization {
    #[serde(rename = "aot-default")]
    AotDefault,
    #[serde(rename = "O0")]
    O0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
    TestNatural,
}

macro_rules! str_enum {
    ($ty:ty, $what:literal, $($variant:path => $text:literal),+ $(,)?) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($variant => $text),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = UnknownVariant;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($variant),)+
                    other => Err(UnknownVariant { kind: $what, value: other.to_string() }),
                }
            }
        }
    };
}

str_enum!(Language, "language", Language::Dart => "dart", Language::Swift => "swift");
str_enum!(Provenance, "provenance", Provenance::Natural => "natural", Provenance::Synthetic => "synthetic");
str_enum!(Optimization, "optimization", Optimization::AotDefault => "aot-default", Optimization::O0 => "O0");
str_enum!(Split, "split", Split::Train => "train", Split::Test => "test", Split::TestNatural => "test-natural");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

impl core::error::Error for UnknownVariant {}

impl fmt::Display for UnknownVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown {} {:?}", self.kind, self.value)
    }
}

impl Language {
    /// Optimization profile the corpus requires for this language: Dart is
    /// built with the default AOT pipeline, Swift with optimizations off.
    pub fn required_optimization(self) -> Optimization {
        match self {
            Language::Dart => Optimization::AotDefault,
            Language::Swift => Optimization::O0,
        }
    }
}

/// One assembly ↔ source pair.
///
/// Field order here is the canonical on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionRecord {
    pub id: String,
    pub language: Language,
    pub source: String,
    pub assembly: String,
    pub provenance: Provenance,
    pub origin: String,
    pub optimization: Optimization,
    pub reasoning: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptySource,
    EmptyAssembly,
    OptimizationMismatch { language: Language, optimization: Optimization },
    ReasoningOnNaturalRecord,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => f.write_str("id is empty"),
            Violation::EmptySource => f.write_str("source is empty"),
            Violation::EmptyAssembly => f.write_str("assembly is empty"),
            Violation::OptimizationMismatch { language, optimization } => write!(
                f,
                "language/optimization rule: {language} records must use {}, found {optimization}",
                language.required_optimization()
            ),
            Violation::ReasoningOnNaturalRecord => f.write_str("reasoning trace present on a natural record"),
        }
    }
}

/// Every violated record invariant, each listed once. Empty means valid.
pub type ValidationReport = Vec<Violation>;

pub fn validate_record(record: &FunctionRecord) -> ValidationReport {
    let mut report = Vec::new();
    if record.id.trim().is_empty() {
        report.push(Violation::EmptyId);
    }
    if record.source.trim().is_empty() {
        report.push(Violation::EmptySource);
    }
    if record.assembly.trim().is_empty() {
        report.push(Violation::EmptyAssembly);
    }
    if record.optimization != record.language.required_optimization() {
        report.push(Violation::OptimizationMismatch { language: record.language, optimization: record.optimization });
    }
    let has_reasoning = record.reasoning.as_deref().is_some_and(|r| !r.is_empty());
    if has_reasoning && record.provenance == Provenance::Natural {
        report.push(Violation::ReasoningOnNaturalRecord);
    }
    report
}

/// A (language, provenance, split) cell of the composition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompositionKey {
    pub language: Language,
    pub provenance: Provenance,
    pub split: Split,
}

impl CompositionKey {
    pub fn of(record: &FunctionRecord) -> Self {
        CompositionKey { language: record.language, provenance: record.provenance, split: record.split }
    }
}

/// Rendered as `language/provenance/split`, e.g. `dart/natural/train`.
impl fmt::Display for CompositionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.language, self.provenance, self.split)
    }
}

impl FromStr for CompositionKey {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('/');
        let (Some(l), Some(p), Some(sp), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(UnknownVariant { kind: "composition key", value: s.to_string() });
        };
        Ok(CompositionKey { language: l.parse()?, provenance: p.parse()?, split: sp.parse()? })
    }
}

/// Declared record counts per composition cell. Cells absent from the map
/// are declared as zero.
pub type Manifest = BTreeMap<CompositionKey, u64>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub records: Vec<FunctionRecord>,
    pub manifest: Manifest,
}

impl Corpus {
    /// Builds a corpus whose manifest declares exactly the records' counts.
    pub fn from_records(records: Vec<FunctionRecord>) -> Self {
        let manifest = summarize_composition(&records).counts;
        Corpus { records, manifest }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FunctionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &FunctionRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Cells where the declared manifest disagrees with the records.
    pub fn manifest_mismatches(&self) -> Vec<ManifestMismatch> {
        let actual = summarize_composition(&self.records).counts;
        let mut keys: Vec<CompositionKey> = self.manifest.keys().copied().collect();
        keys.extend(actual.keys().copied());
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter_map(|key| {
                let declared = self.manifest.get(&key).copied().unwrap_or(0);
                let found = actual.get(&key).copied().unwrap_or(0);
                (declared != found).then_some(ManifestMismatch { key, declared, actual: found })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestMismatch {
    pub key: CompositionKey,
    pub declared: u64,
    pub actual: u64,
}

impl fmt::Display for ManifestMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: manifest declares {} records, corpus has {}", self.key, self.declared, self.actual)
    }
}

/// Pairs of record positions sharing an id, as (first, repeat).
pub fn duplicate_ids(records: &[FunctionRecord]) -> Vec<(usize, usize)> {
    let mut first_seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dups = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match first_seen.get(r.id.as_str()) {
            Some(&first) => dups.push((first, i)),
            None => {
                first_seen.insert(&r.id, i);
            }
        }
    }
    dups
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompositionSummary {
    pub counts: BTreeMap<CompositionKey, u64>,
    pub split_totals: BTreeMap<Split, u64>,
}

impl CompositionSummary {
    pub fn count(&self, language: Language, provenance: Provenance, split: Split) -> u64 {
        self.counts.get(&CompositionKey { language, provenance, split }).copied().unwrap_or(0)
    }

    pub fn split_total(&self, split: Split) -> u64 {
        self.split_totals.get(&split).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.split_totals.values().sum()
    }

    pub fn language_total(&self, language: Language, split: Split) -> u64 {
        self.sum_where(|k| k.language == language && k.split == split)
    }

    pub fn provenance_total(&self, provenance: Provenance, split: Split) -> u64 {
        self.sum_where(|k| k.provenance == provenance && k.split == split)
    }

    fn sum_where(&self, pred: impl Fn(&CompositionKey) -> bool) -> u64 {
        self.counts.iter().filter(|(k, _)| pred(k)).map(|(_, v)| *v).sum()
    }
}

pub fn summarize_composition(records: &[FunctionRecord]) -> CompositionSummary {
    let mut summary = CompositionSummary::default();
    for r in records {
        *summary.counts.entry(CompositionKey::of(r)).or_insert(0) += 1;
        *summary.split_totals.entry(r.split).or_insert(0) += 1;
    }
    summary
}
