//! Evaluation report model and its Markdown, CSV and JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use decompeval_core::compile::CompileAtKResult;
use decompeval_core::stats::{self, ContinuityCorrection, ScoreSummary, StatsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ReportFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuRow {
    pub label: String,
    #[serde(default)]
    pub params: Option<String>,
    pub n: u64,
    /// Scores on the 0–1 scale.
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileRow {
    pub label: String,
    pub k: usize,
    pub successes: u64,
    pub n: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTestRow {
    pub a: String,
    pub b: String,
    pub k: usize,
    pub a_successes: u64,
    pub b_successes: u64,
    pub n_a: u64,
    pub n_b: u64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledOnlyRow {
    pub label: String,
    /// `None` when nothing compiled.
    pub summary: Option<SummaryCells>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCells {
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub min: f64,
    pub max: f64,
}

impl From<&ScoreSummary> for SummaryCells {
    fn from(s: &ScoreSummary) -> Self {
        SummaryCells {
            n: s.n,
            mean: s.mean,
            sd: s.sd,
            lower: s.interval.lower,
            upper: s.interval.upper,
            min: s.min,
            max: s.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Run settings that shape the numbers: corpus digest, k, check mode,
    /// seeds, which hypothesis each metric used.
    pub meta: BTreeMap<String, String>,
    pub codebleu: Vec<CodeBleuRow>,
    pub compile: Vec<CompileRow>,
    pub ztests: Vec<ZTestRow>,
    pub compiled_only: Vec<CompiledOnlyRow>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Mismatch(String),
}

impl CodeBleuRow {
    pub fn new(label: &str, params: Option<String>, s: &ScoreSummary) -> Self {
        CodeBleuRow {
            label: label.to_string(),
            params,
            n: s.n,
            mean: s.mean,
            sd: s.sd,
            lower: s.interval.lower,
            upper: s.interval.upper,
        }
    }
}

/// Rows for compile@j for each j in `ks` (each ≤ result.k).
pub fn compile_rows(label: &str, result: &CompileAtKResult, ks: &[usize]) -> Result<Vec<CompileRow>, StatsError> {
    ks.iter()
        .map(|&k| {
            let iv = result.interval_at(k)?;
            Ok(CompileRow {
                label: label.to_string(),
                k,
                successes: result.successes_at(k),
                n: result.n,
                rate: iv.point,
                lower: iv.lower,
                upper: iv.upper,
            })
        })
        .collect()
}

/// Pooled two-proportion z-test for every pair of labels at every k, in
/// row order.
pub fn ztest_rows(rows: &[CompileRow]) -> Result<Vec<ZTestRow>, StatsError> {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    let mut out = Vec::new();
    for k in ks {
        let at: Vec<&CompileRow> = rows.iter().filter(|r| r.k == k).collect();
        for (i, a) in at.iter().enumerate() {
            for b in &at[i + 1..] {
                let t = stats::two_proportion_z(a.successes, a.n, b.successes, b.n, ContinuityCorrection::None)?;
                out.push(ZTestRow {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    k,
                    a_successes: a.successes,
                    b_successes: b.successes,
                    n_a: a.n,
                    n_b: b.n,
                    z: t.z,
                    p: t.p_two_sided,
                });
            }
        }
    }
    Ok(out)
}

impl EvaluationReport {
    /// Recomputes every interval and p-value from the raw tallies and
    /// checks they match the stored values exactly.
    pub fn verify(&self) -> Result<(), ReportError> {
        let confidence: f64 = self.meta.get("confidence").and_then(|c| c.parse().ok()).unwrap_or(0.95);
        let mismatch = |what: String| Err(ReportError::Mismatch(what));
        for r in &self.codebleu {
            let iv = stats::normal_mean_ci(r.mean, r.sd, r.n, confidence)?;
            if (iv.lower, iv.upper) != (r.lower, r.upper) {
                return mismatch(format!("CodeBLEU interval of {}", r.label));
            }
        }
        for r in &self.compile {
            let iv = stats::wilson_interval(r.successes, r.n, confidence)?;
            if (iv.point, iv.lower, iv.upper) != (r.rate, r.lower, r.upper) {
                return mismatch(format!("compile@{} interval of {}", r.k, r.label));
            }
        }
        if ztest_rows(&self.compile)? != self.ztests {
            return mismatch("z-test rows".into());
        }
        for r in &self.compiled_only {
            if let Some(s) = &r.summary {
                let iv = stats::normal_mean_ci(s.mean, s.sd, s.n, confidence)?;
                if (iv.lower, iv.upper) != (s.lower, s.upper) {
                    return mismatch(format!("compiled-only interval of {}", r.label));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, format: ReportFormat) -> Result<String, ReportError> {
        match format {
            ReportFormat::Markdown => Ok(render_markdown(self)),
            ReportFormat::Csv => render_csv(self),
            ReportFormat::Json => Ok(serde_json::to_string_pretty(self)? + "\n"),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// 0–1 score as a 0–100 cell with one decimal.
pub fn pct1(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Interval on the 0–100 scale with two decimals, e.g. `65.47–77.13`.
pub fn range100(lower: f64, upper: f64) -> String {
    format!("{:.2}–{:.2}", lower * 100.0, upper * 100.0)
}

/// Rate cell, e.g. `79.4% (63.2–89.7)`.
pub fn rate_cell(rate: f64, lower: f64, upper: f64) -> String {
    format!("{:.1}% ({:.1}–{:.1})", rate * 100.0, lower * 100.0, upper * 100.0)
}

pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut s = String::from("# Evaluation report\n\n");
    if !report.meta.is_empty() {
        s.push_str("| Setting | Value |\n|---|---|\n");
        for (k, v) in &report.meta {
            let _ = writeln!(s, "| {k} | {} |", v.replace('|', "\\|"));
        }
        s.push('\n');
    }

    s.push_str("## CodeBLEU\n\n");
    let with_params = report.codebleu.iter().any(|r| r.params.is_some());
    if with_params {
        s.push_str("| Model | Params | n | Mean | SD | 95% CI |\n|---|---|---|---|---|---|\n");
    } else {
        s.push_str("| Model | n | Mean | SD | 95% CI |\n|---|---|---|---|---|\n");
    }
    for r in &report.codebleu {
        let params = if with_params { format!(" {} |", r.params.as_deref().unwrap_or("")) } else { String::new() };
        let _ = writeln!(
            s,
            "| {} |{params} {} | {} | {} | {} |",
            r.label,
            r.n,
            pct1(r.mean),
            pct1(r.sd),
            range100(r.lower, r.upper)
        );
    }
    if report.codebleu.is_empty() {
        s.push_str(if with_params { "| no items | | | | | |\n" } else { "| no items | | | | |\n" });
    }

    s.push_str("\n## compile@k\n\n");
    let mut ks: Vec<usize> = report.compile.iter().map(|r| r.k).collect();
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    let mut labels: Vec<&str> = Vec::new();
    for r in &report.compile {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    s.push_str("| Model | n |");
    for k in &ks {
        let _ = write!(s, " compile@{k} (95% CI) |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(ks.len()));
    s.push('\n');
    for label in &labels {
        let rows: Vec<&CompileRow> = report.compile.iter().filter(|r| r.label == *label).collect();
        let _ = write!(s, "| {label} | {} |", rows[0].n);
        for k in &ks {
            match rows.iter().find(|r| r.k == *k) {
                Some(r) => {
                    let _ = write!(s, " {} |", rate_cell(r.rate, r.lower, r.upper));
                }
                None => s.push_str(" |"),
            }
        }
        s.push('\n');
    }
    if labels.is_empty() {
        s.push_str("| no items | |\n");
    }

    if !report.ztests.is_empty() {
        s.push_str("\n## Two-proportion z-tests\n\n| A | B | k | A | B | z | p |\n|---|---|---|---|---|---|---|\n");
        for t in &report.ztests {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {}/{} | {}/{} | {:.3} | {:.3} |",
                t.a, t.b, t.k, t.a_successes, t.n_a, t.b_successes, t.n_b, t.z, t.p
            );
        }
    }

    s.push_str("\n## CodeBLEU on compiled outputs\n\n| Model | Samples | Avg. | SD | 95% CI | Min–Max |\n|---|---|---|---|---|---|\n");
    for r in &report.compiled_only {
        match &r.summary {
            Some(c) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {:.4} | {:.4}–{:.4} | {:.4}–{:.4} |",
                    r.label, c.n, c.mean, c.sd, c.lower, c.upper, c.min, c.max
                );
            }
            None => {
                let _ = writeln!(s, "| {} | 0 | no compiled outputs | | | |", r.label);
            }
        }
    }
    if report.compiled_only.is_empty() {
        s.push_str("| no compiled outputs | | | | | |\n");
    }
    s
}

/// One flat CSV row; unused columns stay empty.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    section: String,
    label: String,
    other: Option<String>,
    k: Option<usize>,
    n: Option<u64>,
    n_other: Option<u64>,
    successes: Option<u64>,
    successes_other: Option<u64>,
    mean: Option<f64>,
    sd: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
    rate: Option<f64>,
    z: Option<f64>,
    p: Option<f64>,
}

fn csv_rows(report: &EvaluationReport) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for (k, v) in &report.meta {
        rows.push(CsvRow { section: "meta".into(), label: k.clone(), other: Some(v.clone()), ..Default::default() });
    }
    for r in &report.codebleu {
        rows.push(CsvRow {
            section: "codebleu".into(),
            label: r.label.clone(),
            other: r.params.clone(),
            n: Some(r.n),
            mean: Some(r.mean),
            sd: Some(r.sd),
            lower: Some(r.lower),
            upper: Some(r.upper),
            ..Default::default()
        });
    }
    for r in &report.compile {
        rows.push(CsvRow {
            section: "compile".into(),
            label: r.label.clone(),
            k: Some(r.k),
            n: Some(r.n),
            successes: Some(r.successes),
            rate: Some(r.rate),
            lower: Some(r.lower),
            upper: Some(r.upper),
            ..Default::default()
        });
    }
    for t in &report.ztests {
        rows.push(CsvRow {
            section: "ztest".into(),
            label: t.a.clone(),
            other: Some(t.b.clone()),
            k: Some(t.k),
            n: Some(t.n_a),
            n_other: Some(t.n_b),
            successes: Some(t.a_successes),
            successes_other: Some(t.b_successes),
            z: Some(t.z),
            p: Some(t.p),
            ..Default::default()
        });
    }
    for r in &report.compiled_only {
        let mut row = CsvRow { section: "compiled_only".into(), label: r.label.clone(), ..Default::default() };
        if let Some(c) = &r.summary {
            row.n = Some(c.n);
            row.mean = Some(c.mean);
            row.sd = Some(c.sd);
            row.lower = Some(c.lower);
            row.upper = Some(c.upper);
            row.min = Some(c.min);
            row.max = Some(c.max);
        }
        rows.push(row);
    }
    rows
}

fn render_csv(report: &EvaluationReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in csv_rows(report) {
        w.serialize(row).map_err(|e| ReportError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

/// Parses the CSV rendering back into a report.
pub fn parse_csv(text: &str) -> Result<EvaluationReport, ReportError> {
    let mut report = EvaluationReport {
        meta: BTreeMap::new(),
        codebleu: Vec::new(),
        compile: Vec::new(),
        ztests: Vec::new(),
        compiled_only: Vec::new(),
    };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| ReportError::Csv(e.to_string()))?;
        let need =
            |v: Option<f64>, col: &str| v.ok_or_else(|| ReportError::Csv(format!("row {}: {col} is empty", i + 2)));
        let need_u =
            |v: Option<u64>, col: &str| v.ok_or_else(|| ReportError::Csv(format!("row {}: {col} is empty", i + 2)));
        let need_k = |v: Option<usize>| v.ok_or_else(|| ReportError::Csv(format!("row {}: k is empty", i + 2)));
        match row.section.as_str() {
            "meta" => {
                report.meta.insert(row.label, row.other.unwrap_or_default());
            }
            "codebleu" => report.codebleu.push(CodeBleuRow {
                label: row.label,
                params: row.other,
                n: need_u(row.n, "n")?,
                mean: need(row.mean, "mean")?,
                sd: need(row.sd, "sd")?,
                lower: need(row.lower, "lower")?,
                upper: need(row.upper, "upper")?,
            }),
            "compile" => report.compile.push(CompileRow {
                label: row.label,
                k: need_k(row.k)?,
                successes: need_u(row.successes, "successes")?,
                n: need_u(row.n, "n")?,
                rate: need(row.rate, "rate")?,
                lower: need(row.lower, "lower")?,
                upper: need(row.upper, "upper")?,
            }),
            "ztest" => report.ztests.push(ZTestRow {
                a: row.label,
                b: row.other.unwrap_or_default(),
                k: need_k(row.k)?,
                a_successes: need_u(row.successes, "successes")?,
                b_successes: need_u(row.successes_other, "successes_other")?,
                n_a: need_u(row.n, "n")?,
                n_b: need_u(row.n_other, "n_other")?,
                z: need(row.z, "z")?,
                p: need(row.p, "p")?,
            }),
            "compiled_only" => {
                let summary = match row.n {
                    None => None,
                    Some(n) => Some(SummaryCells {
                        n,
                        mean: need(row.mean, "mean")?,
                        sd: need(row.sd, "sd")?,
                        lower: need(row.lower, "lower")?,
                        upper: need(row.upper, "upper")?,
                        min: need(row.min, "min")?,
                        max: need(row.max, "max")?,
                    }),
                };
                report.compiled_only.push(CompiledOnlyRow { label: row.label, summary });
            }
            other => return Err(ReportError::Csv(format!("row {}: unknown section {other:?}", i + 2))),
        }
    }
    Ok(report)
}
