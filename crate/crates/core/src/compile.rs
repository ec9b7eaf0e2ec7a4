//! compile@k bookkeeping: the attempt schedule, per-item evaluation with
//! short-circuiting and memoization, and the final tally.
//!
//! The compiler itself is injected as a closure, so everything here is pure.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::DecodingPolicy;
use crate::stats::{self, IntervalEstimate, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no items to evaluate")]
    NoItems,
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptPlan {
    pub attempts: Vec<DecodingPolicy>,
}

impl AttemptPlan {
    pub fn k(&self) -> usize {
        self.attempts.len()
    }

    pub fn beams(&self) -> Vec<u32> {
        self.attempts.iter().map(|p| p.beam).collect()
    }
}

/// Number of beam-1 attempts in a plan of size `k`: three fifths, rounded up.
pub fn beam_one_attempts(k: usize) -> usize {
    (3 * k).div_ceil(5)
}

/// k=5 gives beams [1,1,1,2,2] and k=1 gives [1]. Every attempt decodes at
/// temperature 0.2 and top-p 0.99.
pub fn attempt_schedule(k: usize) -> Result<AttemptPlan, CompileError> {
    if k == 0 {
        return Err(CompileError::ZeroK);
    }
    let ones = beam_one_attempts(k);
    let base = DecodingPolicy::parity();
    let attempts = (0..k).map(|i| base.with_beam(if i < ones { 1 } else { 2 })).collect();
    Ok(AttemptPlan { attempts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub success: bool,
    pub diagnostics: String,
    pub wall_time_secs: f64,
    #[serde(default)]
    pub timed_out: bool,
}

impl CompileOutcome {
    pub fn failure(diagnostics: impl Into<String>) -> Self {
        CompileOutcome { success: false, diagnostics: diagnostics.into(), wall_time_secs: 0.0, timed_out: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub attempt_index: usize,
    pub outcome: CompileOutcome,
    /// Copied from an earlier attempt with identical code.
    #[serde(default)]
    pub memoized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: String,
    pub first_success_attempt: Option<usize>,
    pub outcomes: Vec<AttemptOutcome>,
    /// Set when the item could not be evaluated at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ItemResult {
    pub fn succeeded_within(&self, k: usize) -> bool {
        self.first_success_attempt.is_some_and(|i| i < k)
    }
}

/// Checks the first `k` hypotheses of one item in order. With
/// `short_circuit` the remaining attempts are skipped after the first
/// success. Identical code within the item is compiled once.
pub fn evaluate_item<S: AsRef<str>>(
    item_id: &str,
    hypotheses: &[S],
    k: usize,
    short_circuit: bool,
    mut check: impl FnMut(&str) -> CompileOutcome,
) -> ItemResult {
    if hypotheses.is_empty() {
        return ItemResult {
            item_id: item_id.to_string(),
            first_success_attempt: None,
            outcomes: Vec::new(),
            diagnostic: Some("no hypotheses supplied".to_string()),
        };
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut outcomes: Vec<AttemptOutcome> = Vec::new();
    let mut first = None;
    for (i, h) in hypotheses.iter().take(k).enumerate() {
        let code = h.as_ref();
        let attempt = match seen.get(code) {
            Some(&j) => AttemptOutcome { attempt_index: i, outcome: outcomes[j].outcome.clone(), memoized: true },
            None => {
                seen.insert(code, outcomes.len());
                AttemptOutcome { attempt_index: i, outcome: check(code), memoized: false }
            }
        };
        let ok = attempt.outcome.success;
        outcomes.push(attempt);
        if ok && first.is_none() {
            first = Some(i);
            if short_circuit {
                break;
            }
        }
    }
    let diagnostic =
        (hypotheses.len() < k).then(|| alloc::format!("only {} of {} hypotheses supplied", hypotheses.len(), k));
    ItemResult { item_id: item_id.to_string(), first_success_attempt: first, outcomes, diagnostic }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileAtKResult {
    pub k: usize,
    /// Sorted by item id.
    pub per_item: Vec<ItemResult>,
    pub successes: u64,
    pub n: u64,
    pub rate: f64,
    pub interval: IntervalEstimate,
}

impl CompileAtKResult {
    /// Successes counting only the first `k` attempts (`k` ≤ `self.k`).
    pub fn successes_at(&self, k: usize) -> u64 {
        self.per_item.iter().filter(|r| r.succeeded_within(k)).count() as u64
    }

    pub fn rate_at(&self, k: usize) -> f64 {
        self.successes_at(k) as f64 / self.n as f64
    }

    pub fn interval_at(&self, k: usize) -> Result<IntervalEstimate, StatsError> {
        stats::wilson_interval(self.successes_at(k), self.n, self.interval.confidence)
    }

    /// A result restricted to the first `k` attempts of each item.
    pub fn truncated(&self, k: usize) -> Result<CompileAtKResult, CompileError> {
        if k == 0 {
            return Err(CompileError::ZeroK);
        }
        let k = k.min(self.k);
        let per_item = self
            .per_item
            .iter()
            .map(|r| ItemResult {
                item_id: r.item_id.clone(),
                first_success_attempt: r.first_success_attempt.filter(|&i| i < k),
                outcomes: r.outcomes.iter().filter(|o| o.attempt_index < k).cloned().collect(),
                diagnostic: r.diagnostic.clone(),
            })
            .collect();
        tally(k, per_item, self.interval.confidence)
    }
}

/// Aggregates item results into a rate with a Wilson interval. Items are
/// reordered by id so the result does not depend on completion order.
pub fn tally(k: usize, mut per_item: Vec<ItemResult>, confidence: f64) -> Result<CompileAtKResult, CompileError> {
    if k == 0 {
        return Err(CompileError::ZeroK);
    }
    if per_item.is_empty() {
        return Err(CompileError::NoItems);
    }
    per_item.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    if let Some(w) = per_item.windows(2).find(|w| w[0].item_id == w[1].item_id) {
        return Err(CompileError::DuplicateItem(w[0].item_id.clone()));
    }
    let n = per_item.len() as u64;
    let successes = per_item.iter().filter(|r| r.succeeded_within(k)).count() as u64;
    let interval = stats::wilson_interval(successes, n, confidence)?;
    Ok(CompileAtKResult { k, per_item, successes, n, rate: successes as f64 / n as f64, interval })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ok() -> CompileOutcome {
        CompileOutcome { success: true, diagnostics: String::new(), wall_time_secs: 0.0, timed_out: false }
    }

    fn by_prefix(code: &str) -> CompileOutcome {
        if code.starts_with("ok") {
            ok()
        } else {
            CompileOutcome::failure("bad")
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(attempt_schedule(5).unwrap().beams(), [1, 1, 1, 2, 2]);
        assert_eq!(attempt_schedule(1).unwrap().beams(), [1]);
        assert_eq!(attempt_schedule(0), Err(CompileError::ZeroK));
        assert_eq!(attempt_schedule(10).unwrap().beams().iter().filter(|&&b| b == 1).count(), 6);
        for p in attempt_schedule(5).unwrap().attempts {
            assert_eq!((p.temperature, p.top_p), (0.2, 0.99));
        }
    }

    #[test]
    fn short_circuit_and_memo() {
        let mut calls = 0;
        let r = evaluate_item("a", &["bad", "bad", "ok1", "ok2"], 5, true, |c| {
            calls += 1;
            by_prefix(c)
        });
        assert_eq!(calls, 2);
        assert_eq!(r.first_success_attempt, Some(2));
        assert_eq!(r.outcomes.len(), 3);
        assert!(r.outcomes[1].memoized);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn empty_item_fails() {
        let r = evaluate_item::<&str>("z", &[], 5, true, |_| ok());
        assert_eq!(r.first_success_attempt, None);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn surplus_hypotheses_ignored() {
        let r = evaluate_item("a", &["bad", "ok"], 1, false, by_prefix);
        assert_eq!(r.first_success_attempt, None);
        assert_eq!(r.outcomes.len(), 1);
    }

    #[test]
    fn tally_and_rates() {
        let items = vec![
            evaluate_item("b", &["bad", "ok"], 5, true, by_prefix),
            evaluate_item("a", &["ok"], 5, true, by_prefix),
            evaluate_item("c", &["bad"], 5, true, by_prefix),
        ];
        let r = tally(5, items, 0.95).unwrap();
        assert_eq!(r.per_item[0].item_id, "a");
        assert_eq!((r.successes, r.n), (2, 3));
        assert_eq!(r.successes_at(1), 1);
        assert!(r.rate >= r.rate_at(1));
        let one = r.truncated(1).unwrap();
        assert_eq!(one.successes, 1);
        assert_eq!(one.per_item[1].outcomes.len(), 1);
    }

    #[test]
    fn tally_rejects_duplicates() {
        let items =
            vec![evaluate_item("a", &["ok"], 1, true, by_prefix), evaluate_item("a", &["ok"], 1, true, by_prefix)];
        assert_eq!(tally(1, items, 0.95), Err(CompileError::DuplicateItem("a".into())));
    }
}
