//! Clipped n-gram precision BLEU and its keyword-weighted variant.
//!
//! Precisions for orders 2..=max_n that have no clipped match are smoothed
//! by adding one to both numerator and denominator; order 1 is never
//! smoothed, so a candidate sharing no token with the reference scores 0.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::token::{TokenKind, TokenSeq};
use super::SimilarityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    /// Clipped (weighted) match mass.
    pub matched: f64,
    /// Candidate (weighted) n-gram mass.
    pub total: f64,
    pub smoothed: bool,
}

impl Precision {
    pub fn value(&self) -> f64 {
        if self.smoothed {
            (self.matched + 1.0) / (self.total + 1.0)
        } else if self.total == 0.0 {
            0.0
        } else {
            self.matched / self.total
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: Vec<Precision>,
    pub brevity_penalty: f64,
    /// Set when the candidate has no tokens; the score is then 0.
    pub empty_candidate: bool,
}

pub fn ngram_bleu(candidate: &TokenSeq, reference: &TokenSeq, max_n: usize) -> Result<BleuScore, SimilarityError> {
    bleu_with_weights(candidate, reference, max_n, |_| 1.0)
}

/// BLEU where each n-gram counts with the mean weight of its tokens:
/// `keyword_weight` for keywords, 1 for everything else.
pub fn weighted_ngram_bleu(
    candidate: &TokenSeq,
    reference: &TokenSeq,
    max_n: usize,
    keyword_weight: f64,
) -> Result<BleuScore, SimilarityError> {
    if !keyword_weight.is_finite() || keyword_weight <= 0.0 {
        return Err(SimilarityError::BadKeywordWeight(keyword_weight));
    }
    bleu_with_weights(candidate, reference, max_n, |kind| if kind == TokenKind::Keyword { keyword_weight } else { 1.0 })
}

fn bleu_with_weights(
    candidate: &TokenSeq,
    reference: &TokenSeq,
    max_n: usize,
    weight: impl Fn(TokenKind) -> f64,
) -> Result<BleuScore, SimilarityError> {
    if max_n == 0 {
        return Err(SimilarityError::BadMaxN);
    }
    if candidate.is_empty() {
        return Ok(BleuScore { score: 0.0, precisions: Vec::new(), brevity_penalty: 0.0, empty_candidate: true });
    }
    let cand: Vec<&str> = candidate.texts().collect();
    let refr: Vec<&str> = reference.texts().collect();
    let cand_weights: Vec<f64> = candidate.tokens.iter().map(|t| weight(t.kind)).collect();

    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let ref_counts = count_ngrams(&refr, n);
        let mut cand_counts: BTreeMap<&[&str], (usize, f64)> = BTreeMap::new();
        for (i, gram) in cand.windows(n).enumerate() {
            let w = cand_weights[i..i + n].iter().sum::<f64>() / n as f64;
            cand_counts.entry(gram).or_insert((0, w)).0 += 1;
        }
        let mut matched = 0.0;
        let mut total = 0.0;
        for (gram, (count, w)) in &cand_counts {
            let clip = (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
            matched += w * clip as f64;
            total += w * *count as f64;
        }
        precisions.push(Precision { matched, total, smoothed: n >= 2 && matched == 0.0 });
    }

    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let brevity_penalty = if c > r { 1.0 } else { libm::exp(1.0 - r / c) };

    let score = if precisions.iter().any(|p| p.value() == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| libm::log(p.value())).sum::<f64>() / max_n as f64;
        (brevity_penalty * libm::exp(log_mean)).clamp(0.0, 1.0)
    };
    Ok(BleuScore { score, precisions, brevity_penalty, empty_candidate: false })
}

fn count_ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> BTreeMap<&'b [&'a str], usize> {
    let mut counts = BTreeMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}
