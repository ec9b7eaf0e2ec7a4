//! CodeBLEU: n-gram, keyword-weighted n-gram, AST subtree and data-flow
//! agreement between a candidate and a reference, combined linearly.
//!
//! Parsing is left to the caller: this module scores [`Analysis`] values
//! (tokens, optional tree, def-use edges) so it stays independent of any
//! particular parser.

pub mod bleu;
pub mod dataflow;
pub mod token;
pub mod tree;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;
use dataflow::DefUseEdge;
use token::TokenSeq;
use tree::SyntaxTree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("max_n must be at least 1")]
    BadMaxN,
    #[error("keyword weight must be positive and finite, got {0}")]
    BadKeywordWeight(f64),
    #[error("component weights must be non-negative with a positive sum, got {0:?}")]
    BadWeights([f64; 4]),
    #[error("reference does not parse under the {0} grammar")]
    ReferenceUnparseable(Language),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeBleuConfig {
    /// (ngram, weighted ngram, AST, data-flow); normalized to sum to 1.
    pub weights: [f64; 4],
    pub max_n: usize,
    pub keyword_weight: f64,
    pub language: Language,
}

impl Default for CodeBleuConfig {
    fn default() -> Self {
        CodeBleuConfig { weights: [0.25; 4], max_n: 4, keyword_weight: 5.0, language: Language::Dart }
    }
}

impl CodeBleuConfig {
    /// Default weights, scoring `language`.
    pub fn for_language(language: Language) -> Self {
        CodeBleuConfig { language, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.max_n == 0 {
            return Err(SimilarityError::BadMaxN);
        }
        if !self.keyword_weight.is_finite() || self.keyword_weight <= 0.0 {
            return Err(SimilarityError::BadKeywordWeight(self.keyword_weight));
        }
        let ok = self.weights.iter().all(|w| *w >= 0.0 && w.is_finite()) && self.weights.iter().sum::<f64>() > 0.0;
        if !ok {
            return Err(SimilarityError::BadWeights(self.weights));
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> [f64; 4] {
        let sum: f64 = self.weights.iter().sum();
        self.weights.map(|w| w / sum)
    }
}

/// Effective weights for one pair: the data-flow weight is redistributed
/// over the other three when the reference has no def-use edges.
pub fn effective_weights(config: &CodeBleuConfig, dataflow_present: bool) -> [f64; 4] {
    let w = config.normalized_weights();
    if dataflow_present {
        return w;
    }
    let rest = w[0] + w[1] + w[2];
    if rest == 0.0 {
        return [0.0; 4];
    }
    [w[0] / rest, w[1] / rest, w[2] / rest, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuReport {
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub ast_match: f64,
    /// `None` when the reference has no def-use edges.
    pub dataflow_match: Option<f64>,
    /// Weights actually applied to the four components.
    pub weights: [f64; 4],
    pub combined: f64,
    pub candidate_parsed: bool,
}

impl CodeBleuReport {
    pub fn components(&self) -> [f64; 4] {
        [self.ngram, self.weighted_ngram, self.ast_match, self.dataflow_match.unwrap_or(0.0)]
    }
}

/// Parser output for one side of a comparison.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub tokens: TokenSeq,
    /// `None` when the text is empty or does not parse.
    pub tree: Option<SyntaxTree>,
    pub edges: Vec<DefUseEdge>,
}

pub fn score(
    candidate: &Analysis,
    reference: &Analysis,
    config: &CodeBleuConfig,
) -> Result<CodeBleuReport, SimilarityError> {
    config.validate()?;
    let Some(reference_tree) = reference.tree.as_ref() else {
        return Err(SimilarityError::ReferenceUnparseable(config.language));
    };
    let ngram = bleu::ngram_bleu(&candidate.tokens, &reference.tokens, config.max_n)?.score;
    let weighted_ngram =
        bleu::weighted_ngram_bleu(&candidate.tokens, &reference.tokens, config.max_n, config.keyword_weight)?.score;

    let candidate_parsed = candidate.tree.is_some();
    let ast_match = candidate.tree.as_ref().map_or(0.0, |t| tree::ast_match(t, reference_tree));
    let dataflow_match =
        dataflow::dataflow_match(&candidate.edges, &reference.edges).map(|s| if candidate_parsed { s } else { 0.0 });

    let weights = effective_weights(config, dataflow_match.is_some());
    let mut report =
        CodeBleuReport { ngram, weighted_ngram, ast_match, dataflow_match, weights, combined: 0.0, candidate_parsed };
    report.combined = weights.iter().zip(report.components()).map(|(w, c)| w * c).sum::<f64>().clamp(0.0, 1.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights_are_uniform() {
        let c = CodeBleuConfig::default();
        assert_eq!(c.normalized_weights(), [0.25; 4]);
        assert_eq!(effective_weights(&c, false), [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn weights_are_normalized() {
        let c = CodeBleuConfig { weights: [1.0, 1.0, 2.0, 4.0], ..Default::default() };
        assert_eq!(c.normalized_weights(), [0.125, 0.125, 0.25, 0.5]);
    }

    #[test]
    fn invalid_configs() {
        let mut c = CodeBleuConfig { weights: [0.0; 4], ..CodeBleuConfig::default() };
        assert!(c.validate().is_err());
        c.weights = [-1.0, 1.0, 1.0, 1.0];
        assert!(c.validate().is_err());
        let c = CodeBleuConfig { max_n: 0, ..Default::default() };
        assert_eq!(c.validate(), Err(SimilarityError::BadMaxN));
    }

    #[test]
    fn unparseable_reference_is_an_error() {
        let empty = Analysis { tokens: TokenSeq::default(), tree: None, edges: Vec::new() };
        assert!(matches!(
            score(&empty, &empty, &CodeBleuConfig::default()),
            Err(SimilarityError::ReferenceUnparseable(_))
        ));
    }
}
