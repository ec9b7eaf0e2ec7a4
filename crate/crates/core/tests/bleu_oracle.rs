//! BLEU checked against hand-enumerated n-gram counts and against a naive
//! reimplementation on random token sequences.

use decompeval_core::similarity::bleu::{ngram_bleu, weighted_ngram_bleu};
use decompeval_core::similarity::token::{Token, TokenKind, TokenSeq};
use proptest::prelude::*;

fn seq(items: &[(&str, TokenKind)]) -> TokenSeq {
    TokenSeq { tokens: items.iter().map(|(t, k)| Token { text: t.to_string(), kind: *k }).collect() }
}

fn ids(words: &[&str]) -> TokenSeq {
    seq(&words.iter().map(|w| (*w, TokenKind::Identifier)).collect::<Vec<_>>())
}

#[test]
fn one_substitution_at_the_end() {
    // 1-grams 3/4, 2-grams 2/3, 3-grams 1/2, 4-grams 0/1 smoothed to 1/2.
    let r = ngram_bleu(&ids(&["a", "b", "c", "d"]), &ids(&["a", "b", "c", "e"]), 4).unwrap();
    let want = (0.75f64 * (2.0 / 3.0) * 0.5 * 0.5).powf(0.25);
    assert!((r.score - want).abs() < 1e-12, "{}", r.score);
    assert!(r.precisions[3].smoothed);
    assert!(!r.precisions[2].smoothed);
    assert_eq!(r.brevity_penalty, 1.0);
}

#[test]
fn short_candidate_pays_brevity_penalty() {
    let r = ngram_bleu(&ids(&["a", "b"]), &ids(&["a", "b", "c", "d"]), 2).unwrap();
    assert!((r.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
    assert!((r.score - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn longer_candidate_has_no_penalty_but_lower_precision() {
    // 1-grams: a,b,c match, x does not: 3/4. 2-grams: ab, bc match of ab,bc,cx: 2/3.
    let r = ngram_bleu(&ids(&["a", "b", "c", "x"]), &ids(&["a", "b", "c"]), 2).unwrap();
    assert_eq!(r.brevity_penalty, 1.0);
    assert!((r.score - (0.75f64 * 2.0 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn keyword_weighting_by_hand() {
    // Weights: if=5, x=1, y=1. Unigram mass matched 5+1 of 7; bigram
    // (if x) has weight 3 and matches, (x y) weight 1 does not: 3 of 4.
    let cand = seq(&[("if", TokenKind::Keyword), ("x", TokenKind::Identifier), ("y", TokenKind::Identifier)]);
    let refr = seq(&[("if", TokenKind::Keyword), ("x", TokenKind::Identifier), ("z", TokenKind::Identifier)]);
    let r = weighted_ngram_bleu(&cand, &refr, 2, 5.0).unwrap();
    assert!((r.precisions[0].matched - 6.0).abs() < 1e-12);
    assert!((r.precisions[0].total - 7.0).abs() < 1e-12);
    assert!((r.score - (6.0f64 / 7.0 * 0.75).sqrt()).abs() < 1e-12);
    // Unweighted, the same pair scores sqrt(2/3 * 1/2).
    let plain = ngram_bleu(&cand, &refr, 2).unwrap();
    assert!((plain.score - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-12);
}

#[test]
fn repeated_tokens_are_clipped() {
    // the the the the vs the cat: unigram clip 1/4, bigram (the the)×3 vs none.
    let r = ngram_bleu(&ids(&["the"; 4]), &ids(&["the", "cat"]), 2).unwrap();
    assert_eq!(r.precisions[0].matched, 1.0);
    assert!((r.score - (0.25f64 * 0.25).sqrt()).abs() < 1e-12);
}

mod naive {
    pub fn bleu(c: &[String], r: &[String], w: &[f64], max_n: usize) -> f64 {
        if c.is_empty() {
            return 0.0;
        }
        let mut logs = 0.0;
        for n in 1..=max_n {
            let mut matched = 0.0;
            let mut total = 0.0;
            let mut done: Vec<&[String]> = Vec::new();
            for i in 0..c.len().saturating_sub(n - 1) {
                let g = &c[i..i + n];
                if done.contains(&g) {
                    continue;
                }
                done.push(g);
                let cc = c.windows(n).filter(|x| *x == g).count();
                let rc = r.windows(n).filter(|x| *x == g).count();
                let wt = w[i..i + n].iter().sum::<f64>() / n as f64;
                matched += wt * cc.min(rc) as f64;
                total += wt * cc as f64;
            }
            let p = if n >= 2 && matched == 0.0 {
                (matched + 1.0) / (total + 1.0)
            } else if total == 0.0 {
                0.0
            } else {
                matched / total
            };
            if p == 0.0 {
                return 0.0;
            }
            logs += p.ln();
        }
        let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
        bp * (logs / max_n as f64).exp()
    }
}

fn token_strategy() -> impl Strategy<Value = Vec<(String, bool)>> {
    prop::collection::vec(
        (prop::sample::select(vec!["a", "b", "c", "if", "for"]), any::<bool>())
            .prop_map(|(t, _)| (t.to_string(), t == "if" || t == "for")),
        0..14,
    )
}

fn to_seq(v: &[(String, bool)]) -> TokenSeq {
    TokenSeq {
        tokens: v
            .iter()
            .map(|(t, kw)| Token {
                text: t.clone(),
                kind: if *kw { TokenKind::Keyword } else { TokenKind::Identifier },
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn agrees_with_naive(c in token_strategy(), r in token_strategy(), max_n in 1usize..5, kw in 1.0f64..6.0) {
        let texts = |v: &[(String, bool)]| v.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
        let (ct, rt) = (texts(&c), texts(&r));
        let ones = vec![1.0; c.len()];
        let weights: Vec<f64> = c.iter().map(|x| if x.1 { kw } else { 1.0 }).collect();

        let got = ngram_bleu(&to_seq(&c), &to_seq(&r), max_n).unwrap().score;
        prop_assert!((got - naive::bleu(&ct, &rt, &ones, max_n).clamp(0.0, 1.0)).abs() < 1e-12);
        let got = weighted_ngram_bleu(&to_seq(&c), &to_seq(&r), max_n, kw).unwrap().score;
        prop_assert!((got - naive::bleu(&ct, &rt, &weights, max_n).clamp(0.0, 1.0)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn identity_is_one(c in token_strategy(), max_n in 1usize..5) {
        prop_assume!(!c.is_empty());
        let s = to_seq(&c);
        prop_assert!((ngram_bleu(&s, &s, max_n).unwrap().score - 1.0).abs() < 1e-12);
        prop_assert!((weighted_ngram_bleu(&s, &s, max_n, 5.0).unwrap().score - 1.0).abs() < 1e-12);
    }
}
