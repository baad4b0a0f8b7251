//! Surface-overlap and diversity metrics over token sequences: precision-style
//! n-gram overlap with a brevity penalty, unigram and longest-common-
//! subsequence F1, and distinct-n-gram ratios.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Highest n-gram order the overlap score considers.
pub const BLEU_MAX_ORDER: usize = 4;

/// Stand-in log-space floor for an order with candidate n-grams but zero
/// matches.
pub const BLEU_FLOOR: f64 = 1e-9;

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches(
    candidate: &HashMap<&[String], usize>,
    reference: &HashMap<&[String], usize>,
) -> usize {
    candidate
        .iter()
        .map(|(gram, c)| (*c).min(reference.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Overlap score of one candidate against one reference: geometric mean of
/// clipped n-gram precisions for orders 1 through [`BLEU_MAX_ORDER`], times a
/// brevity penalty. Orders where the candidate has no n-grams at all are left
/// out of the mean; an order with n-grams but no matches contributes the
/// floor precision. An empty candidate scores 0.
pub fn bleu(candidate: &[String], reference: &[String]) -> f64 {
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for n in 1..=BLEU_MAX_ORDER {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            continue;
        }
        let matched = clipped_matches(&cand, &ngram_counts(reference, n));
        let p = if matched == 0 { BLEU_FLOOR } else { matched as f64 / total as f64 };
        log_sum += p.ln();
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    let geo = (log_sum / used as f64).exp();
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * geo
}

fn f1(matched: f64, candidate_len: f64, reference_len: f64) -> f64 {
    if matched == 0.0 || candidate_len == 0.0 || reference_len == 0.0 {
        return 0.0;
    }
    let p = matched / candidate_len;
    let r = matched / reference_len;
    2.0 * p * r / (p + r)
}

/// Unigram overlap F1 with clipped counts.
pub fn rouge1_f(candidate: &[String], reference: &[String]) -> f64 {
    let matched = clipped_matches(&ngram_counts(candidate, 1), &ngram_counts(reference, 1));
    f1(matched as f64, candidate.len() as f64, reference.len() as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur[0] = 0;
    }
    prev[b.len()]
}

/// Longest-common-subsequence F1.
pub fn rouge_l_f(candidate: &[String], reference: &[String]) -> f64 {
    let l = lcs_len(candidate, reference);
    f1(l as f64, candidate.len() as f64, reference.len() as f64)
}

/// Unique-to-total n-gram ratio of one sequence; `None` when the sequence is
/// shorter than `n`.
pub fn distinct_n(tokens: &[String], n: usize) -> Option<f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    (total > 0).then(|| counts.len() as f64 / total as f64)
}

/// Distinct-n over a set of sequences: the mean of per-sequence ratios
/// (sequences with no n-grams are skipped) and the pooled ratio over all
/// n-grams together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinctSummary {
    pub mean: Option<f64>,
    pub pooled: Option<f64>,
}

pub fn distinct_summary(sequences: &[Vec<String>], n: usize) -> DistinctSummary {
    let mut per_seq = Vec::new();
    let mut pooled: HashMap<&[String], usize> = HashMap::new();
    for seq in sequences {
        if let Some(d) = distinct_n(seq, n) {
            per_seq.push(d);
        }
        for (gram, c) in ngram_counts(seq, n) {
            *pooled.entry(gram).or_insert(0) += c;
        }
    }
    let total: usize = pooled.values().sum();
    DistinctSummary {
        mean: (!per_seq.is_empty())
            .then(|| per_seq.iter().sum::<f64>() / per_seq.len() as f64),
        pooled: (total > 0).then(|| pooled.len() as f64 / total as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn short_candidate_overlap_is_the_brevity_penalty() {
        // Perfect 1- and 2-gram precision, orders 3 and 4 excluded, so the
        // score reduces to the brevity penalty exp(1 - 3/2).
        let score = bleu(&toks("the cat"), &toks("the cat sat"));
        assert!((score - 0.6065306597126334).abs() < 1e-12, "{score}");
    }

    #[test]
    fn identical_sequences_score_one() {
        let s = toks("the cat sat down");
        assert!((bleu(&s, &s) - 1.0).abs() < 1e-12);
        assert!((rouge1_f(&s, &s) - 1.0).abs() < 1e-12);
        assert!((rouge_l_f(&s, &s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_unigrams_hit_the_floor() {
        let score = bleu(&toks("dog"), &toks("cat"));
        assert!((score - BLEU_FLOOR).abs() < 1e-21, "{score}");
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(bleu(&[], &toks("the cat")), 0.0);
        assert_eq!(rouge1_f(&[], &toks("the cat")), 0.0);
        assert_eq!(rouge_l_f(&[], &toks("the cat")), 0.0);
    }

    #[test]
    fn clipping_caps_repeated_candidate_tokens() {
        // "the the the" vs "the cat": matches clip at the reference count 1.
        let cand = toks("the the the");
        let reference = toks("the cat");
        let matched = clipped_matches(&ngram_counts(&cand, 1), &ngram_counts(&reference, 1));
        assert_eq!(matched, 1);
    }

    #[test]
    fn unigram_f1_hand_values() {
        let f = rouge1_f(&toks("the cat"), &toks("the cat sat"));
        assert!((f - 0.8).abs() < 1e-12, "{f}");
        let f = rouge1_f(&toks("cat"), &toks("the cat"));
        assert!((f - 2.0 / 3.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn subsequence_f1_hand_value() {
        // LCS of "a b c" and "a x c" is 2, so precision and recall are both
        // 2/3 and F1 equals 2/3.
        let f = rouge_l_f(&toks("a b c"), &toks("a x c"));
        assert!((f - 2.0 / 3.0).abs() < 1e-12, "{f}");
        assert_eq!(lcs_len(&toks("a b c d"), &toks("b d")), 2);
        assert_eq!(lcs_len(&toks("a b"), &toks("c d")), 0);
    }

    #[test]
    fn distinct_ratio_hand_values() {
        assert_eq!(distinct_n(&toks("a a a"), 1), Some(1.0 / 3.0));
        assert_eq!(distinct_n(&toks("a a a"), 2), Some(0.5));
        assert_eq!(distinct_n(&toks("a a a"), 3), Some(1.0));
        assert_eq!(distinct_n(&toks("a a a"), 4), None);
    }

    #[test]
    fn distinct_summary_separates_mean_and_pooled() {
        let seqs = vec![toks("a b"), toks("a b"), toks("c")];
        let d1 = distinct_summary(&seqs, 1);
        // Each sequence is internally distinct, but pooling sees "a" and "b"
        // twice across five tokens.
        assert_eq!(d1.mean, Some(1.0));
        assert_eq!(d1.pooled, Some(3.0 / 5.0));
        let d2 = distinct_summary(&seqs, 2);
        assert_eq!(d2.mean, Some(1.0));
        assert_eq!(d2.pooled, Some(0.5));
        let empty = distinct_summary(&[], 1);
        assert_eq!(empty.mean, None);
        assert_eq!(empty.pooled, None);
    }
}
