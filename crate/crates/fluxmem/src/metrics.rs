//! Text-overlap metrics. All of them tokenize through the one shared
//! routine so disagreements can never stem from tokenizer drift.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::page::PageId;
use crate::text::tokenize;

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Token-level F1 over multiset overlap. Both sides empty → 1; one side
/// empty or no overlap → 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = tokenize(prediction);
    let gold = tokenize(gold);
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let gold_counts = counts(&gold);
    let mut overlap = 0usize;
    let mut used: HashMap<&str, usize> = HashMap::new();
    for t in &pred {
        let have = gold_counts.get(t.as_str()).copied().unwrap_or(0);
        let used_so_far = used.entry(t.as_str()).or_insert(0);
        if *used_so_far < have {
            *used_so_far += 1;
            overlap += 1;
        }
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    harmonic(precision, recall)
}

/// BLEU-1: clipped unigram precision times the brevity penalty
/// BP = 1 if c > r else e^(1 − r/c). Zero for an empty candidate.
pub fn bleu1(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() {
        return 0.0;
    }
    let ref_counts = counts(&refr);
    let cand_counts = counts(&cand);
    let clipped: usize = cand_counts
        .iter()
        .map(|(t, c)| (*c).min(ref_counts.get(t).copied().unwrap_or(0)))
        .sum();
    let precision = clipped as f64 / cand.len() as f64;
    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * precision
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut map = HashMap::new();
    if tokens.len() < n || n == 0 {
        return map;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(|s| s.as_str()).collect();
        *map.entry(key).or_insert(0) += 1;
    }
    map
}

/// Clipped n-gram overlap precision/recall/F1 for n ∈ {1, 2}.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> (f64, f64, f64) {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let cand_grams = ngram_counts(&cand, n);
    let ref_grams = ngram_counts(&refr, n);
    let cand_total: usize = cand_grams.values().sum();
    let ref_total: usize = ref_grams.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return (0.0, 0.0, 0.0);
    }
    let overlap: usize = cand_grams
        .iter()
        .map(|(g, c)| (*c).min(ref_grams.get(g).copied().unwrap_or(0)))
        .sum();
    let precision = overlap as f64 / cand_total as f64;
    let recall = overlap as f64 / ref_total as f64;
    (precision, recall, harmonic(precision, recall))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            current[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(current[j]) };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// Longest-common-subsequence precision/recall/F1.
pub fn rouge_l(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    let precision = lcs / cand.len() as f64;
    let recall = lcs / refr.len() as f64;
    (precision, recall, harmonic(precision, recall))
}

/// Exact-match fraction after trim + lowercase.
pub fn accuracy(predictions: &[String], golds: &[String]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: golds.len() });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.trim().to_lowercase() == g.trim().to_lowercase())
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Evidence hit rate: |retrieved ∩ gold| / |gold|; 0 when no gold
/// evidence is defined.
pub fn mem_reward(retrieved: &[PageId], gold_evidence: &[PageId]) -> f64 {
    if gold_evidence.is_empty() {
        return 0.0;
    }
    let hits = gold_evidence.iter().filter(|id| retrieved.contains(id)).count();
    hits as f64 / gold_evidence.len() as f64
}
