//! Answer and retrieval metrics. All pure functions.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, delete ASCII punctuation, drop the articles a/an/the and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact match after normalisation, or either normalised string being a
/// contiguous (character-level) substring of the other. An empty
/// normalised string only matches another empty one.
pub fn soft_em(prediction: &str, gold: &str) -> bool {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    if p == g {
        return true;
    }
    if p.is_empty() || g.is_empty() {
        return false;
    }
    p.contains(&g) || g.contains(&p)
}

/// SQuAD-style token F1 over normalised tokens with multiset overlap.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    Ok(())
}

/// 1 when any of the top-`k` entries (given by session id, in rank order)
/// comes from a gold evidence session, else 0.
pub fn recall_at_k<S: AsRef<str>>(ranked_sessions: &[S], gold: &HashSet<String>, k: usize) -> Result<f64> {
    check_k(k)?;
    let hit = ranked_sessions
        .iter()
        .take(k)
        .any(|s| gold.contains(s.as_ref()));
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Binary-relevance nDCG@k. An entry is relevant when its session is gold;
/// the ideal ordering uses every relevant entry in `ranked_sessions`.
pub fn ndcg_at_k<S: AsRef<str>>(ranked_sessions: &[S], gold: &HashSet<String>, k: usize) -> Result<f64> {
    check_k(k)?;
    let rel: Vec<bool> = ranked_sessions.iter().map(|s| gold.contains(s.as_ref())).collect();
    let dcg: f64 = rel
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, r)| **r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let relevant = rel.iter().filter(|r| **r).count().min(k);
    if relevant == 0 {
        return Ok(0.0);
    }
    let idcg: f64 = (0..relevant).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    Ok(dcg / idcg)
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_ci(successes: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::validation("wilson interval needs n >= 1"));
    }
    if successes > n {
        return Err(Error::validation(format!(
            "successes {successes} exceed n {n}"
        )));
    }
    wilson_interval(successes as f64 / n as f64, n, z)
}

/// Wilson interval from an observed proportion; also used for mean F1.
pub fn wilson_interval(p: f64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::validation("wilson interval needs n >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("proportion {p} outside [0, 1]")));
    }
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}
