//! Answer normalization, exact match and token-overlap scores.
//!
//! Normalization lowercases, drops ASCII punctuation, removes the articles
//! `a`, `an`, `the` and collapses whitespace.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl TokenScores {
    fn all(v: f64) -> Self {
        Self {
            f1: v,
            precision: v,
            recall: v,
        }
    }
}

/// Multiset overlap of normalized tokens. Both sides empty scores 1, one
/// side empty scores 0.
pub fn token_f1(pred: &str, gold: &str) -> TokenScores {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return TokenScores::all(1.0),
        (true, false) | (false, true) => return TokenScores::all(0.0),
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return TokenScores::all(0.0);
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    TokenScores {
        f1: 2.0 * precision * recall / (precision + recall),
        precision,
        recall,
    }
}

/// Percentage with one decimal, halves rounded away from zero.
pub fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}
