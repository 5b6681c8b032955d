//! Token-level detection: the Min-K% probability score and the word n-gram
//! overlap baseline.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinKScore {
    /// Mean of the selected log-probs (≤ 0).
    pub value: f64,
    /// Number of tokens averaged.
    pub k_used: usize,
}

/// Number of tokens the Min-K% score averages for a sequence of length `n`.
pub fn min_k_count(n: usize, k_percent: f64) -> usize {
    ((k_percent * n as f64 / 100.0).ceil() as usize).clamp(1, n.max(1))
}

/// Averages the lowest `⌈K·n/100⌉` token log-probabilities.
///
/// The selected values are summed in ascending order, so the result is
/// bitwise equal to sorting the whole sequence and averaging its prefix.
pub fn min_k_score(logprobs: &[f64], k_percent: f64) -> Result<MinKScore> {
    if logprobs.is_empty() {
        return Err(Error::Empty("token log-prob sequence"));
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::invalid(format!("k_percent must be in (0, 100], got {k_percent}")));
    }
    if let Some(bad) = logprobs.iter().find(|x| !x.is_finite() || **x > 0.0) {
        return Err(Error::invalid(format!("log-prob {bad} is not a finite value <= 0")));
    }
    let k = min_k_count(logprobs.len(), k_percent);
    let mut scratch = logprobs.to_vec();
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
        scratch.truncate(k);
    }
    scratch.sort_unstable_by(f64::total_cmp);
    let sum: f64 = scratch.iter().sum();
    Ok(MinKScore { value: sum / k as f64, k_used: k })
}

/// Level-1 decision.
///
/// By default `tau1` bounds the mean negative log-prob of the bottom-K set:
/// the sample is flagged when `−value ≤ tau1` (memorized text is uniformly
/// likely). With `literal = true` the raw score is compared instead
/// (`value > tau1`).
pub fn flag_token_level(score: &MinKScore, tau1: f64, literal: bool) -> bool {
    if literal {
        score.value > tau1
    } else {
        -score.value <= tau1
    }
}

/// Lowercases, splits on Unicode whitespace and strips surrounding
/// punctuation. Tokens that are pure punctuation disappear.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn ngram_set(tokens: &[String], n: usize) -> HashSet<&[String]> {
    tokens.windows(n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramOverlap {
    /// Fraction of `a`'s distinct n-grams that also occur in `b`.
    pub ratio: f64,
    pub matched: bool,
}

/// Distinct word n-gram overlap of `a` (the synthetic side) against `b`.
///
/// When either side has fewer than `n` tokens the full token sequences are
/// compared for equality instead.
pub fn ngram_overlap(a: &str, b: &str, n: usize) -> Result<NgramOverlap> {
    if n < 1 {
        return Err(Error::invalid("n-gram size must be >= 1"));
    }
    let ta = word_tokens(a);
    let tb = word_tokens(b);
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Empty("text has no tokens"));
    }
    if ta.len() < n || tb.len() < n {
        let equal = ta == tb;
        return Ok(NgramOverlap { ratio: if equal { 1.0 } else { 0.0 }, matched: equal });
    }
    let ga = ngram_set(&ta, n);
    let gb = ngram_set(&tb, n);
    let shared = ga.iter().filter(|g| gb.contains(*g)).count();
    let ratio = shared as f64 / ga.len() as f64;
    Ok(NgramOverlap { ratio, matched: shared > 0 })
}

/// All benchmark n-grams in one set, so "does `a` overlap any benchmark
/// item" is a single pass over `a`. Agrees with [`ngram_overlap`] applied
/// pairwise.
#[derive(Debug, Clone)]
pub struct NgramIndex {
    n: usize,
    grams: HashSet<Vec<String>>,
    short: HashSet<Vec<String>>,
}

impl NgramIndex {
    pub fn new<'a>(texts: impl IntoIterator<Item = &'a str>, n: usize) -> Self {
        let mut grams = HashSet::new();
        let mut short = HashSet::new();
        for text in texts {
            let tokens = word_tokens(text);
            if tokens.is_empty() {
                continue;
            }
            if tokens.len() < n {
                short.insert(tokens);
            } else {
                grams.extend(tokens.windows(n).map(<[String]>::to_vec));
            }
        }
        NgramIndex { n, grams, short }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matches(&self, text: &str) -> bool {
        let tokens = word_tokens(text);
        if tokens.len() < self.n {
            return !tokens.is_empty() && self.short.contains(&tokens);
        }
        tokens.windows(self.n).any(|w| self.grams.contains(w))
    }
}
