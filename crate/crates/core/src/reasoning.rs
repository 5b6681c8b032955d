//! Reasoning-pattern detection over chain-of-thought traces.
//!
//! A trace is split into steps by surface rules, and two traces are compared
//! through three Jaccard views:
//!
//! - structure: the set of `(position bucket, length bucket, connective)`
//!   triples over all steps;
//! - steps: per-step word-bigram Jaccard under a proportional alignment;
//! - arguments: numbers, single-letter variables and operators used anywhere.
//!
//! The three views are combined with weights `α, β, γ` summing to one.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::ThresholdConfig;
use crate::error::{Error, Result};
use crate::model::{Dataset, TextSample};

pub const CONNECTIVES: [&str; 8] =
    ["therefore", "thus", "so", "hence", "because", "since", "then", "implies"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `Step <n>:` / `Step <n>.` markers.
    StepMarkers,
    /// `1.` / `1)` list prefixes numbered consecutively from 1.
    NumberedList,
    Newlines,
    Sentences,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    /// Step text with the marker removed and whitespace collapsed.
    pub raw: String,
    /// Lowercased word tokens.
    pub tokens: Vec<String>,
    /// Adjacent token pairs joined by a space; a one-token step contributes
    /// the token itself so it still has a comparable feature.
    pub bigrams: BTreeSet<String>,
    pub connectives: BTreeSet<&'static str>,
    pub args: BTreeSet<String>,
}

type Signature = BTreeSet<(u8, u8, Option<&'static str>)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningTrace {
    pub steps: Vec<Step>,
    pub rule: SplitRule,
    signature: Signature,
    args: BTreeSet<String>,
}

impl ReasoningTrace {
    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    /// Union of the argument sets of all steps.
    pub fn args(&self) -> &BTreeSet<String> {
        &self.args
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn step_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bstep\s*\d+\s*[:.]").unwrap())
}

fn list_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\s)(\d+)[.)](?:\s|$)").unwrap())
}

fn sentence_end_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?](?:\s+|$)").unwrap())
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:[.,]\d+)*").unwrap())
}

/// Splits `text` at the given marker spans, dropping the markers themselves.
fn split_at_markers(text: &str, spans: &[(usize, usize)]) -> Vec<String> {
    let mut parts = Vec::with_capacity(spans.len() + 1);
    parts.push(text[..spans[0].0].to_string());
    for (i, &(_, end)) in spans.iter().enumerate() {
        let stop = spans.get(i + 1).map_or(text.len(), |s| s.0);
        parts.push(text[end..stop].to_string());
    }
    parts
}

fn step_marker_spans(text: &str) -> Vec<(usize, usize)> {
    step_marker_re().find_iter(text).map(|m| (m.start(), m.end())).collect()
}

fn list_marker_spans(text: &str) -> Vec<(usize, usize)> {
    let mut expected = 1u64;
    let mut spans = Vec::new();
    for caps in list_marker_re().captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let number: u64 = caps[1].parse().unwrap_or(0);
        if number == expected {
            let start = caps.get(1).unwrap().start();
            spans.push((start, whole.end()));
            expected += 1;
        }
    }
    spans
}

fn sentence_parts(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut start = 0;
    for m in sentence_end_re().find_iter(text) {
        // keep the terminal punctuation with its sentence
        parts.push(text[start..m.start() + 1].to_string());
        start = m.end();
    }
    if start < text.len() {
        parts.push(text[start..].to_string());
    }
    parts
}

fn split_with(text: &str, rule: SplitRule) -> Vec<String> {
    match rule {
        SplitRule::StepMarkers => {
            let spans = step_marker_spans(text);
            if spans.is_empty() {
                vec![text.to_string()]
            } else {
                split_at_markers(text, &spans)
            }
        }
        SplitRule::NumberedList => {
            let spans = list_marker_spans(text);
            if spans.is_empty() {
                vec![text.to_string()]
            } else {
                split_at_markers(text, &spans)
            }
        }
        SplitRule::Newlines => text.lines().map(str::to_string).collect(),
        SplitRule::Sentences => sentence_parts(text),
    }
}

/// Picks the highest-priority rule that applies to `text`.
pub fn detect_rule(text: &str) -> SplitRule {
    if !step_marker_spans(text).is_empty() {
        SplitRule::StepMarkers
    } else if list_marker_spans(text).len() >= 2 {
        SplitRule::NumberedList
    } else if text.lines().filter(|l| !l.trim().is_empty()).count() >= 2 {
        SplitRule::Newlines
    } else {
        SplitRule::Sentences
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn step_tokens(raw: &str) -> Vec<String> {
    let lower = raw.to_lowercase();
    word_re().find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

fn is_number(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_ascii_digit())
        && tok.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

/// Numbers, single-letter identifiers (other than the words "a" and "i") and
/// arithmetic/comparison operators. A `-` between two letters is a hyphen,
/// not an operator.
fn step_args(raw: &str, tokens: &[String]) -> BTreeSet<String> {
    let mut args: BTreeSet<String> = tokens
        .iter()
        .filter(|t| {
            is_number(t) || (t.chars().count() == 1 && t.chars().all(char::is_alphabetic) && *t != "a" && *t != "i")
        })
        .map(|t| t.trim_end_matches(['.', ',']).to_string())
        .collect();
    let chars: Vec<char> = raw.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let op = match c {
            '+' | '*' | '/' | '×' | '÷' | '^' | '=' | '<' | '>' | '≤' | '≥' => true,
            '-' => {
                let prev = i.checked_sub(1).map(|j| chars[j]);
                let next = chars.get(i + 1).copied();
                !(prev.is_some_and(char::is_alphabetic) && next.is_some_and(char::is_alphabetic))
                    && next.is_some_and(|n| n.is_ascii_digit() || n.is_whitespace() || n.is_alphabetic())
            }
            _ => false,
        };
        if op {
            args.insert(c.to_string());
        }
    }
    args
}

fn make_step(raw: String) -> Step {
    let tokens = step_tokens(&raw);
    let bigrams: BTreeSet<String> = if tokens.len() >= 2 {
        tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect()
    } else {
        tokens.iter().cloned().collect()
    };
    let connectives = CONNECTIVES
        .iter()
        .copied()
        .filter(|c| tokens.iter().any(|t| t == c))
        .collect();
    let args = step_args(&raw, &tokens);
    Step { raw, tokens, bigrams, connectives, args }
}

fn length_bucket(tokens: usize) -> u8 {
    match tokens {
        0..=5 => 0,
        6..=12 => 1,
        _ => 2,
    }
}

fn build_trace(steps: Vec<Step>, rule: SplitRule) -> ReasoningTrace {
    let n = steps.len();
    let width = n.div_ceil(3).max(1);
    let mut signature = Signature::new();
    for (i, step) in steps.iter().enumerate() {
        let pos = (i / width).min(2) as u8;
        let len = length_bucket(step.tokens.len());
        if step.connectives.is_empty() {
            signature.insert((pos, len, None));
        } else {
            for c in &step.connectives {
                signature.insert((pos, len, Some(*c)));
            }
        }
    }
    let args = steps.iter().flat_map(|s| s.args.iter().cloned()).collect();
    ReasoningTrace { steps, rule, signature, args }
}

/// Parses a trace with the highest-priority applicable split rule.
pub fn parse_trace(cot: &str) -> Result<ReasoningTrace> {
    parse_trace_with(cot, detect_rule(cot))
}

/// Parses a trace with a fixed split rule.
pub fn parse_trace_with(cot: &str, rule: SplitRule) -> Result<ReasoningTrace> {
    if cot.trim().is_empty() {
        return Err(Error::Empty("chain-of-thought trace"));
    }
    let mut steps: Vec<Step> = split_with(cot, rule)
        .iter()
        .map(|p| collapse_ws(p))
        .filter(|p| !p.is_empty())
        .map(make_step)
        .filter(|s| !s.tokens.is_empty())
        .collect();
    if steps.is_empty() {
        steps.push(make_step(collapse_ws(cot)));
    }
    Ok(build_trace(steps, rule))
}

/// Jaccard index; two empty sets are identical and score 1.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let shared = a.intersection(b).count();
    shared as f64 / (a.len() + b.len() - shared) as f64
}

/// The three component similarities. Implementations must return values in
/// `[0, 1]`.
pub trait TraceSimilarity: Sync {
    fn structure(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64;
    fn steps(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64;
    fn arguments(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64;
}

/// Default component definitions: Jaccard over each feature view.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardViews;

impl TraceSimilarity for JaccardViews {
    fn structure(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64 {
        jaccard(&a.signature, &b.signature)
    }

    fn steps(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64 {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        if short.is_empty() {
            return if long.is_empty() { 1.0 } else { 0.0 };
        }
        let (ns, nl) = (short.len(), long.len());
        let total: f64 = (0..ns)
            .map(|i| jaccard(&short.steps[i].bigrams, &long.steps[i * nl / ns].bigrams))
            .sum();
        total / ns as f64
    }

    fn arguments(&self, a: &ReasoningTrace, b: &ReasoningTrace) -> f64 {
        jaccard(&a.args, &b.args)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Weights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 || gamma < 0.0 {
            return Err(Error::invalid("reasoning weights must be non-negative"));
        }
        if ((alpha + beta + gamma) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("reasoning weights must sum to 1"));
        }
        Ok(Weights { alpha, beta, gamma })
    }

    pub fn from_config(cfg: &ThresholdConfig) -> Result<Self> {
        Weights::new(cfg.alpha, cfg.beta, cfg.gamma)
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights { alpha: 0.4, beta: 0.3, gamma: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSimilarity {
    pub struct_sim: f64,
    pub step_sim: f64,
    pub arg_sim: f64,
    pub combined: f64,
}

impl ReasoningSimilarity {
    pub fn combine(struct_sim: f64, step_sim: f64, arg_sim: f64, w: Weights) -> Self {
        let combined = w.alpha * struct_sim + w.beta * step_sim + w.gamma * arg_sim;
        ReasoningSimilarity { struct_sim, step_sim, arg_sim, combined }
    }
}

pub fn reasoning_similarity(a: &ReasoningTrace, b: &ReasoningTrace, w: Weights) -> ReasoningSimilarity {
    reasoning_similarity_with(&JaccardViews, a, b, w)
}

pub fn reasoning_similarity_with<S: TraceSimilarity + ?Sized>(
    sim: &S,
    a: &ReasoningTrace,
    b: &ReasoningTrace,
    w: Weights,
) -> ReasoningSimilarity {
    ReasoningSimilarity::combine(sim.structure(a, b), sim.steps(a, b), sim.arguments(a, b), w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReasoningCheck {
    pub flag: bool,
    pub best_sim: f64,
    /// Index of the best-matching sample in the benchmark dataset.
    pub best_index: usize,
}

/// Parsed benchmark traces, built once per audit.
#[derive(Debug, Clone)]
pub struct ReasoningIndex {
    traces: Vec<(usize, ReasoningTrace)>,
}

impl ReasoningIndex {
    /// Benchmark samples without a usable trace are left out.
    pub fn new(benchmark: &Dataset) -> Self {
        let traces = benchmark
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.cot_trace.as_deref().and_then(|c| parse_trace(c).ok()).map(|t| (i, t)))
            .collect();
        ReasoningIndex { traces }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Best match for an already-parsed trace; `None` when the index is empty.
    pub fn best_match(&self, trace: &ReasoningTrace, w: Weights) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, bench) in &self.traces {
            let sim = reasoning_similarity(trace, bench, w).combined;
            if best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, *idx));
            }
        }
        best
    }

    /// Level-3 decision; `None` when the level cannot run for this sample.
    pub fn check(&self, sample: &TextSample, cfg: &ThresholdConfig) -> Result<Option<ReasoningCheck>> {
        let w = Weights::from_config(cfg)?;
        let Some(trace) = sample.cot_trace.as_deref().and_then(|c| parse_trace(c).ok()) else {
            return Ok(None);
        };
        Ok(self.best_match(&trace, w).map(|(best_sim, best_index)| ReasoningCheck {
            flag: best_sim > cfg.tau3,
            best_sim,
            best_index,
        }))
    }
}

/// Convenience wrapper that parses the benchmark traces on every call; use a
/// [`ReasoningIndex`] when checking many samples.
pub fn flag_reasoning_level(
    sample: &TextSample,
    benchmark: &Dataset,
    cfg: &ThresholdConfig,
) -> Result<Option<ReasoningCheck>> {
    ReasoningIndex::new(benchmark).check(sample, cfg)
}
