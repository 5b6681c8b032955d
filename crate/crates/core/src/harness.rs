//! Planted-contamination scenarios and detection metrics.
//!
//! Benchmarks are templated arithmetic word problems. Clean synthetic items
//! reuse the templates with entity and number pools that share no word with
//! the benchmark pools. Contaminated items are planted per scenario:
//!
//! | kind | plant |
//! |------|-------|
//! | S1 | verbatim copy of a benchmark item (text and trace) |
//! | S2 | synonym swaps plus clause reorder of a benchmark item |
//! | S3 | fresh text, embedding planted near a benchmark embedding |
//! | S4 | fresh text, trace cloned from a benchmark trace with new numbers |
//!
//! Artifacts are mocked: embeddings hash character 3-grams
//! ([`mock_embed`]), and each token's log-prob is [`MOCK_SEEN_LOGPROB`] if
//! the word occurs in some benchmark text, else [`MOCK_UNSEEN_LOGPROB`].
//!
//! Every sample draws from its own generator seeded by `(seed, role, index)`,
//! so bundles are a pure function of the arguments.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::ThresholdConfig;
use crate::error::{Error, Result};
use crate::model::{normalize_embedding, write_dataset, Dataset, Role, TextSample, Verdict};
use crate::pipeline::{run_pipeline, Summary};
use crate::semantic::max_benchmark_similarity;
use crate::stats::{mcnemar, McNemarResult};
use crate::token::{word_tokens, NgramIndex};

pub const MOCK_EMBED_DIM: usize = 128;
pub const MOCK_SEEN_LOGPROB: f64 = -0.5;
pub const MOCK_UNSEEN_LOGPROB: f64 = -6.0;
/// Per-coordinate standard deviation of the S3 embedding noise.
pub const PLANT_NOISE_SD: f64 = 0.02;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of the character 3-grams of `text`, lowercased,
/// into `d` buckets, L2-normalized. Texts shorter than three characters hash
/// as a single gram.
pub fn mock_embed(text: &str, d: usize) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::Empty("text"));
    }
    if d < 8 {
        return Err(Error::invalid(format!("embedding dimension must be at least 8, got {d}")));
    }
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut v = vec![0.0; d];
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = stable_hash(s.as_bytes());
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        v[((h >> 1) % d as u64) as usize] += sign;
    };
    if chars.len() < 3 {
        add(&chars);
    } else {
        chars.windows(3).for_each(&mut add);
    }
    normalize_embedding(&v)
}

fn rng_for(seed: u64, stream: &str, index: usize) -> ChaCha8Rng {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(stream.as_bytes());
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    ChaCha8Rng::seed_from_u64(stable_hash(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [ScenarioKind::S1, ScenarioKind::S2, ScenarioKind::S3, ScenarioKind::S4];

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::S1 => "verbatim copies of benchmark items",
            ScenarioKind::S2 => "rule-based paraphrases of benchmark items (synonym table, clause reorder)",
            ScenarioKind::S3 => {
                "fresh text with embeddings planted as noisy convex combinations of benchmark embeddings \
                 (proxy for topic-guided synthesis)"
            }
            ScenarioKind::S4 => "fresh text with a benchmark reasoning trace cloned under new numbers",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(ScenarioKind::S1),
            "S2" => Ok(ScenarioKind::S2),
            "S3" => Ok(ScenarioKind::S3),
            "S4" => Ok(ScenarioKind::S4),
            _ => Err(Error::invalid(format!("unknown scenario {s:?}, expected S1, S2, S3 or S4"))),
        }
    }
}

// Pools. No word may appear in both the benchmark and the clean pool of the
// same slot, nor in any template; a unit test checks this.

const BENCH_FIRST: [&str; 16] = [
    "Ada", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ingrid", "Jonas", "Keiko", "Lars",
    "Mirela", "Nikolai", "Odile", "Pavel",
];
const BENCH_LAST: [&str; 12] = [
    "Whitfield", "Okonkwo", "Lindqvist", "Marchetti", "Haraldsen", "Quispe", "Vasquez", "Brandauer", "Takahashi",
    "Novak", "Ferreira", "Castellano",
];
const BENCH_ADJ: [&str; 8] = ["copper", "striped", "wooden", "velvet", "amber", "silver", "woolen", "painted"];
const BENCH_NOUN: [&str; 8] = ["bolts", "marbles", "ribbons", "lanterns", "buttons", "kites", "spoons", "candles"];
const BENCH_PLACE: [&str; 10] = [
    "Harbor Market", "Elmwood Library", "Riverside Mill", "Granite Station", "Maple Orchard", "Cobalt Pier",
    "Juniper Farm", "Lighthouse Bazaar", "Saffron Bakery", "Northgate Depot",
];

const CLEAN_FIRST: [&str; 16] = [
    "Quentin", "Rosalind", "Sven", "Tamsin", "Ulrich", "Valentina", "Wendell", "Ximena", "Yusuf", "Zelda",
    "Anouk", "Benedikt", "Cosima", "Desmond", "Esperanza", "Florian",
];
const CLEAN_LAST: [&str; 12] = [
    "Abernathy", "Kowalczyk", "Esposito", "Rautenberg", "Delacroix", "Mbeki", "Oyelaran", "Pemberton",
    "Szabo", "Trujillo", "Yamamoto", "Zielinski",
];
const CLEAN_ADJ: [&str; 8] = ["glass", "checkered", "bamboo", "linen", "crimson", "golden", "rubber", "braided"];
const CLEAN_NOUN: [&str; 8] = ["pebbles", "whistles", "feathers", "thimbles", "pinecones", "kazoos", "goblets", "puzzles"];
const CLEAN_PLACE: [&str; 10] = [
    "Willow Fairground", "Quarry Workshop", "Brookside Pantry", "Hilltop Observatory", "Cedar Greenhouse",
    "Pelican Wharf", "Sunflower Cottage", "Ivory Gallery", "Thistle Meadow", "Lakeshore Kiosk",
];

const BENCH_NUMBERS: std::ops::RangeInclusive<u32> = 2..=40;
const CLEAN_NUMBERS: std::ops::RangeInclusive<u32> = 41..=99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
}

struct Template {
    text: &'static str,
    op: Op,
}

// Slots: {a} {b} names, {item}, {place}, {x} {y} numbers. Fixed runs stay
// well under 13 words so filled texts only share n-grams through slots.
const TEMPLATES: [Template; 6] = [
    Template {
        text: "{a} keeps {x} {item} in a crate near {place}. After lunch {b} brings {y} more {item} over to {a}. \
               How many {item} does {a} have now?",
        op: Op::Add,
    },
    Template {
        text: "At {place}, {a} had {x} {item} on the shelf. {b} bought {y} of the {item} during the morning. \
               How many {item} remain with {a}?",
        op: Op::Sub,
    },
    Template {
        text: "{a} packs {x} boxes for {place}, and each box holds {y} {item}. {b} asks how many {item} were \
               packed in total. What is the answer?",
        op: Op::Mul,
    },
    Template {
        text: "On Monday {a} collected {x} {item} near {place}. On Tuesday {b} collected {y} {item} at the same \
               spot. How many {item} did they gather together?",
        op: Op::Add,
    },
    Template {
        text: "{b} lent {a} {x} {item} for a project at {place}. Later {a} returned {y} {item} to {b}. \
               How many {item} does {a} still owe?",
        op: Op::Sub,
    },
    Template {
        text: "Every week {a} delivers {y} {item} to {place}. {b} wants the number of {item} delivered over {x} \
               weeks. Compute the total.",
        op: Op::Mul,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pool {
    Benchmark,
    Clean,
}

#[derive(Debug, Clone)]
struct Problem {
    template: usize,
    a: String,
    b: String,
    item: String,
    place: String,
    x: u32,
    y: u32,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

struct Slots {
    first: &'static [&'static str],
    last: &'static [&'static str],
    adj: &'static [&'static str],
    noun: &'static [&'static str],
    place: &'static [&'static str],
    numbers: std::ops::RangeInclusive<u32>,
}

impl Pool {
    fn slots(self) -> Slots {
        match self {
            Pool::Benchmark => Slots {
                first: &BENCH_FIRST,
                last: &BENCH_LAST,
                adj: &BENCH_ADJ,
                noun: &BENCH_NOUN,
                place: &BENCH_PLACE,
                numbers: BENCH_NUMBERS,
            },
            Pool::Clean => Slots {
                first: &CLEAN_FIRST,
                last: &CLEAN_LAST,
                adj: &CLEAN_ADJ,
                noun: &CLEAN_NOUN,
                place: &CLEAN_PLACE,
                numbers: CLEAN_NUMBERS,
            },
        }
    }
}

impl Problem {
    fn draw(rng: &mut ChaCha8Rng, pool: Pool) -> Problem {
        let Slots { first, last, adj, noun, place, numbers } = pool.slots();
        let template = rng.random_range(0..TEMPLATES.len());
        let a = format!("{} {}", pick(rng, first), pick(rng, last));
        let mut b = format!("{} {}", pick(rng, first), pick(rng, last));
        while b == a {
            b = format!("{} {}", pick(rng, first), pick(rng, last));
        }
        let item = format!("{} {}", pick(rng, adj), pick(rng, noun));
        let place = pick(rng, place).to_string();
        let mut x = rng.random_range(numbers.clone());
        let mut y = rng.random_range(numbers.clone());
        if TEMPLATES[template].op == Op::Sub {
            while x == y {
                y = rng.random_range(numbers.clone());
            }
            if x < y {
                std::mem::swap(&mut x, &mut y);
            }
        }
        Problem { template, a, b, item, place, x, y }
    }

    fn op(&self) -> Op {
        TEMPLATES[self.template].op
    }

    fn answer(&self) -> u32 {
        match self.op() {
            Op::Add => self.x + self.y,
            Op::Sub => self.x - self.y,
            Op::Mul => self.x * self.y,
        }
    }

    fn fill(&self, pattern: &str) -> String {
        let text = pattern
            .replace("{a}", &self.a)
            .replace("{b}", &self.b)
            .replace("{item}", &self.item)
            .replace("{place}", &self.place)
            .replace("{x}", &self.x.to_string())
            .replace("{y}", &self.y.to_string())
            .replace("{s}", &self.answer().to_string());
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn text(&self) -> String {
        self.fill(TEMPLATES[self.template].text)
    }

    /// Benchmark-style trace: numbered steps, long sentences, connectives.
    fn detailed_trace(&self) -> String {
        let pattern = match self.op() {
            Op::Add => {
                "Step 1: We begin by reading the question carefully, and we note that the amount {a} starts out \
                 with at {place} is {x}. Step 2: Because {b} adds another batch of {item} to the pile, the two \
                 amounts belong together, so the second amount we must add is {y}. Step 3: Therefore the total \
                 number of {item} held by {a} at the end of the story, which answers the question, is {s}."
            }
            Op::Sub => {
                "Step 1: We begin by reading the question carefully, and we note that the amount {a} starts out \
                 with at {place} is {x}. Step 2: Because some of the {item} leave with {b}, the second amount must \
                 come away from the first, so the amount we must take away is {y}. Step 3: Therefore the number of \
                 {item} left with {a} at the end of the story, which answers the question, is {s}."
            }
            Op::Mul => {
                "Step 1: We begin by reading the question carefully, and we note that the count of {item} in each \
                 group for {a} at {place} is {y}. Step 2: Since every group repeats the same count of {item}, we \
                 multiply by the number of equal groups, so the number of groups we use is {x}. Step 3: Therefore \
                 the total number of {item} that {b} asked about at the end of the story, which answers the \
                 question, is {s}."
            }
        };
        self.fill(pattern)
    }

    /// Clean-style trace: short lines, no connectives.
    fn brief_trace(&self) -> String {
        let (x, y, s) = (self.x, self.y, self.answer());
        match self.op() {
            Op::Add => format!("Start: {x}.\nAdd {y}: {x} + {y} = {s}.\nAnswer: {s}."),
            Op::Sub => format!("Start: {x}.\nRemove {y}: {x} - {y} = {s}.\nAnswer: {s}."),
            Op::Mul => format!("Groups: {x}.\nEach: {y}: {x} * {y} = {s}.\nAnswer: {s}."),
        }
    }
}

const SYNONYMS: [(&str, &str); 22] = [
    ("keeps", "stores"),
    ("crate", "bin"),
    ("near", "beside"),
    ("brings", "carries"),
    ("more", "additional"),
    ("had", "owned"),
    ("shelf", "rack"),
    ("bought", "purchased"),
    ("morning", "forenoon"),
    ("remain", "stay"),
    ("packs", "fills"),
    ("boxes", "cartons"),
    ("holds", "contains"),
    ("asks", "wonders"),
    ("collected", "gathered"),
    ("spot", "location"),
    ("lent", "loaned"),
    ("returned", "gave back"),
    ("owe", "need to repay"),
    ("delivers", "ships"),
    ("wants", "needs"),
    ("Compute", "Find"),
];

fn word_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[A-Za-z]+\b").unwrap())
}

/// Synonym swaps, then the first two sentences trade places.
fn paraphrase(text: &str) -> String {
    let swapped = word_re().replace_all(text, |c: &regex::Captures<'_>| {
        let w = &c[0];
        SYNONYMS.iter().find(|(from, _)| *from == w).map_or_else(|| w.to_string(), |(_, to)| to.to_string())
    });
    let mut sentences: Vec<&str> = swapped.split_inclusive(['.', '?']).map(str::trim).filter(|s| !s.is_empty()).collect();
    if sentences.len() >= 3 {
        sentences.swap(0, 1);
    }
    sentences.join(" ")
}

fn number_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d+\b").unwrap())
}

/// Replaces every number except step indices with a fresh clean-pool number,
/// the same replacement for repeated values.
fn remap_numbers(trace: &str, rng: &mut ChaCha8Rng) -> String {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut out = String::with_capacity(trace.len());
    let mut last = 0;
    for m in number_re().find_iter(trace) {
        out.push_str(&trace[last..m.start()]);
        last = m.end();
        if trace[..m.start()].ends_with("Step ") {
            out.push_str(m.as_str());
            continue;
        }
        let fresh = map
            .entry(m.as_str().to_string())
            .or_insert_with(|| rng.random_range(CLEAN_NUMBERS.start() * 3..=CLEAN_NUMBERS.end() * 3).to_string());
        out.push_str(fresh);
    }
    out.push_str(&trace[last..]);
    out
}

fn mock_logprobs(text: &str, vocab: &HashSet<String>) -> Vec<f64> {
    word_tokens(text)
        .iter()
        .map(|t| if vocab.contains(t) { MOCK_SEEN_LOGPROB } else { MOCK_UNSEEN_LOGPROB })
        .collect()
}

fn plant_embedding(
    rng: &mut ChaCha8Rng,
    anchor: &[f64],
    others: &[&[f64]],
) -> Result<Vec<f64>> {
    let other = others[rng.random_range(0..others.len())];
    let w = rng.random_range(0.8..=0.9);
    let noise = Normal::new(0.0, PLANT_NOISE_SD).expect("valid normal");
    let v: Vec<f64> = anchor
        .iter()
        .zip(other)
        .map(|(a, o)| w * a + (1.0 - w) * o + noise.sample(rng))
        .collect();
    normalize_embedding(&v)
}

#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub synthetic: Dataset,
    pub benchmark: Dataset,
    /// Synthetic id → planted contamination.
    pub labels: BTreeMap<String, bool>,
}

#[derive(Serialize, Deserialize)]
struct LabelsFile {
    labels: BTreeMap<String, bool>,
    kind: ScenarioKind,
    seed: u64,
    plant: String,
    mock_logprobs: BTreeMap<String, f64>,
    embedding_dim: usize,
}

impl ScenarioBundle {
    pub fn n_contaminated(&self) -> usize {
        self.labels.values().filter(|l| **l).count()
    }

    pub fn labels_json(&self) -> String {
        let file = LabelsFile {
            labels: self.labels.clone(),
            kind: self.kind,
            seed: self.seed,
            plant: self.kind.description().to_string(),
            mock_logprobs: BTreeMap::from([
                ("seen".to_string(), MOCK_SEEN_LOGPROB),
                ("unseen".to_string(), MOCK_UNSEEN_LOGPROB),
            ]),
            embedding_dim: MOCK_EMBED_DIM,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("labels serialize");
        s.push('\n');
        s
    }

    /// Writes `synthetic.jsonl`, `benchmark.jsonl` and `labels.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_dataset(&self.synthetic, dir.join("synthetic.jsonl"))?;
        write_dataset(&self.benchmark, dir.join("benchmark.jsonl"))?;
        let path = dir.join("labels.json");
        std::fs::write(&path, self.labels_json()).map_err(|e| Error::io(&path, e))
    }
}

/// Reads the labels map from a `labels.json` file.
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: serde_json::Value = serde_json::from_str(&text)?;
    Ok(serde_json::from_value(file["labels"].clone())?)
}

pub fn generate_scenario(
    kind: ScenarioKind,
    n_syn: usize,
    n_bench: usize,
    rate: f64,
    seed: u64,
) -> Result<ScenarioBundle> {
    if n_syn < 10 || n_bench < 10 {
        return Err(Error::invalid("scenario needs at least 10 synthetic and 10 benchmark samples"));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!("contamination rate must lie in (0, 1), got {rate}")));
    }
    let n_contaminated = (rate * n_syn as f64).round() as usize;
    if n_contaminated == 0 {
        return Err(Error::invalid(format!("rate {rate} plants no sample among {n_syn}")));
    }

    let bench_problems: Vec<Problem> =
        (0..n_bench).map(|j| Problem::draw(&mut rng_for(seed, "benchmark", j), Pool::Benchmark)).collect();
    let bench_texts: Vec<String> = bench_problems.iter().map(Problem::text).collect();
    let bench_traces: Vec<String> = bench_problems.iter().map(Problem::detailed_trace).collect();
    let bench_embeddings = bench_texts.iter().map(|t| mock_embed(t, MOCK_EMBED_DIM)).collect::<Result<Vec<_>>>()?;
    let vocab: HashSet<String> = bench_texts.iter().flat_map(|t| word_tokens(t)).collect();

    let mut order: Vec<usize> = (0..n_syn).collect();
    order.sort_by_key(|&i| (stable_hash(format!("{seed}/plant/{i}").as_bytes()), i));
    let mut planted: Vec<usize> = order[..n_contaminated].to_vec();
    planted.sort_unstable();
    // S3 plants share a few anchors so each anchor sits in a dense region.
    let n_anchors = n_contaminated.div_ceil(6).clamp(1, n_bench - 1);
    let mut anchor_order: Vec<usize> = (0..n_bench).collect();
    anchor_order.sort_by_key(|&j| (stable_hash(format!("{seed}/anchor/{j}").as_bytes()), j));
    let anchors = &anchor_order[..n_anchors];
    let plant_rank: BTreeMap<usize, usize> = planted.iter().enumerate().map(|(r, &i)| (i, r)).collect();

    let mut samples = Vec::with_capacity(n_syn);
    let mut labels = BTreeMap::new();
    for i in 0..n_syn {
        let mut rng = rng_for(seed, "synthetic", i);
        let id = format!("syn-{i:05}");
        let source = rng.random_range(0..n_bench);
        let sample = match plant_rank.get(&i).map(|r| (kind, *r)) {
            Some((ScenarioKind::S1, _)) => TextSample::new(&id, &bench_texts[source]).with_cot(&bench_traces[source]),
            Some((ScenarioKind::S2, _)) => {
                TextSample::new(&id, paraphrase(&bench_texts[source])).with_cot(bench_problems[source].brief_trace())
            }
            Some((ScenarioKind::S3, rank)) => {
                let problem = Problem::draw(&mut rng, Pool::Clean);
                let anchor = anchors[rank % n_anchors];
                let others: Vec<&[f64]> = (0..n_bench)
                    .filter(|&j| j != anchor)
                    .map(|j| bench_embeddings[j].as_slice())
                    .collect();
                let embedding = plant_embedding(&mut rng, &bench_embeddings[anchor], &others)?;
                let text = problem.text();
                TextSample::new(&id, &text)
                    .with_logprobs(mock_logprobs(&text, &vocab))
                    .with_embedding(embedding)
                    .with_cot(problem.brief_trace())
            }
            Some((ScenarioKind::S4, _)) => {
                let problem = Problem::draw(&mut rng, Pool::Clean);
                TextSample::new(&id, problem.text()).with_cot(remap_numbers(&bench_traces[source], &mut rng))
            }
            None => {
                let problem = Problem::draw(&mut rng, Pool::Clean);
                TextSample::new(&id, problem.text()).with_cot(problem.brief_trace())
            }
        };
        let sample = if sample.embedding.is_none() {
            let embedding = mock_embed(&sample.text, MOCK_EMBED_DIM)?;
            let logprobs = mock_logprobs(&sample.text, &vocab);
            sample.with_embedding(embedding).with_logprobs(logprobs)
        } else {
            sample
        };
        labels.insert(id, plant_rank.contains_key(&i));
        samples.push(sample);
    }

    let benchmark = bench_texts
        .into_iter()
        .zip(bench_traces)
        .zip(bench_embeddings)
        .enumerate()
        .map(|(j, ((text, cot), emb))| TextSample::new(format!("bench-{j:05}"), text).with_cot(cot).with_embedding(emb))
        .collect();
    Ok(ScenarioBundle {
        kind,
        seed,
        synthetic: Dataset::new(Role::Synthetic, samples)?,
        benchmark: Dataset::new(Role::Benchmark, benchmark)?,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DetectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        DetectionMetrics { tp, fp, fn_, tn, precision, recall, f1 }
    }
}

fn label_of(labels: &BTreeMap<String, bool>, id: &str) -> Result<bool> {
    labels.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()))
}

/// Metrics for an arbitrary predicate over verdicts; `detection_metrics`
/// uses "flagged at any level".
pub fn metrics_by<F>(verdicts: &[Verdict], labels: &BTreeMap<String, bool>, predicted: F) -> Result<DetectionMetrics>
where
    F: Fn(&Verdict) -> bool,
{
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for v in verdicts {
        match (predicted(v), label_of(labels, &v.sample_id)?) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(DetectionMetrics::from_counts(tp, fp, fn_, tn))
}

pub fn detection_metrics(verdicts: &[Verdict], labels: &BTreeMap<String, bool>) -> Result<DetectionMetrics> {
    metrics_by(verdicts, labels, Verdict::is_flagged)
}

/// McNemar test on per-sample correctness of two detectors.
pub fn compare_methods(a: &[Verdict], b: &[Verdict], labels: &BTreeMap<String, bool>) -> Result<McNemarResult> {
    let b_by_id: BTreeMap<&str, &Verdict> = b.iter().map(|v| (v.sample_id.as_str(), v)).collect();
    let a_ids: BTreeSet<&str> = a.iter().map(|v| v.sample_id.as_str()).collect();
    if a_ids.len() != a.len() || b_by_id.len() != b.len() || a_ids.iter().ne(b_by_id.keys()) {
        return Err(Error::invalid("compared verdict lists cover different sample ids"));
    }
    let (mut only_a, mut only_b) = (0u64, 0u64);
    for va in a {
        let truth = label_of(labels, &va.sample_id)?;
        let a_right = va.is_flagged() == truth;
        let b_right = b_by_id[va.sample_id.as_str()].is_flagged() == truth;
        match (a_right, b_right) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    Ok(mcnemar(only_a, only_b))
}

/// Flags a synthetic sample when its text shares any word `n`-gram with a
/// benchmark text (reported as a level-1 hit).
pub fn ngram_baseline(synthetic: &Dataset, benchmark: &Dataset, n: usize) -> Vec<Verdict> {
    let index = NgramIndex::new(benchmark.iter().map(|s| s.text.as_str()), n);
    synthetic
        .iter()
        .map(|s| {
            let mut v = Verdict::clean(&s.id);
            if index.matches(&s.text) {
                v.flagged_level = 1;
                v.severity = Some(1);
            }
            v
        })
        .collect()
}

/// Flags a synthetic sample when its best benchmark cosine exceeds `tau`
/// (reported as a level-2 hit without clustering or density checks).
pub fn embedding_baseline(synthetic: &Dataset, benchmark: &Dataset, tau: f64) -> Result<Vec<Verdict>> {
    let bench: Vec<Vec<f64>> = benchmark.iter().filter_map(|s| s.embedding.clone()).collect();
    synthetic
        .iter()
        .map(|s| {
            let mut v = Verdict::clean(&s.id);
            if let (Some(e), false) = (&s.embedding, bench.is_empty()) {
                let best = max_benchmark_similarity(e, &bench)?;
                v.l2_sim = Some(best.sim);
                if best.sim > tau {
                    v.flagged_level = 2;
                    v.severity = Some(2);
                }
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub pipeline: DetectionMetrics,
    /// Positive = flagged at exactly this level.
    pub level1: DetectionMetrics,
    pub level2: DetectionMetrics,
    pub level3: DetectionMetrics,
    pub ngram_baseline: DetectionMetrics,
    pub embedding_baseline: DetectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparisons {
    pub pipeline_vs_ngram: McNemarResult,
    pub pipeline_vs_embedding: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub n_synthetic: usize,
    pub n_benchmark: usize,
    pub n_contaminated: usize,
    pub metrics: MethodMetrics,
    pub comparisons: Comparisons,
    pub summary: Summary,
    /// Pipeline verdicts in synthetic order.
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub ngram_verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub embedding_verdicts: Vec<Verdict>,
}

/// Runs the pipeline and both baselines on a bundle.
pub fn evaluate(bundle: &ScenarioBundle, cfg: &ThresholdConfig) -> Result<Evaluation> {
    let run = run_pipeline(&bundle.synthetic, &bundle.benchmark, cfg, None)?;
    let labels = &bundle.labels;
    let ngram = ngram_baseline(&bundle.synthetic, &bundle.benchmark, cfg.ngram_n);
    let embedding = embedding_baseline(&bundle.synthetic, &bundle.benchmark, cfg.tau2)?;
    let at = |level: u8| move |v: &Verdict| v.flagged_level == level;
    let metrics = MethodMetrics {
        pipeline: detection_metrics(&run.verdicts, labels)?,
        level1: metrics_by(&run.verdicts, labels, at(1))?,
        level2: metrics_by(&run.verdicts, labels, at(2))?,
        level3: metrics_by(&run.verdicts, labels, at(3))?,
        ngram_baseline: detection_metrics(&ngram, labels)?,
        embedding_baseline: detection_metrics(&embedding, labels)?,
    };
    let comparisons = Comparisons {
        pipeline_vs_ngram: compare_methods(&run.verdicts, &ngram, labels)?,
        pipeline_vs_embedding: compare_methods(&run.verdicts, &embedding, labels)?,
    };
    Ok(Evaluation {
        scenario: bundle.kind,
        seed: bundle.seed,
        n_synthetic: bundle.synthetic.len(),
        n_benchmark: bundle.benchmark.len(),
        n_contaminated: bundle.n_contaminated(),
        metrics,
        comparisons,
        summary: run.summary(),
        verdicts: run.verdicts,
        ngram_verdicts: ngram,
        embedding_verdicts: embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::cosine_similarity;

    fn words(items: &[&str]) -> BTreeSet<String> {
        items.iter().flat_map(|s| word_tokens(s)).collect()
    }

    #[test]
    fn pools_are_disjoint() {
        let bench: BTreeSet<String> = [&BENCH_FIRST[..], &BENCH_LAST, &BENCH_ADJ, &BENCH_NOUN, &BENCH_PLACE]
            .iter()
            .flat_map(|p| words(p))
            .collect();
        let clean: BTreeSet<String> = [&CLEAN_FIRST[..], &CLEAN_LAST, &CLEAN_ADJ, &CLEAN_NOUN, &CLEAN_PLACE]
            .iter()
            .flat_map(|p| words(p))
            .collect();
        let templates = words(&TEMPLATES.map(|t| t.text));
        assert!(bench.is_disjoint(&clean));
        assert!(clean.is_disjoint(&templates), "{:?}", clean.intersection(&templates).collect::<Vec<_>>());
        assert!(bench.is_disjoint(&templates));
    }

    #[test]
    fn mock_embed_basics() {
        let a = mock_embed("Ada keeps 3 copper bolts", 64).unwrap();
        assert_eq!(a, mock_embed("Ada keeps 3 copper bolts", 64).unwrap());
        assert!((a.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        assert_eq!(a, mock_embed("ADA KEEPS 3 COPPER BOLTS", 64).unwrap());
        assert_eq!(mock_embed("hi", 8).unwrap().len(), 8);
        assert!(mock_embed("", 64).is_err());
        assert!(mock_embed("text", 4).is_err());
    }

    #[test]
    fn stable_hash_reference() {
        assert_eq!(stable_hash(b""), 0xcbf29ce484222325);
        assert_eq!(stable_hash(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(stable_hash(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn s1_copies_are_verbatim() {
        let b = generate_scenario(ScenarioKind::S1, 100, 30, 0.2, 7).unwrap();
        assert_eq!(b.n_contaminated(), 20);
        let bench: HashSet<&str> = b.benchmark.iter().map(|s| s.text.as_str()).collect();
        for s in &b.synthetic {
            assert_eq!(b.labels[&s.id], bench.contains(s.text.as_str()), "{}", s.id);
        }
    }

    #[test]
    fn s3_plants_are_close() {
        let b = generate_scenario(ScenarioKind::S3, 60, 30, 0.25, 3).unwrap();
        let bench: Vec<Vec<f64>> = b.benchmark.iter().map(|s| s.embedding.clone().unwrap()).collect();
        for s in b.synthetic.iter().filter(|s| b.labels[&s.id]) {
            let best = max_benchmark_similarity(s.embedding.as_ref().unwrap(), &bench).unwrap();
            assert!(best.sim > 0.9, "{} {}", s.id, best.sim);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in ScenarioKind::ALL {
            let a = generate_scenario(kind, 20, 12, 0.3, 11).unwrap();
            let b = generate_scenario(kind, 20, 12, 0.3, 11).unwrap();
            assert_eq!(a.synthetic.samples(), b.synthetic.samples());
            assert_eq!(a.labels_json(), b.labels_json());
            let c = generate_scenario(kind, 20, 12, 0.3, 12).unwrap();
            assert_ne!(a.synthetic.samples(), c.synthetic.samples());
        }
    }

    #[test]
    fn generator_preconditions() {
        assert!(generate_scenario(ScenarioKind::S1, 100, 30, 0.0, 1).is_err());
        assert!(generate_scenario(ScenarioKind::S1, 100, 30, 1.0, 1).is_err());
        assert!(generate_scenario(ScenarioKind::S1, 10, 30, 0.01, 1).is_err());
        assert!(generate_scenario(ScenarioKind::S1, 9, 30, 0.5, 1).is_err());
    }

    #[test]
    fn paraphrase_and_remap() {
        let p = paraphrase("Ada keeps 3 bolts near home. Bo brings 4 more. How many?");
        assert_eq!(p, "Bo carries 4 additional. Ada stores 3 bolts beside home. How many?");
        let mut rng = rng_for(1, "t", 0);
        let r = remap_numbers("Step 1: take 3 and 4. Step 2: 3 plus 4 is 7.", &mut rng);
        let nums: Vec<&str> = number_re().find_iter(&r).map(|m| m.as_str()).collect();
        assert_eq!((nums[0], nums[3]), ("1", "2"));
        assert_eq!((nums[1], nums[2]), (nums[4], nums[5]));
        assert!(!r.contains(" 3 ") && !r.contains(" 7."));
    }

    #[test]
    fn verbatim_embedding_cosine_is_one() {
        let b = generate_scenario(ScenarioKind::S1, 20, 10, 0.5, 5).unwrap();
        let copy = b.synthetic.iter().find(|s| b.labels[&s.id]).unwrap();
        let src = b.benchmark.iter().find(|s| s.text == copy.text).unwrap();
        let c = cosine_similarity(copy.embedding.as_ref().unwrap(), src.embedding.as_ref().unwrap()).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let m = DetectionMetrics::from_counts(3, 1, 1, 5);
        assert_eq!((m.precision, m.recall, m.f1), (0.75, 0.75, 0.75));
        let none = DetectionMetrics::from_counts(0, 0, 0, 9);
        assert_eq!((none.precision, none.recall, none.f1, none.tn), (0.0, 0.0, 0.0, 9));
    }

    #[test]
    fn metrics_and_comparison() {
        let labels: BTreeMap<String, bool> =
            [("a", true), ("b", false), ("c", true)].map(|(k, v)| (k.to_string(), v)).into();
        let flag = |id: &str, on: bool| Verdict { flagged_level: u8::from(on), ..Verdict::clean(id) };
        let perfect = vec![flag("a", true), flag("b", false), flag("c", true)];
        let m = detection_metrics(&perfect, &labels).unwrap();
        assert_eq!((m.tp, m.tn, m.f1), (2, 1, 1.0));
        let same = compare_methods(&perfect, &perfect, &labels).unwrap();
        assert_eq!((same.b, same.c, same.p), (0, 0, 1.0));
        let wrong = vec![flag("a", false), flag("b", false), flag("c", true)];
        let r = compare_methods(&perfect, &wrong, &labels).unwrap();
        assert_eq!((r.b, r.c), (1, 0));
        assert!(detection_metrics(&[flag("zz", true)], &labels).is_err());
        assert!(compare_methods(&perfect, &wrong[..2], &labels).is_err());
    }

    #[test]
    fn scenario_names() {
        assert_eq!("s3".parse::<ScenarioKind>().unwrap(), ScenarioKind::S3);
        assert!("S5".parse::<ScenarioKind>().is_err());
        assert_eq!(ScenarioKind::S4.to_string(), "S4");
    }
}
