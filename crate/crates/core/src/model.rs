//! Samples, datasets and verdicts shared by every detection level, plus
//! JSON-Lines ingestion.
//!
//! A dataset file holds one JSON object per line:
//!
//! ```text
//! {"id": "q-17", "text": "...", "embedding": [0.1, ...], "token_logprobs": [-0.4, ...],
//!  "cot_trace": "Step 1: ...", "tags": {"source": "gen-v2"}}
//! ```
//!
//! Everything but `id` and `text` is optional. Embeddings further than
//! [`UNIT_NORM_TOLERANCE`] from unit length are rescaled on load; only zero or
//! non-finite vectors are rejected.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖v‖₂ = 1` for stored embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<BTreeMap<String, String>>,
}

impl TextSample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextSample {
            id: id.into(),
            text: text.into(),
            embedding: None,
            token_logprobs: None,
            cot_trace: None,
            tags: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.token_logprobs = Some(logprobs);
        self
    }

    pub fn with_cot(mut self, cot: impl Into<String>) -> Self {
        self.cot_trace = Some(cot.into());
        self
    }

    /// Checks the sample invariants, normalizing the embedding in place.
    fn validate(&mut self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidSample { id: String::new(), reason: "empty id".into() });
        }
        if self.text.is_empty() {
            return Err(self.reject("empty text"));
        }
        if let Some(v) = &self.embedding {
            let unit = normalize_embedding(v).map_err(|e| self.reject(format!("embedding: {e}")))?;
            self.embedding = Some(unit);
        }
        if let Some(lp) = &self.token_logprobs {
            if let Some(bad) = lp.iter().find(|x| !x.is_finite() || **x > 0.0) {
                return Err(self.reject(format!("token log-prob {bad} is not a finite value <= 0")));
            }
        }
        Ok(())
    }

    fn reject(&self, reason: impl Into<String>) -> Error {
        Error::InvalidSample { id: self.id.clone(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Synthetic,
    Benchmark,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Synthetic => f.write_str("synthetic"),
            Role::Benchmark => f.write_str("benchmark"),
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Role::Synthetic),
            "benchmark" => Ok(Role::Benchmark),
            other => Err(Error::invalid(format!("unknown dataset role `{other}`"))),
        }
    }
}

/// An ordered, validated collection of samples. File order is the canonical
/// processing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    role: Role,
    samples: Vec<TextSample>,
}

impl Dataset {
    pub fn new(role: Role, samples: Vec<TextSample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        let mut samples = samples;
        for s in &mut samples {
            s.validate()?;
            if !seen.insert(s.id.clone()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { role, samples })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TextSample> {
        self.samples.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TextSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a TextSample;
    type IntoIter = std::slice::Iter<'a, TextSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Scales `v` to unit L2 norm. Vectors already within [`UNIT_NORM_TOLERANCE`]
/// of unit length come back unchanged, so a write/read round trip is exact.
pub fn normalize_embedding(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
        // already unit; rescaling would only perturb the low bits
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Loads a JSON-Lines dataset. Blank lines are skipped but still counted, so
/// error line numbers match what an editor shows.
pub fn load_dataset(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), role).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_dataset(reader: impl BufRead, role: Role) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TextSample = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        samples.push(sample);
    }
    Dataset::new(role, samples)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in dataset {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Per-sample outcome of the cascade.
///
/// `flagged_level` uses the framework numbering (1 token, 2 semantic,
/// 3 reasoning); `severity` carries the contamination taxonomy
/// (1 token match, 2 semantic similarity, 3 concept cluster, 4 reasoning
/// pattern). Scores for levels after the flagging level are never computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub sample_id: String,
    pub flagged_level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_cluster: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_mahalanobis: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<u8>,
}

impl Verdict {
    pub fn clean(sample_id: impl Into<String>) -> Self {
        Verdict {
            sample_id: sample_id.into(),
            flagged_level: 0,
            l1_score: None,
            l2_sim: None,
            l2_cluster: None,
            l2_mahalanobis: None,
            l3_sim: None,
            severity: None,
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.flagged_level > 0
    }

    /// True when no score past the flagging level is present.
    pub fn respects_short_circuit(&self) -> bool {
        let l2_present =
            self.l2_sim.is_some() || self.l2_cluster.is_some() || self.l2_mahalanobis.is_some();
        match self.flagged_level {
            0 => self.severity.is_none(),
            1 => !l2_present && self.l3_sim.is_none(),
            2 => self.l3_sim.is_none(),
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_embedding(&[0.6, 0.8]).unwrap(), vec![0.6, 0.8]);
        let v = normalize_embedding(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert!(matches!(normalize_embedding(&[0.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(matches!(normalize_embedding(&[f64::NAN, 1.0]), Err(Error::NonFinite)));
    }

    #[test]
    fn reads_lines_in_order_and_normalizes() {
        let input = "{\"id\":\"a\",\"text\":\"first\",\"embedding\":[3,4]}\n\n{\"id\":\"b\",\"text\":\"second\"}\n";
        let ds = read_dataset(input.as_bytes(), Role::Synthetic).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples()[0].id, "a");
        assert_eq!(ds.samples()[1].id, "b");
        let e = ds.samples()[0].embedding.as_ref().unwrap();
        assert!((e[0] - 0.6).abs() < 1e-15 && (e[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\"y\"}\n{\"id\": nope}\n";
        let err = read_dataset(input.as_bytes(), Role::Benchmark).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn duplicate_and_degenerate_samples_rejected() {
        let dup = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        let err = read_dataset(dup.as_bytes(), Role::Benchmark).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");

        let zero = "{\"id\":\"z\",\"text\":\"x\",\"embedding\":[0,0]}\n";
        let err = read_dataset(zero.as_bytes(), Role::Benchmark).unwrap_err();
        assert!(err.to_string().contains("`z`"), "{err}");

        let pos = "{\"id\":\"p\",\"text\":\"x\",\"token_logprobs\":[-1.0, 0.5]}\n";
        assert!(read_dataset(pos.as_bytes(), Role::Synthetic).is_err());

        let empty = "{\"id\":\"e\",\"text\":\"\"}\n";
        assert!(read_dataset(empty.as_bytes(), Role::Synthetic).is_err());
    }

    #[test]
    fn short_circuit_check() {
        let mut v = Verdict::clean("x");
        v.flagged_level = 1;
        v.severity = Some(1);
        v.l1_score = Some(-0.5);
        assert!(v.respects_short_circuit());
        v.l2_sim = Some(0.3);
        assert!(!v.respects_short_circuit());
    }
}
