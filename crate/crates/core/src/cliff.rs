//! Dataset-level performance-cliff detection.
//!
//! A model that memorized a benchmark answers the original items noticeably
//! better than paraphrased variants of the same items. The gap is the
//! original accuracy minus the mean variant accuracy; its significance comes
//! from a paired t-test over items, where each item contributes
//! `original_i − mean_k variant_{i,k}`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ThresholdConfig;
use crate::error::{Error, Result};
use crate::stats;

/// Per-item correctness on the original benchmark and on `K` paraphrased
/// variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessMatrix {
    item_ids: Vec<String>,
    original: Vec<bool>,
    /// `variants[k][i]`: item `i` answered correctly on variant `k`.
    variants: Vec<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrectnessLine {
    id: String,
    original: bool,
    variants: Vec<bool>,
}

impl CorrectnessMatrix {
    pub fn new(item_ids: Vec<String>, original: Vec<bool>, variants: Vec<Vec<bool>>) -> Result<Self> {
        let n = item_ids.len();
        if n == 0 {
            return Err(Error::Matrix("no items".into()));
        }
        if original.len() != n {
            return Err(Error::Matrix(format!("original column has {} entries, expected {n}", original.len())));
        }
        if variants.len() < 2 {
            return Err(Error::Matrix(format!("need at least 2 variant columns, got {}", variants.len())));
        }
        if let Some((k, col)) = variants.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Matrix(format!("variant column {k} has {} entries, expected {n}", col.len())));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &item_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Matrix(format!("duplicate item id `{id}`")));
            }
        }
        Ok(CorrectnessMatrix { item_ids, original, variants })
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn original(&self) -> &[bool] {
        &self.original
    }

    pub fn variants(&self) -> &[Vec<bool>] {
        &self.variants
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    /// Per-item differences `original_i − mean_k variant_{i,k}`.
    pub fn differences(&self) -> Vec<f64> {
        let k = self.n_variants() as f64;
        (0..self.n_items())
            .map(|i| {
                let hits = self.variants.iter().filter(|col| col[i]).count() as f64;
                f64::from(u8::from(self.original[i])) - hits / k
            })
            .collect()
    }

    /// Reads one `{"id", "original", "variants"}` object per line.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut ids = Vec::new();
        let mut original = Vec::new();
        let mut rows: Vec<Vec<bool>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorrectnessLine = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
            if let Some(first) = rows.first() {
                if parsed.variants.len() != first.len() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("{} variants, expected {}", parsed.variants.len(), first.len()),
                    });
                }
            }
            ids.push(parsed.id);
            original.push(parsed.original);
            rows.push(parsed.variants);
        }
        let k = rows.first().map_or(0, Vec::len);
        let variants = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        CorrectnessMatrix::new(ids, original, variants)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_items() {
            let line = CorrectnessLine {
                id: self.item_ids[i].clone(),
                original: self.original[i],
                variants: self.variants.iter().map(|c| c[i]).collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffDelta {
    pub delta: f64,
    pub acc_orig: f64,
    pub acc_variants: Vec<f64>,
}

/// Accuracy gap between the original items and the mean variant.
///
/// Computed from integer counts with a single division, so a gap that is a
/// whole number of items is exact.
pub fn delta_cliff(m: &CorrectnessMatrix) -> CliffDelta {
    let n = m.n_items() as f64;
    let k = m.n_variants();
    let count = |col: &[bool]| col.iter().filter(|b| **b).count();
    let orig_hits = count(&m.original);
    let variant_hits: Vec<usize> = m.variants.iter().map(|c| count(c)).collect();
    let total_variant_hits: usize = variant_hits.iter().sum();
    let delta = (k as f64 * orig_hits as f64 - total_variant_hits as f64) / (k as f64 * n);
    CliffDelta {
        delta,
        acc_orig: orig_hits as f64 / n,
        acc_variants: variant_hits.iter().map(|h| *h as f64 / n).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// `None` when the differences have zero spread.
    pub t: Option<f64>,
    pub df: u64,
    pub p: f64,
    /// Zero-variance differences with a positive mean: `p` is reported as 0.
    pub degenerate: bool,
}

/// One-sample t-test of `mean(d) > 0` (or `≠ 0` when two-sided).
pub fn paired_t_test_differences(d: &[f64], two_sided: bool) -> Result<TTest> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Matrix(format!("paired t-test needs at least 2 items, got {n}")));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as u64;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        let (p, degenerate) = if two_sided {
            if mean == 0.0 { (1.0, false) } else { (0.0, true) }
        } else if mean <= 0.0 {
            (1.0, false)
        } else {
            (0.0, true)
        };
        return Ok(TTest { t: None, df, p, degenerate });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = if two_sided {
        (2.0 * stats::student_t_sf(t.abs(), df)?).min(1.0)
    } else {
        stats::student_t_sf(t, df)?
    };
    Ok(TTest { t: Some(t), df, p, degenerate: false })
}

pub fn paired_t_test(m: &CorrectnessMatrix, two_sided: bool) -> Result<TTest> {
    paired_t_test_differences(&m.differences(), two_sided)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffReport {
    pub acc_orig: f64,
    pub acc_variants: Vec<f64>,
    pub delta: f64,
    pub t_stat: Option<f64>,
    pub df: u64,
    pub p_value: f64,
    pub degenerate: bool,
    pub flagged: bool,
}

/// Flags the benchmark when the gap is positive and significant at `cliff_p`.
pub fn flag_cliff(m: &CorrectnessMatrix, cfg: &ThresholdConfig) -> Result<CliffReport> {
    let gap = delta_cliff(m);
    let test = paired_t_test(m, cfg.cliff_two_sided)?;
    Ok(CliffReport {
        flagged: test.p < cfg.cliff_p && gap.delta > 0.0,
        acc_orig: gap.acc_orig,
        acc_variants: gap.acc_variants,
        delta: gap.delta,
        t_stat: test.t,
        df: test.df,
        p_value: test.p,
        degenerate: test.degenerate,
    })
}

/// Builds a matrix with exact marginals: `orig_correct` items right on the
/// original and every variant column right on `variant_correct` items.
///
/// Variant successes are spread over the originally-correct items first,
/// rotating the start per column so the columns differ.
pub fn synthetic_cliff_matrix(
    n_items: usize,
    orig_correct: usize,
    variant_correct: usize,
    n_variants: usize,
) -> Result<CorrectnessMatrix> {
    if orig_correct > n_items || variant_correct > n_items {
        return Err(Error::invalid("correct counts exceed the number of items"));
    }
    let ids = (0..n_items).map(|i| format!("item-{i:04}")).collect();
    let original: Vec<bool> = (0..n_items).map(|i| i < orig_correct).collect();
    let variants = (0..n_variants)
        .map(|k| {
            let mut col = vec![false; n_items];
            if variant_correct <= orig_correct && orig_correct > 0 {
                let shift = k * 7 % orig_correct;
                for j in 0..variant_correct {
                    col[(j + shift) % orig_correct] = true;
                }
            } else {
                let shift = k * 7 % n_items;
                for j in 0..variant_correct {
                    col[(j + shift) % n_items] = true;
                }
            }
            col
        })
        .collect();
    CorrectnessMatrix::new(ids, original, variants)
}
