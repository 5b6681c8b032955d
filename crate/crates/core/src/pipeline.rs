//! The detection cascade.
//!
//! Each synthetic sample walks levels 1 → 2 → 3 and stops at the first level
//! that flags it; later levels are never evaluated for that sample, so their
//! scores stay absent in the verdict. Level-2 state (joint clustering and
//! benchmark Gaussian) and the parsed benchmark traces are built once per
//! run. The performance-cliff check is independent of the per-sample
//! verdicts and only runs when a correctness matrix is supplied.
//!
//! The per-sample phase runs on the ambient rayon pool; wrap the call in
//! `ThreadPool::install` to bound parallelism. Output does not depend on the
//! number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cliff::{flag_cliff, CliffReport, CorrectnessMatrix};
use crate::config::ThresholdConfig;
use crate::error::{Error, Result};
use crate::model::{Dataset, TextSample, Verdict};
use crate::reasoning::ReasoningIndex;
use crate::semantic::SemanticModel;
use crate::token::{flag_token_level, min_k_score, NgramIndex};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub clean: usize,
    pub level1: usize,
    pub level2: usize,
    pub level3: usize,
}

impl Summary {
    pub fn flagged(&self) -> usize {
        self.level1 + self.level2 + self.level3
    }

    pub fn total(&self) -> usize {
        self.clean + self.flagged()
    }
}

pub fn summarize_verdicts(verdicts: &[Verdict]) -> Summary {
    let mut s = Summary::default();
    for v in verdicts {
        match v.flagged_level {
            0 => s.clean += 1,
            1 => s.level1 += 1,
            2 => s.level2 += 1,
            _ => s.level3 += 1,
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct AuditRun<'a> {
    pub config: ThresholdConfig,
    pub synthetic: &'a Dataset,
    pub benchmark: &'a Dataset,
    pub correctness: Option<&'a CorrectnessMatrix>,
    /// One verdict per synthetic sample, in input order.
    pub verdicts: Vec<Verdict>,
    pub cliff: Option<CliffReport>,
}

impl AuditRun<'_> {
    pub fn summary(&self) -> Summary {
        summarize(self)
    }

    /// Any sample flagged, or the benchmark-level cliff flagged.
    pub fn contamination_found(&self) -> bool {
        self.verdicts.iter().any(Verdict::is_flagged) || self.cliff.as_ref().is_some_and(|c| c.flagged)
    }
}

pub fn summarize(run: &AuditRun<'_>) -> Summary {
    summarize_verdicts(&run.verdicts)
}

struct Cascade<'a> {
    cfg: &'a ThresholdConfig,
    ngrams: Option<NgramIndex>,
    semantic: Option<SemanticModel>,
    reasoning: ReasoningIndex,
}

impl Cascade<'_> {
    fn verdict(&self, index: usize, sample: &TextSample) -> Result<Verdict> {
        let cfg = self.cfg;
        let mut v = Verdict::clean(&sample.id);

        if let Some(lp) = sample.token_logprobs.as_deref().filter(|lp| !lp.is_empty()) {
            let score = min_k_score(lp, cfg.k_percent)?;
            v.l1_score = Some(score.value);
            let mut hit = flag_token_level(&score, cfg.tau1, cfg.tau1_literal);
            if let Some(index) = &self.ngrams {
                hit = hit && index.matches(&sample.text);
            }
            if hit {
                v.flagged_level = 1;
                v.severity = Some(1);
                return Ok(v);
            }
        }

        if let (Some(model), Some(emb)) = (&self.semantic, sample.embedding.as_deref()) {
            if let Some(check) = model.check(index, emb, cfg)? {
                v.l2_sim = Some(check.sim);
                v.l2_cluster = Some(check.cluster);
                v.l2_mahalanobis = check.mahalanobis;
                if check.flag {
                    v.flagged_level = 2;
                    v.severity = Some(if check.cluster_confirmed { 3 } else { 2 });
                    return Ok(v);
                }
            }
        }

        if let Some(check) = self.reasoning.check(sample, cfg)? {
            v.l3_sim = Some(check.best_sim);
            if check.flag {
                v.flagged_level = 3;
                v.severity = Some(4);
            }
        }
        Ok(v)
    }
}

pub fn run_pipeline<'a>(
    synthetic: &'a Dataset,
    benchmark: &'a Dataset,
    cfg: &ThresholdConfig,
    correctness: Option<&'a CorrectnessMatrix>,
) -> Result<AuditRun<'a>> {
    cfg.validate()?;
    if benchmark.is_empty() {
        return Err(Error::Empty("benchmark dataset"));
    }
    let cascade = Cascade {
        cfg,
        ngrams: cfg
            .l1_require_ngram
            .then(|| NgramIndex::new(benchmark.iter().map(|s| s.text.as_str()), cfg.ngram_n)),
        semantic: SemanticModel::fit(benchmark, synthetic, cfg)?,
        reasoning: ReasoningIndex::new(benchmark),
    };
    let verdicts = synthetic
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| cascade.verdict(i, s))
        .collect::<Result<Vec<_>>>()?;
    let cliff = correctness.map(|m| flag_cliff(m, cfg)).transpose()?;
    Ok(AuditRun { config: cfg.clone(), synthetic, benchmark, correctness, verdicts, cliff })
}
