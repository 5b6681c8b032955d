//! Detection thresholds and their flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// `1 − cos(u, v)`.
    Cosine,
    Euclidean,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceMetric::Cosine => f.write_str("cosine"),
            DistanceMetric::Euclidean => f.write_str("euclidean"),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(DistanceMetric::Cosine),
            "euclidean" => Ok(DistanceMetric::Euclidean),
            other => Err(Error::Config(format!("unknown distance metric `{other}`"))),
        }
    }
}

/// Every tunable of the cascade. `Default` gives the reference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Percentage of lowest-probability tokens averaged by the Min-K% score.
    pub k_percent: f64,
    /// Bound on the mean negative log-prob of the bottom-K% tokens.
    pub tau1: f64,
    /// Flag when the raw (non-positive) score exceeds `tau1` instead.
    pub tau1_literal: bool,
    /// Additionally require an n-gram hit against the benchmark for level 1.
    pub l1_require_ngram: bool,
    pub tau2: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
    pub dbscan_metric: DistanceMetric,
    /// Require co-clustering with a benchmark point for a level-2 flag.
    pub l2_require_cluster: bool,
    /// Require the sample to sit inside the benchmark Gaussian for a level-2 flag.
    pub l2_require_gaussian: bool,
    pub gaussian_percentile: f64,
    pub tau3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub cliff_variants: usize,
    pub cliff_p: f64,
    pub cliff_two_sided: bool,
    pub ngram_n: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            k_percent: 20.0,
            tau1: 3.5,
            tau1_literal: false,
            l1_require_ngram: false,
            tau2: 0.75,
            dbscan_eps: 0.15,
            dbscan_min_samples: 5,
            dbscan_metric: DistanceMetric::Cosine,
            l2_require_cluster: true,
            l2_require_gaussian: true,
            gaussian_percentile: 97.5,
            tau3: 0.6,
            alpha: 0.4,
            beta: 0.3,
            gamma: 0.3,
            cliff_variants: 5,
            cliff_p: 0.05,
            cliff_two_sided: false,
            ngram_n: 13,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "k_percent",
    "tau1",
    "tau1_literal",
    "l1_require_ngram",
    "tau2",
    "dbscan_eps",
    "dbscan_min_samples",
    "dbscan_metric",
    "l2_require_cluster",
    "l2_require_gaussian",
    "gaussian_percentile",
    "tau3",
    "alpha",
    "beta",
    "gamma",
    "cliff_variants",
    "cliff_p",
    "cliff_two_sided",
    "ngram_n",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let finite = [
            ("k_percent", self.k_percent),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("dbscan_eps", self.dbscan_eps),
            ("gaussian_percentile", self.gaussian_percentile),
            ("tau3", self.tau3),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("cliff_p", self.cliff_p),
        ];
        if let Some((k, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return fail(format!("`{k}` must be finite"));
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return fail(format!("k_percent must be in (0, 100], got {}", self.k_percent));
        }
        if !self.tau1_literal && self.tau1 <= 0.0 {
            return fail(format!("tau1 must be > 0, got {}", self.tau1));
        }
        if !(-1.0..=1.0).contains(&self.tau2) {
            return fail(format!("tau2 must be in [-1, 1], got {}", self.tau2));
        }
        if self.dbscan_eps <= 0.0 {
            return fail(format!("dbscan_eps must be > 0, got {}", self.dbscan_eps));
        }
        if self.dbscan_min_samples < 1 {
            return fail("dbscan_min_samples must be >= 1".into());
        }
        if !(self.gaussian_percentile > 0.0 && self.gaussian_percentile < 100.0) {
            return fail(format!(
                "gaussian_percentile must be in (0, 100), got {}",
                self.gaussian_percentile
            ));
        }
        if !(0.0..=1.0).contains(&self.tau3) {
            return fail(format!("tau3 must be in [0, 1], got {}", self.tau3));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return fail("alpha, beta and gamma must be non-negative".into());
        }
        let sum = self.alpha + self.beta + self.gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("alpha + beta + gamma must equal 1, got {sum}"));
        }
        if self.cliff_variants < 2 {
            return fail("cliff_variants must be >= 2".into());
        }
        if !(self.cliff_p > 0.0 && self.cliff_p < 1.0) {
            return fail(format!("cliff_p must be in (0, 1), got {}", self.cliff_p));
        }
        if self.ngram_n < 1 {
            return fail("ngram_n must be >= 1".into());
        }
        Ok(())
    }

    /// Sets one field by its snake_case name. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "k_percent" => self.k_percent = parse(key, value)?,
            "tau1" => self.tau1 = parse(key, value)?,
            "tau1_literal" => self.tau1_literal = parse(key, value)?,
            "l1_require_ngram" => self.l1_require_ngram = parse(key, value)?,
            "tau2" => self.tau2 = parse(key, value)?,
            "dbscan_eps" => self.dbscan_eps = parse(key, value)?,
            "dbscan_min_samples" => self.dbscan_min_samples = parse(key, value)?,
            "dbscan_metric" => self.dbscan_metric = value.parse()?,
            "l2_require_cluster" => self.l2_require_cluster = parse(key, value)?,
            "l2_require_gaussian" => self.l2_require_gaussian = parse(key, value)?,
            "gaussian_percentile" => self.gaussian_percentile = parse(key, value)?,
            "tau3" => self.tau3 = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "cliff_variants" => self.cliff_variants = parse(key, value)?,
            "cliff_p" => self.cliff_p = parse(key, value)?,
            "cliff_two_sided" => self.cliff_two_sided = parse(key, value)?,
            "ngram_n" => self.ngram_n = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = ThresholdConfig::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }
}
