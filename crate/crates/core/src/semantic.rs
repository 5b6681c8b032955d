//! Semantic-level detection.
//!
//! Three signals have to agree before a synthetic sample is flagged:
//!
//! 1. its best cosine similarity to any benchmark embedding exceeds `tau2`;
//! 2. in a joint DBSCAN clustering of benchmark and synthetic embeddings it
//!    lands in a cluster that also holds at least one benchmark point;
//! 3. its Mahalanobis distance under a Gaussian fitted to the (PCA-reduced)
//!    benchmark embeddings is within the benchmark's own percentile cutoff,
//!    i.e. it looks like a member of the benchmark distribution.
//!
//! Signals 2 and 3 can be switched off through [`ThresholdConfig`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{DistanceMetric, ThresholdConfig};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::stats::{self, dot};

/// Cluster label of DBSCAN noise points.
pub const NOISE: i64 = -1;

/// Ridge added to the diagonal of the projected covariance.
pub const RIDGE: f64 = 1e-6;

/// Upper bound on the reduced dimension of the Gaussian fit.
pub const MAX_GAUSSIAN_DIM: usize = 10;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestMatch {
    pub sim: f64,
    /// Index into the benchmark slice; the earliest wins ties.
    pub index: usize,
}

/// Highest dot product between a unit vector and a set of unit vectors.
pub fn max_benchmark_similarity(sample: &[f64], benchmark: &[Vec<f64>]) -> Result<BestMatch> {
    if benchmark.is_empty() {
        return Err(Error::Empty("benchmark embeddings"));
    }
    let mut best = BestMatch { sim: f64::NEG_INFINITY, index: 0 };
    for (index, b) in benchmark.iter().enumerate() {
        if b.len() != sample.len() {
            return Err(Error::DimensionMismatch { expected: sample.len(), found: b.len() });
        }
        let sim = dot(sample, b).clamp(-1.0, 1.0);
        if sim > best.sim {
            best = BestMatch { sim, index };
        }
    }
    Ok(best)
}

pub fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        DistanceMetric::Cosine => {
            let denom = (dot(a, a) * dot(b, b)).sqrt();
            if denom == 0.0 {
                1.0
            } else {
                1.0 - dot(a, b) / denom
            }
        }
        DistanceMetric::Euclidean => {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Per point: [`NOISE`] or a cluster id. Ids are numbered from 0 in order
    /// of first appearance along the input order.
    pub labels: Vec<i64>,
    pub core_flags: Vec<bool>,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().filter(|l| **l >= 0).map(|l| *l as usize + 1).max().unwrap_or(0)
    }
}

/// DBSCAN under the given metric.
///
/// A point is core when at least `min_samples` points (itself included) lie
/// within `eps`. A border point reachable from several clusters joins the
/// cluster of its lowest-index core neighbour.
pub fn dbscan(
    points: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
    metric: DistanceMetric,
) -> Result<ClusterAssignment> {
    dbscan_by(points, eps, min_samples, |a, b| distance(metric, a, b))
}

pub fn dbscan_by<F>(
    points: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
    dist: F,
) -> Result<ClusterAssignment>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if points.is_empty() {
        return Err(Error::Empty("dbscan input"));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
    }
    if min_samples < 1 {
        return Err(Error::invalid("min_samples must be >= 1"));
    }
    let n = points.len();
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
    }

    // Neighbourhoods in ascending index order, self included.
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        neighbours[i].push(i);
        for j in (i + 1)..n {
            if dist(&points[i], &points[j]) <= eps {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    for list in &mut neighbours {
        list.sort_unstable();
    }
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    // Expand clusters over core points only; border points are attached after.
    let mut raw = vec![NOISE; n];
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || raw[seed] != NOISE {
            continue;
        }
        raw[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && raw[q] == NOISE {
                    raw[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for p in 0..n {
        if !core[p] {
            if let Some(&c) = neighbours[p].iter().find(|&&q| core[q]) {
                raw[p] = raw[c];
            }
        }
    }

    Ok(ClusterAssignment { labels: canonical_labels(&raw), core_flags: core })
}

/// Renumbers cluster ids by first appearance, leaving noise untouched.
pub fn canonical_labels(raw: &[i64]) -> Vec<i64> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&l| {
            if l < 0 {
                NOISE
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Gaussian fitted to benchmark embeddings after projection onto their top
/// principal axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianModel {
    /// `d′` orthonormal axes, each of length `d`.
    pub projection: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Mahalanobis distance at the configured percentile of the fit set.
    pub cutoff: f64,
    #[serde(skip)]
    chol: Vec<Vec<f64>>,
}

impl GaussianModel {
    /// Builds a model from explicit parameters; mainly for tests and for
    /// models computed elsewhere.
    pub fn from_parts(
        projection: Vec<Vec<f64>>,
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        cutoff: f64,
    ) -> Result<Self> {
        let k = mean.len();
        if covariance.len() != k || covariance.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: covariance.len() });
        }
        if projection.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: projection.len() });
        }
        let chol = stats::cholesky(&covariance)?;
        Ok(GaussianModel { projection, mean, covariance, cutoff, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.projection.iter().map(|axis| dot(axis, v)).collect()
    }

    /// Mahalanobis distance of an (unprojected) embedding.
    pub fn mahalanobis(&self, v: &[f64]) -> f64 {
        let centered: Vec<f64> =
            self.project(v).iter().zip(&self.mean).map(|(y, m)| y - m).collect();
        let z = stats::forward_substitute(&self.chol, &centered);
        dot(&z, &z).sqrt()
    }
}

pub fn gaussian_dim(n_benchmark: usize, dim: usize) -> usize {
    MAX_GAUSSIAN_DIM.min(n_benchmark.saturating_sub(1)).min(dim)
}

pub fn fit_gaussian_model(benchmark: &[Vec<f64>], percentile: f64) -> Result<GaussianModel> {
    if benchmark.len() < 2 {
        return Err(Error::invalid("Gaussian fit needs at least 2 benchmark embeddings"));
    }
    let k = gaussian_dim(benchmark.len(), benchmark[0].len());
    let projection = stats::principal_components_capped(benchmark, k)?;
    let projected: Vec<Vec<f64>> =
        benchmark.iter().map(|v| projection.iter().map(|a| dot(a, v)).collect()).collect();
    let mean = stats::mean_vector(&projected);
    let mut covariance = stats::covariance(&projected);
    for (i, row) in covariance.iter_mut().enumerate() {
        row[i] += RIDGE;
    }
    let mut model = GaussianModel::from_parts(projection, mean, covariance, 0.0)?;
    let self_distances: Vec<f64> = benchmark.iter().map(|v| model.mahalanobis(v)).collect();
    model.cutoff = stats::percentile(&self_distances, percentile)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticCheck {
    pub flag: bool,
    pub sim: f64,
    pub best_index: usize,
    pub cluster: i64,
    /// The sample's cluster contains a benchmark point.
    pub cluster_confirmed: bool,
    pub mahalanobis: Option<f64>,
}

/// Level-2 decision for one synthetic embedding.
///
/// `clusters` must come from the joint clustering in which the first
/// `benchmark.len()` points are the benchmark embeddings and `joint_index`
/// is the sample's own position.
pub fn flag_semantic_level(
    embedding: &[f64],
    joint_index: usize,
    benchmark: &[Vec<f64>],
    cfg: &ThresholdConfig,
    clusters: &ClusterAssignment,
    gaussian: Option<&GaussianModel>,
) -> Result<SemanticCheck> {
    let best = max_benchmark_similarity(embedding, benchmark)?;
    let cluster = *clusters
        .labels
        .get(joint_index)
        .ok_or_else(|| Error::invalid(format!("joint index {joint_index} out of range")))?;
    let n_b = benchmark.len().min(clusters.labels.len());
    let cluster_confirmed = cluster != NOISE && clusters.labels[..n_b].contains(&cluster);
    let mahalanobis = gaussian.map(|g| g.mahalanobis(embedding));
    let inside = match (gaussian, mahalanobis) {
        (Some(g), Some(d)) => d <= g.cutoff,
        _ => true,
    };
    let flag = best.sim > cfg.tau2
        && (!cfg.l2_require_cluster || cluster_confirmed)
        && (!cfg.l2_require_gaussian || inside);
    Ok(SemanticCheck { flag, sim: best.sim, best_index: best.index, cluster, cluster_confirmed, mahalanobis })
}

/// Level-2 state fitted once per audit: benchmark embeddings, the joint
/// clustering and the benchmark Gaussian.
#[derive(Debug, Clone)]
pub struct SemanticModel {
    benchmark: Vec<Vec<f64>>,
    clusters: ClusterAssignment,
    /// Synthetic sample index → position in the joint clustering.
    joint_slot: Vec<Option<usize>>,
    gaussian: Option<GaussianModel>,
}

impl SemanticModel {
    /// Returns `None` when the benchmark carries no embeddings.
    pub fn fit(benchmark: &Dataset, synthetic: &Dataset, cfg: &ThresholdConfig) -> Result<Option<Self>> {
        let bench: Vec<Vec<f64>> = benchmark.iter().filter_map(|s| s.embedding.clone()).collect();
        let Some(dim) = bench.first().map(Vec::len) else {
            return Ok(None);
        };
        let mut joint = bench.clone();
        let mut joint_slot = Vec::with_capacity(synthetic.len());
        for s in synthetic {
            match &s.embedding {
                Some(e) if e.len() == dim => {
                    joint_slot.push(Some(joint.len()));
                    joint.push(e.clone());
                }
                Some(e) => {
                    return Err(Error::InvalidSample {
                        id: s.id.clone(),
                        reason: format!("embedding dimension {} != benchmark dimension {dim}", e.len()),
                    })
                }
                None => joint_slot.push(None),
            }
        }
        let clusters = dbscan(&joint, cfg.dbscan_eps, cfg.dbscan_min_samples, cfg.dbscan_metric)?;
        let gaussian = if bench.len() >= 2 {
            Some(fit_gaussian_model(&bench, cfg.gaussian_percentile)?)
        } else {
            None
        };
        Ok(Some(SemanticModel { benchmark: bench, clusters, joint_slot, gaussian }))
    }

    pub fn clusters(&self) -> &ClusterAssignment {
        &self.clusters
    }

    pub fn gaussian(&self) -> Option<&GaussianModel> {
        self.gaussian.as_ref()
    }

    pub fn benchmark_embeddings(&self) -> &[Vec<f64>] {
        &self.benchmark
    }

    /// `None` when the synthetic sample has no embedding.
    pub fn check(&self, synthetic_index: usize, embedding: &[f64], cfg: &ThresholdConfig) -> Result<Option<SemanticCheck>> {
        let Some(slot) = self.joint_slot.get(synthetic_index).copied().flatten() else {
            return Ok(None);
        };
        flag_semantic_level(embedding, slot, &self.benchmark, cfg, &self.clusters, self.gaussian.as_ref())
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        crate::model::normalize_embedding(v).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let s = vec![1.0, 0.0];
        let hit = max_benchmark_similarity(&s, &[vec![0.0, 1.0], s.clone()]).unwrap();
        assert_eq!((hit.sim, hit.index), (1.0, 1));
        let orth = max_benchmark_similarity(&s, &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(orth.sim, 0.0);
        let diag = max_benchmark_similarity(&s, &[unit(&[1.0, 1.0])]).unwrap();
        assert!((diag.sim - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(max_benchmark_similarity(&s, &[vec![1.0, 0.0, 0.0]]).is_err());
        assert!(max_benchmark_similarity(&s, &[]).is_err());
        // ties go to the earliest index
        let tie = max_benchmark_similarity(&s, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(tie.index, 0);
    }

    #[test]
    fn dbscan_examples() {
        let same = vec![unit(&[1.0, 2.0]); 4];
        let c = dbscan(&same, 0.15, 3, DistanceMetric::Cosine).unwrap();
        assert_eq!(c.labels, vec![0; 4]);

        let line: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 5.0].iter().map(|x| vec![*x]).collect();
        let c = dbscan(&line, 0.15, 2, DistanceMetric::Euclidean).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, NOISE]);

        let lone = vec![vec![1.0, 0.0]];
        let c = dbscan(&lone, 0.15, 5, DistanceMetric::Cosine).unwrap();
        assert_eq!(c.labels, vec![NOISE]);

        assert!(dbscan(&[], 0.1, 1, DistanceMetric::Cosine).is_err());
        assert!(dbscan(&lone, 0.0, 1, DistanceMetric::Cosine).is_err());
    }

    #[test]
    fn dbscan_border_goes_to_first_core_neighbour() {
        // Two dense groups at 0 and 1.0 with a border point at 0.5 in between.
        let xs = [0.5, 0.0, -0.01, -0.02, 1.0, 1.01, 1.02];
        let pts: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let c = dbscan(&pts, 0.5, 4, DistanceMetric::Euclidean).unwrap();
        // point 0 borders both cores (points 1 and 4); the lower index wins
        assert!(!c.core_flags[0] && c.core_flags[1] && c.core_flags[4]);
        assert_eq!(c.labels, vec![0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn canonical_relabel() {
        assert_eq!(canonical_labels(&[3, -1, 3, 0, 7, 0]), vec![0, -1, 0, 1, 2, 1]);
    }

    #[test]
    fn gaussian_degenerate_fit() {
        let pts = vec![unit(&[1.0, 1.0, 0.0]); 5];
        let g = fit_gaussian_model(&pts, 97.5).unwrap();
        assert_eq!(g.dim(), 3);
        for (i, row) in g.covariance.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { RIDGE } else { 0.0 };
                assert!((v - want).abs() < 1e-15);
            }
        }
        assert!(pts.iter().all(|p| g.mahalanobis(p) < 1e-9));
        assert!(g.cutoff < 1e-9);
    }

    #[test]
    fn mahalanobis_one_dimensional() {
        let g = GaussianModel::from_parts(vec![vec![1.0]], vec![0.0], vec![vec![1.0]], 3.0).unwrap();
        assert!((g.mahalanobis(&[2.0]) - 2.0).abs() < 1e-15);
        assert_eq!(g.mahalanobis(&[0.0]), 0.0);
    }

    #[test]
    fn gaussian_fit_mean_has_zero_distance() {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                unit(&[1.0 + 0.1 * t.sin(), 0.5 + 0.05 * t, 0.2 * (t * 0.7).cos(), 0.3])
            })
            .collect();
        let g = fit_gaussian_model(&pts, 90.0).unwrap();
        assert_eq!(g.dim(), 4);
        // an embedding projecting exactly onto the mean
        let back: Vec<f64> = (0..4).map(|i| g.projection.iter().zip(&g.mean).map(|(a, m)| a[i] * m).sum()).collect();
        assert!(g.mahalanobis(&back) < 1e-6);
        let g_hi = fit_gaussian_model(&pts, 99.0).unwrap();
        assert!(g_hi.cutoff >= g.cutoff);
        assert!(fit_gaussian_model(&pts[..1], 90.0).is_err());
    }

    fn assignment(labels: Vec<i64>) -> ClusterAssignment {
        let n = labels.len();
        ClusterAssignment { labels, core_flags: vec![false; n] }
    }

    #[test]
    fn semantic_flag_conjunction() {
        let cfg = ThresholdConfig::default();
        let bench = vec![unit(&[1.0, 0.0, 0.0]), unit(&[0.9, 0.3, 0.1])];
        let sample = unit(&[0.95, 0.15, 0.05]);
        let clustered = assignment(vec![0, 0, 0]);
        let r = flag_semantic_level(&sample, 2, &bench, &cfg, &clustered, None).unwrap();
        assert!(r.flag && r.cluster_confirmed && r.sim > 0.75);

        let noise = assignment(vec![0, 0, NOISE]);
        let r = flag_semantic_level(&sample, 2, &bench, &cfg, &noise, None).unwrap();
        assert!(!r.flag);

        // cluster without any benchmark point does not confirm
        let synthetic_only = assignment(vec![NOISE, NOISE, 0]);
        let r = flag_semantic_level(&sample, 2, &bench, &cfg, &synthetic_only, None).unwrap();
        assert!(!r.flag && !r.cluster_confirmed);

        let far = unit(&[0.5, -0.5, 0.7]);
        let r = flag_semantic_level(&far, 2, &bench, &cfg, &clustered, None).unwrap();
        assert!(r.sim < 0.75 && !r.flag);
    }

    #[test]
    fn semantic_flag_gaussian_gate() {
        let cfg = ThresholdConfig::default();
        let bench = vec![unit(&[1.0, 0.0]), unit(&[0.95, 0.05])];
        let clustered = assignment(vec![0, 0, 0]);
        let sample = unit(&[0.97, 0.03]);
        let tight = GaussianModel::from_parts(vec![vec![1.0, 0.0]], vec![0.0], vec![vec![1e-6]], 1.0).unwrap();
        let r = flag_semantic_level(&sample, 2, &bench, &cfg, &clustered, Some(&tight)).unwrap();
        assert!(r.mahalanobis.unwrap() > 1.0);
        assert!(!r.flag);
        let relaxed = ThresholdConfig { l2_require_gaussian: false, ..cfg.clone() };
        let r = flag_semantic_level(&sample, 2, &bench, &relaxed, &clustered, Some(&tight)).unwrap();
        assert!(r.flag);
    }
}
