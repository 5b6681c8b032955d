//! Level 2 on toy embeddings: cosine similarity, joint DBSCAN and the
//! benchmark Gaussian have to agree before a sample is flagged.

use contam_audit::semantic::SemanticModel;
use contam_audit::{Dataset, Role, TextSample, ThresholdConfig};

fn around(center: &[f64], jitter: f64, i: usize) -> Vec<f64> {
    center.iter().enumerate().map(|(j, x)| x + jitter * (((i * 7 + j * 3) % 5) as f64 - 2.0)).collect()
}

fn main() -> contam_audit::Result<()> {
    let topic = [1.0, 0.2, 0.0, 0.1];
    let other = [0.0, 0.1, 1.0, 0.3];

    let benchmark: Vec<TextSample> = (0..12)
        .map(|i| {
            let center = if i % 2 == 0 { &topic } else { &other };
            TextSample::new(format!("b{i}"), "benchmark item").with_embedding(around(center, 0.02, i))
        })
        .collect();
    let synthetic = vec![
        TextSample::new("near-topic", "fresh wording, same concept").with_embedding(around(&topic, 0.02, 99)),
        TextSample::new("off-topic", "unrelated").with_embedding(vec![0.0, 1.0, 0.0, -0.4]),
    ];
    let benchmark = Dataset::new(Role::Benchmark, benchmark)?;
    let synthetic = Dataset::new(Role::Synthetic, synthetic)?;

    let cfg = ThresholdConfig { dbscan_min_samples: 3, ..ThresholdConfig::default() };
    let model = SemanticModel::fit(&benchmark, &synthetic, &cfg)?.expect("benchmark has embeddings");
    println!("joint clusters: {}", model.clusters().n_clusters());
    for (i, s) in synthetic.iter().enumerate() {
        let check = model.check(i, s.embedding.as_ref().unwrap(), &cfg)?.unwrap();
        println!(
            "{:>10}: sim {:.3} cluster {:>2} mahalanobis {:.2} -> flag {}",
            s.id,
            check.sim,
            check.cluster,
            check.mahalanobis.unwrap_or(f64::NAN),
            check.flag
        );
    }
    Ok(())
}
