//! Planted-contamination scenarios scored against the pipeline and the two
//! baselines.
//!
//! ```text
//! cargo run --release --example scenario_eval -- 200 100 0.2 7
//! ```

use contam_audit::harness::{evaluate, generate_scenario, ScenarioKind};
use contam_audit::ThresholdConfig;

fn main() -> contam_audit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let n_syn: usize = arg(0, "200").parse().expect("n_syn");
    let n_bench: usize = arg(1, "100").parse().expect("n_bench");
    let rate: f64 = arg(2, "0.2").parse().expect("rate");
    let seed: u64 = arg(3, "7").parse().expect("seed");

    let cfg = ThresholdConfig::default();
    println!("scenario  pipeline-F1  13-gram-F1  embedding-F1  L1/L2/L3 hits  McNemar p (vs 13-gram)");
    for kind in ScenarioKind::ALL {
        let e = evaluate(&generate_scenario(kind, n_syn, n_bench, rate, seed)?, &cfg)?;
        let m = &e.metrics;
        println!(
            "{kind:<8}  {:>11.3}  {:>10.3}  {:>12.3}  {:>4}/{}/{}  {:>22.2e}",
            m.pipeline.f1,
            m.ngram_baseline.f1,
            m.embedding_baseline.f1,
            m.level1.tp,
            m.level2.tp,
            m.level3.tp,
            e.comparisons.pipeline_vs_ngram.p
        );
    }
    Ok(())
}
