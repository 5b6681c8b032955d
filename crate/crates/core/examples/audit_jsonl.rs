//! End-to-end audit through the file interfaces: write a bundle as JSONL,
//! load it back, run the cascade and write the JSON report.

use contam_audit::harness::{generate_scenario, ScenarioKind};
use contam_audit::model::load_dataset;
use contam_audit::report::{write_report, Report};
use contam_audit::{run_pipeline, Role, ThresholdConfig};

fn main() -> contam_audit::Result<()> {
    let dir = std::env::temp_dir().join("contam-audit-example");
    generate_scenario(ScenarioKind::S4, 60, 30, 0.2, 11)?.write(&dir)?;

    let synthetic = load_dataset(dir.join("synthetic.jsonl"), Role::Synthetic)?;
    let benchmark = load_dataset(dir.join("benchmark.jsonl"), Role::Benchmark)?;
    let cfg = ThresholdConfig::default();
    let run = run_pipeline(&synthetic, &benchmark, &cfg, None)?;

    let report_path = dir.join("report.json");
    write_report(&cfg, &run.verdicts, run.cliff.as_ref(), &report_path)?;
    let report = Report::from_run(&run);
    println!("summary: {:?}", report.summary);
    for v in report.verdicts.iter().filter(|v| v.is_flagged()).take(3) {
        println!("  {} level {} severity {:?} l3_sim {:.3}", v.sample_id, v.flagged_level, v.severity, v.l3_sim.unwrap_or(0.0));
    }
    println!("report written to {}", report_path.display());
    Ok(())
}
