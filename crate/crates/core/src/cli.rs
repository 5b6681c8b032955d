//! Command-line front end.
//!
//! Exit codes: 0 when nothing is flagged, 2 when contamination is flagged
//! (any sample, or the cliff test), 1 on any error including bad usage.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cliff::{flag_cliff, CliffReport, CorrectnessMatrix};
use crate::config::ThresholdConfig;
use crate::harness::{evaluate, generate_scenario, Evaluation, ScenarioKind};
use crate::model::{load_dataset, Role};
use crate::pipeline::run_pipeline;
use crate::report::{write_json, Report};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "contam-audit", version, about = "Audit synthetic data for benchmark contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the detection cascade over a synthetic corpus.
    Detect(DetectArgs),
    /// Generate a planted-contamination scenario and score the detectors on it.
    Eval(EvalArgs),
    /// Run only the performance-cliff test on a correctness matrix.
    Cliff(CliffArgs),
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    benchmark: PathBuf,
    /// Per-item correctness on original and perturbed benchmark items.
    #[arg(long)]
    correctness: Option<PathBuf>,
    /// Flat `key = value` threshold file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// S1, S2, S3 or S4.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 200)]
    n_syn: usize,
    #[arg(long, default_value_t = 100)]
    n_bench: usize,
    #[arg(long, default_value_t = 0.2)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Also write the generated bundle (JSONL datasets and labels) here.
    #[arg(long)]
    bundle_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
struct CliffArgs {
    #[arg(long)]
    correctness: PathBuf,
    /// Significance level.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    two_sided: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

/// One optional flag per config key, parsed by [`ThresholdConfig::set`].
#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long, value_name = "PERCENT")]
    k_percent: Option<String>,
    #[arg(long, value_name = "NLL")]
    tau1: Option<String>,
    #[arg(long, value_name = "BOOL")]
    tau1_literal: Option<String>,
    #[arg(long, value_name = "BOOL")]
    l1_require_ngram: Option<String>,
    #[arg(long, value_name = "SIM")]
    tau2: Option<String>,
    #[arg(long, value_name = "DIST")]
    dbscan_eps: Option<String>,
    #[arg(long, value_name = "N")]
    dbscan_min_samples: Option<String>,
    #[arg(long, value_name = "cosine|euclidean")]
    dbscan_metric: Option<String>,
    #[arg(long, value_name = "BOOL")]
    l2_require_cluster: Option<String>,
    #[arg(long, value_name = "BOOL")]
    l2_require_gaussian: Option<String>,
    #[arg(long, value_name = "PERCENT")]
    gaussian_percentile: Option<String>,
    #[arg(long, value_name = "SIM")]
    tau3: Option<String>,
    #[arg(long, value_name = "W")]
    alpha: Option<String>,
    #[arg(long, value_name = "W")]
    beta: Option<String>,
    #[arg(long, value_name = "W")]
    gamma: Option<String>,
    #[arg(long, value_name = "K")]
    cliff_variants: Option<String>,
    #[arg(long, value_name = "P")]
    cliff_p: Option<String>,
    #[arg(long, value_name = "BOOL")]
    cliff_two_sided: Option<String>,
    #[arg(long, value_name = "N")]
    ngram_n: Option<String>,
}

impl ThresholdArgs {
    fn overrides(&self) -> [(&'static str, Option<&String>); 19] {
        [
            ("k_percent", self.k_percent.as_ref()),
            ("tau1", self.tau1.as_ref()),
            ("tau1_literal", self.tau1_literal.as_ref()),
            ("l1_require_ngram", self.l1_require_ngram.as_ref()),
            ("tau2", self.tau2.as_ref()),
            ("dbscan_eps", self.dbscan_eps.as_ref()),
            ("dbscan_min_samples", self.dbscan_min_samples.as_ref()),
            ("dbscan_metric", self.dbscan_metric.as_ref()),
            ("l2_require_cluster", self.l2_require_cluster.as_ref()),
            ("l2_require_gaussian", self.l2_require_gaussian.as_ref()),
            ("gaussian_percentile", self.gaussian_percentile.as_ref()),
            ("tau3", self.tau3.as_ref()),
            ("alpha", self.alpha.as_ref()),
            ("beta", self.beta.as_ref()),
            ("gamma", self.gamma.as_ref()),
            ("cliff_variants", self.cliff_variants.as_ref()),
            ("cliff_p", self.cliff_p.as_ref()),
            ("cliff_two_sided", self.cliff_two_sided.as_ref()),
            ("ngram_n", self.ngram_n.as_ref()),
        ]
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

fn effective_config(file: Option<&Path>, flags: Option<&ThresholdArgs>) -> anyhow::Result<ThresholdConfig> {
    let mut cfg = ThresholdConfig::default();
    if let Some(path) = file {
        require_file(path, "config")?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_kv(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for (key, value) in flags.map(ThresholdArgs::overrides).into_iter().flatten() {
        if let Some(value) = value {
            cfg.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build().context("starting worker pool")?.install(f))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn detect(args: &DetectArgs) -> anyhow::Result<i32> {
    require_file(&args.synthetic, "synthetic")?;
    require_file(&args.benchmark, "benchmark")?;
    if let Some(path) = &args.correctness {
        require_file(path, "correctness")?;
    }
    let cfg = effective_config(args.config.as_deref(), Some(&args.thresholds))?;
    let synthetic = load_dataset(&args.synthetic, Role::Synthetic)?;
    let benchmark = load_dataset(&args.benchmark, Role::Benchmark)?;
    let correctness = args.correctness.as_ref().map(CorrectnessMatrix::load).transpose()?;
    let run = with_jobs(args.jobs, || run_pipeline(&synthetic, &benchmark, &cfg, correctness.as_ref()))??;
    write_json(&args.report, &Report::from_run(&run).to_json())?;
    Ok(if run.contamination_found() { EXIT_FLAGGED } else { EXIT_CLEAN })
}

#[derive(Serialize)]
struct EvalReport<'a> {
    config: &'a ThresholdConfig,
    rate: f64,
    #[serde(flatten)]
    evaluation: &'a Evaluation,
}

fn eval(args: &EvalArgs) -> anyhow::Result<i32> {
    let kind: ScenarioKind = args.scenario.parse()?;
    let cfg = effective_config(args.config.as_deref(), Some(&args.thresholds))?;
    let bundle = generate_scenario(kind, args.n_syn, args.n_bench, args.rate, args.seed)?;
    if let Some(dir) = &args.bundle_dir {
        bundle.write(dir)?;
    }
    let evaluation = with_jobs(args.jobs, || evaluate(&bundle, &cfg))??;
    let report = EvalReport { config: &cfg, rate: args.rate, evaluation: &evaluation };
    write_json(&args.report, &to_json(&report))?;
    Ok(EXIT_CLEAN)
}

#[derive(Serialize)]
struct CliffOutput<'a> {
    config: &'a ThresholdConfig,
    cliff: &'a CliffReport,
}

fn cliff(args: &CliffArgs) -> anyhow::Result<i32> {
    require_file(&args.correctness, "correctness")?;
    let mut cfg = effective_config(args.config.as_deref(), None)?;
    if let Some(p) = args.p {
        cfg.cliff_p = p;
    }
    cfg.cliff_two_sided |= args.two_sided;
    cfg.validate()?;
    let matrix = CorrectnessMatrix::load(&args.correctness)?;
    let report = flag_cliff(&matrix, &cfg)?;
    write_json(&args.report, &to_json(&CliffOutput { config: &cfg, cliff: &report }))?;
    Ok(if report.flagged { EXIT_FLAGGED } else { EXIT_CLEAN })
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_CLEAN };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Cliff(a) => cliff(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_ERROR
    })
}
