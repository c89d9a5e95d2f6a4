//! The `censorlab` command line.
//!
//! Exit codes: 0 success, 1 analysis failure, 2 usage or input-format error.
//! Every command writes a `manifest.json` into its output directory.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use censorlab_core::detect::{audit, simulation_truth, testing_rate_tests, AuditOptions};
use censorlab_core::metrics::{decomposition_residual, gap_report, ClassGroupWeights};
use censorlab_core::synthgen::{censorship_rate, generate_cohort, missed_positive_rate, testing_rate};
use censorlab_core::theory::{check_threshold_censoring, linspace, tau1_bound, threshold_undertesting, GaussianMarginals};
use censorlab_core::{GroupId, SimRng, SimulationConfig};
use serde_json::json;

use crate::error::{AppError, Result};
use crate::harness::{run_sweep, write_heatmap, write_table, ExperimentSpec, SweepOptions};
use crate::io::{
    ensure_dir, parse_json, read_audit_csv, read_cohort_csv, read_records_csv, read_text, sha256_hex, write_cohort_csv,
    write_json, write_ztests_csv, Manifest,
};

#[derive(Debug, Parser)]
#[command(name = "censorlab", version, about = "Simulate and audit disparate censorship of outcome labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a cohort from a simulation config.
    Simulate(SimulateArgs),
    /// Run an experiment sweep.
    Sweep(SweepArgs),
    /// Two-proportion z-tests of testing rates between groups.
    Detect(DetectArgs),
    /// Run the disparate-censorship audit on a table.
    Audit(AuditArgs),
    /// Evaluate the theoretical quantities for threshold censorship.
    Theory(TheoryArgs),
    /// Ranking metrics of a scored cohort.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cohort size (default: the config's n_train).
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed (default: the config's seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "CENSORLAB_JOBS", default_value_t = 1)]
    pub jobs: usize,
    /// Override the spec's realization count.
    #[arg(long)]
    pub realizations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Comma-separated test columns (default: all).
    #[arg(long, value_delimiter = ',')]
    pub tests: Option<Vec<String>>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Group believed to be at higher risk (default: higher mean score).
    #[arg(long)]
    pub high_risk_group: Option<u8>,
    /// Simulation config the table came from; supplies conditions 3 and 4.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: f64,
    #[arg(long)]
    pub sigma2: f64,
    /// P(A = 0).
    #[arg(long, default_value_t = 0.5)]
    pub p_a: f64,
    #[arg(long, default_value_t = 0.05)]
    pub c: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub tau0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub tau1: f64,
    /// Label threshold (default: tau1 - 1).
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Check the bounded-noise conditions on a score grid.
    #[arg(long)]
    pub check_bcn: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub grid_points: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Cohort CSV with a score column.
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `stdout`, errors to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Sweep(a) => sweep(a, stdout),
        Command::Detect(a) => detect(a, stdout),
        Command::Audit(a) => audit_cmd(a, stdout),
        Command::Theory(a) => theory(a, stdout),
        Command::Metrics(a) => metrics(a, stdout),
    }
}

fn say(stdout: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(stdout, "{text}").map_err(|e| AppError::io("<stdout>", e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Reads a JSON input, returning the value and the hash of its bytes.
fn read_input<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = read_text(path)?;
    let value = parse_json(&text, path)?;
    Ok((value, sha256_hex(text.as_bytes())))
}

fn finish(manifest: &mut Manifest, dir: &Path, start: Instant) -> Result<()> {
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(dir)
}

fn usage(e: censorlab_core::Error) -> AppError {
    AppError::Usage(e.to_string())
}

fn simulate(a: SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let (mut config, hash): (SimulationConfig, String) = read_input(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate().map_err(usage)?;
    let n = a.n.unwrap_or(config.n_train);
    if n == 0 {
        return Err(AppError::Usage("--n must be positive".into()));
    }
    ensure_dir(&a.out)?;
    let cohort = generate_cohort(&config, n, &mut SimRng::new(config.seed))?;
    write_cohort_csv(&a.out.join("cohort.csv"), &cohort)?;
    let per_group = |f: &dyn Fn(GroupId) -> censorlab_core::Result<f64>| GroupId::BOTH.map(|g| f(g).ok());
    let prevalence = GroupId::BOTH.map(|g| {
        let members: Vec<_> = cohort.patients().iter().filter(|p| p.group == g).collect();
        (!members.is_empty()).then(|| members.iter().filter(|p| p.y).count() as f64 / members.len() as f64)
    });
    let summary = json!({
        "n": n,
        "seed": config.seed,
        "config": config,
        "group_sizes": GroupId::BOTH.map(|g| cohort.group_size(g)),
        "prevalence": prevalence,
        "testing_rate": per_group(&|g| testing_rate(&cohort, g)),
        "censorship_rate": per_group(&|g| censorship_rate(&cohort, g)),
        "missed_positive_rate": per_group(&|g| missed_positive_rate(&cohort, Some(g))),
        "missed_positive_overall": missed_positive_rate(&cohort, None).ok(),
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    let mut m = Manifest::new("simulate");
    m.input_sha256 = Some(hash);
    m.seed = Some(config.seed);
    m.outputs = vec!["cohort.csv".into(), "summary.json".into()];
    finish(&mut m, &a.out, start)?;
    say(stdout, &pretty(&summary))
}

fn sweep(a: SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let (mut spec, hash): (ExperimentSpec, String) = read_input(&a.spec)?;
    if let Some(r) = a.realizations {
        spec.realizations = r;
    }
    if a.jobs == 0 {
        return Err(AppError::Usage("--jobs must be positive".into()));
    }
    if let Some(h) = &spec.heatmap {
        for metric in &h.metrics {
            if !crate::harness::METRICS.contains(&metric.as_str()) {
                return Err(AppError::Usage(format!("heatmap metric '{metric}' is not a known metric")));
            }
        }
        if !crate::harness::AXIS_NAMES.contains(&h.x.as_str()) {
            return Err(AppError::Usage(format!("heatmap axis '{}' is not a sweep axis", h.x)));
        }
    }
    ensure_dir(&a.out)?;
    let result = run_sweep(&spec, SweepOptions { jobs: a.jobs, progress: true })?;
    let mut outputs = vec!["table.csv".to_string()];
    write_table(&result, &a.out.join("table.csv"))?;
    if let Some(h) = &spec.heatmap {
        for metric in &h.metrics {
            outputs.extend(write_heatmap(&result, metric, &h.x, &a.out)?);
        }
    }
    let failures = result.failures();
    let mut m = Manifest::new("sweep");
    m.input_sha256 = Some(hash);
    m.seed = Some(spec.master_seed);
    m.jobs = Some(a.jobs);
    m.outputs = outputs;
    m.failures = failures.clone();
    finish(&mut m, &a.out, start)?;
    say(stdout, &format!("{} cells x {} realizations written to {}", result.cells.len(), spec.realizations, a.out.display()))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(AppError::Failed(format!("{} work unit(s) failed; see manifest.json", failures.len())))
    }
}

fn detect(a: DetectArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(AppError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let table = read_records_csv(&a.records, a.tests.as_deref())?;
    let results = testing_rate_tests(&table, a.alpha)?;
    ensure_dir(&a.out)?;
    write_ztests_csv(&a.out.join("ztests.csv"), &results)?;
    write_json(&a.out.join("ztests.json"), &results)?;
    let mut m = Manifest::new("detect");
    m.input_sha256 = Some(sha256_hex(read_text(&a.records)?.as_bytes()));
    m.outputs = vec!["ztests.csv".into(), "ztests.json".into()];
    finish(&mut m, &a.out, start)?;
    say(stdout, &pretty(&results))
}

fn audit_cmd(a: AuditArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let data = read_audit_csv(&a.records)?;
    let mut options = AuditOptions { alpha: a.alpha, ..AuditOptions::default() };
    options.high_risk_group = a
        .high_risk_group
        .map(|g| GroupId::try_from(g).map_err(usage))
        .transpose()?;
    if let Some(path) = &a.config {
        let (config, _): (SimulationConfig, String) = read_input(path)?;
        config.validate().map_err(usage)?;
        options.truth = Some(simulation_truth(&config));
    }
    let report = audit(&data, &options)?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("audit.json"), &report)?;
    let mut m = Manifest::new("audit");
    m.input_sha256 = Some(sha256_hex(read_text(&a.records)?.as_bytes()));
    m.outputs = vec!["audit.json".into()];
    finish(&mut m, &a.out, start)?;
    say(stdout, &pretty(&report))
}

fn theory(a: TheoryArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let g = GaussianMarginals { mu0: a.mu0, mu1: a.mu1, sigma2: a.sigma2, p_a: a.p_a, c: a.c };
    g.validate().map_err(usage)?;
    if a.tau1 > a.tau0 {
        return Err(AppError::Usage(format!("tau1 ({}) must not exceed tau0 ({})", a.tau1, a.tau0)));
    }
    let b = a.b.unwrap_or(a.tau1 - 1.0);
    let bound = tau1_bound(&g).ok();
    let verdict = if a.check_bcn {
        if a.grid_points < 2 {
            return Err(AppError::Usage("--grid-points must be at least 2".into()));
        }
        let spread = 6.0 * a.sigma2.sqrt();
        let lo = a.grid_lo.unwrap_or(a.mu0.min(a.mu1).min(b).min(a.tau1) - spread);
        let hi = a.grid_hi.unwrap_or(a.mu0.max(a.mu1).max(a.tau0) + spread);
        Some(check_threshold_censoring(&g, a.tau0, a.tau1, b, &linspace(lo, hi, a.grid_points))?)
    } else {
        None
    };
    let report = json!({
        "marginals": g,
        "tau0": a.tau0,
        "tau1": a.tau1,
        "b": b,
        "tau1_bound": bound,
        "undertesting": threshold_undertesting(a.tau0, a.tau1, a.c),
        "bcn": verdict,
    });
    ensure_dir(&a.out)?;
    write_json(&a.out.join("theory.json"), &report)?;
    let mut m = Manifest::new("theory");
    m.outputs = vec!["theory.json".into()];
    finish(&mut m, &a.out, start)?;
    match verdict {
        Some(v) if v.is_admissible() => say(stdout, "admissible"),
        Some(v) => say(stdout, &format!("not admissible: {}", serde_json::to_string(&v).expect("serializable"))),
        None => say(stdout, &pretty(&report)),
    }
}

fn metrics(a: MetricsArgs, stdout: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let (cohort, has_score) = read_cohort_csv(&a.cohort)?;
    if !has_score {
        return Err(AppError::Schema(format!("{}: missing column(s) score", a.cohort.display())));
    }
    let report = gap_report(&cohort)?;
    let residual = decomposition_residual(&report, &ClassGroupWeights::from_cohort(&cohort)?)?;
    let out = json!({ "report": report, "decomposition_residual": residual });
    ensure_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &out)?;
    let mut m = Manifest::new("metrics");
    m.input_sha256 = Some(sha256_hex(read_text(&a.cohort)?.as_bytes()));
    m.outputs = vec!["metrics.json".into()];
    finish(&mut m, &a.out, start)?;
    say(stdout, &pretty(&out))
}
