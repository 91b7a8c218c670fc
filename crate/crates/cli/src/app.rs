// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sncp::bench::{run_experiment, Design};
use sncp::critical_values::{cache_table, load_table, simulate_table, DEFAULT_PROBABILITIES};
use sncp::multi_cp::{t_n_diamond_with_table, DEFAULT_EPSILON};
use sncp::segment_stats::SegmentEvaluator;
use sncp::segmentation::{calibrate_threshold, wbs_with_threshold};
use sncp::{
    binary_segmentation, builtin_table, cov_change_test, t_n, t_n_star, CovStatistic,
    QuantileTable, SampleMatrix, SegmentKernel, StatisticKind, WbsConfig,
};
use thiserror::Error;

use crate::ingest::{ingest_csv, IngestError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<sncp::Error> for CliError {
    fn from(e: sncp::Error) -> Self {
        match e {
            sncp::Error::Degenerate(m) => CliError::Degenerate(m),
            sncp::Error::Io(e) => CliError::Internal(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    /// Discretized grid with built-in critical values.
    Diamond,
    /// Full grid; critical values simulated on demand or loaded with --table.
    Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStat {
    #[value(name = "t-n")]
    TN,
    #[value(name = "t-n-diamond")]
    TNDiamond,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Wbs,
    T,
    TStar,
    TDiamond,
    KsRef,
}

#[derive(Debug, Parser)]
#[command(name = "sncp", version, about = "Self-normalized change point tests and segmentation")]
pub struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report destination; standard output when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single change point test T_n.
    TestMeanSingle(SingleArgs),
    /// Scan test for an unknown number of change points.
    TestMeanMulti(MultiArgs),
    /// Covariance change test on vech(X Xᵀ).
    TestCov(CovArgs),
    /// Wild binary segmentation.
    EstimateWbs(WbsArgs),
    /// Binary segmentation with T_n.
    EstimateBs(BsArgs),
    /// WBS threshold or null quantile table.
    Calibrate(CalibrateArgs),
    /// Run a TOML simulation design.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SingleArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Quantile table file replacing the built-in one.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Write the diagnostic trajectory (k, G_n(k), D/n³, T-ratio) here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MultiArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Scan::Diamond)]
    pub scan: Scan,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Replications when the full-grid table is simulated on demand.
    #[arg(long, default_value_t = 1000)]
    pub calibration_reps: usize,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = CovStat::TN)]
    pub statistic: CovStat,
    /// Subtract column means first (the test assumes centered data).
    #[arg(long)]
    pub demean: bool,
}

#[derive(Debug, Args, Clone)]
pub struct WbsParams {
    /// Random intervals M.
    #[arg(long, default_value_t = 1000)]
    pub intervals: usize,
    /// Calibration replications R.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Smallest e - s of a random interval.
    #[arg(long, default_value_t = 5)]
    pub min_span: usize,
    /// Use this threshold instead of calibrating one.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WbsArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub wbs: WbsParams,
}

#[derive(Debug, Args)]
pub struct BsArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Replications for quantile tables.
    #[arg(long, default_value_t = 2000)]
    pub table_reps: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[command(flatten)]
    pub wbs: WbsParams,
    /// Write the simulated quantile table to this cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub design: PathBuf,
    /// Overrides the design's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
}

/// Resolved configuration echoed into every report.
#[derive(Debug, Default, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wbs: Option<WbsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demean: Option<bool>,
    pub master_seed: u64,
    pub threads: usize,
    pub format: Option<Format>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub result: Value,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Csv => {
                let mut rows = Vec::new();
                flatten("", &serde_json::to_value(self).expect("report serializes"), &mut rows);
                let mut out = String::from("key,value\n");
                for (k, v) in rows {
                    out.push_str(&format!("{k},{}\n", csv_cell(&v)));
                }
                out
            }
        }
    }
}

fn csv_cell(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Diagnostic trajectory of the full-sample statistics as tidy CSV.
pub fn plot_csv(sample: &SampleMatrix<f64>) -> Result<String, CliError> {
    let n = sample.n();
    let kernel = SegmentEvaluator::new(sample);
    let mut out = String::from("k,g_n,d_scaled,t_ratio\n");
    for k in 2..=n.saturating_sub(2) {
        let g = kernel.g_diag(k)?;
        let d = kernel.d_stat(0, k, n)?;
        let ratio = if k + 3 <= n {
            let w = kernel.w_normalizer(0, k, n)?;
            if w > 0.0 {
                (d * d / w).to_string()
            } else {
                String::new()
            }
        } else {
            String::new()
        };
        out.push_str(&format!("{k},{g},{d},{ratio}\n"));
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn load_table_input(path: &Path) -> Result<QuantileTable, CliError> {
    Ok(load_table(path)?)
}

fn wbs_config(p: &WbsParams, seed: u64) -> WbsConfig {
    WbsConfig {
        intervals: p.intervals,
        calibration_reps: p.reps,
        level: p.level,
        min_span: p.min_span,
        master_seed: seed,
        ..WbsConfig::default()
    }
}

fn shape(sample: &SampleMatrix<f64>) -> Value {
    json!({ "n": sample.n(), "p": sample.p() })
}

fn with_shape(sample: &SampleMatrix<f64>, mut body: Value) -> Value {
    if let Value::Object(map) = &mut body {
        map.insert("sample".into(), shape(sample));
    }
    body
}

/// Executes the parsed command and returns the report.
pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    let seed = cli.seed.unwrap_or(0);
    let mut config = RunConfig {
        master_seed: seed,
        threads: cli.threads,
        format: Some(cli.format),
        ..RunConfig::default()
    };
    let result = match &cli.command {
        Command::TestMeanSingle(a) => {
            config.subcommand = "test-mean-single";
            config.input = Some(a.input.clone());
            config.alpha = Some(a.alpha);
            config.statistic = Some("t_n".into());
            config.table = a.table.clone();
            let x = ingest_csv(&a.input)?;
            let outcome = match &a.table {
                Some(path) => sncp::single_cp::t_n_with_table(&x, a.alpha, &load_table_input(path)?)?,
                None => t_n(&x, a.alpha)?,
            };
            if let Some(plot) = &a.plot {
                write_file(plot, &plot_csv(&x)?)?;
            }
            with_shape(&x, serde_json::to_value(outcome).expect("serializable"))
        }
        Command::TestMeanMulti(a) => {
            config.subcommand = "test-mean-multi";
            config.input = Some(a.input.clone());
            config.alpha = Some(a.alpha);
            config.epsilon = Some(a.epsilon);
            config.table = a.table.clone();
            let x = ingest_csv(&a.input)?;
            let outcome = match a.scan {
                Scan::Diamond => {
                    config.statistic = Some("t_n_diamond".into());
                    let table = match &a.table {
                        Some(path) => load_table_input(path)?,
                        None => builtin_table(StatisticKind::TDiamond)?,
                    };
                    t_n_diamond_with_table(&x, a.epsilon, a.alpha, &table)?
                }
                Scan::Star => {
                    config.statistic = Some("t_n_star".into());
                    let table = match &a.table {
                        Some(path) => load_table_input(path)?,
                        None => {
                            config.replications = Some(a.calibration_reps);
                            simulate_table(
                                StatisticKind::TStar,
                                Some(a.epsilon),
                                x.n(),
                                x.p(),
                                a.calibration_reps,
                                seed,
                                &DEFAULT_PROBABILITIES,
                            )?
                        }
                    };
                    t_n_star(&x, a.epsilon, a.alpha, &table)?
                }
            };
            if let Some(plot) = &a.plot {
                write_file(plot, &plot_csv(&x)?)?;
            }
            with_shape(&x, serde_json::to_value(outcome).expect("serializable"))
        }
        Command::TestCov(a) => {
            config.subcommand = "test-cov";
            config.input = Some(a.input.clone());
            config.alpha = Some(a.alpha);
            config.demean = Some(a.demean);
            let mut x = ingest_csv(&a.input)?;
            if a.demean {
                eprintln!(
                    "warning: centering with full-sample column means; a mean change will also move the covariance statistic"
                );
                x = x.centered();
            }
            let stat = match a.statistic {
                CovStat::TN => CovStatistic::TN,
                CovStat::TNDiamond => {
                    config.epsilon = Some(a.epsilon);
                    CovStatistic::TNDiamond { epsilon: a.epsilon }
                }
            };
            config.statistic = Some(serde_json::to_value(a.statistic).expect("enum").as_str().unwrap_or("").into());
            let outcome = cov_change_test(&x, stat, a.alpha)?;
            with_shape(&x, serde_json::to_value(outcome).expect("serializable"))
        }
        Command::EstimateWbs(a) => {
            config.subcommand = "estimate-wbs";
            config.input = Some(a.input.clone());
            let x = ingest_csv(&a.input)?;
            let cfg = wbs_config(&a.wbs, seed);
            config.wbs = Some(cfg.clone());
            let threshold = match a.wbs.threshold {
                Some(t) => t,
                None => calibrate_threshold(x.n(), x.p(), &cfg)?,
            };
            let set = wbs_with_threshold(&x, &cfg, threshold)?;
            with_shape(
                &x,
                json!({ "threshold": threshold, "locations": set.locations(), "detections": set.detections }),
            )
        }
        Command::EstimateBs(a) => {
            config.subcommand = "estimate-bs";
            config.input = Some(a.input.clone());
            config.alpha = Some(a.alpha);
            let x = ingest_csv(&a.input)?;
            let set = binary_segmentation(&x, a.alpha)?;
            with_shape(&x, json!({ "locations": set.locations(), "detections": set.detections }))
        }
        Command::Calibrate(a) => {
            config.subcommand = "calibrate";
            config.statistic = Some(serde_json::to_value(a.target).expect("enum").as_str().unwrap_or("").into());
            match a.target {
                Target::Wbs => {
                    let cfg = wbs_config(&a.wbs, seed);
                    config.wbs = Some(cfg.clone());
                    let threshold = calibrate_threshold(a.n, a.p, &cfg)?;
                    json!({ "n": a.n, "p": a.p, "threshold": threshold })
                }
                target => {
                    let kind = match target {
                        Target::T => StatisticKind::T,
                        Target::TStar => StatisticKind::TStar,
                        Target::TDiamond => StatisticKind::TDiamond,
                        _ => StatisticKind::KsRef,
                    };
                    let eps = matches!(kind, StatisticKind::TStar | StatisticKind::TDiamond).then_some(a.epsilon);
                    config.epsilon = eps;
                    config.replications = Some(a.table_reps);
                    let table = simulate_table(kind, eps, a.n, a.p, a.table_reps, seed, &DEFAULT_PROBABILITIES)?;
                    if let Some(path) = &a.cache {
                        cache_table(&table, path)?;
                    }
                    json!({
                        "table": table.info(),
                        "quantiles": table.quantiles(),
                        "cache": a.cache,
                    })
                }
            }
        }
        Command::Bench(a) => {
            config.subcommand = "bench";
            config.input = Some(a.design.clone());
            let design = Design::load(&a.design)?;
            let reps = a.reps.or(design.replications).unwrap_or(500);
            let seed = cli.seed.or(design.master_seed).unwrap_or(0);
            config.master_seed = seed;
            config.replications = Some(reps);
            let report = run_experiment(&design, reps, seed, None)?;
            serde_json::to_value(report).expect("serializable")
        }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        config,
        result,
    })
}

/// Full CLI run: thread setup, execution and output. Returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    if cli.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let outcome = execute(cli).and_then(|report| {
        let text = report.render(cli.format);
        match &cli.output {
            Some(path) => write_file(path, &text),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Internal(e.to_string())),
        }
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sncp: {e}");
            e.exit_code()
        }
    }
}
