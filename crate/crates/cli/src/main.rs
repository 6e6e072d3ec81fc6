//! Command-line interface: dataset estimation, synthetic-data dumps,
//! and Monte Carlo benchmark tables.

mod estimate;
mod io;
mod table;

use std::io::Write;
use std::path::PathBuf;

use carbounds::car::{Mechanism, MechanismKind};
use carbounds::mcsim::{mc_table, simulate_dataset, Design};
use clap::{Args, Parser, Subcommand};

use crate::estimate::{parse_estimands, run_all, write_reports, ReportFormat, VariantChoice};
use crate::io::{
    parse_dataset_csv, parse_table_config, parse_target_probs, write_dataset_csv, CliError,
    SupportMode,
};

#[derive(Parser)]
#[command(
    name = "carbounds",
    version,
    about = "Sharp bounds and uniformly valid confidence intervals for average treatment \
             effects under covariate-adaptive randomization with imperfect compliance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate bounds and confidence intervals from a dataset CSV
    Estimate(EstimateArgs),
    /// Generate one synthetic benchmark dataset as CSV
    Simulate(SimulateArgs),
    /// Run a Monte Carlo benchmark table from a config file
    McTable(McTableArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset CSV with header columns y, d, a, s
    #[arg(long)]
    input: PathBuf,
    /// Estimand: ate, att, atu, or all (repeat or comma-separate for several)
    #[arg(long, value_delimiter = ',', default_value = "ate")]
    estimand: Vec<String>,
    /// Estimator variant: recommended, sample, target, target-sample, sample-sample
    #[arg(long, default_value = "recommended")]
    variant: String,
    /// CSV with header columns s, pi mapping stratum labels to target
    /// assignment probabilities (required by target-weighted variants)
    #[arg(long)]
    target_probs: Option<PathBuf>,
    /// Outcome support: "sample" for the sample min/max, or "LOW,HIGH"
    #[arg(long)]
    support: String,
    /// Randomization mechanism the data came from (srs or sbr); required
    /// by variance formulas that correct for assignment imbalance
    #[arg(long)]
    mechanism: Option<String>,
    /// Miscoverage level: confidence intervals cover with probability 1 - alpha
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output format: text, json, or csv
    #[arg(long, default_value = "text")]
    format: String,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark design: 1, 2, or 3
    #[arg(long)]
    design: String,
    /// Randomization mechanism: srs or sbr
    #[arg(long)]
    mechanism: String,
    /// Number of units
    #[arg(long)]
    n: usize,
    /// Base seed for the deterministic random-number streams
    #[arg(long)]
    seed: u64,
    /// Replication index (selects the stream within the seed)
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Write the dataset to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct McTableArgs {
    /// Plain-text config: table = ate|att, n, reps, seed, optional alpha, out
    #[arg(long)]
    config: PathBuf,
}

fn parse_mechanism(text: &str) -> Result<MechanismKind, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "srs" => Ok(MechanismKind::Srs),
        "sbr" => Ok(MechanismKind::Sbr),
        other => Err(CliError::Input(format!(
            "unknown mechanism {other:?}; expected srs or sbr"
        ))),
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            Ok(Box::new(file))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let kinds = parse_estimands(&args.estimand)?;
    let choice = VariantChoice::parse(&args.variant)?;
    let format = ReportFormat::parse(&args.format)?;
    let support = SupportMode::parse(&args.support)?;
    let mechanism = args
        .mechanism
        .as_deref()
        .map(parse_mechanism)
        .transpose()?;
    let target_map = args
        .target_probs
        .as_deref()
        .map(parse_target_probs)
        .transpose()?;

    let dataset = parse_dataset_csv(&args.input, support)?;
    let reports = run_all(
        &kinds,
        choice,
        &dataset,
        target_map.as_ref(),
        mechanism,
        args.alpha,
    )?;
    let out = open_output(&args.output)?;
    write_reports(out, &reports, format)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let design = Design::by_name(&args.design)?;
    let kind = parse_mechanism(&args.mechanism)?;
    let mechanism = Mechanism::new(kind, design.pi_a.clone())?;
    let dataset = simulate_dataset(&design, &mechanism, args.n, args.seed, args.replication)?;
    let out = open_output(&args.output)?;
    write_dataset_csv(out, &dataset)
}

fn cmd_mc_table(args: &McTableArgs) -> Result<(), CliError> {
    let config = parse_table_config(&args.config)?;
    let started = std::time::Instant::now();
    let table = mc_table(config.table, config.n, config.reps, config.alpha, config.seed)?;
    table::write_table_files(&config.out, &table)?;
    println!(
        "wrote {out}.csv and {out}.json ({rows} rows, {reps} replications, {secs:.1}s)",
        out = config.out,
        rows = table.rows.len(),
        reps = config.reps,
        secs = started.elapsed().as_secs_f64(),
    );
    Ok(())
}

/// Honors CARBOUNDS_THREADS by sizing the global worker pool before any
/// parallel region starts. Study results are identical for every
/// thread count; only wall time changes.
fn init_thread_pool() -> Result<(), CliError> {
    match std::env::var("CARBOUNDS_THREADS") {
        Ok(value) => {
            let threads: usize = value.parse().map_err(|_| {
                CliError::Input(format!(
                    "CARBOUNDS_THREADS must be a positive integer, got {value:?}"
                ))
            })?;
            if threads == 0 {
                return Err(CliError::Input(
                    "CARBOUNDS_THREADS must be a positive integer, got \"0\"".into(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Input(format!("failed to size the thread pool: {e}")))
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(CliError::Input(format!("CARBOUNDS_THREADS unreadable: {e}"))),
    }
}

fn run() -> Result<(), CliError> {
    init_thread_pool()?;
    match Cli::parse().command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::McTable(args) => cmd_mc_table(&args),
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(inner) = source {
            eprintln!("  caused by: {inner}");
            source = inner.source();
        }
        std::process::exit(err.exit_code());
    }
}
