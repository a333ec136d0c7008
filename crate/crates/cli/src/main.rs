//! Command-line runner: `hesp run` executes seeded benchmark repeats and
//! persists traces plus a summary CSV; `hesp export` turns persisted traces
//! into plot-ready convergence or trajectory CSV.

use clap::{Args, Parser, Subcommand};
use hesp_core::benchmarks;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::harness::{self, ExportMode};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hesp",
    about = "Mixed-variable Bayesian optimization benchmarks with hyper-ellipsoid local regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark configuration for several seeded repeats.
    Run(Box<RunArgs>),
    /// Export plot-ready CSV from persisted trace files.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key-value config file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark name, e.g. ackley20c, shifted-labs, maxsat28, wcnf:<path>.
    #[arg(long)]
    benchmark: Option<String>,
    /// Driver: hesp-bo, hesp-casmo, hesp-bounce, bo, casmo, bounce.
    #[arg(long)]
    driver: Option<String>,
    /// Evaluation budget; defaults to the benchmark's standard budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Initial design size.
    #[arg(long)]
    n0: Option<usize>,
    /// Number of seeded repeats.
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; repeat i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (resolved against HESP_OUT_ROOT when relative).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence level of the local region.
    #[arg(long)]
    alpha: Option<f64>,
    /// Batch size per iteration.
    #[arg(long)]
    lambda: Option<usize>,
    /// Use the 4 + floor(3 ln d) population formula.
    #[arg(long)]
    lambda_canonical: bool,
    /// Candidate pool size per iteration.
    #[arg(long)]
    pool_size: Option<usize>,
    /// Initial continuous trust-region scale.
    #[arg(long)]
    tr_init_lx: Option<f64>,
    /// Initial Hamming trust-region radius.
    #[arg(long)]
    tr_init_lh: Option<usize>,
    /// Target-encoder smoothing weight.
    #[arg(long)]
    target_m: Option<f64>,
    /// Fixed EXP3 exploration rate (overrides the budget formula).
    #[arg(long)]
    eta: Option<f64>,
    /// Number of encoder arms (1 or 2).
    #[arg(long)]
    encoders: Option<usize>,
    /// Initial embedding dimension for the bounce drivers.
    #[arg(long)]
    d_a_init: Option<usize>,
    /// Stop a repeat early once its best value reaches this threshold.
    #[arg(long)]
    stop_at: Option<f64>,
}

#[derive(Args)]
struct ExportArgs {
    /// convergence or trajectory.
    #[arg(long)]
    mode: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace files (JSON lines) produced by `hesp run`.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_command(*args),
        Command::Export(args) => export_command(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Flat `key = value` lines with `#` comments; keys mirror the run flags.
fn parse_config_file(path: &PathBuf) -> Result<Vec<(String, String)>, hesp_core::Error> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(hesp_core::Error::parse(
                idx + 1,
                format!("expected key = value, got {line:?}"),
            ));
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

struct Assembled {
    config: RunConfig,
    out: PathBuf,
}

fn assemble(args: &RunArgs) -> Result<Assembled, hesp_core::Error> {
    let mut benchmark_name = args.benchmark.clone();
    let mut driver_name = args.driver.clone();
    let mut budget = args.budget;
    let mut n0 = args.n0;
    let mut repeats = args.repeats;
    let mut seed = args.seed;
    let mut out = args.out.clone();
    let mut alpha = args.alpha;
    let mut lambda = args.lambda;
    let mut lambda_canonical = args.lambda_canonical;
    let mut pool_size = args.pool_size;
    let mut tr_init_lx = args.tr_init_lx;
    let mut tr_init_lh = args.tr_init_lh;
    let mut target_m = args.target_m;
    let mut eta = args.eta;
    let mut encoders = args.encoders;
    let mut d_a_init = args.d_a_init;
    let mut stop_at = args.stop_at;

    if let Some(path) = &args.config {
        for (key, value) in parse_config_file(path)? {
            let bad = |e: String| hesp_core::Error::invalid(format!("config key {key}: {e}"));
            macro_rules! set_if_unset {
                ($slot:ident, $ty:ty) => {
                    if $slot.is_none() {
                        $slot = Some(value.parse::<$ty>().map_err(|e| bad(e.to_string()))?);
                    }
                };
            }
            match key.as_str() {
                "benchmark" => {
                    if benchmark_name.is_none() {
                        benchmark_name = Some(value);
                    }
                }
                "driver" => {
                    if driver_name.is_none() {
                        driver_name = Some(value);
                    }
                }
                "budget" => set_if_unset!(budget, usize),
                "n0" => set_if_unset!(n0, usize),
                "repeats" => set_if_unset!(repeats, usize),
                "seed" => set_if_unset!(seed, u64),
                "out" => {
                    if out.is_none() {
                        out = Some(PathBuf::from(value));
                    }
                }
                "alpha" => set_if_unset!(alpha, f64),
                "lambda" => set_if_unset!(lambda, usize),
                "lambda-canonical" => {
                    if !lambda_canonical {
                        lambda_canonical =
                            value.parse::<bool>().map_err(|e| bad(e.to_string()))?;
                    }
                }
                "pool-size" => set_if_unset!(pool_size, usize),
                "tr-init-lx" => set_if_unset!(tr_init_lx, f64),
                "tr-init-lh" => set_if_unset!(tr_init_lh, usize),
                "target-m" => set_if_unset!(target_m, f64),
                "eta" => set_if_unset!(eta, f64),
                "encoders" => set_if_unset!(encoders, usize),
                "d-a-init" => set_if_unset!(d_a_init, usize),
                "stop-at" => set_if_unset!(stop_at, f64),
                other => {
                    return Err(hesp_core::Error::invalid(format!(
                        "unknown config key {other:?}"
                    )))
                }
            }
        }
    }

    let benchmark_name = benchmark_name
        .ok_or_else(|| hesp_core::Error::invalid("missing --benchmark (or config entry)"))?;
    let driver_name = driver_name
        .ok_or_else(|| hesp_core::Error::invalid("missing --driver (or config entry)"))?;
    let driver = DriverKind::parse(&driver_name)?;
    let budget = match budget {
        Some(b) => b,
        None => benchmarks::benchmark(&benchmark_name)?.default_budget,
    };

    let mut config = RunConfig::new(benchmark_name, driver, budget);
    if let Some(v) = n0 {
        config.n0 = v;
    }
    if let Some(v) = repeats {
        config.repeats = v;
    }
    if let Some(v) = seed {
        config.seed = v;
    }
    if let Some(v) = alpha {
        config.overrides.alpha = v;
    }
    config.overrides.lambda = lambda;
    config.overrides.lambda_canonical = lambda_canonical;
    config.overrides.pool_size = pool_size;
    if let Some(v) = tr_init_lx {
        config.overrides.tr_init_lx = v;
    }
    config.overrides.tr_init_lh = tr_init_lh;
    if let Some(v) = target_m {
        config.overrides.target_m = v;
    }
    config.overrides.eta = eta;
    if let Some(v) = encoders {
        config.overrides.encoders = v;
    }
    config.overrides.d_a_init = d_a_init;
    config.overrides.stop_at = stop_at;
    config.validate()?;
    Ok(Assembled {
        config,
        out: out.unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn run_command(args: RunArgs) -> Result<ExitCode, hesp_core::Error> {
    let assembled = assemble(&args)?;
    let report = harness::execute(&assembled.config, &assembled.out)?;
    for outcome in &report.repeats {
        match (&outcome.result, &outcome.trace_path) {
            (Ok(trace), Some(path)) => println!(
                "seed {}: best {} after {} evaluations -> {}",
                outcome.seed,
                trace.best_value().unwrap_or(f64::NAN),
                trace.evaluations(),
                path.display()
            ),
            (Err(e), _) => println!("seed {}: FAILED ({e})", outcome.seed),
            (Ok(_), None) => unreachable!("successful repeats always persist"),
        }
    }
    if let Some(path) = &report.summary_path {
        println!("summary -> {}", path.display());
    }
    if report.failures() == report.repeats.len() {
        eprintln!("error: every repeat failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn export_command(args: ExportArgs) -> Result<ExitCode, hesp_core::Error> {
    let mode = ExportMode::parse(&args.mode)?;
    let csv = harness::export_plot_data(&args.traces, mode)?;
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}
