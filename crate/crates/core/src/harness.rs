//! Run orchestration: seeded repeats (executed concurrently), JSON-lines
//! trace persistence, summary CSV aggregation, and plot-data export.

use crate::benchmarks::benchmark;
use crate::config::RunConfig;
use crate::drivers;
use crate::error::{Error, Result};
use crate::stats::chi_squared_quantile;
use crate::trace::RunTrace;
use std::path::{Path, PathBuf};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the root under which relative output
/// directories are created.
pub const OUT_ROOT_ENV: &str = "HESP_OUT_ROOT";

/// Resolve an output directory against `HESP_OUT_ROOT` when it is relative.
pub fn resolve_out_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

pub fn trace_file_name(config: &RunConfig, seed: u64) -> String {
    format!(
        "{}_{}_seed{}.jsonl",
        sanitize(&config.benchmark),
        config.driver.name(),
        seed
    )
}

pub fn summary_file_name(config: &RunConfig) -> String {
    format!(
        "{}_{}_summary.csv",
        sanitize(&config.benchmark),
        config.driver.name()
    )
}

#[derive(Debug)]
pub struct RepeatOutcome {
    pub seed: u64,
    pub result: Result<RunTrace>,
    pub trace_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ExecutionReport {
    pub repeats: Vec<RepeatOutcome>,
    pub summary_path: Option<PathBuf>,
}

impl ExecutionReport {
    pub fn failures(&self) -> usize {
        self.repeats.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn traces(&self) -> Vec<&RunTrace> {
        self.repeats
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .collect()
    }
}

/// Run all repeats of a configuration concurrently, persisting one trace
/// file per repeat plus a summary CSV. Individual repeat failures are
/// recorded without aborting the siblings.
pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<ExecutionReport> {
    config.validate()?;
    // Resolve once so a bad benchmark name fails before any thread spawns.
    benchmark(&config.benchmark)?;
    let out_dir = resolve_out_dir(out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let seeds: Vec<u64> = (0..config.repeats as u64).map(|i| config.seed + i).collect();
    let mut results: Vec<Option<Result<RunTrace>>> = Vec::new();
    results.resize_with(seeds.len(), || None);

    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &seed in &seeds {
            let config = config.clone();
            handles.push(scope.spawn(move || {
                let bench = benchmark(&config.benchmark)?;
                drivers::run(&bench, &config, seed)
            }));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(match handle.join() {
                Ok(result) => result,
                Err(_) => Err(Error::numerical("repeat thread panicked")),
            });
        }
    });

    let mut repeats = Vec::new();
    for (seed, result) in seeds.iter().zip(results.into_iter()) {
        let result = result.expect("every slot filled");
        let trace_path = match &result {
            Ok(trace) => {
                let path = out_dir.join(trace_file_name(config, *seed));
                std::fs::write(&path, trace.to_jsonl())?;
                let timing = out_dir.join(format!(
                    "{}_timing.csv",
                    path.file_stem().unwrap().to_string_lossy()
                ));
                let mut t = format!("# schema_version {SUMMARY_SCHEMA_VERSION}\niteration,seconds\n");
                for (i, s) in trace.iteration_seconds.iter().enumerate() {
                    t.push_str(&format!("{i},{s}\n"));
                }
                std::fs::write(&timing, t)?;
                Some(path)
            }
            Err(_) => None,
        };
        repeats.push(RepeatOutcome {
            seed: *seed,
            result,
            trace_path,
        });
    }

    let traces: Vec<&RunTrace> = repeats
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .collect();
    let summary_path = if traces.is_empty() {
        None
    } else {
        let path = out_dir.join(summary_file_name(config));
        std::fs::write(&path, summary_csv(config, &traces)?)?;
        Some(path)
    };
    Ok(ExecutionReport {
        repeats,
        summary_path,
    })
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-evaluation-index median and interquartile best-so-far across repeats,
/// on a lambda-aligned grid of ceil(N / lambda) * lambda rows; shorter traces
/// carry their final best forward.
pub fn summary_csv(config: &RunConfig, traces: &[&RunTrace]) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::invalid("summary needs at least one trace"));
    }
    let bench = benchmark(&config.benchmark)?;
    let lambda = config.overrides.lambda.unwrap_or_else(|| {
        if config.overrides.lambda_canonical {
            crate::hesp::lambda_canonical(bench.space.dim())
        } else {
            crate::hesp::lambda_default(bench.space.dim())
        }
    });
    let rows = config.budget.div_ceil(lambda) * lambda;
    let mut out = format!(
        "# schema_version {SUMMARY_SCHEMA_VERSION}\neval_index,median_best,q25,q75\n"
    );
    for idx in 0..rows {
        let mut values: Vec<f64> = traces
            .iter()
            .filter_map(|t| {
                if t.records.is_empty() {
                    None
                } else {
                    let i = idx.min(t.records.len() - 1);
                    Some(t.records[i].best_so_far)
                }
            })
            .collect();
        if values.is_empty() {
            break;
        }
        values.sort_by(f64::total_cmp);
        out.push_str(&format!(
            "{},{},{},{}\n",
            idx + 1,
            quantile(&values, 0.5),
            quantile(&values, 0.25),
            quantile(&values, 0.75)
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportMode {
    Convergence,
    Trajectory,
}

impl ExportMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(ExportMode::Convergence),
            "trajectory" => Ok(ExportMode::Trajectory),
            other => Err(Error::invalid(format!("unknown export mode {other:?}"))),
        }
    }
}

/// Build plot-ready CSV from persisted traces.
pub fn export_plot_data(trace_paths: &[PathBuf], mode: ExportMode) -> Result<String> {
    if trace_paths.is_empty() {
        return Err(Error::invalid("export needs at least one trace file"));
    }
    let mut traces = Vec::new();
    for path in trace_paths {
        let text = std::fs::read_to_string(path)?;
        traces.push(RunTrace::from_jsonl(&text)?);
    }
    match mode {
        ExportMode::Convergence => convergence_csv(&traces),
        ExportMode::Trajectory => trajectory_csv(&traces),
    }
}

/// (method, evaluation index, median best, q25, q75) rows, methods grouped
/// by benchmark and driver.
fn convergence_csv(traces: &[RunTrace]) -> Result<String> {
    let mut methods: Vec<String> = Vec::new();
    for t in traces {
        let m = format!("{}/{}", t.header.config.benchmark, t.header.config.driver.name());
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let mut out = format!(
        "# schema_version {SUMMARY_SCHEMA_VERSION}\nmethod,eval_index,median_best,q25,q75\n"
    );
    for method in &methods {
        let group: Vec<&RunTrace> = traces
            .iter()
            .filter(|t| {
                format!("{}/{}", t.header.config.benchmark, t.header.config.driver.name())
                    == *method
            })
            .collect();
        let rows = group.iter().map(|t| t.records.len()).max().unwrap_or(0);
        for idx in 0..rows {
            let mut values: Vec<f64> = group
                .iter()
                .filter(|t| !t.records.is_empty())
                .map(|t| t.records[idx.min(t.records.len() - 1)].best_so_far)
                .collect();
            values.sort_by(f64::total_cmp);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                method,
                idx + 1,
                quantile(&values, 0.5),
                quantile(&values, 0.25),
                quantile(&values, 0.75)
            ));
        }
    }
    Ok(out)
}

/// (seed, iteration, mean coordinates, ellipse radii) rows for 2-dimensional
/// runs; the radii come from the diagonal covariance and the chi-squared
/// threshold of the run's confidence level.
fn trajectory_csv(traces: &[RunTrace]) -> Result<String> {
    let mut out = format!(
        "# schema_version {SUMMARY_SCHEMA_VERSION}\nseed,iteration,mean_1,mean_2,radius_1,radius_2\n"
    );
    for trace in traces {
        let alpha = trace.header.config.overrides.alpha;
        let mut seen_iterations = Vec::new();
        for record in &trace.records {
            let Some(region) = &record.region else {
                continue;
            };
            if region.mean.len() != 2 {
                return Err(Error::invalid(format!(
                    "trajectory export needs 2D runs, trace has {} dims",
                    region.mean.len()
                )));
            }
            if seen_iterations.contains(&record.iteration) {
                continue;
            }
            seen_iterations.push(record.iteration);
            let chi2 = chi_squared_quantile(1.0 - alpha, 2)?;
            let radius = |i: usize| {
                let scale = if region.l_x != 1.0 { region.l_x * region.l_x } else { 1.0 };
                (chi2 * region.cov_diag[i] * scale).sqrt() * region.sigma
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                trace.header.seed,
                record.iteration,
                region.mean[0],
                region.mean[1],
                radius(0),
                radius(1)
            ));
        }
    }
    Ok(out)
}
