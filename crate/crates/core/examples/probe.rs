use hesp_core::benchmarks::benchmark;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::drivers;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let driver = DriverKind::parse(args.get(1).map(|s| s.as_str()).unwrap_or("hesp-bo")).unwrap();
    let bench_name = args.get(2).map(|s| s.as_str()).unwrap_or("ackley20c");
    let budget: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(400);
    let seeds: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(3);
    let bench = benchmark(bench_name).unwrap();
    let mut config = RunConfig::new(bench_name, driver, budget);
    config.overrides.stop_at = if bench_name.contains("ackley") { Some(1e-9) } else { None };
    let mut finals = vec![];
    for seed in 0..seeds {
        let t0 = Instant::now();
        let trace = drivers::run(&bench, &config, seed).unwrap();
        let best = trace.best_value().unwrap();
        println!(
            "{} {} seed {}: best {:.6} evals {} in {:.1}s",
            driver.name(), bench_name, seed, best, trace.evaluations(), t0.elapsed().as_secs_f64()
        );
        finals.push(best);
    }
    finals.sort_by(f64::total_cmp);
    println!("median {:.6}", finals[finals.len()/2]);
}
