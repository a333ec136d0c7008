use hesp_core::benchmarks::benchmark;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::drivers;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let driver = DriverKind::parse(&args[1]).unwrap();
    let bench_name = &args[2];
    let budget: usize = args[3].parse().unwrap();
    let seeds: u64 = args[4].parse().unwrap();
    let d_a_init: Option<usize> = args.get(5).and_then(|s| s.parse().ok());
    let bench = benchmark(bench_name).unwrap();
    let mut config = RunConfig::new(bench_name.clone(), driver, budget);
    config.overrides.d_a_init = d_a_init;
    let mut finals = vec![];
    for seed in 0..seeds {
        let t0 = Instant::now();
        let trace = drivers::run(&bench, &config, seed).unwrap();
        let best = trace.best_value().unwrap();
        println!("seed {}: best {:.4} in {:.1}s", seed, best, t0.elapsed().as_secs_f64());
        finals.push(best);
    }
    finals.sort_by(f64::total_cmp);
    println!("median {:.4}", finals[finals.len()/2]);
}
