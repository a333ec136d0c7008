use hesp_core::benchmarks::benchmark;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::drivers;
use std::collections::HashSet;

fn main() {
    let bench = benchmark("ackley20c").unwrap();
    let config = RunConfig::new("ackley20c", DriverKind::HespBo, 400);
    let trace = drivers::run(&bench, &config, 0).unwrap();
    let mut seen: HashSet<String> = HashSet::new();
    let mut dups = 0;
    let mut inits = 0;
    for r in &trace.records {
        let key = format!("{:?}", r.point.values);
        if !seen.insert(key) { dups += 1; }
        if r.region.is_none() { inits += 1; }
    }
    println!("records {} duplicates {} init_draws {}", trace.records.len(), dups, inits);
    // hamming of best point from optimum per phase
    let mut best = f64::INFINITY;
    for (i, r) in trace.records.iter().enumerate() {
        if r.value < best {
            best = r.value;
            let h: usize = r.point.values.iter().map(|v| match v { hesp_core::VarValue::Category(k) => if *k==5 {0} else {1}, _ => 0 }).sum();
            if i > 350 || best < 13.0 {
                println!("eval {i}: new best {best:.4} hamming_from_opt {h}");
            }
        }
    }
}
