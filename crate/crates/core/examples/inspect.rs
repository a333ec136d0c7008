use hesp_core::benchmarks::benchmark;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::drivers;

fn main() {
    let bench = benchmark("ackley20c").unwrap();
    let config = RunConfig::new("ackley20c", DriverKind::HespBo, 400);
    let trace = drivers::run(&bench, &config, 0).unwrap();
    let mut last_iter = usize::MAX;
    for r in &trace.records {
        if r.iteration != last_iter {
            last_iter = r.iteration;
            if let Some(reg) = &r.region {
                let dec: Vec<usize> = reg.mean_decoded.values.iter().map(|v| match v {
                    hesp_core::VarValue::Category(k) => *k,
                    _ => 999,
                }).collect();
                let dist_from_opt: usize = dec.iter().map(|&k| if k == 5 {0} else {1}).sum();
                let max_sd = reg.cov_diag.iter().map(|c| (c.sqrt()*reg.sigma)).fold(0.0f64, f64::max);
                println!("it {:3} best {:8.4} sigma {:.4} max_sd {:.4} hamming_from_opt {:2} enc {:?}",
                    r.iteration, r.best_so_far, reg.sigma, max_sd, dist_from_opt, r.encoder.as_deref().unwrap_or("-"));
            } else {
                println!("it {:3} best {:8.4} (init)", r.iteration, r.best_so_far);
            }
        }
    }
}
