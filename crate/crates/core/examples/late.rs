use hesp_core::benchmarks::benchmark;
use hesp_core::config::{DriverKind, RunConfig};
use hesp_core::drivers;
use hesp_core::VarValue;

fn hamming_opt(p: &hesp_core::MixedPoint) -> usize {
    p.values.iter().map(|v| match v { VarValue::Category(k) => if *k==5 {0} else {1}, _ => 0 }).sum()
}

fn main() {
    let bench = benchmark("ackley20c").unwrap();
    let config = RunConfig::new("ackley20c", DriverKind::HespBo, 500);
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let trace = drivers::run(&bench, &config, seed).unwrap();
    let mut best = f64::INFINITY;
    let mut best_point = None;
    let mut it_rows: Vec<(usize, f64, usize, Option<usize>, f64, usize)> = vec![];
    let mut cur_it = usize::MAX;
    for r in &trace.records {
        if r.value < best { best = r.value; best_point = Some(r.point.clone()); }
        if r.iteration != cur_it {
            cur_it = r.iteration;
            let mean_h = r.region.as_ref().map(|reg| hamming_opt(&reg.mean_decoded));
            let sigma = r.region.as_ref().map(|reg| reg.sigma).unwrap_or(0.0);
            it_rows.push((r.iteration, r.value, hamming_opt(&r.point), mean_h, sigma, 0));
        }
        // batch min tracked into last row
        let last = it_rows.last_mut().unwrap();
        if r.value < last.1 { last.1 = r.value; }
    }
    for (it, batch_min, _, mean_h, sigma, _) in it_rows.iter().skip(28) {
        // hamming of incumbent
        println!("it {:3} batch_min {:8.4} mean_hamming {:?} sigma {:.3}", it, batch_min, mean_h, sigma);
    }
    let bp = best_point.unwrap();
    println!("final best {best:.4} at hamming {} point {:?}", hamming_opt(&bp),
        bp.values.iter().map(|v| match v { VarValue::Category(k) => *k as i64, _ => -1 }).collect::<Vec<_>>());
}
