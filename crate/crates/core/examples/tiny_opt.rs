use hesp_core::benchmarks::{benchmark, gen_random_wcnf, maxsat_eval};

fn main() {
    // Brute-force optima of the three bundled tiny instances.
    for (nv, nc, seed, name) in [(10usize, 30usize, 1001u64, "maxsat10"), (12, 36, 1201, "maxsat12"), (13, 40, 1301, "maxsat13")] {
        let inst = gen_random_wcnf(nv, nc, seed);
        let mut best = f64::INFINITY;
        let mut arg = 0usize;
        for bits in 0..(1usize << nv) {
            let a: Vec<bool> = (0..nv).map(|i| (bits >> i) & 1 == 1).collect();
            let v = maxsat_eval(&inst, &a).unwrap();
            if v < best { best = v; arg = bits; }
        }
        // count optima
        let mut count = 0;
        for bits in 0..(1usize << nv) {
            let a: Vec<bool> = (0..nv).map(|i| (bits >> i) & 1 == 1).collect();
            if (maxsat_eval(&inst, &a).unwrap() - best).abs() < 1e-9 { count += 1; }
        }
        let b = benchmark(name).unwrap();
        let p = hesp_core::MixedPoint::from_indices(&(0..nv).map(|i| (arg >> i) & 1).collect::<Vec<_>>());
        println!("{name}: optimum {best} ({count} optima) check {}", b.objective.eval(&p));
    }
}
