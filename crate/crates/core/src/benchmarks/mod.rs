//! Benchmark objectives: discretized Ackley (pure categorical and mixed),
//! low-autocorrelation binary sequences, and weighted MaxSAT over bundled
//! pseudo-random wcnf instances, all minimized. A name registry makes every
//! benchmark (and its shifted variant) addressable from the CLI.

pub mod wcnf;

use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::space::{shift_wrap, MixedPoint, MixedSpace, Objective, VariableSpec};
pub use wcnf::{gen_random_wcnf, maxsat_eval, parse_wcnf, serialize_wcnf, WcnfInstance};

/// Standard Ackley function, global minimum 0 at the origin.
pub fn ackley(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let a = 20.0;
    let b = 0.2;
    let c = 2.0 * std::f64::consts::PI;
    let mean_sq = v.iter().map(|x| x * x).sum::<f64>() / n;
    let mean_cos = v.iter().map(|x| (c * x).cos()).sum::<f64>() / n;
    // Terms grouped so both pairs cancel exactly at the origin.
    a * (1.0 - (-b * mean_sq.sqrt()).exp()) + (1.0f64.exp() - mean_cos.exp())
}

const ACKLEY_BOUND: f64 = 32.768;

/// Grid value of level `k` out of `levels` across [lo, hi], exact at the
/// midpoint when the bounds are symmetric.
fn grid_value(k: usize, levels: usize, lo: f64, hi: f64) -> f64 {
    let t = k as f64 / (levels - 1) as f64;
    lo * (1.0 - t) + hi * t
}

fn ackley_grid_space(dims: usize, levels: usize) -> MixedSpace {
    let vars = (0..dims)
        .map(|_| {
            VariableSpec::categorical(
                (0..levels)
                    .map(|k| format!("{}", grid_value(k, levels, -ACKLEY_BOUND, ACKLEY_BOUND)))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    MixedSpace::new(vars).unwrap()
}

struct AckleyGrid {
    levels: usize,
}

impl Objective for AckleyGrid {
    fn eval(&self, point: &MixedPoint) -> f64 {
        let v: Vec<f64> = point
            .values
            .iter()
            .map(|val| grid_value(val.as_category(), self.levels, -ACKLEY_BOUND, ACKLEY_BOUND))
            .collect();
        ackley(&v)
    }
}

/// 20 categorical variables, 11 evenly spaced levels on [-32.768, 32.768].
pub fn ackley20c() -> (MixedSpace, Box<dyn Objective>) {
    (ackley_grid_space(20, 11), Box::new(AckleyGrid { levels: 11 }))
}

/// 2 categorical variables with 51 levels, for region-trajectory studies.
pub fn ackley2c() -> (MixedSpace, Box<dyn Objective>) {
    (ackley_grid_space(2, 51), Box::new(AckleyGrid { levels: 51 }))
}

struct Ackley53m;

impl Objective for Ackley53m {
    fn eval(&self, point: &MixedPoint) -> f64 {
        let mut v = Vec::with_capacity(53);
        for value in point.values.iter().take(50) {
            v.push(value.as_category() as f64);
        }
        for value in point.values.iter().skip(50) {
            // Declared bounds [-1, 1] map onto the evaluated [0, 1] block.
            v.push((value.as_continuous() + 1.0) / 2.0);
        }
        ackley(&v)
    }
}

/// 50 binary variables plus 3 continuous in [-1, 1]; the binary block feeds
/// Ackley as {0,1} and the continuous block as [0,1].
pub fn ackley53m() -> (MixedSpace, Box<dyn Objective>) {
    let mut vars: Vec<VariableSpec> = (0..50)
        .map(|_| VariableSpec::categorical_with_cardinality(2).unwrap())
        .collect();
    for _ in 0..3 {
        vars.push(VariableSpec::continuous(-1.0, 1.0).unwrap());
    }
    (MixedSpace::new(vars).unwrap(), Box::new(Ackley53m))
}

/// Negated merit factor of a +-1 sequence: F = n^2 / (2 E) with E the sum of
/// squared aperiodic autocorrelations. Returns -F; a zero-energy sequence is
/// capped at -1e9.
pub fn labs_merit(s: &[f64]) -> Result<f64> {
    let n = s.len();
    if n < 2 {
        return Err(Error::invalid("LABS needs a sequence of length >= 2"));
    }
    let mut energy = 0.0;
    for k in 1..n {
        let mut ck = 0.0;
        for i in 0..n - k {
            ck += s[i] * s[i + k];
        }
        energy += ck * ck;
    }
    if energy == 0.0 {
        return Ok(-1e9);
    }
    Ok(-((n * n) as f64) / (2.0 * energy))
}

struct Labs;

impl Objective for Labs {
    fn eval(&self, point: &MixedPoint) -> f64 {
        let s: Vec<f64> = point
            .values
            .iter()
            .map(|v| if v.as_category() == 0 { -1.0 } else { 1.0 })
            .collect();
        labs_merit(&s).expect("validated length")
    }
}

/// 50 binary variables labeled -1/+1.
pub fn labs() -> (MixedSpace, Box<dyn Objective>) {
    let vars = (0..50)
        .map(|_| VariableSpec::categorical(vec!["-1".into(), "+1".into()]).unwrap())
        .collect();
    (MixedSpace::new(vars).unwrap(), Box::new(Labs))
}

struct MaxSat {
    instance: WcnfInstance,
}

impl Objective for MaxSat {
    fn eval(&self, point: &MixedPoint) -> f64 {
        let assignment: Vec<bool> = point.values.iter().map(|v| v.as_category() == 1).collect();
        maxsat_eval(&self.instance, &assignment).expect("validated dimensions")
    }
}

fn binary_space(d: usize) -> MixedSpace {
    MixedSpace::new(
        (0..d)
            .map(|_| VariableSpec::categorical_with_cardinality(2).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Wrap a wcnf instance as a benchmark over binary categorical variables.
pub fn maxsat_objective(instance: WcnfInstance) -> (MixedSpace, Box<dyn Objective>) {
    let space = binary_space(instance.num_vars);
    (space, Box::new(MaxSat { instance }))
}

// Seeds for the bundled pseudo-random instances and shifted variants.
const MAXSAT28_SEED: u64 = 2801;
const MAXSAT125_SEED: u64 = 12501;
const TINY_SEEDS: [(usize, usize, u64); 3] = [(10, 30, 1001), (12, 36, 1201), (13, 40, 1301)];

/// A registered benchmark: search space, objective, evaluation budget.
pub struct Benchmark {
    pub name: String,
    pub space: MixedSpace,
    pub objective: Box<dyn Objective>,
    pub default_budget: usize,
}

/// All registry names, for CLI listings.
pub fn benchmark_names() -> Vec<&'static str> {
    vec![
        "ackley20c",
        "shifted-ackley20c",
        "ackley2c",
        "shifted-ackley2c",
        "ackley53m",
        "labs",
        "shifted-labs",
        "maxsat28",
        "maxsat125",
        "maxsat10",
        "maxsat12",
        "maxsat13",
    ]
}

/// Look up a benchmark by name. `wcnf:<path>` loads a DIMACS-wcnf file;
/// `shifted-<name>` applies a fixed pseudo-random categorical shift.
pub fn benchmark(name: &str) -> Result<Benchmark> {
    if let Some(path) = name.strip_prefix("wcnf:") {
        let text = std::fs::read_to_string(path)?;
        let inst = parse_wcnf(&text)?;
        let (space, objective) = maxsat_objective(inst);
        return Ok(Benchmark {
            name: name.to_string(),
            space,
            objective,
            default_budget: 400,
        });
    }
    let (space, objective, default_budget) = match name {
        "ackley20c" => {
            let (s, o) = ackley20c();
            (s, o, 400)
        }
        "ackley2c" => {
            let (s, o) = ackley2c();
            (s, o, 250)
        }
        "ackley53m" => {
            let (s, o) = ackley53m();
            (s, o, 400)
        }
        "labs" => {
            let (s, o) = labs();
            (s, o, 800)
        }
        "maxsat28" => {
            let (s, o) = maxsat_objective(gen_random_wcnf(28, 150, MAXSAT28_SEED));
            (s, o, 400)
        }
        "maxsat125" => {
            let (s, o) = maxsat_objective(gen_random_wcnf(125, 500, MAXSAT125_SEED));
            (s, o, 500)
        }
        "maxsat10" | "maxsat12" | "maxsat13" => {
            let (nv, nc, seed) = TINY_SEEDS
                .iter()
                .find(|(nv, _, _)| name == format!("maxsat{nv}"))
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown benchmark {name}")))?;
            let (s, o) = maxsat_objective(gen_random_wcnf(nv, nc, seed));
            (s, o, 200)
        }
        shifted if shifted.starts_with("shifted-") => {
            let inner = benchmark(&shifted["shifted-".len()..])?;
            let mut rng = RunRng::seed_from_u64(shift_seed(shifted));
            let delta: Vec<usize> = inner
                .space
                .combinatorial_indices()
                .iter()
                .map(|&i| {
                    let c = inner.space.variables()[i].cardinality().unwrap();
                    1 + rng.below(c - 1)
                })
                .collect();
            let wrapped = shift_wrap(inner.objective, &delta, &inner.space)?;
            return Ok(Benchmark {
                name: name.to_string(),
                space: inner.space,
                objective: Box::new(wrapped),
                default_budget: inner.default_budget,
            });
        }
        _ => return Err(Error::invalid(format!("unknown benchmark {name}"))),
    };
    Ok(Benchmark {
        name: name.to_string(),
        space,
        objective,
        default_budget,
    })
}

/// Fixed per-name seed so each shifted benchmark is a single reproducible
/// function across runs and methods.
fn shift_seed(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::VarValue;

    #[test]
    fn ackley_known_values() {
        assert!(ackley(&[0.0; 7]).abs() < 1e-12);
        let v1 = ackley(&[1.0]);
        let expected = 20.0 * (1.0 - (-0.2f64).exp());
        assert!((v1 - expected).abs() < 1e-12, "{v1} vs {expected}");
        assert!((v1 - 3.6254).abs() < 1e-4);
        // Even function.
        let v = [0.3, -1.7, 5.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(ackley(&v), ackley(&neg));
    }

    #[test]
    fn ackley20c_center_is_zero() {
        let (space, obj) = ackley20c();
        assert_eq!(space.dim(), 20);
        assert_eq!(space.variables()[0].cardinality(), Some(11));
        let center = MixedPoint::from_indices(&[5; 20]);
        assert_eq!(obj.eval(&center), 0.0);
        let corner = MixedPoint::from_indices(&[0; 20]);
        assert!((obj.eval(&corner) - ackley(&[-ACKLEY_BOUND; 20])).abs() < 1e-12);
    }

    #[test]
    fn shifted_ackley20c_with_zero_shift_is_identity() {
        let (space, obj) = ackley20c();
        let wrapped = shift_wrap(obj, &vec![0; 20], &space).unwrap();
        let p = MixedPoint::from_indices(&[3; 20]);
        let (_, fresh) = ackley20c();
        assert_eq!(wrapped.eval(&p), fresh.eval(&p));
    }

    #[test]
    fn ackley53m_optimum_and_bit_flip() {
        let (space, obj) = ackley53m();
        assert_eq!(space.dim(), 53);
        let mut values: Vec<VarValue> = (0..50).map(|_| VarValue::Category(0)).collect();
        values.extend((0..3).map(|_| VarValue::Continuous(-1.0)));
        let optimum = MixedPoint::new(values.clone());
        assert!(obj.eval(&optimum).abs() < 1e-12);

        let mut flipped = optimum.clone();
        flipped.values[7] = VarValue::Category(1);
        assert!(obj.eval(&flipped) > obj.eval(&optimum));

        // All-ones binary with continuous at declared upper bound matches a
        // direct Ackley evaluation of the mapped 53-vector.
        let mut ones: Vec<VarValue> = (0..50).map(|_| VarValue::Category(1)).collect();
        ones.extend((0..3).map(|_| VarValue::Continuous(1.0)));
        let p = MixedPoint::new(ones);
        assert!((obj.eval(&p) - ackley(&[1.0; 53])).abs() < 1e-12);
    }

    #[test]
    fn labs_hand_values() {
        assert_eq!(labs_merit(&[1.0, 1.0]).unwrap(), -2.0);
        assert_eq!(labs_merit(&[1.0, -1.0]).unwrap(), -2.0);
        assert!(labs_merit(&[1.0]).is_err());
        // Negation invariance.
        let s = [1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0];
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        assert_eq!(labs_merit(&s).unwrap(), labs_merit(&neg).unwrap());
    }

    #[test]
    fn labs_matches_double_loop_oracle_up_to_64() {
        let mut rng = RunRng::seed_from_u64(8);
        for n in [2usize, 5, 13, 33, 64] {
            for _ in 0..8 {
                let s: Vec<f64> = (0..n)
                    .map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 })
                    .collect();
                // Independent oracle: explicit quadratic double loop.
                let mut energy = 0.0;
                for k in 1..n {
                    let mut ck = 0.0;
                    for i in 0..(n - k) {
                        ck += s[i] * s[i + k];
                    }
                    energy += ck * ck;
                }
                let expected = if energy == 0.0 {
                    -1e9
                } else {
                    -((n * n) as f64) / (2.0 * energy)
                };
                assert_eq!(labs_merit(&s).unwrap(), expected, "n={n}");
            }
        }
    }

    #[test]
    fn registry_resolves_every_name() {
        for name in benchmark_names() {
            let b = benchmark(name).unwrap();
            assert_eq!(b.name, name);
            assert!(b.default_budget > 0);
            // Objective evaluates at a uniform sample.
            let mut rng = RunRng::seed_from_u64(1);
            let p = b.space.sample_uniform(&mut rng);
            assert!(b.objective.eval(&p).is_finite());
        }
        assert!(benchmark("nope").is_err());
    }

    #[test]
    fn registry_is_deterministic() {
        let a = benchmark("shifted-ackley2c").unwrap();
        let b = benchmark("shifted-ackley2c").unwrap();
        let mut rng = RunRng::seed_from_u64(2);
        for _ in 0..20 {
            let p = a.space.sample_uniform(&mut rng);
            assert_eq!(a.objective.eval(&p), b.objective.eval(&p));
        }
    }

    #[test]
    fn shifted_preserves_value_multiset() {
        // Full enumeration on a 2-variable, 5-level grid.
        let space = MixedSpace::new(vec![
            VariableSpec::categorical_with_cardinality(5).unwrap(),
            VariableSpec::categorical_with_cardinality(5).unwrap(),
        ])
        .unwrap();
        let f = |p: &MixedPoint| {
            let a = p.values[0].as_category() as f64;
            let b = p.values[1].as_category() as f64;
            (a - 2.0) * (a - 2.0) + (b - 1.0) * (b - 1.0) + a * b * 0.25
        };
        let shifted = shift_wrap(Box::new(f), &[3, 1], &space).unwrap();
        let mut orig = Vec::new();
        let mut shif = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                let p = MixedPoint::from_indices(&[a, b]);
                orig.push(f(&p));
                shif.push(shifted.eval(&p));
            }
        }
        orig.sort_by(f64::total_cmp);
        shif.sort_by(f64::total_cmp);
        assert_eq!(orig, shif);
    }

    #[test]
    fn wcnf_path_benchmark() {
        let dir = std::env::temp_dir().join("hesp_wcnf_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.wcnf");
        std::fs::write(&path, "p wcnf 2 2\n1 1 0\n2 -1 2 0\n").unwrap();
        let b = benchmark(&format!("wcnf:{}", path.display())).unwrap();
        assert_eq!(b.space.dim(), 2);
        let p = MixedPoint::from_indices(&[1, 1]);
        assert_eq!(b.objective.eval(&p), -3.0);
    }
}
