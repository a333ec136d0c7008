//! Categorical encoders (ordinal and target), the nearest-value decoder, and
//! the EXP3 bandit that adaptively picks an encoder each iteration.

use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::space::{Dataset, MixedPoint, MixedSpace, VarValue};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    Ordinal,
    Target,
}

impl EncoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::Ordinal => "ordinal",
            EncoderKind::Target => "target",
        }
    }
}

/// A trained 1-to-1 mapping from category indices to real values, per
/// combinatorial variable, with its inverse. Continuous variables pass
/// through unencoded.
#[derive(Debug, Clone)]
pub struct Encoder {
    kind: EncoderKind,
    // One entry per variable: None for continuous, Some(table) otherwise,
    // table[category index] = encoded value.
    tables: Vec<Option<Vec<f64>>>,
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn table(&self, var_idx: usize) -> Option<&[f64]> {
        self.tables[var_idx].as_deref()
    }

    pub fn dim(&self) -> usize {
        self.tables.len()
    }
}

/// Maps each variable's categories to 0, 1, ..., c-1 in declared order.
pub fn fit_ordinal(space: &MixedSpace) -> Result<Encoder> {
    if space.combinatorial_dims() == 0 {
        return Err(Error::invalid(
            "ordinal encoder needs at least one combinatorial variable",
        ));
    }
    let tables = space
        .variables()
        .iter()
        .map(|var| {
            var.cardinality()
                .map(|c| (0..c).map(|k| k as f64).collect())
        })
        .collect();
    Ok(Encoder {
        kind: EncoderKind::Ordinal,
        tables,
    })
}

/// Smoothed-mean target encoder: an observed category u with n_u occurrences
/// and mean value m_u maps to (n_u * m_u + m * overall_mean) / (n_u + m);
/// unobserved categories map to the overall mean.
pub fn fit_target(space: &MixedSpace, data: &Dataset, m: f64) -> Result<Encoder> {
    if space.combinatorial_dims() == 0 {
        return Err(Error::invalid(
            "target encoder needs at least one combinatorial variable",
        ));
    }
    if data.is_empty() {
        return Err(Error::invalid("target encoder needs a non-empty dataset"));
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::invalid(format!("weight factor m must be >= 0, got {m}")));
    }
    let overall_mean = data.values.iter().sum::<f64>() / data.len() as f64;

    let mut tables = Vec::with_capacity(space.dim());
    for (var_idx, var) in space.variables().iter().enumerate() {
        let Some(c) = var.cardinality() else {
            tables.push(None);
            continue;
        };
        let mut counts = vec![0usize; c];
        let mut sums = vec![0.0f64; c];
        for (point, &y) in data.points.iter().zip(&data.values) {
            let k = point.values[var_idx].as_category();
            counts[k] += 1;
            sums[k] += y;
        }
        let mut table = Vec::with_capacity(c);
        for k in 0..c {
            let value = if counts[k] == 0 {
                overall_mean
            } else {
                let n = counts[k] as f64;
                let cat_mean = sums[k] / n;
                if n + m == 0.0 {
                    // m = 0 with an observed category: plain category mean.
                    cat_mean
                } else {
                    (n * cat_mean + m * overall_mean) / (n + m)
                }
            };
            table.push(value);
        }
        separate_collisions(&mut table);
        tables.push(Some(table));
    }
    Ok(Encoder {
        kind: EncoderKind::Target,
        tables,
    })
}

/// The decoder requires distinct encoded values per variable. When the target
/// statistics collide, nudge later categories by the smallest separation.
fn separate_collisions(table: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in table.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    let eps = 1e-9 * if range > 0.0 { range } else { hi.abs().max(1.0) };
    for i in 0..table.len() {
        let mut v = table[i];
        while table[..i].iter().any(|&u| u == v) {
            v += eps;
        }
        table[i] = v;
    }
}

/// Continuous coordinates pass through; combinatorial coordinates are
/// replaced by their table values.
pub fn encode_point(enc: &Encoder, point: &MixedPoint) -> Result<Vec<f64>> {
    if point.values.len() != enc.dim() {
        return Err(Error::invalid("encode_point dimension mismatch"));
    }
    point
        .values
        .iter()
        .zip(&enc.tables)
        .map(|(value, table)| match (value, table) {
            (VarValue::Continuous(x), None) => Ok(*x),
            (VarValue::Category(k), Some(t)) => t
                .get(*k)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown category {k}"))),
            _ => Err(Error::invalid("value kind does not match encoder layout")),
        })
        .collect()
}

/// Inverse of [`encode_point`]: each combinatorial coordinate maps to the
/// category whose encoded value is nearest (ties to the lowest category
/// index); continuous coordinates are clamped to their bounds.
pub fn decode_point(enc: &Encoder, space: &MixedSpace, v: &[f64]) -> Result<MixedPoint> {
    if v.len() != enc.dim() {
        return Err(Error::invalid("decode_point dimension mismatch"));
    }
    let mut values = Vec::with_capacity(v.len());
    for ((&x, table), var) in v.iter().zip(&enc.tables).zip(space.variables()) {
        if !x.is_finite() {
            return Err(Error::invalid(format!("cannot decode non-finite value {x}")));
        }
        match table {
            None => {
                let (lo, hi) = var.bounds().unwrap();
                values.push(VarValue::Continuous(x.clamp(lo, hi)));
            }
            Some(t) => {
                let mut best = 0usize;
                let mut best_dist = f64::INFINITY;
                for (k, &enc_val) in t.iter().enumerate() {
                    let d = (enc_val - x).abs();
                    if d < best_dist {
                        best_dist = d;
                        best = k;
                    }
                }
                values.push(VarValue::Category(best));
            }
        }
    }
    Ok(MixedPoint::new(values))
}

/// EXP3 selector over the encoder variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exp3State {
    weights: Vec<f64>,
    eta: f64,
    lambda: usize,
    current: usize,
}

/// Exploration rate min{1, sqrt(K ln K / ((e-1) N))} for K arms and an
/// iteration budget of N.
pub fn exp3_eta(arms: usize, iteration_budget: usize) -> f64 {
    let k = arms as f64;
    let n = iteration_budget.max(1) as f64;
    let e = std::f64::consts::E;
    (k * k.ln() / ((e - 1.0) * n)).sqrt().min(1.0)
}

impl Exp3State {
    pub fn new(arms: usize, eta: f64, lambda: usize) -> Result<Self> {
        if arms == 0 {
            return Err(Error::invalid("EXP3 needs at least one arm"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("eta must be in [0,1], got {eta}")));
        }
        Ok(Exp3State {
            weights: vec![1.0; arms],
            eta,
            lambda,
            current: 0,
        })
    }

    pub fn arms(&self) -> usize {
        self.weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn current_action(&self) -> usize {
        self.current
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Reset weights to 1 (used on restarts) and resample the action.
    pub fn reset(&mut self, rng: &mut RunRng) -> usize {
        for w in &mut self.weights {
            *w = 1.0;
        }
        self.current = rng.categorical(&self.probabilities());
        self.current
    }

    /// p_k = (1 - eta) w_k / sum(w) + eta / K.
    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.weights.len() as f64;
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .map(|w| (1.0 - self.eta) * w / total + self.eta / k)
            .collect()
    }

    /// One bandit round: min-max normalize the full value history, reward the
    /// current action by the best (minimum) normalized value of the most
    /// recent batch, update its weight, and sample the next action.
    ///
    /// A history without spread (all values equal) yields zero reward and
    /// leaves the weights unchanged.
    pub fn update(&mut self, recent_values: &[f64], all_values: &[f64], rng: &mut RunRng) -> Result<usize> {
        if all_values.is_empty() || recent_values.is_empty() {
            return Err(Error::invalid("EXP3 update needs observed values"));
        }
        let probs = self.probabilities();
        let min = all_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = all_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let reward = if min == max {
            0.0
        } else {
            // hat_y = (y - max) / (min - max) maps the minimum to 1.
            recent_values
                .iter()
                .map(|&y| (y - max) / (min - max))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let estimated = reward / probs[self.current];
        let k = self.weights.len() as f64;
        self.weights[self.current] *= (self.eta * estimated / k).exp();
        // Probabilities are scale-invariant in the weights; rescale to avoid
        // overflow on long runs.
        let wmax = self.weights.iter().cloned().fold(0.0f64, f64::max);
        if wmax > 1e100 {
            for w in &mut self.weights {
                *w /= wmax;
            }
        }
        self.current = rng.categorical(&self.probabilities());
        Ok(self.current)
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }
}
