//! Mixed search spaces: continuous, ordinal and categorical variables,
//! points in them, observation datasets, and objective wrappers.
//!
//! Ordinal variables are handled as categorical everywhere; their declared
//! order only matters to the ordinal encoder. Category and level indices are
//! canonical `0..cardinality` integers, labels are metadata.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariableSpec {
    Continuous { lower: f64, upper: f64 },
    Ordinal { levels: Vec<String> },
    Categorical { categories: Vec<String> },
}

impl VariableSpec {
    pub fn continuous(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid(format!(
                "continuous bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(VariableSpec::Continuous { lower, upper })
    }

    pub fn ordinal(levels: Vec<String>) -> Result<Self> {
        check_distinct(&levels, "ordinal levels")?;
        Ok(VariableSpec::Ordinal { levels })
    }

    pub fn categorical(categories: Vec<String>) -> Result<Self> {
        check_distinct(&categories, "categories")?;
        Ok(VariableSpec::Categorical { categories })
    }

    /// Categorical variable with generated labels "0".."c-1".
    pub fn categorical_with_cardinality(c: usize) -> Result<Self> {
        Self::categorical((0..c).map(|i| i.to_string()).collect())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, VariableSpec::Continuous { .. })
    }

    /// Number of categories/levels; None for continuous variables.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            VariableSpec::Continuous { .. } => None,
            VariableSpec::Ordinal { levels } => Some(levels.len()),
            VariableSpec::Categorical { categories } => Some(categories.len()),
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            VariableSpec::Continuous { lower, upper } => Some((*lower, *upper)),
            _ => None,
        }
    }
}

fn check_distinct(values: &[String], what: &str) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("{what} need at least 2 values")));
    }
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            if values[i] == values[j] {
                return Err(Error::invalid(format!(
                    "{what} contain duplicate value {:?}",
                    values[i]
                )));
            }
        }
    }
    Ok(())
}

/// Ordered collection of variables; the ordering is fixed for a run's lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSpace {
    variables: Vec<VariableSpec>,
}

impl MixedSpace {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::invalid("a space needs at least one variable"));
        }
        Ok(MixedSpace { variables })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn continuous_dims(&self) -> usize {
        self.variables.iter().filter(|v| v.is_continuous()).count()
    }

    pub fn combinatorial_dims(&self) -> usize {
        self.dim() - self.continuous_dims()
    }

    /// Indices of the combinatorial (ordinal + categorical) variables.
    pub fn combinatorial_indices(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_continuous())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_continuous())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_mixed(&self) -> bool {
        self.continuous_dims() > 0 && self.combinatorial_dims() > 0
    }

    /// Check that a point is dimensionally and domain-wise valid.
    pub fn validate_point(&self, point: &MixedPoint) -> Result<()> {
        if point.values.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has {} values, space has {} variables",
                point.values.len(),
                self.dim()
            )));
        }
        for (value, var) in point.values.iter().zip(&self.variables) {
            match (value, var) {
                (VarValue::Continuous(x), VariableSpec::Continuous { lower, upper }) => {
                    if !x.is_finite() || x < lower || x > upper {
                        return Err(Error::invalid(format!(
                            "continuous value {x} outside [{lower}, {upper}]"
                        )));
                    }
                }
                (VarValue::Category(k), spec) if !spec.is_continuous() => {
                    let c = spec.cardinality().unwrap();
                    if *k >= c {
                        return Err(Error::invalid(format!(
                            "category index {k} out of range 0..{c}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::invalid("value kind does not match variable kind"));
                }
            }
        }
        Ok(())
    }

    /// Draw a uniformly random valid point.
    pub fn sample_uniform(&self, rng: &mut crate::rng::RunRng) -> MixedPoint {
        let values = self
            .variables
            .iter()
            .map(|var| match var {
                VariableSpec::Continuous { lower, upper } => {
                    VarValue::Continuous(rng.uniform_in(*lower, *upper))
                }
                spec => VarValue::Category(rng.below(spec.cardinality().unwrap())),
            })
            .collect();
        MixedPoint { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarValue {
    Continuous(f64),
    Category(usize),
}

impl VarValue {
    pub fn as_continuous(&self) -> f64 {
        match self {
            VarValue::Continuous(x) => *x,
            VarValue::Category(k) => *k as f64,
        }
    }

    pub fn as_category(&self) -> usize {
        match self {
            VarValue::Category(k) => *k,
            VarValue::Continuous(_) => panic!("continuous value used as category"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub values: Vec<VarValue>,
}

impl MixedPoint {
    pub fn new(values: Vec<VarValue>) -> Self {
        MixedPoint { values }
    }

    /// All-categorical point from indices.
    pub fn from_indices(indices: &[usize]) -> Self {
        MixedPoint {
            values: indices.iter().map(|&k| VarValue::Category(k)).collect(),
        }
    }
}

/// Observed points with objective values, minimization convention.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub points: Vec<MixedPoint>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: MixedPoint, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("objective value {value} not finite")));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and value of the incumbent (smallest value, first on ties).
    pub fn argmin(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((i, v));
            }
        }
        best
    }
}

/// Number of combinatorial coordinates where two points differ; continuous
/// coordinates are ignored.
pub fn hamming_distance(a: &MixedPoint, b: &MixedPoint, space: &MixedSpace) -> Result<usize> {
    if a.values.len() != space.dim() || b.values.len() != space.dim() {
        return Err(Error::invalid("hamming_distance dimension mismatch"));
    }
    let mut count = 0;
    for ((va, vb), var) in a.values.iter().zip(&b.values).zip(space.variables()) {
        if var.is_continuous() {
            continue;
        }
        if va.as_category() != vb.as_category() {
            count += 1;
        }
    }
    Ok(count)
}

/// Black-box objective over a mixed space.
pub trait Objective: Send + Sync {
    fn eval(&self, point: &MixedPoint) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&MixedPoint) -> f64 + Send + Sync,
{
    fn eval(&self, point: &MixedPoint) -> f64 {
        self(point)
    }
}

/// Objective that permutes each combinatorial coordinate by
/// `(index + delta_i) mod cardinality_i` before evaluating the inner function.
pub struct ShiftedObjective {
    inner: Box<dyn Objective>,
    // (variable index, shift, cardinality) per combinatorial variable
    shifts: Vec<(usize, usize, usize)>,
}

impl ShiftedObjective {
    pub fn shifts(&self) -> Vec<usize> {
        self.shifts.iter().map(|&(_, d, _)| d).collect()
    }
}

/// Wrap `f` so that combinatorial inputs are cyclically shifted. `delta` has
/// one entry per combinatorial variable, in variable order, with
/// `0 <= delta_i < cardinality_i`.
pub fn shift_wrap(
    f: Box<dyn Objective>,
    delta: &[usize],
    space: &MixedSpace,
) -> Result<ShiftedObjective> {
    let comb = space.combinatorial_indices();
    if delta.len() != comb.len() {
        return Err(Error::invalid(format!(
            "delta has {} entries, space has {} combinatorial variables",
            delta.len(),
            comb.len()
        )));
    }
    let mut shifts = Vec::with_capacity(comb.len());
    for (&var_idx, &d) in comb.iter().zip(delta) {
        let c = space.variables()[var_idx].cardinality().unwrap();
        if d >= c {
            return Err(Error::invalid(format!(
                "shift {d} out of range for cardinality {c}"
            )));
        }
        shifts.push((var_idx, d, c));
    }
    Ok(ShiftedObjective { inner: f, shifts })
}

impl Objective for ShiftedObjective {
    fn eval(&self, point: &MixedPoint) -> f64 {
        let mut shifted = point.clone();
        for &(var_idx, d, c) in &self.shifts {
            let k = shifted.values[var_idx].as_category();
            shifted.values[var_idx] = VarValue::Category((k + d) % c);
        }
        self.inner.eval(&shifted)
    }
}
