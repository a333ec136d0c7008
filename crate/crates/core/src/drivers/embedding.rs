//! Random type-homogeneous subspace embedding: every input dimension belongs
//! to exactly one target bin, continuous bins carry a random sign, and
//! combinatorial dimensions share a bin only when their cardinalities match.
//! The target space doubles on a budget schedule, children inheriting their
//! parent's coordinate so existing observations re-embed consistently.
//!
//! Coordinates live in the normalized unit cube on both sides; the signed
//! continuous map reflects around the cube center, so the linear parts of the
//! up-projection Q and its pseudo-inverse P satisfy P Q = I.

use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::space::{MixedPoint, MixedSpace, VarValue, VariableSpec};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
enum BinKind {
    Continuous,
    Categorical { cardinality: usize },
}

#[derive(Debug, Clone)]
pub struct EmbeddingState {
    /// Target-space dimensionality (= number of bins).
    d_a: usize,
    kinds: Vec<BinKind>,
    /// Input dimension -> bin index.
    assignment: Vec<usize>,
    /// Input dimension -> sign (+1 for combinatorial dimensions).
    signs: Vec<f64>,
    /// The bin space used for Hamming geometry and local search in V.
    bin_space: MixedSpace,
}

fn group_key(var: &VariableSpec) -> Option<usize> {
    var.cardinality()
}

impl EmbeddingState {
    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn bin_space(&self) -> &MixedSpace {
        &self.bin_space
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Linear part of the pseudo-inverse P: row per bin, s_i / |bin| entries.
    pub fn p_matrix(&self, input_dim: usize) -> DMatrix<f64> {
        let mut sizes = vec![0usize; self.d_a];
        for &b in &self.assignment {
            sizes[b] += 1;
        }
        let mut p = DMatrix::zeros(self.d_a, input_dim);
        for (i, &b) in self.assignment.iter().enumerate() {
            p[(b, i)] = self.signs[i] / sizes[b] as f64;
        }
        p
    }

    /// Linear part of the up-projection Q.
    pub fn q_matrix(&self, input_dim: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(input_dim, self.d_a);
        for (i, &b) in self.assignment.iter().enumerate() {
            q[(i, b)] = self.signs[i];
        }
        q
    }

    /// Project normalized input coordinates down to V (affine, centered).
    pub fn project_down(&self, z_unit: &[f64]) -> DVector<f64> {
        let mut sizes = vec![0usize; self.d_a];
        let mut acc = vec![0.0f64; self.d_a];
        for (i, &b) in self.assignment.iter().enumerate() {
            sizes[b] += 1;
            acc[b] += 0.5 + self.signs[i] * (z_unit[i] - 0.5);
        }
        DVector::from_fn(self.d_a, |b, _| acc[b] / sizes[b] as f64)
    }

    /// Decode a V vector into a point of the bin space: categorical bins snap
    /// to the nearest grid level, continuous bins clamp to [0, 1].
    pub fn decode_bin_point(&self, v: &[f64]) -> Result<MixedPoint> {
        if v.len() != self.d_a {
            return Err(Error::invalid("embedding decode dimension mismatch"));
        }
        let values = v
            .iter()
            .zip(&self.kinds)
            .map(|(&x, kind)| {
                if !x.is_finite() {
                    return Err(Error::invalid("cannot decode non-finite coordinate"));
                }
                Ok(match kind {
                    BinKind::Continuous => VarValue::Continuous(x.clamp(0.0, 1.0)),
                    BinKind::Categorical { cardinality } => {
                        let c = *cardinality;
                        let k = (x * (c - 1) as f64).round().clamp(0.0, (c - 1) as f64);
                        VarValue::Category(k as usize)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MixedPoint::new(values))
    }

    /// Grid coordinate in V of one bin's category.
    pub fn bin_category_coord(&self, bin: usize, category: usize) -> f64 {
        match self.kinds[bin] {
            BinKind::Categorical { cardinality } => category as f64 / (cardinality - 1) as f64,
            BinKind::Continuous => panic!("continuous bin has no categories"),
        }
    }

    /// Numeric V coordinates of a bin-space point.
    pub fn encode_bin_point(&self, point: &MixedPoint) -> DVector<f64> {
        DVector::from_fn(self.d_a, |b, _| match (&self.kinds[b], &point.values[b]) {
            (BinKind::Continuous, VarValue::Continuous(x)) => *x,
            (BinKind::Categorical { .. }, VarValue::Category(k)) => {
                self.bin_category_coord(b, *k)
            }
            _ => panic!("bin point does not match bin layout"),
        })
    }

    /// Expand a bin-space point into the full mixed space: categorical bins
    /// broadcast their category to every member, continuous bins map through
    /// the signed reflection and back to variable bounds.
    pub fn bin_point_to_mixed(&self, bin_point: &MixedPoint, space: &MixedSpace) -> MixedPoint {
        let values = space
            .variables()
            .iter()
            .enumerate()
            .map(|(i, var)| {
                let b = self.assignment[i];
                match (&bin_point.values[b], var) {
                    (VarValue::Category(k), v) if !v.is_continuous() => VarValue::Category(*k),
                    (VarValue::Continuous(x), VariableSpec::Continuous { lower, upper }) => {
                        let unit = (0.5 + self.signs[i] * (x - 0.5)).clamp(0.0, 1.0);
                        VarValue::Continuous(lower + unit * (upper - lower))
                    }
                    _ => unreachable!("type-homogeneous bins"),
                }
            })
            .collect();
        MixedPoint::new(values)
    }

    /// Double the target dimensionality (clamped at the input dimension) by
    /// splitting each bin's members into two children; empty children are
    /// dropped. Returns, for each new bin, the index of its parent, so stored
    /// V coordinates can be re-embedded by copying the parent entry.
    pub fn increase(&mut self, rng: &mut RunRng) -> Vec<usize> {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.d_a];
        for (i, &b) in self.assignment.iter().enumerate() {
            members[b].push(i);
        }
        let mut new_kinds = Vec::new();
        let mut parent_of = Vec::new();
        let mut new_assignment = vec![usize::MAX; self.assignment.len()];
        for (b, dims) in members.iter().enumerate() {
            let mut children: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            if dims.len() == 1 {
                children[0].push(dims[0]);
            } else {
                // Deal one member to each child, then split uniformly.
                children[0].push(dims[0]);
                children[1].push(dims[1]);
                for &d in &dims[2..] {
                    children[rng.below(2)].push(d);
                }
            }
            for child in children.iter().filter(|c| !c.is_empty()) {
                let idx = new_kinds.len();
                new_kinds.push(self.kinds[b].clone());
                parent_of.push(b);
                for &d in child {
                    new_assignment[d] = idx;
                }
            }
        }
        self.d_a = new_kinds.len();
        self.kinds = new_kinds;
        self.assignment = new_assignment;
        self.bin_space = bin_space_from_kinds(&self.kinds);
        parent_of
    }
}

fn bin_space_from_kinds(kinds: &[BinKind]) -> MixedSpace {
    MixedSpace::new(
        kinds
            .iter()
            .map(|k| match k {
                BinKind::Continuous => VariableSpec::continuous(0.0, 1.0).unwrap(),
                BinKind::Categorical { cardinality } => {
                    VariableSpec::categorical_with_cardinality(*cardinality).unwrap()
                }
            })
            .collect(),
    )
    .expect("at least one bin")
}

/// Assign each input dimension to one of `d_a_init` type-homogeneous bins
/// uniformly at random (every bin non-empty), with random signs on continuous
/// dimensions.
pub fn build_embedding(
    space: &MixedSpace,
    d_a_init: usize,
    rng: &mut RunRng,
) -> Result<EmbeddingState> {
    let d = space.dim();
    if d_a_init < 1 || d_a_init > d {
        return Err(Error::invalid(format!(
            "target dimension {d_a_init} outside 1..={d}"
        )));
    }
    // Group dimensions by type/cardinality.
    let mut groups: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    for (i, var) in space.variables().iter().enumerate() {
        let key = group_key(var);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, dims)) => dims.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    if d_a_init < groups.len() {
        return Err(Error::invalid(format!(
            "target dimension {d_a_init} below the {} distinct variable groups",
            groups.len()
        )));
    }
    // Distribute bins: one per group, the rest proportionally by group size,
    // never exceeding the group size.
    let mut bin_counts: Vec<usize> = groups.iter().map(|_| 1usize).collect();
    let mut remaining = d_a_init - groups.len();
    while remaining > 0 {
        // Give the next bin to the group with the largest member/bin ratio
        // that still has capacity.
        let candidate = (0..groups.len())
            .filter(|&g| bin_counts[g] < groups[g].1.len())
            .max_by(|&a, &b| {
                let ra = groups[a].1.len() as f64 / bin_counts[a] as f64;
                let rb = groups[b].1.len() as f64 / bin_counts[b] as f64;
                ra.total_cmp(&rb)
            });
        match candidate {
            Some(g) => bin_counts[g] += 1,
            None => break,
        }
        remaining -= 1;
    }

    let mut kinds = Vec::new();
    let mut assignment = vec![usize::MAX; d];
    for ((key, dims), count) in groups.iter().zip(&bin_counts) {
        let first_bin = kinds.len();
        for _ in 0..*count {
            kinds.push(match key {
                None => BinKind::Continuous,
                Some(c) => BinKind::Categorical { cardinality: *c },
            });
        }
        // Deal one dimension per bin, then assign the rest uniformly.
        for (j, &dim) in dims.iter().enumerate() {
            let bin = if j < *count {
                first_bin + j
            } else {
                first_bin + rng.below(*count)
            };
            assignment[dim] = bin;
        }
    }
    let signs: Vec<f64> = space
        .variables()
        .iter()
        .map(|var| {
            if var.is_continuous() {
                if rng.uniform() < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                1.0
            }
        })
        .collect();
    let bin_space = bin_space_from_kinds(&kinds);
    Ok(EmbeddingState {
        d_a: kinds.len(),
        kinds,
        assignment,
        signs,
        bin_space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed_space() -> MixedSpace {
        let mut vars: Vec<VariableSpec> = (0..6)
            .map(|_| VariableSpec::categorical_with_cardinality(3).unwrap())
            .collect();
        vars.extend((0..4).map(|_| VariableSpec::continuous(-2.0, 2.0).unwrap()));
        MixedSpace::new(vars).unwrap()
    }

    #[test]
    fn rejects_too_few_bins_for_groups() {
        let space = mixed_space();
        let mut rng = RunRng::seed_from_u64(1);
        assert!(build_embedding(&space, 1, &mut rng).is_err());
        assert!(build_embedding(&space, 2, &mut rng).is_ok());
        assert!(build_embedding(&space, 11, &mut rng).is_err());
    }

    #[test]
    fn full_dimension_is_signed_permutation() {
        let space = mixed_space();
        let mut rng = RunRng::seed_from_u64(2);
        let emb = build_embedding(&space, 10, &mut rng).unwrap();
        assert_eq!(emb.d_a(), 10);
        let q = emb.q_matrix(10);
        let p = emb.p_matrix(10);
        let pq = &p * &q;
        assert!((pq - DMatrix::<f64>::identity(10, 10)).norm() < 1e-10);
        // Each column of Q has exactly one nonzero of magnitude 1.
        for c in 0..10 {
            let col = q.column(c);
            assert_eq!(col.iter().filter(|v| v.abs() == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn pseudo_inverse_identity_for_random_embeddings() {
        let space = mixed_space();
        for seed in 0..20u64 {
            let mut rng = RunRng::seed_from_u64(seed);
            let emb = build_embedding(&space, 2 + (seed % 8) as usize, &mut rng).unwrap();
            let q = emb.q_matrix(10);
            let p = emb.p_matrix(10);
            let pq = &p * &q;
            let d_a = emb.d_a();
            assert!(
                (pq - DMatrix::<f64>::identity(d_a, d_a)).norm() < 1e-10,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn bins_are_type_homogeneous() {
        let space = mixed_space();
        for seed in 0..10u64 {
            let mut rng = RunRng::seed_from_u64(seed);
            let emb = build_embedding(&space, 4, &mut rng).unwrap();
            for (i, &b) in emb.assignment().iter().enumerate() {
                let var = &space.variables()[i];
                match (&emb.kinds[b], var.cardinality()) {
                    (BinKind::Continuous, None) => {}
                    (BinKind::Categorical { cardinality }, Some(c)) => assert_eq!(*cardinality, c),
                    _ => panic!("bin type mismatch"),
                }
            }
        }
    }

    #[test]
    fn projection_round_trip_through_bins() {
        let space = mixed_space();
        let mut rng = RunRng::seed_from_u64(5);
        let emb = build_embedding(&space, 5, &mut rng).unwrap();
        // A bin point expands to Z and projects back to the same V vector.
        let bin_point = emb.decode_bin_point(&vec![0.5; emb.d_a()]).unwrap();
        let mixed = emb.bin_point_to_mixed(&bin_point, &space);
        space.validate_point(&mixed).unwrap();
    }

    #[test]
    fn increase_doubles_and_preserves_points() {
        let space = mixed_space();
        let mut rng = RunRng::seed_from_u64(7);
        let mut emb = build_embedding(&space, 2, &mut rng).unwrap();
        let f = |p: &MixedPoint| {
            p.values
                .iter()
                .map(|v| match v {
                    VarValue::Category(k) => *k as f64,
                    VarValue::Continuous(x) => *x,
                })
                .sum::<f64>()
        };
        // A stored pre-image and its objective value.
        let v_old = DVector::from_vec(vec![0.3, 0.9]);
        let z_old = emb.bin_point_to_mixed(&emb.decode_bin_point(v_old.as_slice()).unwrap(), &space);
        let y_old = f(&z_old);

        let mut d_a = emb.d_a();
        while d_a < space.dim() {
            let parents = emb.increase(&mut rng);
            let new_d_a = emb.d_a();
            assert!(new_d_a <= 2 * d_a && new_d_a <= space.dim());
            assert!(new_d_a > d_a || d_a == space.dim());
            // Monotone growth, children inherit parent coordinates.
            let v_new = DVector::from_fn(new_d_a, |b, _| v_old[parents[b]]);
            let z_new =
                emb.bin_point_to_mixed(&emb.decode_bin_point(v_new.as_slice()).unwrap(), &space);
            assert_eq!(f(&z_new), y_old, "re-embedded point changed value");
            d_a = new_d_a;
            return; // one split checked end-to-end is enough here
        }
    }

    #[test]
    fn increase_drops_empty_children() {
        // Ten singleton bins: splitting yields exactly ten bins again.
        let space = MixedSpace::new(
            (0..4)
                .map(|_| VariableSpec::categorical_with_cardinality(2).unwrap())
                .collect(),
        )
        .unwrap();
        let mut rng = RunRng::seed_from_u64(9);
        let mut emb = build_embedding(&space, 4, &mut rng).unwrap();
        let parents = emb.increase(&mut rng);
        assert_eq!(emb.d_a(), 4);
        assert_eq!(parents.len(), 4);
    }

    #[test]
    fn projected_mean_has_zero_mahalanobis() {
        use crate::hesp::{mahalanobis, SearchDistribution};
        let space = mixed_space();
        let mut rng = RunRng::seed_from_u64(11);
        let emb = build_embedding(&space, 4, &mut rng).unwrap();
        let mean = DVector::from_fn(10, |_, _| rng.uniform());
        let dist = SearchDistribution::init(mean.clone(), 0.3, 6, &[], 0.0).unwrap();
        let p = emb.p_matrix(10);
        let m_v = emb.project_down(mean.as_slice());
        let cov_v = &p * dist.covariance() * p.transpose();
        let dist_v =
            SearchDistribution::from_moments(m_v.clone(), cov_v, dist.sigma(), 6).unwrap();
        let d = mahalanobis(&m_v, &dist_v, &vec![1.0; emb.d_a()]).unwrap();
        assert!(d.abs() < 1e-12);
    }
}
