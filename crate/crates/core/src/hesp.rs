//! Hyper-ellipsoid space partitioning: a multivariate-normal search
//! distribution with CMA-style generation updates defines local regions as
//! confidence ellipsoids, optionally intersected with a Hamming ball around
//! the decoded mean. All geometry here lives in a normalized [0,1]^d space;
//! [`DomainScaler`] maps encoded coordinates into it and back.

use crate::encode::{decode_point, encode_point, Encoder};
use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::space::{hamming_distance, MixedPoint, MixedSpace};
use crate::stats::chi_squared_quantile;
use nalgebra::{DMatrix, DVector};

/// Population size 4 + floor(3 + ln d).
pub fn lambda_default(d: usize) -> usize {
    assert!(d >= 1);
    4 + (3.0 + (d as f64).ln()).floor() as usize
}

/// Alternative population size 4 + floor(3 ln d).
pub fn lambda_canonical(d: usize) -> usize {
    assert!(d >= 1);
    4 + (3.0 * (d as f64).ln()).floor() as usize
}

/// Affine map between an encoder's raw coordinate ranges and the unit cube.
/// Continuous dimensions use their bounds; combinatorial dimensions use the
/// min/max of the encoder's value table.
#[derive(Debug, Clone)]
pub struct DomainScaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainScaler {
    pub fn new(space: &MixedSpace, encoder: &Encoder) -> Result<Self> {
        let mut lo = Vec::with_capacity(space.dim());
        let mut hi = Vec::with_capacity(space.dim());
        for (idx, var) in space.variables().iter().enumerate() {
            let (l, h) = match encoder.table(idx) {
                None => var.bounds().unwrap(),
                Some(table) => {
                    let l = table.iter().cloned().fold(f64::INFINITY, f64::min);
                    let h = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    (l, h)
                }
            };
            if !(h > l) {
                return Err(Error::numerical(format!(
                    "degenerate coordinate range [{l}, {h}] at dim {idx}"
                )));
            }
            lo.push(l);
            hi.push(h);
        }
        Ok(DomainScaler { lo, hi })
    }

    pub fn to_unit(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, &x)| (x - self.lo[i]) / (self.hi[i] - self.lo[i]))
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, &x)| self.lo[i] + x * (self.hi[i] - self.lo[i]))
            .collect()
    }

    /// Encode a point and rescale to the unit cube.
    pub fn encode_unit(&self, encoder: &Encoder, point: &MixedPoint) -> Result<Vec<f64>> {
        Ok(self.to_unit(&encode_point(encoder, point)?))
    }

    /// Rescale from the unit cube and decode.
    pub fn decode_unit(
        &self,
        encoder: &Encoder,
        space: &MixedSpace,
        unit: &[f64],
    ) -> Result<MixedPoint> {
        decode_point(encoder, space, &self.from_unit(unit))
    }

    /// Unit-cube coordinate of one variable's category.
    pub fn category_coord(&self, encoder: &Encoder, var_idx: usize, category: usize) -> f64 {
        let raw = encoder.table(var_idx).expect("combinatorial variable")[category];
        (raw - self.lo[var_idx]) / (self.hi[var_idx] - self.lo[var_idx])
    }
}

/// Multivariate-normal search distribution with evolution-path state.
#[derive(Debug, Clone)]
pub struct SearchDistribution {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    lambda: usize,
    /// Dimensions subject to the combinatorial standard-deviation floor.
    comb_dims: Vec<usize>,
    /// Floor on sigma * sqrt(C_ii) for combinatorial dims; 0 disables.
    sigma_floor: f64,
    /// Cached lower Cholesky factor of `cov`.
    cov_chol: DMatrix<f64>,
    /// Number of eigenvalue-clamping repairs applied so far.
    repairs: usize,
}

/// Strategy constants for one generation update.
struct CmaConstants {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl CmaConstants {
    fn derive(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let wsum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        CmaConstants {
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

impl SearchDistribution {
    /// Distribution with the given mean, identity covariance and zeroed paths.
    pub fn init(
        mean: DVector<f64>,
        sigma: f64,
        lambda: usize,
        comb_dims: &[usize],
        sigma_floor: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let dim = mean.len();
        let cov = DMatrix::identity(dim, dim);
        let cov_chol = cov.clone();
        Ok(SearchDistribution {
            mean,
            cov,
            sigma,
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
            lambda,
            comb_dims: comb_dims.to_vec(),
            sigma_floor,
            cov_chol,
            repairs: 0,
        })
    }

    /// Distribution with explicit first and second moments, e.g. a projection
    /// of another distribution; the covariance is repaired if needed.
    pub fn from_moments(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        sigma: f64,
        lambda: usize,
    ) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::invalid("covariance shape mismatch"));
        }
        let mut dist = Self::init(mean, sigma, lambda, &[], 0.0)?;
        dist.cov = cov;
        dist.refresh_cholesky()?;
        Ok(dist)
    }

    /// Initialize from observed (coordinates, value) pairs on a common
    /// [lo, hi] box: mean at the minimizer, identity covariance, step size
    /// 0.3 (hi - lo).
    pub fn init_from_data(
        data: &[(Vec<f64>, f64)],
        lo: f64,
        hi: f64,
        lambda: usize,
        comb_dims: &[usize],
        sigma_floor: f64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot initialize distribution from empty data"));
        }
        if !(hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("bad bounds [{lo}, {hi}]")));
        }
        let best = data
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let mean = DVector::from_vec(best.0.clone());
        Self::init(mean, 0.3 * (hi - lo), lambda, comb_dims, sigma_floor)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Move the mean, e.g. to transfer the distribution into a different
    /// encoding of the same cells. Covariance, step size and paths carry over.
    pub fn set_mean(&mut self, mean: DVector<f64>) {
        assert_eq!(mean.len(), self.dim());
        self.mean = mean;
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn repairs(&self) -> usize {
        self.repairs
    }

    /// Per-dimension standard deviations sigma * sqrt(C_ii).
    pub fn coordinate_stds(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.sigma * self.cov[(i, i)].sqrt())
            .collect()
    }

    /// One draw from N(mean, sigma^2 C).
    pub fn sample_raw(&self, rng: &mut RunRng) -> DVector<f64> {
        let u = DVector::from_fn(self.dim(), |_, _| rng.gauss());
        &self.mean + &self.cov_chol * u * self.sigma
    }

    /// One draw from the axis-scaled distribution N(mean, sigma^2 D C D) with
    /// D = diag(sqrt(scale)). Returns the point and its squared Mahalanobis
    /// distance (which is |u|^2 by construction).
    fn sample_scaled(&self, scale: &[f64], rng: &mut RunRng) -> (DVector<f64>, f64) {
        let u = DVector::from_fn(self.dim(), |_, _| rng.gauss());
        let m2 = u.norm_squared();
        let y = &self.cov_chol * &u;
        let v = DVector::from_fn(self.dim(), |i, _| {
            self.mean[i] + self.sigma * scale[i].sqrt() * y[i]
        });
        (v, m2)
    }

    /// Standard CMA-ES generation update on a ranked batch, followed by the
    /// combinatorial standard-deviation floor.
    pub fn cma_update(&mut self, batch: &[(DVector<f64>, f64)]) -> Result<()> {
        if batch.len() < 2 {
            return Err(Error::invalid(format!(
                "cma_update needs a batch of at least 2, got {}",
                batch.len()
            )));
        }
        for (x, f) in batch {
            if x.len() != self.dim() || !f.is_finite() {
                return Err(Error::invalid("cma_update batch entry invalid"));
            }
        }
        let dim = self.dim();
        let n = dim as f64;
        let c = CmaConstants::derive(dim, batch.len());
        let mu = batch.len() / 2;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by(|&a, &b| batch[a].1.total_cmp(&batch[b].1));

        let old_mean = self.mean.clone();
        let old_sigma = self.sigma;
        let ys: Vec<DVector<f64>> = order
            .iter()
            .take(mu)
            .map(|&i| (&batch[i].0 - &old_mean) / old_sigma)
            .collect();
        let mut y_w = DVector::zeros(dim);
        for (w, y) in c.weights.iter().zip(&ys) {
            y_w += y * *w;
        }
        self.mean = &old_mean + &y_w * old_sigma;

        // C^{-1/2} from the current covariance.
        let eig = nalgebra::SymmetricEigen::new(self.cov.clone());
        let mut inv_sqrt = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let ev = eig.eigenvalues[k].max(1e-20);
            let col = eig.eigenvectors.column(k);
            inv_sqrt += col * col.transpose() / ev.sqrt();
        }

        self.p_sigma = &self.p_sigma * (1.0 - c.c_sigma)
            + &inv_sqrt * &y_w * (c.c_sigma * (2.0 - c.c_sigma) * c.mu_eff).sqrt();

        self.generation += 1;
        let expected = (1.0 - (1.0 - c.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if self.p_sigma.norm() / expected < (1.4 + 2.0 / (n + 1.0)) * c.chi_n {
            1.0
        } else {
            0.0
        };

        self.p_c = &self.p_c * (1.0 - c.c_c)
            + &y_w * h_sigma * (c.c_c * (2.0 - c.c_c) * c.mu_eff).sqrt();

        let mut rank_mu = DMatrix::zeros(dim, dim);
        for (w, y) in c.weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        self.cov = &self.cov * (1.0 - c.c_1 - c.c_mu)
            + (&self.p_c * self.p_c.transpose()
                + &self.cov * ((1.0 - h_sigma) * c.c_c * (2.0 - c.c_c)))
                * c.c_1
            + rank_mu * c.c_mu;

        self.sigma =
            old_sigma * ((c.c_sigma / c.d_sigma) * (self.p_sigma.norm() / c.chi_n - 1.0)).exp();

        self.enforce_sigma_floor();
        self.refresh_cholesky()
    }

    fn enforce_sigma_floor(&mut self) {
        if self.sigma_floor <= 0.0 {
            return;
        }
        let target = (self.sigma_floor / self.sigma).powi(2);
        for &i in &self.comb_dims {
            if self.cov[(i, i)] < target {
                self.cov[(i, i)] = target;
            }
        }
    }

    /// Re-factor the covariance; repair by eigenvalue clamping when it lost
    /// positive definiteness.
    fn refresh_cholesky(&mut self) -> Result<()> {
        // Symmetrize drift from the rank-one/rank-mu accumulation.
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym;
        let mut attempt = self.cov.clone();
        if crate::linalg::cholesky_lower(&mut attempt).is_ok() {
            self.cov_chol = attempt;
            return Ok(());
        }
        let eig = nalgebra::SymmetricEigen::new(self.cov.clone());
        let mut rebuilt = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.dim() {
            let ev = eig.eigenvalues[k].max(1e-12);
            let col = eig.eigenvectors.column(k);
            rebuilt += col * col.transpose() * ev;
        }
        self.cov = (&rebuilt + rebuilt.transpose()) * 0.5;
        self.repairs += 1;
        let mut attempt = self.cov.clone();
        crate::linalg::cholesky_lower(&mut attempt)
            .map_err(|_| Error::numerical("covariance repair failed"))?;
        self.cov_chol = attempt;
        Ok(())
    }

    /// Condition number and largest eigenvalue of the covariance.
    fn spectrum(&self) -> (f64, f64) {
        let eig = nalgebra::SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        (max / min.max(1e-300), max)
    }
}

/// Scaled Mahalanobis distance of `v` to N(mean, sigma^2 D C D) with
/// D = diag(sqrt(scale)).
pub fn mahalanobis(v: &DVector<f64>, dist: &SearchDistribution, scale: &[f64]) -> Result<f64> {
    if v.len() != dist.dim() || scale.len() != dist.dim() {
        return Err(Error::invalid("mahalanobis dimension mismatch"));
    }
    let u = DVector::from_fn(dist.dim(), |i, _| {
        (v[i] - dist.mean[i]) / (dist.sigma * scale[i].sqrt())
    });
    // u^T C^{-1} u via the cached factor.
    let z = crate::linalg::solve_lower_vec(&dist.cov_chol, &u);
    let m2 = z.norm_squared();
    if !m2.is_finite() {
        return Err(Error::numerical("mahalanobis produced a non-finite value"));
    }
    Ok(m2.sqrt())
}

/// Confidence-ellipsoid region description.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub alpha: f64,
    /// Per-dimension covariance scale; L_x^2 on continuous dims, 1 elsewhere.
    pub scale: Vec<f64>,
    pub hamming_limit: Option<usize>,
    /// chi-squared quantile at probability 1 - alpha with dim degrees of
    /// freedom; membership compares squared Mahalanobis distance with it.
    pub chi2_threshold: f64,
}

impl RegionSpec {
    pub fn new(alpha: f64, scale: Vec<f64>, hamming_limit: Option<usize>) -> Result<Self> {
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("region scale entries must be positive"));
        }
        let chi2_threshold = chi_squared_quantile(1.0 - alpha, scale.len())?;
        Ok(RegionSpec {
            alpha,
            scale,
            hamming_limit,
            chi2_threshold,
        })
    }

    /// Mahalanobis-only region with unit scales.
    pub fn ellipsoid(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(alpha, vec![1.0; dim], None)
    }
}

/// Decoder bundle for regions with a Hamming constraint. `space` is whatever
/// space Hamming distances are measured in (the mixed space, or the
/// embedding's bin space).
pub struct RegionCodec<'a> {
    pub space: &'a MixedSpace,
    pub center_decoded: MixedPoint,
    pub decode: Box<dyn Fn(&[f64]) -> Result<MixedPoint> + 'a>,
    /// Coordinate (in the sampling space) of a given (variable, category).
    pub category_coord: Box<dyn Fn(usize, usize) -> f64 + 'a>,
}

/// Membership test: squared Mahalanobis distance within the chi-squared
/// threshold, and, when a Hamming limit is set, the decoded point within
/// `hamming_limit` of the decoded center.
pub fn in_region(
    v: &DVector<f64>,
    dist: &SearchDistribution,
    region: &RegionSpec,
    codec: Option<&RegionCodec<'_>>,
) -> Result<bool> {
    let m = mahalanobis(v, dist, &region.scale)?;
    if m * m > region.chi2_threshold {
        return Ok(false);
    }
    if let Some(limit) = region.hamming_limit {
        let codec = codec.ok_or_else(|| {
            Error::invalid("region has a Hamming limit but no decoder was provided")
        })?;
        let decoded = (codec.decode)(v.as_slice())?;
        let h = hamming_distance(&decoded, &codec.center_decoded, codec.space)?;
        if h > limit {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rejection-sample `count` vectors satisfying [`in_region`]. Candidates are
/// drawn from the scaled distribution; draws violating the Hamming limit get
/// randomly chosen excess coordinates reset to the center's categories, then
/// must still pass the Mahalanobis criterion. The attempt budget is 100x the
/// requested count.
pub fn sample_in_region(
    dist: &SearchDistribution,
    region: &RegionSpec,
    count: usize,
    rng: &mut RunRng,
    codec: Option<&RegionCodec<'_>>,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::invalid("sample_in_region needs count >= 1"));
    }
    if region.hamming_limit.is_some() && codec.is_none() {
        return Err(Error::invalid(
            "region has a Hamming limit but no decoder was provided",
        ));
    }
    let budget = count.saturating_mul(100);
    let mut out = Vec::with_capacity(count);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let (mut v, m2) = dist.sample_scaled(&region.scale, rng);
        if m2 > region.chi2_threshold {
            continue;
        }
        if let (Some(limit), Some(codec)) = (region.hamming_limit, codec) {
            let decoded = (codec.decode)(v.as_slice())?;
            let mut differing: Vec<usize> = Vec::new();
            for (i, var) in codec.space.variables().iter().enumerate() {
                if var.is_continuous() {
                    continue;
                }
                if decoded.values[i].as_category() != codec.center_decoded.values[i].as_category()
                {
                    differing.push(i);
                }
            }
            if differing.len() > limit {
                // Reset a random excess subset to the center's categories.
                let excess = differing.len() - limit;
                for _ in 0..excess {
                    let pick = rng.below(differing.len());
                    let var_idx = differing.swap_remove(pick);
                    let center_cat = codec.center_decoded.values[var_idx].as_category();
                    v[var_idx] = (codec.category_coord)(var_idx, center_cat);
                }
                // The repair moved coordinates; re-check the ellipsoid.
                let m = mahalanobis(&v, dist, &region.scale)?;
                if m * m > region.chi2_threshold {
                    continue;
                }
            }
        }
        out.push(v);
    }
    if out.len() < count {
        return Err(Error::SamplingExhausted(format!(
            "{} of {count} candidates after {budget} attempts",
            out.len()
        )));
    }
    Ok(out)
}

/// Restart conditions: ill-conditioned covariance, collapsed step size, or a
/// stagnant incumbent over `10 * ceil(d / lambda)` iterations. `best_history`
/// holds the best-so-far value at the end of each iteration since the last
/// restart.
pub fn check_restart(dist: &SearchDistribution, best_history: &[f64]) -> bool {
    let (cond, max_eig) = dist.spectrum();
    if cond > 1e14 {
        return true;
    }
    if dist.sigma * max_eig.sqrt() < 1e-10 {
        return true;
    }
    let window = 10 * dist.dim().div_ceil(dist.lambda.max(1));
    if best_history.len() > window {
        let before = best_history[best_history.len() - 1 - window];
        let now = *best_history.last().unwrap();
        let tol = 1e-12 * before.abs().max(1.0);
        if before - now <= tol {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::fit_ordinal;
    use crate::space::VariableSpec;

    #[test]
    fn lambda_formulas() {
        assert_eq!(lambda_default(1), 7);
        assert_eq!(lambda_default(20), 9);
        assert_eq!(lambda_default(125), 11);
        assert_eq!(lambda_canonical(1), 4 + 0);
        assert_eq!(lambda_canonical(20), 4 + 8);
    }

    #[test]
    fn init_from_data_picks_minimizer() {
        let data = vec![
            (vec![0.2, 0.2], 5.0),
            (vec![0.7, 0.1], -1.0),
            (vec![0.5, 0.5], 3.0),
        ];
        let dist = SearchDistribution::init_from_data(&data, 0.0, 1.0, 6, &[], 0.0).unwrap();
        assert_eq!(dist.mean().as_slice(), &[0.7, 0.1]);
        assert_eq!(dist.covariance(), &DMatrix::identity(2, 2));
        assert!((dist.sigma() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn init_from_data_rejects_empty() {
        assert!(SearchDistribution::init_from_data(&[], 0.0, 1.0, 4, &[], 0.0).is_err());
    }

    #[test]
    fn mahalanobis_cases() {
        let dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0, 0.0]), 1.0, 4, &[], 0.0).unwrap();
        let scale = [1.0, 1.0];
        // v = mean -> 0.
        assert_eq!(
            mahalanobis(&DVector::from_vec(vec![0.0, 0.0]), &dist, &scale).unwrap(),
            0.0
        );
        // Identity covariance, sigma 1: Euclidean norm.
        let d = mahalanobis(&DVector::from_vec(vec![3.0, 4.0]), &dist, &scale).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_diagonal_covariance() {
        // diag(4, 1) covariance, point (2, 0): (x-m)^T C^{-1} (x-m) = 4/4 = 1.
        let mut dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0, 0.0]), 1.0, 4, &[], 0.0).unwrap();
        dist.cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        dist.refresh_cholesky().unwrap();
        let d = mahalanobis(&DVector::from_vec(vec![2.0, 0.0]), &dist, &[1.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn region_membership_matches_enumeration() {
        // Brute-force oracle over a 51x51 grid with an explicit 2x2 inverse.
        let mut dist =
            SearchDistribution::init(DVector::from_vec(vec![0.4, 0.6]), 0.7, 4, &[], 0.0).unwrap();
        dist.cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        dist.refresh_cholesky().unwrap();
        let region = RegionSpec::ellipsoid(0.05, 2).unwrap();

        let s2 = dist.sigma() * dist.sigma();
        let (a, b, c) = (s2 * 1.0, s2 * 0.3, s2 * 0.5);
        let det = a * c - b * b;
        for i in 0..51 {
            for j in 0..51 {
                let x = i as f64 / 50.0;
                let y = j as f64 / 50.0;
                let (dx, dy) = (x - 0.4, y - 0.6);
                // Quadratic form with the inverse of sigma^2 C.
                let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
                let expected = q <= region.chi2_threshold;
                let got = in_region(&DVector::from_vec(vec![x, y]), &dist, &region, None).unwrap();
                assert_eq!(got, expected, "grid point ({x}, {y}) q={q}");
            }
        }
    }

    #[test]
    fn scale_doubles_axis_extent() {
        // With L = L_x^2 on a continuous dim and diagonal covariance, the
        // boundary point along that axis is exactly twice as far for L_x = 2.
        let dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0, 0.0]), 1.0, 4, &[], 0.0).unwrap();
        let boundary = |lx: f64| {
            let region = RegionSpec::new(0.05, vec![lx * lx, 1.0], None).unwrap();
            let r = region.chi2_threshold.sqrt();
            // Along axis 0: distance m = |x| / (sigma * lx) = r at x = r * lx.
            let x = r * lx;
            let v = DVector::from_vec(vec![x, 0.0]);
            let m = mahalanobis(&v, &dist, &region.scale).unwrap();
            assert!((m * m - region.chi2_threshold).abs() < 1e-9);
            x
        };
        let x1 = boundary(1.0);
        let x2 = boundary(2.0);
        assert!((x2 / x1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_candidates_all_pass_membership() {
        let space = MixedSpace::new(vec![
            VariableSpec::categorical_with_cardinality(5).unwrap(),
            VariableSpec::categorical_with_cardinality(5).unwrap(),
            VariableSpec::continuous(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let encoder = fit_ordinal(&space).unwrap();
        let scaler = DomainScaler::new(&space, &encoder).unwrap();
        let dist =
            SearchDistribution::init(DVector::from_vec(vec![0.5, 0.5, 0.5]), 0.3, 4, &[0, 1], 0.1)
                .unwrap();
        let center = scaler.decode_unit(&encoder, &space, &[0.5, 0.5, 0.5]).unwrap();
        let codec = RegionCodec {
            space: &space,
            center_decoded: center,
            decode: Box::new(|v| scaler.decode_unit(&encoder, &space, v)),
            category_coord: Box::new(|var, cat| scaler.category_coord(&encoder, var, cat)),
        };
        let region = RegionSpec::new(0.05, vec![1.0, 1.0, 2.25], Some(1)).unwrap();
        let mut rng = RunRng::seed_from_u64(12);
        let samples = sample_in_region(&dist, &region, 500, &mut rng, Some(&codec)).unwrap();
        assert_eq!(samples.len(), 500);
        for v in &samples {
            assert!(in_region(v, &dist, &region, Some(&codec)).unwrap());
        }
    }

    #[test]
    fn hamming_zero_limit_pins_categories() {
        let space = MixedSpace::new(
            (0..5)
                .map(|_| VariableSpec::categorical_with_cardinality(2).unwrap())
                .collect(),
        )
        .unwrap();
        let encoder = fit_ordinal(&space).unwrap();
        let scaler = DomainScaler::new(&space, &encoder).unwrap();
        let dist = SearchDistribution::init(
            DVector::from_element(5, 0.2),
            0.4,
            4,
            &[0, 1, 2, 3, 4],
            0.1,
        )
        .unwrap();
        let center = scaler.decode_unit(&encoder, &space, &[0.2; 5]).unwrap();
        let codec = RegionCodec {
            space: &space,
            center_decoded: center.clone(),
            decode: Box::new(|v| scaler.decode_unit(&encoder, &space, v)),
            category_coord: Box::new(|var, cat| scaler.category_coord(&encoder, var, cat)),
        };
        let region = RegionSpec::new(0.05, vec![1.0; 5], Some(0)).unwrap();
        let mut rng = RunRng::seed_from_u64(4);
        let samples = sample_in_region(&dist, &region, 100, &mut rng, Some(&codec)).unwrap();
        for v in &samples {
            let decoded = (codec.decode)(v.as_slice()).unwrap();
            assert_eq!(
                hamming_distance(&decoded, &center, &space).unwrap(),
                0,
                "candidate decodes away from the center"
            );
        }
    }

    #[test]
    fn hamming_one_limit_on_binary_space() {
        let space = MixedSpace::new(
            (0..5)
                .map(|_| VariableSpec::categorical_with_cardinality(2).unwrap())
                .collect(),
        )
        .unwrap();
        let encoder = fit_ordinal(&space).unwrap();
        let scaler = DomainScaler::new(&space, &encoder).unwrap();
        let dist = SearchDistribution::init(
            DVector::from_element(5, 0.5),
            0.5,
            4,
            &[0, 1, 2, 3, 4],
            0.1,
        )
        .unwrap();
        let center = scaler.decode_unit(&encoder, &space, &[0.5; 5]).unwrap();
        let codec = RegionCodec {
            space: &space,
            center_decoded: center.clone(),
            decode: Box::new(|v| scaler.decode_unit(&encoder, &space, v)),
            category_coord: Box::new(|var, cat| scaler.category_coord(&encoder, var, cat)),
        };
        let region = RegionSpec::new(0.05, vec![1.0; 5], Some(1)).unwrap();
        let mut rng = RunRng::seed_from_u64(77);
        for v in sample_in_region(&dist, &region, 300, &mut rng, Some(&codec)).unwrap() {
            let decoded = (codec.decode)(v.as_slice()).unwrap();
            assert!(hamming_distance(&decoded, &center, &space).unwrap() <= 1);
        }
    }

    #[test]
    fn sample_requires_positive_count() {
        let dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0]), 1.0, 4, &[], 0.0).unwrap();
        let region = RegionSpec::ellipsoid(0.05, 1).unwrap();
        let mut rng = RunRng::seed_from_u64(0);
        assert!(sample_in_region(&dist, &region, 0, &mut rng, None).is_err());
    }

    #[test]
    fn sigma_floor_holds_after_updates() {
        let comb: Vec<usize> = (0..4).collect();
        let mut dist =
            SearchDistribution::init(DVector::from_element(4, 0.5), 0.3, 6, &comb, 0.1).unwrap();
        let mut rng = RunRng::seed_from_u64(3);
        // Strongly contracting objective pulls sigma down; the floor must hold.
        for _ in 0..40 {
            let batch: Vec<(DVector<f64>, f64)> = (0..6)
                .map(|_| {
                    let x = dist.sample_raw(&mut rng);
                    let f = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                    (x, f)
                })
                .collect();
            dist.cma_update(&batch).unwrap();
            for &i in &comb {
                let sd = dist.sigma() * dist.covariance()[(i, i)].sqrt();
                assert!(sd >= 0.1 - 1e-12, "floor violated: {sd}");
            }
        }
    }

    #[test]
    fn update_with_identical_points_keeps_mean() {
        let mut dist =
            SearchDistribution::init(DVector::from_vec(vec![0.3, 0.7]), 0.2, 4, &[], 0.0).unwrap();
        let p = DVector::from_vec(vec![0.3, 0.7]);
        let batch: Vec<(DVector<f64>, f64)> =
            (0..4).map(|i| (p.clone(), i as f64)).collect();
        dist.cma_update(&batch).unwrap();
        assert!((dist.mean() - &p).norm() < 1e-14);
    }

    #[test]
    fn update_recombines_top_half() {
        // lambda = 4, mu = 2: the new mean is a convex combination of the two
        // best points, matching the printed recombination weights.
        let mut dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0, 0.0]), 1.0, 4, &[], 0.0).unwrap();
        let batch = vec![
            (DVector::from_vec(vec![1.0, 0.0]), 1.0),
            (DVector::from_vec(vec![-1.0, 0.0]), 2.0),
            (DVector::from_vec(vec![0.0, 9.0]), 3.0),
            (DVector::from_vec(vec![0.0, 9.0]), 4.0),
        ];
        dist.cma_update(&batch).unwrap();
        let c = CmaConstants::derive(2, 4);
        let expected_x = c.weights[0] * 1.0 + c.weights[1] * (-1.0);
        assert!((dist.mean()[0] - expected_x).abs() < 1e-14);
        assert!(dist.mean()[1].abs() < 1e-14);
        assert!(dist.mean()[0].abs() <= 1.0);
    }

    #[test]
    fn update_rejects_tiny_batches() {
        let mut dist =
            SearchDistribution::init(DVector::from_vec(vec![0.0]), 1.0, 4, &[], 0.0).unwrap();
        assert!(dist
            .cma_update(&[(DVector::from_vec(vec![0.1]), 1.0)])
            .is_err());
    }

    #[test]
    fn restart_conditions() {
        let dist =
            SearchDistribution::init(DVector::from_element(4, 0.5), 0.3, 8, &[], 0.0).unwrap();
        assert!(!check_restart(&dist, &[5.0, 4.0, 3.0]));

        let tiny =
            SearchDistribution::init(DVector::from_element(4, 0.5), 1e-20, 8, &[], 0.0).unwrap();
        assert!(check_restart(&tiny, &[5.0, 4.0]));

        // Stagnation: flat history longer than 10 * ceil(d / lambda).
        let window = 10 * 4usize.div_ceil(8);
        let flat = vec![2.0; window + 2];
        assert!(check_restart(&dist, &flat));
        let mut improving: Vec<f64> = (0..window + 2).map(|i| -(i as f64)).collect();
        assert!(!check_restart(&dist, &improving));
        improving.push(*improving.last().unwrap());
        assert!(!check_restart(&dist, &improving));
    }
}
