//! Shared test oracles: a straight-line textbook CMA-ES reference used to
//! cross-check the library's search-distribution update. Written
//! independently of the library implementation.

use nalgebra::{DMatrix, DVector};

pub struct ReferenceCma {
    pub dim: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sigma: f64,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
}

impl ReferenceCma {
    pub fn new(dim: usize, mean: DVector<f64>, sigma: f64) -> Self {
        ReferenceCma {
            dim,
            mean,
            cov: DMatrix::identity(dim, dim),
            sigma,
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
        }
    }

    pub fn update(&mut self, batch: &[(DVector<f64>, f64)]) {
        let n = self.dim as f64;
        let lambda = batch.len();
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

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| batch[a].1.total_cmp(&batch[b].1));

        let old_mean = self.mean.clone();
        let old_sigma = self.sigma;
        let ys: Vec<DVector<f64>> = order
            .iter()
            .take(mu)
            .map(|&i| (&batch[i].0 - &old_mean) / old_sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in weights.iter().zip(&ys) {
            y_w += y * *w;
        }
        self.mean = &old_mean + y_w.clone() * old_sigma;

        let eig = nalgebra::SymmetricEigen::new(self.cov.clone());
        let mut inv_sqrt = DMatrix::zeros(self.dim, self.dim);
        for k in 0..self.dim {
            let col = eig.eigenvectors.column(k);
            inv_sqrt += col * col.transpose() / eig.eigenvalues[k].sqrt();
        }

        self.p_sigma = &self.p_sigma * (1.0 - c_sigma)
            + &inv_sqrt * &y_w * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();

        self.generation += 1;
        let expected = (1.0 - (1.0 - c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if self.p_sigma.norm() / expected < (1.4 + 2.0 / (n + 1.0)) * chi_n {
            1.0
        } else {
            0.0
        };

        self.p_c =
            &self.p_c * (1.0 - c_c) + &y_w * h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt();

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, y) in weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        self.cov = &self.cov * (1.0 - c_1 - c_mu)
            + (&self.p_c * self.p_c.transpose()
                + &self.cov * ((1.0 - h_sigma) * c_c * (2.0 - c_c)))
                * c_1
            + rank_mu * c_mu;

        self.sigma =
            old_sigma * ((c_sigma / d_sigma) * (self.p_sigma.norm() / chi_n - 1.0)).exp();
    }
}
