//! Cross-check of the search-distribution update against a straight-line
//! textbook CMA-ES reference written independently of the library code.
//! Both sides receive identical ranked batches; mean and step-size must
//! agree to 1e-10 for five generations on the sphere function.

mod common;

use common::ReferenceCma;
use hesp_core::hesp::SearchDistribution;
use hesp_core::rng::RunRng;
use nalgebra::DVector;

fn sphere(x: &DVector<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[test]
fn matches_textbook_reference_for_five_generations() {
    let dim = 10;
    let lambda = 10;
    let mean0 = DVector::from_element(dim, 0.5);
    let mut reference = ReferenceCma::new(dim, mean0.clone(), 0.3);
    let mut ours = SearchDistribution::init(mean0, 0.3, lambda, &[], 0.0).unwrap();

    let mut rng = RunRng::seed_from_u64(42);
    for generation in 0..5 {
        // Identical batches for both sides, sampled from the reference state.
        let chol = nalgebra::Cholesky::new(reference.cov.clone()).unwrap();
        let batch: Vec<(DVector<f64>, f64)> = (0..lambda)
            .map(|_| {
                let u = DVector::from_fn(dim, |_, _| rng.gauss());
                let x = &reference.mean + chol.l() * u * reference.sigma;
                let f = sphere(&x);
                (x, f)
            })
            .collect();

        reference.update(&batch);
        ours.cma_update(&batch).unwrap();

        let mean_err = (ours.mean() - &reference.mean).norm();
        let sigma_err = (ours.sigma() - reference.sigma).abs();
        assert!(
            mean_err < 1e-10,
            "generation {generation}: mean differs by {mean_err}"
        );
        assert!(
            sigma_err < 1e-10,
            "generation {generation}: sigma differs by {sigma_err}"
        );
        let cov_err = (ours.covariance() - &reference.cov).norm();
        assert!(
            cov_err < 1e-10,
            "generation {generation}: covariance differs by {cov_err}"
        );
    }
}

#[test]
fn sphere_converges_over_thirty_generations() {
    // Median over 20 seeds of f(mean) after 30 generations on the 10D sphere
    // must drop below 1e-3 of the initial value.
    let dim = 10;
    let lambda = 20;
    let mut finals = Vec::new();
    for seed in 0..20u64 {
        let mut rng = RunRng::seed_from_u64(seed);
        let mean0 = DVector::from_element(dim, 0.5);
        let initial = sphere(&mean0);
        let mut dist = SearchDistribution::init(mean0, 0.3, lambda, &[], 0.0).unwrap();
        for _ in 0..30 {
            let batch: Vec<(DVector<f64>, f64)> = (0..lambda)
                .map(|_| {
                    let x = dist.sample_raw(&mut rng);
                    let f = sphere(&x);
                    (x, f)
                })
                .collect();
            dist.cma_update(&batch).unwrap();
        }
        finals.push(sphere(dist.mean()) / initial);
    }
    finals.sort_by(f64::total_cmp);
    let median = finals[finals.len() / 2];
    assert!(median < 1e-3, "median relative sphere value {median}");
}
