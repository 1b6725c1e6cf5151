use std::sync::Arc;

use memlab_core::quadrature::GaussHermite;
use memlab_core::{
    draw_pair, evaluate_estimators, fitted_values_tweedie, make_design, posterior_mean,
    train_error_exact, train_error_mc, train_error_mc_with, BuiltinEstimator, DesignMatrix,
    EntryLaw, Estimator, FitRoute, ModelInstance, PriorSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn model(n: usize, spec: PriorSpec, sigma2: f64, seed: u64) -> ModelInstance<f64> {
    let design = Arc::new(make_design::<f64>(n, spec.dim(), EntryLaw::Gaussian, seed).unwrap());
    ModelInstance::new(design, spec, sigma2).unwrap()
}

#[test]
fn tweedie_identity_on_every_family() {
    let scalar = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.3)).unwrap());
    let models = vec![
        model(6, PriorSpec::isotropic(10).unwrap(), 0.3, 1),
        model(6, PriorSpec::low_rank(10, 3, 0.2).unwrap(), 0.05, 2),
        model(6, PriorSpec::sparse(10, 2, 0.1).unwrap(), 0.2, 3),
        ModelInstance::new(scalar, PriorSpec::two_point(0.05).unwrap(), 0.1).unwrap(),
    ];
    for m in &models {
        for i in 0..100 {
            let (_, y) = draw_pair(m, 17, i);
            let via_mean = m.x() * posterior_mean(m, &y).unwrap();
            let via_score = fitted_values_tweedie(m, &y).unwrap();
            let err = (&via_mean - &via_score).norm() / via_mean.norm().max(1e-12);
            assert!(err <= 1e-8, "{}: relative gap {err:e}", m.descriptor());
        }
    }
}

/// Posterior mean of a sparse prior by tensor Gauss–Hermite integration of
/// each component against the likelihood, without any low-rank algebra.
fn brute_force_posterior_mean(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    eta: f64,
) -> DVector<f64> {
    let d = x.ncols();
    let rule = GaussHermite::new(90);
    let mut num = DVector::zeros(d);
    let mut den = 0.0;
    for active in 0..d {
        let sd: Vec<f64> = (0..d)
            .map(|j| (eta / d as f64 + if j == active { 1.0 - eta } else { 0.0 }).sqrt())
            .collect();
        let m = rule.order();
        let mut idx = vec![0usize; d];
        loop {
            let theta = DVector::from_fn(d, |j, _| sd[j] * rule.nodes[idx[j]]);
            let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
            let r = y - x * &theta;
            let lik = (-0.5 * r.norm_squared() / sigma2).exp();
            num += &theta * (w * lik);
            den += w * lik;
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
    }
    num / den
}

#[test]
fn sparse_posterior_mean_matches_quadrature() {
    let eta = 0.2;
    let m = model(2, PriorSpec::sparse(3, 1, eta).unwrap(), 0.5, 9);
    for i in 0..5 {
        let (_, y) = draw_pair(&m, 3, i);
        let ours = posterior_mean(&m, &y).unwrap();
        let oracle = brute_force_posterior_mean(m.x(), &y, m.sigma2(), eta);
        let err = (&ours - &oracle).norm() / oracle.norm();
        assert!(err <= 1e-8, "relative gap {err:e}");
    }
}

#[test]
fn gaussian_posterior_mean_matches_dense_formula() {
    let m = model(5, PriorSpec::low_rank(8, 2, 0.3).unwrap(), 0.2, 4);
    let omega = DMatrix::from_diagonal(&m.prior().second_moment_diag::<f64>());
    let x = m.x();
    let cov = x * &omega * x.transpose() + DMatrix::identity(5, 5) * 0.2;
    let (_, y) = draw_pair(&m, 1, 0);
    let dense = &omega * x.transpose() * cov.lu().solve(&y).unwrap();
    let ours = posterior_mean(&m, &y).unwrap();
    assert!((ours - dense).norm() <= 1e-12 * (1.0 + y.norm()));
}

#[test]
fn mc_routes_agree_on_sparse_model() {
    let m = model(3, PriorSpec::sparse(4, 1, 0.3).unwrap(), 0.5, 5);
    let a = train_error_mc_with(&m, 20_000, 8, FitRoute::PosteriorMean).unwrap();
    let b = train_error_mc_with(&m, 20_000, 8, FitRoute::Tweedie).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 4.0 * se);
    assert!((a.value - b.value).abs() <= 1e-8 * a.value);
}

#[test]
fn gaussian_mc_covers_exact_value() {
    let m = model(4, PriorSpec::low_rank(8, 2, 0.5).unwrap(), 0.4, 6);
    let exact = train_error_exact(&m).unwrap();
    let covered = (0..100u64)
        .filter(|&s| {
            train_error_mc(&m, 200, 1000 + s)
                .unwrap()
                .within(exact, 4.0)
        })
        .count();
    assert!(
        covered >= 95,
        "only {covered} of 100 runs within four standard errors"
    );
}

#[test]
fn tiny_noise_train_is_tiny() {
    let m = model(20, PriorSpec::isotropic(60).unwrap(), 1e-8, 2);
    let t = train_error_exact(&m).unwrap();
    assert!((0.0..=2e-8).contains(&t));
}

#[test]
fn cross_term_vanishes_for_every_estimator() {
    let m = model(5, PriorSpec::sparse(10, 1, 0.2).unwrap(), 0.3, 12);
    let ests: Vec<BuiltinEstimator> = ["bayes", "ridge:0.05", "ridge:2", "minnorm"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let refs: Vec<&dyn Estimator<f64>> = ests.iter().map(|e| e as &dyn Estimator<f64>).collect();
    let reports = evaluate_estimators(&m, &refs, 4000, 3).unwrap();
    for r in &reports {
        assert!(
            r.cross.within(0.0, 4.0),
            "{}: cross {} ± {}",
            r.name,
            r.cross.value,
            r.cross.stderr
        );
        assert!(r.pred.value >= reports[0].pred.value - 4.0 * r.pred.stderr);
    }
    assert_eq!(reports[0].cost.value, 0.0);
}

#[test]
fn evaluation_is_deterministic() {
    let m = model(4, PriorSpec::sparse(8, 1, 0.4).unwrap(), 0.2, 1);
    let est = BuiltinEstimator::Ridge(0.1);
    let a = evaluate_estimators(&m, &[&est], 300, 5).unwrap();
    let b = evaluate_estimators(&m, &[&est], 300, 5).unwrap();
    assert_eq!(a[0].cost, b[0].cost);
    assert_eq!(a[0].train, b[0].train);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_train_lies_between_zero_and_noise(seed in 0u64..5000, n in 2usize..20, extra in 0usize..30, log_s in -8.0f64..4.0, eta in 0.01f64..1.0) {
        let d = n + extra;
        let r = 1 + (seed as usize) % d;
        let m = model(n, PriorSpec::low_rank(d, r, eta).unwrap(), 10f64.powf(log_s), seed);
        let t = train_error_exact(&m).unwrap();
        prop_assert!(t >= 0.0 && t <= m.sigma2() * (1.0 + 1e-12));
    }

    #[test]
    fn sparse_mc_train_is_below_noise(seed in 0u64..1000, log_s in -3.0f64..1.0) {
        let m = model(3, PriorSpec::sparse(6, 1, 0.2).unwrap(), 10f64.powf(log_s), seed);
        let est = train_error_mc(&m, 200, seed).unwrap();
        prop_assert!(est.value >= 0.0);
        prop_assert!(est.value <= m.sigma2() + 4.0 * est.stderr);
    }
}
