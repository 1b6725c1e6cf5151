use std::sync::Arc;

use memlab_core::{
    bayes_train_bounds, check_monotonicity, classify_regime, compute_info_params,
    compute_info_params_with, cost_lower_bound, default_noise_grid, make_design, noise_curve,
    noise_curve_with, train_error_exact, DesignMatrix, EntryLaw, InfoParams, McOptions,
    ModelInstance, PriorSpec, Provenance, Regime,
};
use nalgebra::{DMatrix, Matrix2, Vector2};
use proptest::prelude::*;

fn model(n: usize, spec: PriorSpec, sigma2: f64, seed: u64) -> ModelInstance<f64> {
    let design = Arc::new(make_design::<f64>(n, spec.dim(), EntryLaw::Gaussian, seed).unwrap());
    ModelInstance::new(design, spec, sigma2).unwrap()
}

/// `(1/n)∫‖∇p‖²/p` on a fine 2-D grid, with `p` the mixture of the component
/// covariances `X Ω_k Xᵀ` written out densely.
fn grid_fisher(x: &DMatrix<f64>, eta: f64) -> f64 {
    let d = x.ncols();
    let comps: Vec<(Matrix2<f64>, f64)> = (0..d)
        .map(|k| {
            let omega = DMatrix::from_fn(d, d, |i, j| {
                if i != j {
                    0.0
                } else if i == k {
                    eta / d as f64 + 1.0 - eta
                } else {
                    eta / d as f64
                }
            });
            let c = x * omega * x.transpose();
            let c = Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
            (c.try_inverse().unwrap(), c.determinant())
        })
        .collect();
    let half = 12.0
        * comps
            .iter()
            .map(|c| c.1.sqrt())
            .fold(0.0, f64::max)
            .sqrt()
            .max(1.0);
    let steps = 1200;
    let h = 2.0 * half / steps as f64;
    let mut total = 0.0;
    for a in 0..=steps {
        for b in 0..=steps {
            let y = Vector2::new(-half + a as f64 * h, -half + b as f64 * h);
            let mut p = 0.0;
            let mut grad = Vector2::zeros();
            for (inv, det) in &comps {
                let dens = (-0.5 * y.dot(&(inv * y))).exp()
                    / (2.0 * std::f64::consts::PI * det.sqrt())
                    / d as f64;
                p += dens;
                grad -= inv * y * dens;
            }
            if p > 0.0 {
                total += grad.norm_squared() / p;
            }
        }
    }
    total * h * h / 2.0
}

#[test]
fn sparse_fisher_mc_matches_grid_oracle() {
    let m = model(2, PriorSpec::sparse(4, 1, 0.5).unwrap(), 0.1, 3);
    let oracle = grid_fisher(m.x(), 0.5);
    let p = compute_info_params_with(
        &m,
        McOptions {
            reps: 100_000,
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(p.provenance, Provenance::MonteCarlo);
    assert!(
        (p.j_pi - oracle).abs() <= 4.0 * p.j_pi_stderr,
        "mc {} ± {} vs grid {oracle}",
        p.j_pi,
        p.j_pi_stderr
    );
}

#[test]
fn cramer_rao_holds_and_is_tight_for_scalar_gaussian() {
    for (spec, n) in [
        (PriorSpec::isotropic(30).unwrap(), 10),
        (PriorSpec::low_rank(30, 4, 0.2).unwrap(), 10),
        (PriorSpec::sparse(12, 1, 0.3).unwrap(), 4),
    ] {
        let p = compute_info_params(&model(n, spec, 0.1, 5)).unwrap();
        assert!(p.v_pi * p.j_pi >= 1.0 - 4.0 * p.j_pi_stderr * p.v_pi);
    }
    let unit = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.7)).unwrap());
    let m = ModelInstance::new(unit, PriorSpec::isotropic(1).unwrap(), 0.1).unwrap();
    let p = compute_info_params(&m).unwrap();
    assert!((p.v_pi * p.j_pi - 1.0f64).abs() <= 1e-12);
}

#[test]
fn noise_asymptotics_for_gaussian_priors() {
    for seed in 0..5 {
        let m = model(30, PriorSpec::low_rank(90, 10, 0.3).unwrap(), 1e-6, seed);
        let p = compute_info_params(&m).unwrap();
        let low = train_error_exact(&m).unwrap();
        assert!((low / (1e-12 * p.j_pi) - 1.0).abs() <= 1e-3);
        let high = train_error_exact(&m.with_sigma2(1e4).unwrap()).unwrap();
        assert!(((1e4 - high) - p.v_pi).abs() <= 1e-3 * p.v_pi);
    }
}

#[test]
fn gaussian_noise_curve_is_monotone_and_consistent() {
    let m = model(20, PriorSpec::low_rank(60, 5, 0.1).unwrap(), 0.1, 1);
    let grid = default_noise_grid::<f64>();
    let curve = noise_curve(&m, &grid, true).unwrap();
    assert!(check_monotonicity(&curve).is_clean());
    for (i, &t) in grid.iter().enumerate() {
        let direct = train_error_exact(&m.with_sigma2(t).unwrap()).unwrap();
        assert!((curve.train[i] - direct).abs() <= 1e-12 * direct);
        assert!((curve.train[i] - t * t * curve.j[i]).abs() <= 1e-12 * curve.train[i]);
    }
    let jp = curve.jprime.unwrap();
    assert!(jp.iter().all(|&v| v < 0.0));
}

#[test]
fn sparse_noise_curve_is_monotone_within_error() {
    let m = model(3, PriorSpec::sparse(6, 1, 0.2).unwrap(), 0.1, 2);
    let grid: Vec<f64> = vec![1e-3, 1e-2, 0.1, 1.0, 10.0];
    let curve = noise_curve_with(
        &m,
        &grid,
        true,
        McOptions {
            reps: 4000,
            seed: 7,
        },
    )
    .unwrap();
    assert!(check_monotonicity(&curve).is_clean());
    assert!(curve.jprime.unwrap().iter().all(|&v| v < 0.0));
}

#[test]
fn monotonicity_detector_fires() {
    let m = model(5, PriorSpec::isotropic(10).unwrap(), 0.1, 1);
    let mut curve = noise_curve(&m, &[0.1, 1.0, 10.0], false).unwrap();
    curve.train.swap(0, 2);
    let report = check_monotonicity(&curve);
    assert_eq!(report.train_violations, vec![0, 1]);
}

#[test]
fn regime_ties_and_labels() {
    let p = InfoParams::from_values(2.0f64, 0.5, 1.0);
    assert_eq!(classify_regime(&p, 0.5), Regime::MemorizationNecessary);
    assert_eq!(
        Regime::OverfittingHarmful.to_string(),
        "overfitting-harmful"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sandwich_holds_for_gaussian_priors(seed in 0u64..5000, n in 2usize..25, extra in 1usize..40, log_s in -6.0f64..4.0, eta in 0.05f64..1.0) {
        let d = n + extra;
        let r = 1 + (seed as usize) % d;
        let m = model(n, PriorSpec::low_rank(d, r, eta).unwrap(), 10f64.powf(log_s), seed);
        let p = compute_info_params(&m).unwrap();
        let (lo, hi) = bayes_train_bounds(&p, m.sigma2());
        let t = train_error_exact(&m).unwrap();
        prop_assert!(lo <= t * (1.0 + 1e-10));
        prop_assert!(t <= hi * (1.0 + 1e-10));
        prop_assert!(p.v_pi * p.j_pi >= 1.0 - 1e-10);
    }

    #[test]
    fn cost_bound_is_zero_inside_sandwich(j in 0.1f64..10.0, v in 0.1f64..10.0, s in 0.01f64..10.0, frac in 0.0f64..1.0) {
        let v = v.max(1.0 / j);
        let p = InfoParams::from_values(j, v, 2.0);
        let (lo, hi) = bayes_train_bounds(&p, s);
        prop_assert!(lo <= hi * (1.0 + 1e-12));
        prop_assert_eq!(cost_lower_bound(&p, s, lo + frac * (hi - lo)), 0.0);
        prop_assert!(cost_lower_bound(&p, s, 0.0) >= 0.0);
        prop_assert!(cost_lower_bound(&p, s, hi * 4.0) > 0.0);
    }
}
