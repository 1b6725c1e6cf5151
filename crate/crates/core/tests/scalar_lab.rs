use memlab_core::scalar_lab::{
    log_grid, mmse, scalar_fisher_derivative, scalar_fisher_mc, ScalarCurves,
};
use memlab_core::{
    figure2_curves, mmse_derivative_check, scalar_fisher, sigma6_expansion_check, ScalarMixture,
};
use proptest::prelude::*;

#[test]
fn noise_sweep_shape() {
    let mix = ScalarMixture::new(0.05).unwrap();
    let grid = log_grid(1e-3f64, 10.0, 200);
    let table = figure2_curves(&mix, &grid).unwrap();
    assert!(table.train.windows(2).all(|w| w[1] >= w[0]));
    assert!(table.train_over_t2.windows(2).all(|w| w[1] <= w[0]));
    let extrema = ScalarCurves::interior_extrema(&table.train_over_t, &table.t, 1e-3, 10.0);
    assert!(!extrema.is_empty());
    // Train/t rises from zero noise and returns to the prior variance slope
    assert!(table.train_over_t[0] < table.train_over_t[extrema[0]]);
}

#[test]
fn gaussian_limit_of_expansion_is_exact() {
    let check = sigma6_expansion_check::<f64>(&ScalarMixture::merged(0.05).unwrap()).unwrap();
    assert!((check.j0 - 20.0).abs() <= 1e-9 * 20.0);
    assert!((check.jprime0 + 400.0).abs() <= 1e-9 * 400.0);
}

#[test]
fn expansion_is_valid_near_zero() {
    for eta in [0.05, 1.0] {
        let check = sigma6_expansion_check::<f64>(&ScalarMixture::new(eta).unwrap()).unwrap();
        assert!(check.max_t_valid >= 1e-4, "η={eta}: {}", check.max_t_valid);
    }
}

#[test]
fn quadrature_agrees_with_monte_carlo() {
    let mix = ScalarMixture::new(0.3).unwrap();
    for t in [0.01f64, 0.5, 3.0] {
        let q = scalar_fisher(&mix, t).unwrap();
        let mc = scalar_fisher_mc(&mix, t, 200_000, 4).unwrap();
        assert!(
            mc.within(q, 4.0),
            "t={t}: {} ± {} vs {q}",
            mc.value,
            mc.stderr
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mmse_derivative_matches_difference(eta in 0.01f64..2.0, log_snr in -1.5f64..1.5) {
        let mix = ScalarMixture::new(eta).unwrap();
        let check = mmse_derivative_check(&mix, 10f64.powf(log_snr)).unwrap();
        prop_assert!(check.relative_gap() <= 1e-5, "gap {}", check.relative_gap());
    }

    #[test]
    fn fisher_is_decreasing_and_bounded(eta in 0.01f64..2.0, t in 1e-3f64..10.0) {
        let mix = ScalarMixture::new(eta).unwrap();
        let j = scalar_fisher(&mix, t).unwrap();
        prop_assert!(j > 0.0 && j <= 1.0 / (eta + t) * (1.0 + 1e-10));
        prop_assert!(j >= 1.0 / (mix.variance() + t) * (1.0 - 1e-10));
        prop_assert!(scalar_fisher_derivative(&mix, t).unwrap() < 0.0);
        let m = mmse(&mix, 1.0 / t).unwrap();
        prop_assert!(m >= 0.0 && m <= t.min(mix.variance()) * (1.0 + 1e-10));
    }
}
