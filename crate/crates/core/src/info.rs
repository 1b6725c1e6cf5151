//! Fisher and variance parameters, the noise-indexed curves `Train(t)` and
//! `J(t)`, and the training-error and excess-risk bounds built from them.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bayes::{gaussian_train_error, MonteCarloEstimate};
use crate::error::{ensure, MemlabError, Result};
use crate::linalg::frobenius_sq;
use crate::model::ModelInstance;
use crate::prior::PriorSpec;
use crate::rng::{replicate_stream, standard_normal};
use crate::scalar::Scalar;
use crate::scalar_lab::{log_grid, two_point_fisher, two_point_fisher_derivative};

/// Smallest admissible ratio of extreme pushforward eigenvalues.
pub const PUSHFORWARD_FLOOR: f64 = 1e-14;

/// How a number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    MonteCarlo,
    Quadrature,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Exact => "exact",
            Provenance::MonteCarlo => "monte-carlo",
            Provenance::Quadrature => "quadrature",
        })
    }
}

/// `J_π = (1/n)E‖∇log p(Xθ)‖²`, `V_π = (1/n)E‖Xθ‖²` and `λ_Σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoParams<T> {
    pub j_pi: T,
    /// Standard error of `j_pi`; zero unless estimated by Monte Carlo.
    pub j_pi_stderr: T,
    pub v_pi: T,
    pub lambda_sigma: T,
    pub provenance: Provenance,
}

impl<T: Scalar> InfoParams<T> {
    /// Parameters given directly, e.g. from an asymptotic formula.
    pub fn from_values(j_pi: T, v_pi: T, lambda_sigma: T) -> Self {
        Self {
            j_pi,
            j_pi_stderr: T::zero(),
            v_pi,
            lambda_sigma,
            provenance: Provenance::Exact,
        }
    }
}

/// Monte Carlo budget for families without a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            reps: 10_000,
            seed: 0,
        }
    }
}

pub fn compute_info_params<T: Scalar>(model: &ModelInstance<T>) -> Result<InfoParams<T>> {
    compute_info_params_with(model, McOptions::default())
}

pub fn compute_info_params_with<T: Scalar>(
    model: &ModelInstance<T>,
    mc: McOptions,
) -> Result<InfoParams<T>> {
    let eig = model.pushforward_eigen();
    let n = T::of_usize(model.n());
    let (largest, smallest) = (eig.largest(), eig.smallest());
    let ratio = if largest > T::zero() {
        smallest / largest
    } else {
        T::zero()
    };
    if !(ratio >= T::lit(PUSHFORWARD_FLOOR)) {
        return Err(MemlabError::SingularPushforward {
            ratio: ratio.as_f64(),
        });
    }
    let v_pi = eig.values.sum() / n;
    let lambda_sigma = model.lambda_sigma();
    match *model.prior() {
        PriorSpec::IsotropicGaussian { .. } | PriorSpec::LowRankGaussian { .. } => {
            let j_pi = eig.values.iter().fold(T::zero(), |a, &l| a + l.recip()) / n;
            Ok(InfoParams {
                j_pi,
                j_pi_stderr: T::zero(),
                v_pi,
                lambda_sigma,
                provenance: Provenance::Exact,
            })
        }
        PriorSpec::ScalarTwoPointMixture { eta } => {
            let (a, s) = two_point_scale(model, T::lit(eta), T::zero());
            Ok(InfoParams {
                j_pi: two_point_fisher(a, s).value,
                j_pi_stderr: T::zero(),
                v_pi,
                lambda_sigma,
                provenance: Provenance::Quadrature,
            })
        }
        PriorSpec::SparseMixture { .. } => {
            let est = fisher_mc(model, T::zero(), mc)?;
            Ok(InfoParams {
                j_pi: est.value,
                j_pi_stderr: est.stderr,
                v_pi,
                lambda_sigma,
                provenance: Provenance::MonteCarlo,
            })
        }
    }
}

/// Separation and variance of the scalar pushforward `x·θ + √t·τ`.
fn two_point_scale<T: Scalar>(model: &ModelInstance<T>, eta: T, t: T) -> (T, T) {
    let x = model.x()[(0, 0)];
    (x.abs(), x * x * eta + t)
}

/// `(1/n)E‖∇log p_t(Xθ + √t·τ)‖²` by Monte Carlo.
pub fn fisher_mc<T: Scalar>(
    model: &ModelInstance<T>,
    t: T,
    mc: McOptions,
) -> Result<MonteCarloEstimate<T>> {
    Ok(fisher_and_derivative_mc(model, t, mc, false)?.0)
}

/// Monte Carlo `J(t)` and, optionally, `J′(t) = −(1/n)E‖∇²log p_t‖²_F`.
pub fn fisher_and_derivative_mc<T: Scalar>(
    model: &ModelInstance<T>,
    t: T,
    mc: McOptions,
    with_derivative: bool,
) -> Result<(MonteCarloEstimate<T>, Option<MonteCarloEstimate<T>>)> {
    ensure!(
        mc.reps >= 100,
        "Monte Carlo needs at least 100 replicates (got {})",
        mc.reps
    );
    let density = model.density_at_noise(t)?;
    let n = T::of_usize(model.n());
    let root = t.sqrt();
    let pairs: Vec<(T, T)> = (0..mc.reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_stream(mc.seed, i);
            let theta: DVector<T> = model.prior().sample_with(&mut rng);
            let mut y = model.x() * theta;
            if t > T::zero() {
                for v in y.iter_mut() {
                    *v += root * standard_normal::<T, _>(&mut rng);
                }
            }
            let eval = density.evaluate(&y);
            let j = eval.score.norm_squared() / n;
            let jp = if with_derivative {
                -frobenius_sq(&density.hessian_from(&eval)) / n
            } else {
                T::zero()
            };
            (j, jp)
        })
        .collect();
    let js: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let j = MonteCarloEstimate::from_samples(&js, mc.seed);
    let jp = with_derivative.then(|| {
        let v: Vec<T> = pairs.iter().map(|p| p.1).collect();
        MonteCarloEstimate::from_samples(&v, mc.seed)
    });
    Ok((j, jp))
}

/// `(σ⁴/(V_π + σ²), σ⁴/(J_π⁻¹ + σ²))`.
pub fn bayes_train_bounds<T: Scalar>(params: &InfoParams<T>, sigma2: T) -> (T, T) {
    let s4 = sigma2 * sigma2;
    (
        s4 / (params.v_pi + sigma2),
        s4 / (params.j_pi.recip() + sigma2),
    )
}

/// Lower bound on the excess prediction error of any estimator whose training
/// error equals `train_value`.
pub fn cost_lower_bound<T: Scalar>(params: &InfoParams<T>, sigma2: T, train_value: T) -> T {
    let (lower, upper) = bayes_train_bounds(params, sigma2);
    let inv = params.lambda_sigma.recip();
    let gap = if train_value >= upper {
        train_value.sqrt() - upper.sqrt()
    } else if train_value <= lower {
        lower.sqrt() - train_value.sqrt()
    } else {
        return T::zero();
    };
    inv * gap * gap
}

/// Which corollary's noise condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    MemorizationNecessary,
    OverfittingHarmful,
    Neither,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::MemorizationNecessary => "memorization-necessary",
            Regime::OverfittingHarmful => "overfitting-harmful",
            Regime::Neither => "neither",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `σ² ≤ J_π⁻¹` gives memorization-necessary, `σ² ≥ V_π` overfitting-harmful.
/// Both can hold only when `V_π = J_π⁻¹ = σ²`; the first label wins.
pub fn classify_regime<T: Scalar>(params: &InfoParams<T>, sigma2: T) -> Regime {
    if sigma2 <= params.j_pi.recip() {
        Regime::MemorizationNecessary
    } else if sigma2 >= params.v_pi {
        Regime::OverfittingHarmful
    } else {
        Regime::Neither
    }
}

pub fn regime_report<T: Scalar>(model: &ModelInstance<T>) -> Result<Regime> {
    let params = compute_info_params(model)?;
    Ok(classify_regime(&params, model.sigma2()))
}

/// `Train(σ²)`, `J(σ²)` and optionally `J′(σ²)` along a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCurve<T> {
    pub grid: Vec<T>,
    pub train: Vec<T>,
    pub train_se: Vec<T>,
    pub j: Vec<T>,
    pub jprime: Option<Vec<T>>,
    pub jprime_se: Option<Vec<T>>,
    pub provenance: Provenance,
}

/// 25 log-spaced points on `[1e-6, 1e4]`.
pub fn default_noise_grid<T: Scalar>() -> Vec<T> {
    log_grid(T::lit(1e-6), T::lit(1e4), 25)
}

/// `−(1/n)Σ 1/(λᵢ + t)²`.
pub fn gaussian_fisher_derivative<T: Scalar>(eigenvalues: &[T], t: T) -> T {
    let n = T::of_usize(eigenvalues.len());
    -eigenvalues
        .iter()
        .fold(T::zero(), |a, &l| a + (l + t).powi(-2))
        / n
}

pub fn noise_curve<T: Scalar>(
    model: &ModelInstance<T>,
    grid: &[T],
    with_jprime: bool,
) -> Result<NoiseCurve<T>> {
    noise_curve_with(model, grid, with_jprime, McOptions::default())
}

pub fn noise_curve_with<T: Scalar>(
    model: &ModelInstance<T>,
    grid: &[T],
    with_jprime: bool,
    mc: McOptions,
) -> Result<NoiseCurve<T>> {
    ensure!(!grid.is_empty(), "grid must be nonempty");
    ensure!(
        grid.iter().all(|&t| t > T::zero()),
        "grid values must be positive"
    );
    ensure!(
        grid.windows(2).all(|w| w[0] < w[1]),
        "grid must be strictly ascending"
    );
    let zeros = vec![T::zero(); grid.len()];
    match *model.prior() {
        PriorSpec::IsotropicGaussian { .. } | PriorSpec::LowRankGaussian { .. } => {
            let values = model.pushforward_eigen().values.as_slice();
            let train: Vec<T> = grid
                .iter()
                .map(|&t| gaussian_train_error(values, t))
                .collect();
            let j = grid
                .iter()
                .zip(&train)
                .map(|(&t, &tr)| tr / (t * t))
                .collect();
            let jprime = with_jprime.then(|| {
                grid.iter()
                    .map(|&t| gaussian_fisher_derivative(values, t))
                    .collect()
            });
            Ok(NoiseCurve {
                grid: grid.to_vec(),
                train,
                train_se: zeros.clone(),
                j,
                jprime_se: with_jprime.then(|| zeros.clone()),
                jprime,
                provenance: Provenance::Exact,
            })
        }
        PriorSpec::ScalarTwoPointMixture { eta } => {
            let eta = T::lit(eta);
            let mut train = Vec::with_capacity(grid.len());
            let mut j = Vec::with_capacity(grid.len());
            for &t in grid {
                let (a, s) = two_point_scale(model, eta, t);
                let jt = two_point_fisher(a, s).value;
                j.push(jt);
                train.push(t * t * jt);
            }
            let jprime = with_jprime.then(|| {
                grid.iter()
                    .map(|&t| {
                        let (a, s) = two_point_scale(model, eta, t);
                        two_point_fisher_derivative(a, s)
                    })
                    .collect()
            });
            Ok(NoiseCurve {
                grid: grid.to_vec(),
                train,
                train_se: zeros.clone(),
                j,
                jprime_se: with_jprime.then(|| zeros.clone()),
                jprime,
                provenance: Provenance::Quadrature,
            })
        }
        PriorSpec::SparseMixture { .. } => {
            let mut curve = NoiseCurve {
                grid: grid.to_vec(),
                train: Vec::new(),
                train_se: Vec::new(),
                j: Vec::new(),
                jprime: with_jprime.then(Vec::new),
                jprime_se: with_jprime.then(Vec::new),
                provenance: Provenance::MonteCarlo,
            };
            for (i, &t) in grid.iter().enumerate() {
                // Each grid point reads its own family of streams.
                let point = McOptions {
                    reps: mc.reps,
                    seed: mc.seed.wrapping_add(i as u64),
                };
                let (j, jp) = fisher_and_derivative_mc(model, t, point, with_jprime)?;
                curve.train.push(t * t * j.value);
                curve.train_se.push(t * t * j.stderr);
                curve.j.push(j.value);
                if let (Some(v), Some(se), Some(jp)) =
                    (curve.jprime.as_mut(), curve.jprime_se.as_mut(), jp)
                {
                    v.push(jp.value);
                    se.push(jp.stderr);
                }
            }
            Ok(curve)
        }
    }
}

/// Violations of `Train` non-decreasing and `J` non-increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonotonicityReport {
    pub train_violations: Vec<usize>,
    pub j_violations: Vec<usize>,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.train_violations.is_empty() && self.j_violations.is_empty()
    }
}

/// Checks consecutive grid points. Exact and quadrature curves allow relative
/// slack `1e-12`; Monte Carlo curves allow four combined standard errors.
pub fn check_monotonicity<T: Scalar>(curve: &NoiseCurve<T>) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    let n = curve.grid.len();
    for i in 0..n.saturating_sub(1) {
        let slack = |a: T, b: T, se_a: T, se_b: T| match curve.provenance {
            Provenance::MonteCarlo => T::lit(4.0) * (se_a * se_a + se_b * se_b).sqrt(),
            _ => T::lit(1e-12) * a.abs().max(b.abs()),
        };
        let (t0, t1) = (curve.train[i], curve.train[i + 1]);
        if t1 < t0 - slack(t0, t1, curve.train_se[i], curve.train_se[i + 1]) {
            report.train_violations.push(i);
        }
        let (g0, g1) = (curve.grid[i], curve.grid[i + 1]);
        let (j0, j1) = (curve.j[i], curve.j[i + 1]);
        let (js0, js1) = (
            curve.train_se[i] / (g0 * g0),
            curve.train_se[i + 1] / (g1 * g1),
        );
        if j1 > j0 + slack(j0, j1, js0, js1) {
            report.j_violations.push(i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_design, DesignMatrix, EntryLaw};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn standard_normal_parameters() {
        let design = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap());
        let m = ModelInstance::new(design, PriorSpec::isotropic(1).unwrap(), 1.0).unwrap();
        let p = compute_info_params(&m).unwrap();
        assert_eq!((p.j_pi, p.v_pi, p.lambda_sigma), (1.0, 1.0, 1.0));
        let (lo, hi) = bayes_train_bounds(&p, 1.0);
        assert_eq!((lo, hi), (0.5, 0.5));
        assert_eq!(cost_lower_bound(&p, 1.0, 0.5), 0.0);
    }

    #[test]
    fn high_noise_lower_bound() {
        let p = InfoParams::from_values(1.0f64, 1.0, 1.0);
        let (lo, _) = bayes_train_bounds(&p, 100.0);
        assert_relative_eq!(lo, 1e4 / 101.0, epsilon = 1e-12);
    }

    #[test]
    fn regimes() {
        let p = InfoParams::from_values(4.0 / 3.0, 1.0f64, 9.0);
        assert_eq!(classify_regime(&p, 0.1), Regime::MemorizationNecessary);
        assert_eq!(classify_regime(&p, 10.0), Regime::OverfittingHarmful);
        assert_eq!(classify_regime(&p, 0.9), Regime::Neither);
        assert_eq!(classify_regime(&p, 0.75), Regime::MemorizationNecessary);
        assert_eq!(classify_regime(&p, 1.0), Regime::OverfittingHarmful);
    }

    #[test]
    fn singular_pushforward_rejected() {
        let design = Arc::new(make_design::<f64>(6, 10, EntryLaw::Gaussian, 3).unwrap());
        let m = ModelInstance::new(design, PriorSpec::low_rank(10, 2, 0.0).unwrap(), 0.1).unwrap();
        assert!(matches!(
            compute_info_params(&m),
            Err(MemlabError::SingularPushforward { .. })
        ));
        // the training error is still available
        assert!(crate::bayes::train_error_exact(&m).is_ok());
    }

    #[test]
    fn scalar_gaussian_curve() {
        let design = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap());
        let m = ModelInstance::new(design, PriorSpec::isotropic(1).unwrap(), 1.0).unwrap();
        let grid = [0.1, 1.0, 5.0];
        let c = noise_curve(&m, &grid, true).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert_relative_eq!(c.j[i], 1.0 / (1.0 + t), epsilon = 1e-14);
            assert_relative_eq!(
                c.jprime.as_ref().unwrap()[i],
                -1.0 / ((1.0 + t) * (1.0 + t)),
                epsilon = 1e-14
            );
        }
        assert!(check_monotonicity(&c).is_clean());
    }

    #[test]
    fn two_point_model_uses_design_scale() {
        let design = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 2.0)).unwrap());
        let m = ModelInstance::new(design, PriorSpec::two_point(0.5).unwrap(), 1.0).unwrap();
        let p = compute_info_params(&m).unwrap();
        assert_relative_eq!(p.v_pi, 4.0 * 1.5, epsilon = 1e-14);
        // J scales as 1/x² under y = xθ
        let unit = crate::scalar_lab::scalar_fisher(
            &crate::scalar_lab::ScalarMixture::new(0.5).unwrap(),
            0.0,
        )
        .unwrap();
        assert_relative_eq!(p.j_pi, unit / 4.0, max_relative = 1e-12);
        assert!(p.v_pi * p.j_pi >= 1.0);
    }
}
