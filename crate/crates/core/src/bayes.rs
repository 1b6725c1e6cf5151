//! Bayes estimator, fitted values and the training, prediction and excess
//! prediction errors of arbitrary estimators.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{ensure, MemlabError, Result};
use crate::model::ModelInstance;
use crate::rng::{replicate_stream, standard_normal};
use crate::scalar::Scalar;

/// A Monte Carlo average with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate<T> {
    pub value: T,
    pub stderr: T,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> MonteCarloEstimate<T> {
    /// Mean and `sd/√reps` of the samples, summed in index order.
    pub fn from_samples(samples: &[T], seed: u64) -> Self {
        let reps = samples.len();
        assert!(reps >= 2, "need at least two samples");
        let count = T::of_usize(reps);
        let mean = samples.iter().fold(T::zero(), |a, &b| a + b) / count;
        let ss = samples
            .iter()
            .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
        let sd = (ss / T::of_usize(reps - 1)).sqrt();
        Self {
            value: mean,
            stderr: sd / count.sqrt(),
            replicates: reps,
            seed,
        }
    }

    /// True when `|value − target| ≤ k·stderr`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// `E[θ | X, y]`.
///
/// Gaussian priors use `ΩXᵀ(XΩXᵀ + σ²I)⁻¹y` on the cached pushforward
/// spectrum; mixtures combine the per-component posterior means.
pub fn posterior_mean<T: Scalar>(model: &ModelInstance<T>, y: &DVector<T>) -> Result<DVector<T>> {
    ensure!(
        y.len() == model.n(),
        "response has length {}, expected {}",
        y.len(),
        model.n()
    );
    if model.prior().is_gaussian() {
        Ok(generalized_ridge(model, y, model.sigma2()))
    } else {
        Ok(model.noisy_density()?.posterior_mean(y))
    }
}

/// `Ω̄Xᵀ(XΩ̄Xᵀ + λI)⁻¹y` with `Ω̄` the prior second moment.
pub fn generalized_ridge<T: Scalar>(
    model: &ModelInstance<T>,
    y: &DVector<T>,
    lambda: T,
) -> DVector<T> {
    let eig = model.pushforward_eigen();
    let solved = eig.apply_fn(y, |l| (l + lambda).recip());
    let omega = model.prior().second_moment_diag::<T>();
    model.x().tr_mul(&solved).component_mul(&omega)
}

/// `y + σ²∇log p_{σ²}(y)`.
pub fn fitted_values_tweedie<T: Scalar>(
    model: &ModelInstance<T>,
    y: &DVector<T>,
) -> Result<DVector<T>> {
    ensure!(
        y.len() == model.n(),
        "response has length {}, expected {}",
        y.len(),
        model.n()
    );
    let score = model.noisy_density()?.score(y);
    Ok(y + score * model.sigma2())
}

/// `σ⁴·(1/n)Σ 1/(λᵢ + σ²)` over a pushforward spectrum.
pub fn gaussian_train_error<T: Scalar>(eigenvalues: &[T], sigma2: T) -> T {
    let n = T::of_usize(eigenvalues.len());
    let sum = eigenvalues
        .iter()
        .fold(T::zero(), |a, &l| a + (l + sigma2).recip());
    sigma2 * sigma2 * sum / n
}

/// Exact Bayes training error for Gaussian priors.
pub fn train_error_exact<T: Scalar>(model: &ModelInstance<T>) -> Result<T> {
    if !model.prior().is_gaussian() {
        return Err(MemlabError::UnsupportedPrior(model.prior().to_string()));
    }
    Ok(gaussian_train_error(
        model.pushforward_eigen().values.as_slice(),
        model.sigma2(),
    ))
}

/// How fitted values are produced in [`train_error_mc_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitRoute {
    /// `X·E[θ|y]`.
    PosteriorMean,
    /// `y + σ²∇log p_{σ²}(y)`.
    Tweedie,
}

/// Draws `(θ, y)` for replicate `index` of the stream `seed`.
pub fn draw_pair<T: Scalar>(
    model: &ModelInstance<T>,
    seed: u64,
    index: u64,
) -> (DVector<T>, DVector<T>) {
    let mut rng = replicate_stream(seed, index);
    let theta: DVector<T> = model.prior().sample_with(&mut rng);
    let sigma = model.sigma2().sqrt();
    let noise = DVector::from_fn(model.n(), |_, _| standard_normal::<T, _>(&mut rng));
    let y = model.x() * &theta + noise * sigma;
    (theta, y)
}

/// Monte Carlo Bayes training error through the posterior mean.
pub fn train_error_mc<T: Scalar>(
    model: &ModelInstance<T>,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloEstimate<T>> {
    train_error_mc_with(model, reps, seed, FitRoute::PosteriorMean)
}

pub fn train_error_mc_with<T: Scalar>(
    model: &ModelInstance<T>,
    reps: usize,
    seed: u64,
    route: FitRoute,
) -> Result<MonteCarloEstimate<T>> {
    ensure!(
        reps >= 100,
        "Monte Carlo needs at least 100 replicates (got {reps})"
    );
    if !model.prior().is_gaussian() || route == FitRoute::Tweedie {
        model.noisy_density()?;
    }
    let n = T::of_usize(model.n());
    let samples: Vec<T> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let (_, y) = draw_pair(model, seed, i);
            let fitted = match route {
                FitRoute::PosteriorMean => model.x() * posterior_mean(model, &y)?,
                FitRoute::Tweedie => fitted_values_tweedie(model, &y)?,
            };
            Ok((fitted - &y).norm_squared() / n)
        })
        .collect::<Result<_>>()?;
    Ok(MonteCarloEstimate::from_samples(&samples, seed))
}

/// A map from responses to coefficient estimates.
pub trait Estimator<T: Scalar>: Send + Sync {
    fn name(&self) -> String;
    fn estimate(&self, model: &ModelInstance<T>, y: &DVector<T>) -> Result<DVector<T>>;
}

/// Estimators selectable by name: `bayes`, `ridge:<lambda>`, `minnorm`.
///
/// `ridge:<lambda>` is the generalized ridge `Ω̄Xᵀ(XΩ̄Xᵀ + λI)⁻¹y`, which equals
/// the Bayes estimator at `λ = σ²` for Gaussian priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinEstimator {
    Bayes,
    Ridge(f64),
    MinNorm,
}

impl fmt::Display for BuiltinEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinEstimator::Bayes => f.write_str("bayes"),
            BuiltinEstimator::Ridge(l) => write!(f, "ridge:{l}"),
            BuiltinEstimator::MinNorm => f.write_str("minnorm"),
        }
    }
}

impl FromStr for BuiltinEstimator {
    type Err = MemlabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "bayes" => Ok(BuiltinEstimator::Bayes),
            "minnorm" => Ok(BuiltinEstimator::MinNorm),
            _ => {
                let lambda = s
                    .strip_prefix("ridge:")
                    .and_then(|l| l.trim().parse::<f64>().ok())
                    .ok_or_else(|| MemlabError::Precondition(format!("unknown estimator `{s}`")))?;
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(MemlabError::Precondition(format!(
                        "ridge level must be positive (got {lambda})"
                    )));
                }
                Ok(BuiltinEstimator::Ridge(lambda))
            }
        }
    }
}

impl<T: Scalar> Estimator<T> for BuiltinEstimator {
    fn name(&self) -> String {
        self.to_string()
    }

    fn estimate(&self, model: &ModelInstance<T>, y: &DVector<T>) -> Result<DVector<T>> {
        match *self {
            BuiltinEstimator::Bayes => posterior_mean(model, y),
            BuiltinEstimator::Ridge(lambda) => Ok(generalized_ridge(model, y, T::lit(lambda))),
            BuiltinEstimator::MinNorm => {
                let design = model.design();
                let solved = design.gram_eigen().apply_fn(y, |l| l.recip());
                Ok(model.x().tr_mul(&solved) / T::of_usize(design.d()))
            }
        }
    }
}

/// Paired Monte Carlo errors of one estimator.
#[derive(Debug, Clone)]
pub struct EstimatorReport<T> {
    pub name: String,
    pub train: MonteCarloEstimate<T>,
    pub pred: MonteCarloEstimate<T>,
    pub cost: MonteCarloEstimate<T>,
    /// `E[(θ̂ − θ̂_B)ᵀΣ(θ̂_B − θ)]`, zero for every estimator.
    pub cross: MonteCarloEstimate<T>,
}

/// Evaluates every estimator on the same replicate stream. Cost is measured as
/// `E‖θ̂ − θ̂_B‖²_Σ`.
pub fn evaluate_estimators<T: Scalar>(
    model: &ModelInstance<T>,
    estimators: &[&dyn Estimator<T>],
    reps: usize,
    seed: u64,
) -> Result<Vec<EstimatorReport<T>>> {
    ensure!(
        reps >= 100,
        "Monte Carlo needs at least 100 replicates (got {reps})"
    );
    if !model.prior().is_gaussian() {
        model.noisy_density()?;
    }
    let n = T::of_usize(model.n());
    let cov = model.test_covariance();
    let per_rep: Vec<Vec<[T; 4]>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let (theta, y) = draw_pair(model, seed, i);
            let bayes = posterior_mean(model, &y)?;
            let bayes_err = &bayes - &theta;
            estimators
                .iter()
                .map(|est| {
                    let hat = est.estimate(model, &y)?;
                    let train = (model.x() * &hat - &y).norm_squared() / n;
                    let diff = &hat - &bayes;
                    let pred = cov.norm_sq(&(&hat - &theta));
                    let cost = cov.norm_sq(&diff);
                    let cross = cov.inner(&diff, &bayes_err);
                    Ok([train, pred, cost, cross])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let column = |c: usize| -> MonteCarloEstimate<T> {
                let samples: Vec<T> = per_rep.iter().map(|row| row[e][c]).collect();
                MonteCarloEstimate::from_samples(&samples, seed)
            };
            EstimatorReport {
                name: est.name(),
                train: column(0),
                pred: column(1),
                cost: column(2),
                cross: column(3),
            }
        })
        .collect())
}

/// Prediction error and excess prediction error of a single estimator.
pub fn pred_and_cost<T: Scalar>(
    model: &ModelInstance<T>,
    estimator: &dyn Estimator<T>,
    reps: usize,
    seed: u64,
) -> Result<(MonteCarloEstimate<T>, MonteCarloEstimate<T>)> {
    let report = evaluate_estimators(model, &[estimator], reps, seed)?.remove(0);
    Ok((report.pred, report.cost))
}
