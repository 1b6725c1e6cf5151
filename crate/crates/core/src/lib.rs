//! Bayes-optimal training error in overparameterized linear regression.
//!
//! The model is `y = Xθ + στ` with a fixed `n×d` design (`d ≥ n`), a prior on
//! θ and Gaussian noise. The crate computes the Bayes estimator and its
//! training error, the Fisher parameter `J_π` and variance parameter `V_π` of
//! the pushforward `Xθ`, the bounds they imply on training and excess
//! prediction error, and the proportional-asymptotic limits of these
//! quantities for isotropic, low-rank and sparse priors.
//!
//! Every routine is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common case.

// `!(x > 0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod density;
pub mod design;
pub mod error;
pub mod info;
pub mod linalg;
pub mod model;
pub mod prior;
pub mod quadrature;
pub mod rmt;
pub mod rng;
pub mod scalar;
pub mod scalar_lab;
pub mod spectral;

pub use bayes::{
    draw_pair, evaluate_estimators, fitted_values_tweedie, generalized_ridge, posterior_mean,
    pred_and_cost, train_error_exact, train_error_mc, train_error_mc_with, BuiltinEstimator,
    Estimator, EstimatorReport, FitRoute, MonteCarloEstimate,
};
pub use density::{DensityEval, MixtureDensity};
pub use design::{make_design, DesignMatrix, EntryLaw};
pub use error::{MemlabError, Result};
pub use info::{
    bayes_train_bounds, check_monotonicity, classify_regime, compute_info_params,
    compute_info_params_with, cost_lower_bound, default_noise_grid, noise_curve, noise_curve_with,
    regime_report, InfoParams, McOptions, NoiseCurve, Provenance, Regime,
};
pub use model::{ModelInstance, TestCovariance};
pub use prior::PriorSpec;
pub use rmt::{
    exact_lowrank_train_limit, lowrank_limit_params, mp_functionals, solve_stieltjes,
    sparse_fisher_bounds, spectral_edges, PopulationSpectrum, StieltjesSolution,
};
pub use scalar::Scalar;
pub use scalar_lab::{
    figure2_curves, mmse_derivative_check, scalar_fisher, sigma6_expansion_check, ScalarMixture,
};
pub use spectral::{MarchenkoPastur, SpectralMeasure};

pub type DesignMatrixF64 = DesignMatrix<f64>;
pub type ModelInstanceF64 = ModelInstance<f64>;
pub type MixtureDensityF64 = MixtureDensity<f64>;
pub type InfoParamsF64 = InfoParams<f64>;
pub type NoiseCurveF64 = NoiseCurve<f64>;
pub type MonteCarloEstimateF64 = MonteCarloEstimate<f64>;
pub type SpectralMeasureF64 = SpectralMeasure<f64>;
pub type PopulationSpectrumF64 = PopulationSpectrum<f64>;
