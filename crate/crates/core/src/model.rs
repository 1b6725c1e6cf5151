//! The Bayesian linear model `y = Xθ + στ` with a fixed design.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::density::MixtureDensity;
use crate::design::DesignMatrix;
use crate::error::{ensure, MemlabError, Result};
use crate::linalg::SymEigen;
use crate::prior::{PriorComponents, PriorSpec};
use crate::scalar::Scalar;

/// Smallest admissible noise variance.
pub const MIN_SIGMA2: f64 = 1e-12;

/// Covariance Σ defining the prediction norm `‖v‖²_Σ = vᵀΣv`.
#[derive(Debug, Clone)]
pub enum TestCovariance<T: Scalar> {
    Identity,
    Matrix {
        matrix: DMatrix<T>,
        eigen: SymEigen<T>,
    },
}

impl<T: Scalar> TestCovariance<T> {
    /// Positive definite test covariance.
    pub fn matrix(matrix: DMatrix<T>) -> Result<Self> {
        ensure!(matrix.is_square(), "test covariance must be square");
        let eigen = SymEigen::new(matrix.clone());
        ensure!(
            eigen.smallest() > T::zero(),
            "test covariance must be positive definite"
        );
        Ok(TestCovariance::Matrix { matrix, eigen })
    }

    pub fn norm_sq(&self, v: &DVector<T>) -> T {
        match self {
            TestCovariance::Identity => v.norm_squared(),
            TestCovariance::Matrix { matrix, .. } => v.dot(&(matrix * v)),
        }
    }

    pub fn inner(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        match self {
            TestCovariance::Identity => a.dot(b),
            TestCovariance::Matrix { matrix, .. } => a.dot(&(matrix * b)),
        }
    }
}

#[derive(Debug)]
struct Shared<T: Scalar> {
    design: Arc<DesignMatrix<T>>,
    prior: PriorSpec,
    components: OnceLock<Result<Arc<PriorComponents<T>>>>,
    pushforward: OnceLock<SymEigen<T>>,
    prior_density: OnceLock<Result<Arc<MixtureDensity<T>>>>,
    test_cov: TestCovariance<T>,
    lambda_sigma: OnceLock<T>,
}

/// A design, a prior, a noise level and a test covariance.
///
/// Cloning and [`ModelInstance::with_sigma2`] share every σ²-independent cache.
#[derive(Debug, Clone)]
pub struct ModelInstance<T: Scalar> {
    shared: Arc<Shared<T>>,
    sigma2: T,
    noisy_density: Arc<OnceLock<Result<Arc<MixtureDensity<T>>>>>,
}

impl<T: Scalar> ModelInstance<T> {
    pub fn new(design: Arc<DesignMatrix<T>>, prior: PriorSpec, sigma2: T) -> Result<Self> {
        Self::with_test_covariance(design, prior, sigma2, TestCovariance::Identity)
    }

    pub fn with_test_covariance(
        design: Arc<DesignMatrix<T>>,
        prior: PriorSpec,
        sigma2: T,
        test_cov: TestCovariance<T>,
    ) -> Result<Self> {
        prior.validate()?;
        ensure!(
            prior.dim() == design.d(),
            "prior dimension {} does not match design width {}",
            prior.dim(),
            design.d()
        );
        if let TestCovariance::Matrix { matrix, .. } = &test_cov {
            ensure!(matrix.nrows() == design.d(), "test covariance must be d×d");
        }
        check_sigma2(sigma2)?;
        Ok(Self {
            shared: Arc::new(Shared {
                design,
                prior,
                components: OnceLock::new(),
                pushforward: OnceLock::new(),
                prior_density: OnceLock::new(),
                test_cov,
                lambda_sigma: OnceLock::new(),
            }),
            sigma2,
            noisy_density: Arc::new(OnceLock::new()),
        })
    }

    /// Same design and prior at a different noise level.
    pub fn with_sigma2(&self, sigma2: T) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(Self {
            shared: self.shared.clone(),
            sigma2,
            noisy_density: Arc::new(OnceLock::new()),
        })
    }

    pub fn design(&self) -> &Arc<DesignMatrix<T>> {
        &self.shared.design
    }

    pub fn x(&self) -> &DMatrix<T> {
        self.shared.design.matrix()
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.shared.prior
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.shared.design.n()
    }

    pub fn d(&self) -> usize {
        self.shared.design.d()
    }

    pub fn test_covariance(&self) -> &TestCovariance<T> {
        &self.shared.test_cov
    }

    pub fn components(&self) -> Result<Arc<PriorComponents<T>>> {
        self.shared
            .components
            .get_or_init(|| self.shared.prior.components().map(Arc::new))
            .clone()
    }

    /// Eigendecomposition of `Ŝ = X E[θθᵀ] Xᵀ`, the second moment of `Xθ`.
    /// For Gaussian priors this is the pushforward covariance.
    pub fn pushforward_eigen(&self) -> &SymEigen<T> {
        self.shared.pushforward.get_or_init(|| {
            let design = &self.shared.design;
            let omega = self.shared.prior.second_moment_diag::<T>();
            let first = omega[0];
            if omega.iter().all(|&w| w == first) {
                // XΩXᵀ = (d·ω)·XXᵀ/d reuses the design factorization.
                let gram = design.gram_eigen();
                let scale = first * T::of_usize(design.d());
                SymEigen {
                    values: gram.values.map(|v| v * scale),
                    vectors: gram.vectors.clone(),
                }
            } else {
                let x = design.matrix();
                let mut scaled = x.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= omega[j];
                }
                SymEigen::psd(scaled * x.transpose())
            }
        })
    }

    /// Density of `Xθ` (no noise).
    pub fn prior_density(&self) -> Result<Arc<MixtureDensity<T>>> {
        self.shared
            .prior_density
            .get_or_init(|| {
                let comps = self.components()?;
                MixtureDensity::new(self.shared.design.clone(), &comps, T::zero()).map(Arc::new)
            })
            .clone()
    }

    /// Density of `y = Xθ + στ`.
    pub fn noisy_density(&self) -> Result<Arc<MixtureDensity<T>>> {
        self.noisy_density
            .get_or_init(|| {
                let comps = self.components()?;
                MixtureDensity::new(self.shared.design.clone(), &comps, self.sigma2).map(Arc::new)
            })
            .clone()
    }

    /// Density of `Xθ + √t·τ` for an arbitrary `t ≥ 0`, uncached.
    pub fn density_at_noise(&self, t: T) -> Result<MixtureDensity<T>> {
        let comps = self.components()?;
        MixtureDensity::new(self.shared.design.clone(), &comps, t)
    }

    /// `λ_Σ = ‖X Σ^{-1/2}‖²_op / n`.
    pub fn lambda_sigma(&self) -> T {
        *self.shared.lambda_sigma.get_or_init(|| {
            let design = &self.shared.design;
            let n = T::of_usize(design.n());
            match &self.shared.test_cov {
                TestCovariance::Identity => {
                    design.gram_eigen().largest() * T::of_usize(design.d()) / n
                }
                TestCovariance::Matrix { eigen, .. } => {
                    let inv = eigen.matrix_fn(|l| l.recip());
                    let x = design.matrix();
                    SymEigen::psd(x * inv * x.transpose()).largest() / n
                }
            }
        })
    }

    /// Short description used in output rows.
    pub fn descriptor(&self) -> String {
        format!("n={};d={};prior={}", self.n(), self.d(), self.shared.prior)
    }
}

fn check_sigma2<T: Scalar>(sigma2: T) -> Result<()> {
    if !(sigma2 >= T::lit(MIN_SIGMA2)) || !sigma2.is_finite() {
        return Err(MemlabError::Precondition(format!(
            "noise variance must be at least {MIN_SIGMA2:e} (got {sigma2})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_design, EntryLaw};
    use approx::assert_relative_eq;

    #[test]
    fn lambda_sigma_identity_and_matrix_agree() {
        let design = Arc::new(make_design::<f64>(5, 8, EntryLaw::Gaussian, 4).unwrap());
        let prior = PriorSpec::isotropic(8).unwrap();
        let a = ModelInstance::new(design.clone(), prior.clone(), 0.1).unwrap();
        let cov = TestCovariance::matrix(DMatrix::identity(8, 8)).unwrap();
        let b = ModelInstance::with_test_covariance(design.clone(), prior, 0.1, cov).unwrap();
        assert_relative_eq!(a.lambda_sigma(), b.lambda_sigma(), epsilon = 1e-12);
        let x = design.matrix();
        let op = x.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(a.lambda_sigma(), op * op / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn pushforward_shortcut_matches_direct() {
        let design = Arc::new(make_design::<f64>(4, 7, EntryLaw::Gaussian, 2).unwrap());
        for prior in [
            PriorSpec::isotropic(7).unwrap(),
            PriorSpec::sparse(7, 2, 0.3).unwrap(),
        ] {
            let m = ModelInstance::new(design.clone(), prior, 0.5).unwrap();
            let x = design.matrix();
            let direct = x * x.transpose() / 7.0;
            let err = (m.pushforward_eigen().reconstruct() - &direct).norm() / direct.norm();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn sigma2_floor() {
        let design = Arc::new(make_design::<f64>(2, 3, EntryLaw::Gaussian, 0).unwrap());
        let prior = PriorSpec::isotropic(3).unwrap();
        assert!(ModelInstance::new(design.clone(), prior.clone(), 0.0).is_err());
        assert!(ModelInstance::new(design, prior, 1e-12).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let design = Arc::new(make_design::<f64>(2, 3, EntryLaw::Gaussian, 0).unwrap());
        assert!(ModelInstance::new(design, PriorSpec::isotropic(4).unwrap(), 1.0).is_err());
    }
}
