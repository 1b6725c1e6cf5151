//! Density of `Xθ + √t·τ` for a mixture prior on θ.
//!
//! All components share the base covariance `B = X diag(ω) Xᵀ + tI`, which is
//! eigendecomposed once. A component with support `S` adds `c·X_S X_Sᵀ`; its
//! inverse and determinant come from the `K×K` Woodbury capacitance
//! `M_S = I/c + X_Sᵀ B⁻¹ X_S`.

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::design::DesignMatrix;
use crate::error::{ensure, MemlabError, Result};
use crate::linalg::{log_sum_exp, SymEigen};
use crate::prior::PriorComponents;
use crate::scalar::Scalar;

/// Upper limit on the condition number of any component covariance.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug)]
pub struct MixtureDensity<T: Scalar> {
    design: Arc<DesignMatrix<T>>,
    noise: T,
    omega: DVector<T>,
    base: SymEigen<T>,
    log_det_base: T,
    k: usize,
    supports: Vec<usize>,
    capacitance_inv: Vec<T>,
    log_const: Vec<T>,
    means: Option<MeanTerms<T>>,
    cross: Option<DMatrix<T>>,
    base_inv_x: OnceLock<DMatrix<T>>,
    base_inv: OnceLock<DMatrix<T>>,
}

#[derive(Debug)]
struct MeanTerms<T: Scalar> {
    means: Vec<DVector<T>>,
    cross_mean: Vec<DVector<T>>,
    mean_quad: Vec<T>,
}

/// Log-density, score and mixture bookkeeping at one point.
#[derive(Debug, Clone)]
pub struct DensityEval<T: Scalar> {
    pub log_density: T,
    pub score: DVector<T>,
    pub responsibilities: Vec<T>,
    /// `Σ_k r_k β_k` where `β_k = μ_k + embed_S(a_k)`.
    beta_bar: DVector<T>,
    /// Per-component `a_k = M_k⁻¹ (Xᵀ B⁻¹ (y − Xμ_k))_S`, flattened.
    capacitance_solves: Vec<T>,
}

impl<T: Scalar> MixtureDensity<T> {
    pub fn new(design: Arc<DesignMatrix<T>>, prior: &PriorComponents<T>, noise: T) -> Result<Self> {
        ensure!(noise >= T::zero(), "noise variance must be nonnegative");
        let x = design.matrix();
        let (n, d) = x.shape();
        ensure!(
            prior.base.len() == d,
            "prior dimension {} does not match design width {d}",
            prior.base.len()
        );
        ensure!(!prior.is_empty(), "prior has no components");

        let mut scaled = x.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= prior.base[j];
        }
        let mut b = scaled * x.transpose();
        for i in 0..n {
            b[(i, i)] += noise;
        }
        let base = SymEigen::new(b);

        let k = prior.components[0].support.len();
        ensure!(
            prior.components.iter().all(|c| c.support.len() == k),
            "all components must share the support size"
        );
        let c = prior.update;
        ensure!(
            k == 0 || c > T::zero(),
            "rank update must be positive when supports are present"
        );

        let lambda_max = base.largest();
        let lambda_min = base.smallest();
        let max_col = (0..d)
            .map(|j| x.column(j).norm_squared())
            .fold(T::zero(), |a, b| a.max(b));
        let top = lambda_max + c * T::of_usize(k) * max_col;
        let condition = if lambda_min > T::zero() {
            (top / lambda_min).as_f64()
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(MemlabError::SingularCovariance { condition });
        }
        let log_det_base = base.values.iter().fold(T::zero(), |acc, &v| acc + v.ln());

        let has_means = prior.components.iter().any(|c| c.mean.is_some());
        let cross = if k > 0 || has_means {
            let p = base.vectors.tr_mul(x);
            let mut scaled = p.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row /= base.values[i];
            }
            Some(p.tr_mul(&scaled))
        } else {
            None
        };

        let half = T::lit(0.5);
        let norm_const = T::of_usize(n) * T::two_pi().ln();
        let log_w = prior.log_weight();
        let count = prior.len();
        let mut supports = Vec::with_capacity(count * k);
        let mut capacitance_inv = Vec::with_capacity(count * k * k);
        let mut log_const = Vec::with_capacity(count);
        for comp in &prior.components {
            let mut log_det = log_det_base;
            if k > 0 {
                let g = cross.as_ref().unwrap();
                let mut m = DMatrix::<T>::zeros(k, k);
                for (a, &i) in comp.support.iter().enumerate() {
                    for (b, &j) in comp.support.iter().enumerate() {
                        m[(a, b)] = g[(i, j)];
                    }
                    m[(a, a)] += c.recip();
                }
                let chol = Cholesky::new(m).ok_or(MemlabError::SingularCovariance {
                    condition: f64::INFINITY,
                })?;
                let l = chol.l();
                let log_det_m = (0..k).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0);
                log_det += T::of_usize(k) * c.ln() + log_det_m;
                let inv = chol.inverse();
                supports.extend_from_slice(&comp.support);
                capacitance_inv.extend(inv.iter().copied());
            }
            log_const.push(log_w - half * (norm_const + log_det));
        }

        let means = if has_means {
            let g = cross.as_ref().unwrap();
            let mut means = Vec::with_capacity(count);
            let mut cross_mean = Vec::with_capacity(count);
            let mut mean_quad = Vec::with_capacity(count);
            for comp in &prior.components {
                let mu = comp.mean.clone().unwrap_or_else(|| DVector::zeros(d));
                let gm = g * &mu;
                mean_quad.push(mu.dot(&gm));
                cross_mean.push(gm);
                means.push(mu);
            }
            Some(MeanTerms {
                means,
                cross_mean,
                mean_quad,
            })
        } else {
            None
        };

        Ok(Self {
            design,
            noise,
            omega: prior.base.clone(),
            base,
            log_det_base,
            k,
            supports,
            capacitance_inv,
            log_const,
            means,
            cross,
            base_inv_x: OnceLock::new(),
            base_inv: OnceLock::new(),
        })
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn component_count(&self) -> usize {
        self.log_const.len()
    }

    /// Eigendecomposition of the shared base covariance.
    pub fn base_eigen(&self) -> &SymEigen<T> {
        &self.base
    }

    pub fn log_det_base(&self) -> T {
        self.log_det_base
    }

    /// `B⁻¹ v`.
    pub fn base_solve(&self, v: &DVector<T>) -> DVector<T> {
        self.base.apply_fn(v, |l| l.recip())
    }

    pub fn evaluate(&self, y: &DVector<T>) -> DensityEval<T> {
        let x = self.design.matrix();
        let d = x.ncols();
        let k = self.k;
        let count = self.component_count();
        let half = T::lit(0.5);

        let h = self.base_solve(y);
        let q0 = y.dot(&h);
        let u = x.tr_mul(&h);

        let mut logits = Vec::with_capacity(count);
        let mut solves = vec![T::zero(); count * k];
        let mut shifted = vec![T::zero(); k];
        for comp in 0..count {
            let mut quad = q0;
            if let Some(m) = &self.means {
                quad += m.mean_quad[comp] - T::lit(2.0) * m.means[comp].dot(&u);
            }
            if k > 0 {
                let support = &self.supports[comp * k..(comp + 1) * k];
                for (a, &i) in support.iter().enumerate() {
                    shifted[a] = u[i];
                    if let Some(m) = &self.means {
                        shifted[a] -= m.cross_mean[comp][i];
                    }
                }
                let inv = &self.capacitance_inv[comp * k * k..(comp + 1) * k * k];
                let a_k = &mut solves[comp * k..(comp + 1) * k];
                for row in 0..k {
                    let mut acc = T::zero();
                    for col in 0..k {
                        acc += inv[col * k + row] * shifted[col];
                    }
                    a_k[row] = acc;
                    quad -= shifted[row] * acc;
                }
            }
            logits.push(self.log_const[comp] - half * quad);
        }

        let log_density = log_sum_exp(&logits);
        let responsibilities: Vec<T> = logits.iter().map(|&l| (l - log_density).exp()).collect();

        let mut beta_bar = DVector::<T>::zeros(d);
        for comp in 0..count {
            let r = responsibilities[comp];
            if r == T::zero() {
                continue;
            }
            if let Some(m) = &self.means {
                beta_bar.axpy(r, &m.means[comp], T::one());
            }
            for a in 0..k {
                beta_bar[self.supports[comp * k + a]] += r * solves[comp * k + a];
            }
        }
        let score = if k > 0 || self.means.is_some() {
            self.base_solve(&(x * &beta_bar)) - h
        } else {
            -h
        };
        DensityEval {
            log_density,
            score,
            responsibilities,
            beta_bar,
            capacitance_solves: solves,
        }
    }

    pub fn log_density(&self, y: &DVector<T>) -> T {
        self.evaluate(y).log_density
    }

    pub fn score(&self, y: &DVector<T>) -> DVector<T> {
        self.evaluate(y).score
    }

    /// `E[θ | Xθ + √t·τ = y]`.
    pub fn posterior_mean_from(&self, eval: &DensityEval<T>) -> DVector<T> {
        let x = self.design.matrix();
        let mut theta = x.tr_mul(&eval.score);
        for (i, v) in theta.iter_mut().enumerate() {
            *v = -*v * self.omega[i];
        }
        theta + &eval.beta_bar
    }

    pub fn posterior_mean(&self, y: &DVector<T>) -> DVector<T> {
        self.posterior_mean_from(&self.evaluate(y))
    }

    fn base_inverse(&self) -> &DMatrix<T> {
        self.base_inv
            .get_or_init(|| self.base.matrix_fn(|l| l.recip()))
    }

    fn base_inverse_x(&self) -> &DMatrix<T> {
        self.base_inv_x
            .get_or_init(|| self.base_inverse() * self.design.matrix())
    }

    /// Hessian of `log p` at the evaluated point.
    pub fn hessian_from(&self, eval: &DensityEval<T>) -> DMatrix<T> {
        let binv = self.base_inverse();
        if self.k == 0 && self.means.is_none() {
            return -binv.clone();
        }
        let d = self.omega.len();
        let k = self.k;
        let mut a = DMatrix::<T>::zeros(d, d);
        let mut beta = DVector::<T>::zeros(d);
        for comp in 0..self.component_count() {
            let r = eval.responsibilities[comp];
            if r == T::zero() {
                continue;
            }
            let support = &self.supports[comp * k..(comp + 1) * k];
            let inv = &self.capacitance_inv[comp * k * k..(comp + 1) * k * k];
            for (p, &i) in support.iter().enumerate() {
                for (q, &j) in support.iter().enumerate() {
                    a[(i, j)] += r * inv[q * k + p];
                }
            }
            let solves = &eval.capacitance_solves[comp * k..(comp + 1) * k];
            match &self.means {
                Some(m) => {
                    beta.copy_from(&m.means[comp]);
                    for (p, &i) in support.iter().enumerate() {
                        beta[i] += solves[p];
                    }
                    a.ger(r, &beta, &beta, T::one());
                }
                None => {
                    for (p, &i) in support.iter().enumerate() {
                        for (q, &j) in support.iter().enumerate() {
                            a[(i, j)] += r * solves[p] * solves[q];
                        }
                    }
                }
            }
        }
        a.ger(-T::one(), &eval.beta_bar, &eval.beta_bar, T::one());
        let w = self.base_inverse_x();
        w * a * w.transpose() - binv
    }

    pub fn hessian(&self, y: &DVector<T>) -> DMatrix<T> {
        self.hessian_from(&self.evaluate(y))
    }

    /// `Xᵀ B⁻¹ X`, present when the prior has supports or means.
    pub fn cross_gram(&self) -> Option<&DMatrix<T>> {
        self.cross.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_design, EntryLaw};
    use crate::prior::PriorSpec;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn dense_components(
        design: &DesignMatrix<f64>,
        prior: &PriorComponents<f64>,
        noise: f64,
    ) -> Vec<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let x = design.matrix();
        let (n, d) = x.shape();
        prior
            .components
            .iter()
            .map(|c| {
                let mut omega = DMatrix::from_diagonal(&prior.base);
                for &i in &c.support {
                    omega[(i, i)] += prior.update;
                }
                let mean = c.mean.clone().unwrap_or_else(|| DVector::zeros(d));
                let cov = x * &omega * x.transpose() + DMatrix::identity(n, n) * noise;
                (x * mean, cov, omega)
            })
            .collect()
    }

    fn gaussian_pdf(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let n = y.len() as f64;
        let chol = cov.clone().cholesky().unwrap();
        let z = y - mean;
        let sol = chol.solve(&z);
        let det = chol.determinant();
        (-(0.5) * z.dot(&sol)).exp() / ((2.0 * std::f64::consts::PI).powf(n) * det).sqrt()
    }

    #[test]
    fn standard_normal_scalar() {
        let design = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap());
        let prior = PriorSpec::isotropic(1).unwrap().components().unwrap();
        let dens = MixtureDensity::new(design, &prior, 0.0).unwrap();
        let y = DVector::from_element(1, 2.0);
        let e = dens.evaluate(&y);
        assert_relative_eq!(
            e.log_density,
            -2.0 - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(e.score[0], -2.0, epsilon = 1e-14);
        assert!(dens.score(&DVector::zeros(1))[0] == 0.0);
    }

    #[test]
    fn sparse_mixture_matches_direct_sum() {
        let design = Arc::new(make_design::<f64>(3, 4, EntryLaw::Gaussian, 5).unwrap());
        let spec = PriorSpec::sparse(4, 1, 0.5).unwrap();
        let prior = spec.components().unwrap();
        let dens = MixtureDensity::new(design.clone(), &prior, 0.0).unwrap();
        let comps = dense_components(&design, &prior, 0.0);
        for seed in 0..10u64 {
            let y: DVector<f64> = crate::rng::replicate_stream(seed, 3)
                .sample_iter(rand_distr::StandardNormal)
                .take(3)
                .collect::<Vec<f64>>()
                .into();
            let direct: f64 = comps
                .iter()
                .map(|(m, c, _)| gaussian_pdf(&y, m, c))
                .sum::<f64>()
                / 4.0;
            let e = dens.evaluate(&y);
            assert_relative_eq!(e.log_density, direct.ln(), epsilon = 1e-11);
            let total: f64 = e.responsibilities.iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn posterior_mean_and_hessian_match_dense_formulas() {
        let design = Arc::new(make_design::<f64>(3, 5, EntryLaw::Gaussian, 8).unwrap());
        let x = design.matrix().clone();
        let spec = PriorSpec::sparse(5, 2, 0.2).unwrap();
        let prior = spec.components().unwrap();
        let noise = 0.5;
        let dens = MixtureDensity::new(design.clone(), &prior, noise).unwrap();
        let comps = dense_components(&design, &prior, noise);
        let y = DVector::from_vec(vec![0.7, -1.3, 0.4]);

        let mut weights: Vec<f64> = comps
            .iter()
            .map(|(m, c, _)| gaussian_pdf(&y, m, c))
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        let mut mean = DVector::zeros(5);
        let mut score_bar = DVector::zeros(3);
        let mut second = DMatrix::zeros(3, 3);
        for ((m, c, omega), w) in comps.iter().zip(&weights) {
            let cinv = c.clone().try_inverse().unwrap();
            let s = -(&cinv * (&y - m));
            mean += (omega * x.transpose() * -&s) * *w;
            score_bar += &s * *w;
            second += (-&cinv + &s * s.transpose()) * *w;
        }
        let hess = second - &score_bar * score_bar.transpose();

        let e = dens.evaluate(&y);
        assert!((dens.posterior_mean_from(&e) - &mean).norm() < 1e-11);
        assert!((&e.score - &score_bar).norm() < 1e-11);
        assert!((dens.hessian_from(&e) - hess).norm() < 1e-10);
    }

    #[test]
    fn two_point_matches_direct_sum() {
        let design = Arc::new(DesignMatrix::new(DMatrix::from_element(1, 1, 1.3)).unwrap());
        let prior = PriorSpec::two_point(0.05).unwrap().components().unwrap();
        let noise = 0.2;
        let dens = MixtureDensity::new(design, &prior, noise).unwrap();
        let s = 1.3f64 * 1.3 * 0.05 + noise;
        for &y in &[-2.0, -0.3, 0.0, 0.9, 3.0] {
            let p = |m: f64| {
                (-(y - m) * (y - m) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt()
            };
            let direct = 0.5 * (p(1.3) + p(-1.3));
            let dp = 0.5 * (-(y - 1.3) / s * p(1.3) - (y + 1.3) / s * p(-1.3));
            let e = dens.evaluate(&DVector::from_element(1, y));
            assert_relative_eq!(e.log_density, direct.ln(), epsilon = 1e-12);
            assert_relative_eq!(e.score[0], dp / direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_base_rejected() {
        let design = Arc::new(make_design::<f64>(4, 6, EntryLaw::Gaussian, 1).unwrap());
        let prior = PriorSpec::low_rank(6, 2, 0.0)
            .unwrap()
            .components()
            .unwrap();
        assert!(matches!(
            MixtureDensity::new(design.clone(), &prior, 0.0),
            Err(MemlabError::SingularCovariance { .. })
        ));
        assert!(MixtureDensity::new(design, &prior, 0.1).is_ok());
    }
}
