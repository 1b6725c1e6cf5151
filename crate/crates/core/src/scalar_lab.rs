//! The one-dimensional two-point mixture `0.5N(−a, η) + 0.5N(a, η)` observed
//! through Gaussian noise of variance `t`.
//!
//! The noisy marginal is `0.5N(−a, s) + 0.5N(a, s)` with `s = η + t`, so every
//! quantity reduces to an expectation over `y = a + √s·τ` evaluated by
//! Gauss–Hermite quadrature.

use crate::bayes::MonteCarloEstimate;
use crate::error::{ensure, Result};
use crate::quadrature::{expect_normal_adaptive, gauss_hermite, HermiteEstimate};
use crate::rng::{replicate_stream, standard_normal};
use crate::scalar::Scalar;

use rand::Rng;

/// Convergence tolerance of the order-doubling quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// `sech²(x)`, saturating for large `|x|`.
pub fn sech2<T: Scalar>(x: T) -> T {
    let e = (-(x.abs() * T::lit(2.0))).exp();
    let denom = T::one() + e;
    T::lit(4.0) * e / (denom * denom)
}

/// Fisher information of `0.5N(−a, s) + 0.5N(a, s)`:
/// `1/s − (a²/s²)·E[sech²(a·y/s)]`, `y = a + √s·τ`.
pub fn two_point_fisher<T: Scalar>(a: T, s: T) -> HermiteEstimate<T> {
    let root = s.sqrt();
    let c = a * a / (s * s);
    let inner = expect_normal_adaptive(
        |tau: T| sech2(a * (a + root * tau) / s),
        T::lit(QUADRATURE_TOL),
    );
    HermiteEstimate {
        value: s.recip() - c * inner.value,
        order: inner.order,
        last_change: c * inner.last_change,
    }
}

/// `E[(∂² log p)²]` for the same mixture, the negative of `dJ/dt`.
fn hessian_sq_at_order<T: Scalar>(a: T, s: T, order: usize) -> T {
    let root = s.sqrt();
    let c = a * a / (s * s);
    gauss_hermite(order).expect(|tau: T| {
        let h = -s.recip() + c * sech2(a * (a + root * tau) / s);
        h * h
    })
}

fn fisher_at_order<T: Scalar>(a: T, s: T, order: usize) -> T {
    let root = s.sqrt();
    let c = a * a / (s * s);
    s.recip() - c * gauss_hermite(order).expect(|tau: T| sech2(a * (a + root * tau) / s))
}

/// `dJ/dt = −E[(∂² log p_t)²]` for the mixture with variance `s`.
pub fn two_point_fisher_derivative<T: Scalar>(a: T, s: T) -> T {
    let order = two_point_fisher(a, s).order;
    -hessian_sq_at_order(a, s, order * 2)
}

/// The prior `0.5N(−a, η) + 0.5N(a, η)`; `a = 1` unless merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMixture {
    pub eta: f64,
    pub separation: f64,
}

impl ScalarMixture {
    pub fn new(eta: f64) -> Result<Self> {
        ensure!(
            eta > 0.0 && eta.is_finite(),
            "component variance must be positive (got {eta})"
        );
        Ok(Self {
            eta,
            separation: 1.0,
        })
    }

    /// Diagnostic mode with both centres at zero: a single `N(0, η)`.
    pub fn merged(eta: f64) -> Result<Self> {
        Ok(Self {
            separation: 0.0,
            ..Self::new(eta)?
        })
    }

    /// Prior variance `a² + η`.
    pub fn variance(&self) -> f64 {
        self.separation * self.separation + self.eta
    }

    fn parts<T: Scalar>(&self, t: T) -> (T, T) {
        (T::lit(self.separation), T::lit(self.eta) + t)
    }
}

/// `J(t)`, the Fisher information of the noisy marginal at noise `t`.
pub fn scalar_fisher<T: Scalar>(mix: &ScalarMixture, t: T) -> Result<T> {
    let (a, s) = mix.parts(t);
    ensure!(s > T::zero(), "η + t must be positive");
    Ok(two_point_fisher(a, s).value)
}

/// `J′(t) = −E[(∂² log p_t)²]`.
pub fn scalar_fisher_derivative<T: Scalar>(mix: &ScalarMixture, t: T) -> Result<T> {
    let (a, s) = mix.parts(t);
    ensure!(s > T::zero(), "η + t must be positive");
    Ok(two_point_fisher_derivative(a, s))
}

/// Monte Carlo estimate of `J(t)` as `E[(∂ log p_t(y))²]`.
pub fn scalar_fisher_mc<T: Scalar>(
    mix: &ScalarMixture,
    t: T,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloEstimate<T>> {
    ensure!(
        reps >= 100,
        "Monte Carlo needs at least 100 replicates (got {reps})"
    );
    let (a, s) = mix.parts(t);
    ensure!(s > T::zero(), "η + t must be positive");
    let samples: Vec<T> = (0..reps as u64)
        .map(|i| {
            let mut rng = replicate_stream(seed, i);
            let sign = if rng.random::<bool>() {
                T::one()
            } else {
                -T::one()
            };
            let y = sign * a + s.sqrt() * standard_normal::<T, _>(&mut rng);
            let score = (a * (a * y / s).tanh() - y) / s;
            score * score
        })
        .collect();
    Ok(MonteCarloEstimate::from_samples(&samples, seed))
}

/// Posterior variance of θ given `y = θ + √t·τ`.
fn posterior_variance<T: Scalar>(a: T, eta: T, t: T, y: T) -> T {
    let s = eta + t;
    let shrink = a * t / s;
    eta * t / s + shrink * shrink * sech2(a * y / s)
}

/// `mmse(snr)` computed directly as `E[Var(θ | y)]`, `t = 1/snr`.
pub fn mmse<T: Scalar>(mix: &ScalarMixture, snr: T) -> Result<T> {
    ensure!(snr > T::zero(), "snr must be positive");
    let t = snr.recip();
    let (a, s) = mix.parts(t);
    let eta = T::lit(mix.eta);
    let root = s.sqrt();
    // E[Var] = ηt/s + (at/s)²·E[sech²(ay/s)]; the constant part is taken out
    // so the quadrature tolerance applies to the part that varies with y.
    let shrink = a * t / s;
    let spread = expect_normal_adaptive(
        |tau: T| sech2(a * (a + root * tau) / s),
        T::lit(QUADRATURE_TOL),
    )
    .value;
    Ok(eta * t / s + shrink * shrink * spread)
}

/// Analytic `mmse′(snr) = −E[Var(θ|y)²]` and its central finite difference
/// through `mmse(1/t) = t − t²J(t)` with step `1e-4·snr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseDerivativeCheck<T> {
    pub analytic: T,
    pub finite_difference: T,
}

impl<T: Scalar> MmseDerivativeCheck<T> {
    pub fn relative_gap(&self) -> T {
        (self.analytic - self.finite_difference).abs() / self.analytic.abs()
    }
}

pub fn mmse_derivative_check<T: Scalar>(
    mix: &ScalarMixture,
    snr: T,
) -> Result<MmseDerivativeCheck<T>> {
    ensure!(snr > T::zero(), "snr must be positive");
    let t = snr.recip();
    let (a, s) = mix.parts(t);
    let eta = T::lit(mix.eta);
    let root = s.sqrt();
    let analytic = -expect_normal_adaptive(
        |tau: T| {
            let v = posterior_variance(a, eta, t, a + root * tau);
            v * v
        },
        T::lit(QUADRATURE_TOL),
    )
    .value;

    // One rule for both sides so quadrature error does not enter the difference.
    let order = two_point_fisher(a, s).order * 2;
    let mmse_at = |snr: T| {
        let t = snr.recip();
        let (a, s) = mix.parts(t);
        t - t * t * fisher_at_order(a, s, order)
    };
    let h = snr * T::lit(1e-4);
    let finite_difference = (mmse_at(snr + h) - mmse_at(snr - h)) / (h * T::lit(2.0));
    Ok(MmseDerivativeCheck {
        analytic,
        finite_difference,
    })
}

/// Columns of the noise-sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCurves<T> {
    pub t: Vec<T>,
    pub train: Vec<T>,
    pub train_over_t: Vec<T>,
    pub train_over_t2: Vec<T>,
    pub j: Vec<T>,
    pub jprime: Vec<T>,
}

impl<T: Scalar> ScalarCurves<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Indices `i` where column `values` has a strict interior local extremum
    /// among grid points with `lo ≤ t ≤ hi`.
    pub fn interior_extrema(values: &[T], t: &[T], lo: T, hi: T) -> Vec<usize> {
        (1..values.len().saturating_sub(1))
            .filter(|&i| t[i - 1] >= lo && t[i + 1] <= hi)
            .filter(|&i| {
                let (p, c, n) = (values[i - 1], values[i], values[i + 1]);
                (c > p && c > n) || (c < p && c < n)
            })
            .collect()
    }
}

/// `Train(t) = t²J(t)` with `Train/t`, `Train/t²` and `J′` on an ascending grid.
pub fn figure2_curves<T: Scalar>(mix: &ScalarMixture, grid: &[T]) -> Result<ScalarCurves<T>> {
    ensure!(!grid.is_empty(), "grid must be nonempty");
    ensure!(
        grid.iter().all(|&t| t > T::zero()),
        "grid values must be positive"
    );
    ensure!(
        grid.windows(2).all(|w| w[0] < w[1]),
        "grid must be strictly ascending"
    );
    let mut table = ScalarCurves {
        t: Vec::with_capacity(grid.len()),
        train: Vec::new(),
        train_over_t: Vec::new(),
        train_over_t2: Vec::new(),
        j: Vec::new(),
        jprime: Vec::new(),
    };
    for &t in grid {
        let j = scalar_fisher(mix, t)?;
        let train = t * t * j;
        table.t.push(t);
        table.train.push(train);
        table.train_over_t.push(train / t);
        table.train_over_t2.push(j);
        table.j.push(j);
        table.jprime.push(scalar_fisher_derivative(mix, t)?);
    }
    Ok(table)
}

/// Outcome of comparing `Train(t)` with `t²J(0) + t³J′(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma6Check<T> {
    pub j0: T,
    pub jprime0: T,
    /// Largest grid `t` such that every grid point up to it satisfies
    /// `|Train − t²J(0) − t³J′(0)| ≤ 0.05·t³|J′(0)|`; zero when the first fails.
    pub max_t_valid: T,
    pub grid: Vec<T>,
    pub relative_residual: Vec<T>,
}

pub const SIGMA6_TOLERANCE: f64 = 0.05;

/// Default grid: 81 log-spaced points on `[1e-8, 1]`.
pub fn sigma6_default_grid<T: Scalar>() -> Vec<T> {
    log_grid(T::lit(1e-8), T::one(), 81)
}

pub fn sigma6_expansion_check<T: Scalar>(mix: &ScalarMixture) -> Result<Sigma6Check<T>> {
    sigma6_expansion_check_on(mix, &sigma6_default_grid())
}

pub fn sigma6_expansion_check_on<T: Scalar>(
    mix: &ScalarMixture,
    grid: &[T],
) -> Result<Sigma6Check<T>> {
    ensure!(
        grid.iter().all(|&t| t > T::zero()),
        "grid values must be positive"
    );
    let (a, s0) = mix.parts(T::zero());
    let order = two_point_fisher(a, s0).order * 2;
    let j0 = fisher_at_order(a, s0, order);
    let jprime0 = -hessian_sq_at_order(a, s0, order);
    let mut relative_residual = Vec::with_capacity(grid.len());
    let mut max_t_valid = T::zero();
    let mut still_valid = true;
    for &t in grid {
        let (_, s) = mix.parts(t);
        let j = fisher_at_order(a, s, order);
        // Train − t²J(0) − t³J′(0) = t²(J(t) − J(0) − tJ′(0))
        let residual = t * t * (j - j0 - t * jprime0);
        let scale = t * t * t * jprime0.abs();
        let rel = if scale > T::zero() {
            residual.abs() / scale
        } else {
            residual.abs()
        };
        if still_valid && rel <= T::lit(SIGMA6_TOLERANCE) {
            max_t_valid = t;
        } else {
            still_valid = false;
        }
        relative_residual.push(rel);
    }
    Ok(Sigma6Check {
        j0,
        jprime0,
        max_t_valid,
        grid: grid.to_vec(),
        relative_residual,
    })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Scalar>(lo: T, hi: T, count: usize) -> Vec<T> {
    assert!(lo > T::zero() && hi > lo && count >= 2);
    let (l, h) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                (l + (h - l) * T::of_usize(i) / T::of_usize(count - 1)).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;

    fn mixture_pdf(a: f64, s: f64, y: f64) -> (f64, f64) {
        let g = |m: f64| {
            (-(y - m) * (y - m) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt()
        };
        let p = 0.5 * (g(a) + g(-a));
        let dp = 0.5 * (-(y - a) / s * g(a) - (y + a) / s * g(-a));
        (p, dp)
    }

    /// Romberg integration of ∫(p′)²/p over a wide window.
    fn romberg_fisher(a: f64, s: f64) -> f64 {
        let half = a + 40.0 * s.sqrt();
        let f = |y: f64| {
            let (p, dp) = mixture_pdf(a, s, y);
            if p > 0.0 {
                dp * dp / p
            } else {
                0.0
            }
        };
        let (lo, hi) = (-half, half);
        let mut table: Vec<Vec<f64>> = Vec::new();
        let mut n = 1usize;
        let mut trap = 0.5 * (hi - lo) * (f(lo) + f(hi));
        for level in 0..22 {
            if level > 0 {
                let h = (hi - lo) / (2 * n) as f64;
                let extra: f64 = (0..n).map(|i| f(lo + (2 * i + 1) as f64 * h)).sum();
                trap = 0.5 * trap + h * extra;
                n *= 2;
            }
            let mut row = vec![trap];
            for k in 1..=level.min(6) {
                let prev = &table[level - 1];
                let factor = 4f64.powi(k as i32);
                row.push((factor * row[k - 1] - prev[k - 1]) / (factor - 1.0));
            }
            table.push(row);
        }
        *table.last().unwrap().last().unwrap()
    }

    #[test]
    fn fisher_matches_romberg() {
        let mix = ScalarMixture::new(0.05).unwrap();
        for &t in &[1.0f64, 0.1, 1e-3] {
            let j = scalar_fisher(&mix, t).unwrap();
            assert_relative_eq!(j, romberg_fisher(1.0, 0.05 + t), max_relative = 1e-9);
        }
        let tiny = ScalarMixture::new(1e-3).unwrap();
        let j: f64 = scalar_fisher(&tiny, 0.0).unwrap();
        assert_relative_eq!(j, romberg_fisher(1.0, 1e-3), max_relative = 1e-8);
        assert!((j * 1e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn large_variance_limit() {
        let mix = ScalarMixture::new(0.05).unwrap();
        let s = 1e4;
        let j: f64 = scalar_fisher(&mix, s - 0.05).unwrap();
        assert!((j - (1.0 - 1.0 / s) / s).abs() <= 1e-6);
    }

    #[test]
    fn merged_mixture_is_gaussian() {
        let mix = ScalarMixture::merged(0.3).unwrap();
        assert_relative_eq!(
            scalar_fisher(&mix, 0.0).unwrap(),
            1.0 / 0.3,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            scalar_fisher_derivative(&mix, 0.0).unwrap(),
            -1.0 / 0.09,
            epsilon = 1e-10
        );
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let mix = ScalarMixture::new(0.05).unwrap();
        for &t in &[0.01, 0.3, 2.0] {
            let h = 1e-5 * t;
            let fd = (scalar_fisher(&mix, t + h).unwrap() - scalar_fisher(&mix, t - h).unwrap())
                / (2.0 * h);
            let jp = scalar_fisher_derivative(&mix, t).unwrap();
            assert_relative_eq!(jp, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn hessian_square_matches_direct_integral() {
        let (a, s) = (1.0, 0.4);
        let direct = integrate(
            |y: f64| {
                let g = |m: f64| {
                    (-(y - m) * (y - m) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt()
                };
                let g2 = |m: f64| ((y - m) * (y - m) / (s * s) - 1.0 / s) * g(m);
                let (p, dp) = mixture_pdf(a, s, y);
                let d2p = 0.5 * (g2(a) + g2(-a));
                let d2 = d2p / p - (dp / p) * (dp / p);
                d2 * d2 * p
            },
            -12.0,
            12.0,
            1e-14,
            1e-12,
        );
        assert_relative_eq!(
            -two_point_fisher_derivative(a, s),
            direct,
            max_relative = 1e-10
        );
    }

    #[test]
    fn mc_cross_check() {
        let mix = ScalarMixture::new(0.05).unwrap();
        let mc = scalar_fisher_mc(&mix, 0.5, 200_000, 3).unwrap();
        assert!(mc.within(scalar_fisher(&mix, 0.5).unwrap(), 4.0));
    }

    #[test]
    fn mmse_identity() {
        let mix = ScalarMixture::new(0.05).unwrap();
        for &t in &[1e-3, 0.1, 1.0, 30.0, 1e3] {
            let j = scalar_fisher(&mix, t).unwrap();
            let via_mmse = (t - mmse(&mix, 1.0 / t).unwrap()) / (t * t);
            assert_relative_eq!(j, via_mmse, max_relative = 1e-8);
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-6f64, 1e4, 25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[24], 1e4);
        assert_relative_eq!(g[0], 1e-6, max_relative = 1e-14);
    }
}
