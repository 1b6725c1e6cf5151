//! Proportional-asymptotic limits: the generalized Marchenko–Pastur fixed
//! point on the nonpositive real axis, spectral edges, and the closed-form
//! limits for the isotropic, low-rank and sparse prior families.
//!
//! Spectra follow the convention that `μ` is the limiting spectrum of
//! `X(dΩ)Xᵀ/d` and `ν` the limiting spectrum of `dΩ`; `γ = d/n`.

use std::fmt;

use crate::error::{ensure, MemlabError, Result};
use crate::scalar::Scalar;

/// Limiting spectrum `ν` of `dΩ` as weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpectrum<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> PopulationSpectrum<T> {
    /// Atoms `(value, mass)` with positive masses summing to one within 1e-12.
    pub fn new(atoms: Vec<(T, T)>) -> Result<Self> {
        ensure!(
            !atoms.is_empty(),
            "population spectrum needs at least one atom"
        );
        let mut total = T::zero();
        for &(v, w) in &atoms {
            ensure!(
                v >= T::zero() && v.is_finite(),
                "atom values must be finite and nonnegative"
            );
            ensure!(w > T::zero(), "atom masses must be positive");
            total += w;
        }
        ensure!(
            (total - T::one()).abs() <= T::lit(1e-12),
            "atom masses sum to {total}, expected 1"
        );
        Ok(Self { atoms })
    }

    pub fn dirac(value: T) -> Self {
        Self {
            atoms: vec![(value, T::one())],
        }
    }

    /// Spectrum of `dΩ` for `Ω = ((1−η)/r)·diag(I_r, 0) + (η/d)·I_d` with
    /// `r/n → ρ`: mass `ρ/γ` at `(1−η)γ/ρ + η` and the rest at `η`.
    pub fn low_rank(gamma: T, rho: T, eta: T) -> Result<Self> {
        ensure!(
            gamma > T::zero() && rho > T::zero(),
            "γ and ρ must be positive"
        );
        ensure!(rho <= gamma, "ρ = r/n cannot exceed γ = d/n");
        ensure!(eta >= T::zero() && eta <= T::one(), "η must lie in [0, 1]");
        let p = rho / gamma;
        let spike = (T::one() - eta) * gamma / rho + eta;
        if p == T::one() {
            Ok(Self::dirac(spike))
        } else {
            Self::new(vec![(spike, p), (eta, T::one() - p)])
        }
    }

    /// Parses `value:mass` pairs separated by commas or whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for item in text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
        {
            let (v, w) = item.split_once(':').ok_or_else(|| {
                MemlabError::Precondition(format!("atom `{item}` is not `value:mass`"))
            })?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    MemlabError::Precondition(format!("atom `{item}` has a non-numeric field"))
                })
            };
            atoms.push((T::lit(parse(v)?), T::lit(parse(w)?)));
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.atoms
            .iter()
            .fold(T::zero(), |acc, &(v, w)| acc + w * f(v))
    }

    pub fn mean(&self) -> T {
        self.integrate(|v| v)
    }
}

/// Moments and edges of the standard Marchenko–Pastur law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpFunctionals<T> {
    pub mean: T,
    pub inv_mean: T,
    pub lambda_plus: T,
    pub lambda_minus: T,
}

pub fn mp_functionals<T: Scalar>(gamma: T) -> Result<MpFunctionals<T>> {
    ensure!(gamma > T::one(), "γ must exceed 1 (got {gamma})");
    let r = gamma.sqrt().recip();
    Ok(MpFunctionals {
        mean: T::one(),
        inv_mean: gamma / (gamma - T::one()),
        lambda_plus: (T::one() + r) * (T::one() + r),
        lambda_minus: (T::one() - r) * (T::one() - r),
    })
}

/// Closed-form Stieltjes transform of the standard Marchenko–Pastur law at
/// `z ≤ 0`: the positive root of `s·m² + (γ + γs − 1)·m − γ = 0`, `s = −z`.
pub fn mp_stieltjes<T: Scalar>(gamma: T, z: T) -> Result<T> {
    ensure!(z <= T::zero(), "z must be nonpositive");
    ensure!(gamma > T::zero(), "γ must be positive");
    let s = -z;
    if s == T::zero() {
        ensure!(gamma > T::one(), "m(0) needs γ > 1");
        return Ok(gamma / (gamma - T::one()));
    }
    let b = gamma + gamma * s - T::one();
    let disc = (b * b + T::lit(4.0) * s * gamma).sqrt();
    // rationalized when b > 0 to avoid cancellation
    Ok(if b > T::zero() {
        T::lit(2.0) * gamma / (b + disc)
    } else {
        (disc - b) / (T::lit(2.0) * s)
    })
}

/// Result of the fixed-point solve at one point `z ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesSolution<T> {
    pub z: T,
    pub m: T,
    pub iterations: usize,
    /// `|m + 1/(z − ∫λ/(1 + λm/γ)dν)| / max(1, |m|)`.
    pub residual: T,
}

pub const STIELTJES_DAMPING: f64 = 0.5;
pub const STIELTJES_TOL: f64 = 1e-12;
pub const STIELTJES_MAX_ITER: usize = 10_000;
/// Relative disagreement between the two starts that flags a branch problem.
pub const BRANCH_TOL: f64 = 1e-6;

fn fixed_point_rhs<T: Scalar>(nu: &PopulationSpectrum<T>, gamma: T, z: T, m: T) -> T {
    let integral = nu.integrate(|l| l / (T::one() + l * m / gamma));
    -(z - integral).recip()
}

fn iterate<T: Scalar>(
    nu: &PopulationSpectrum<T>,
    gamma: T,
    z: T,
    start: T,
) -> Result<StieltjesSolution<T>> {
    let alpha = T::lit(STIELTJES_DAMPING);
    let mut m = start;
    let mut best = T::max_value().unwrap();
    for it in 0..=STIELTJES_MAX_ITER {
        let rhs = fixed_point_rhs(nu, gamma, z, m);
        let residual = (m - rhs).abs() / m.abs().max(T::one());
        if residual.is_finite() && residual < best {
            best = residual;
        }
        if residual <= T::lit(STIELTJES_TOL) {
            return Ok(StieltjesSolution {
                z,
                m,
                iterations: it,
                residual,
            });
        }
        if !rhs.is_finite() || !(m > T::zero()) {
            break;
        }
        m = (T::one() - alpha) * m + alpha * rhs;
    }
    Err(MemlabError::NoConvergence {
        iterations: STIELTJES_MAX_ITER,
        residual: best.as_f64(),
    })
}

/// Solves `m = −1/(z − ∫λ/(1 + λm/γ)dν)` for the positive branch at `z ≤ 0`
/// by damped iteration from `−1/(z − ∫λdν)` and from ten times that value.
///
/// `z = 0` additionally requires `γ > 1` and a lower spectral edge above zero.
pub fn solve_stieltjes<T: Scalar>(
    nu: &PopulationSpectrum<T>,
    gamma: T,
    z: T,
) -> Result<StieltjesSolution<T>> {
    ensure!(z <= T::zero(), "z must be nonpositive (got {z})");
    ensure!(gamma > T::zero(), "γ must be positive");
    if z == T::zero() {
        ensure!(gamma > T::one(), "m(0) needs γ > 1 (got {gamma})");
        let edges = spectral_edges(nu, gamma)?;
        ensure!(
            edges.lambda_minus > T::lit(1e-12) * edges.lambda_plus,
            "m(0) needs the spectrum bounded away from zero (lower edge {})",
            edges.lambda_minus
        );
    }
    let start = -(z - nu.mean()).recip();
    let first = iterate(nu, gamma, z, start)?;
    if let Ok(second) = iterate(nu, gamma, z, start * T::lit(10.0)) {
        if (first.m - second.m).abs() > T::lit(BRANCH_TOL) * first.m.abs().max(T::one()) {
            return Err(MemlabError::BranchAmbiguity {
                first: first.m.as_f64(),
                second: second.m.as_f64(),
            });
        }
    }
    Ok(first)
}

/// Extreme edges of the limiting spectrum and any interior solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEdges<T> {
    pub lambda_minus: T,
    pub lambda_plus: T,
    /// Every root of the edge equation mapped to `λ`, ascending.
    pub all_roots: Vec<T>,
}

impl<T: Scalar> SpectralEdges<T> {
    /// Roots strictly between the extreme edges.
    pub fn interior(&self) -> Vec<T> {
        self.all_roots
            .iter()
            .copied()
            .filter(|&l| l > self.lambda_minus && l < self.lambda_plus)
            .collect()
    }
}

/// `z(m) = −1/m + ∫λ/(1 + λm/γ)dν`, the inverse of the Stieltjes transform.
fn z_of_m<T: Scalar>(nu: &PopulationSpectrum<T>, gamma: T, m: T) -> T {
    -m.recip() + nu.integrate(|l| l / (T::one() + l * m / gamma))
}

/// `dz/dm = 1/m² − (1/γ)∫λ²/(1 + λm/γ)²dν`.
fn edge_defect<T: Scalar>(nu: &PopulationSpectrum<T>, gamma: T, m: T) -> T {
    let denom = |l: T| T::one() + l * m / gamma;
    (m * m).recip() - nu.integrate(|l| l * l / (denom(l) * denom(l))) / gamma
}

const EDGE_SCAN_POINTS: usize = 4000;
const EDGE_M_MIN: f64 = 1e-6;
const EDGE_M_MAX: f64 = 1e6;

/// Edges of the limiting spectrum from the stationary points of `z(m)`.
///
/// Both half-lines `m ∈ ±(1e-6, 1e6)` are scanned for sign changes of
/// `dz/dm`, splitting at the poles `m = −γ/λ`; the upper edge comes from
/// `m < 0` and the lower edge from `m > 0`. Roots are bisected to 1e-10
/// relative and mapped back through `z(m)`.
pub fn spectral_edges<T: Scalar>(nu: &PopulationSpectrum<T>, gamma: T) -> Result<SpectralEdges<T>> {
    ensure!(gamma > T::zero(), "γ must be positive");
    let lo = T::lit(EDGE_M_MIN).ln();
    let hi = T::lit(EDGE_M_MAX).ln();
    let mut magnitudes: Vec<T> = (0..EDGE_SCAN_POINTS)
        .map(|i| (lo + (hi - lo) * T::of_usize(i) / T::of_usize(EDGE_SCAN_POINTS - 1)).exp())
        .collect();
    let poles: Vec<T> = nu
        .atoms()
        .iter()
        .filter(|&&(l, _)| l > T::zero())
        .map(|&(l, _)| gamma / l)
        .collect();
    magnitudes.extend(
        poles
            .iter()
            .copied()
            .filter(|&p| p > T::lit(EDGE_M_MIN) && p < T::lit(EDGE_M_MAX)),
    );
    magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut roots_m = Vec::new();
    for sign in [-T::one(), T::one()] {
        let points: Vec<T> = magnitudes.iter().map(|&a| sign * a).collect();
        for w in points.windows(2) {
            let (a, b) = if w[0] < w[1] {
                (w[0], w[1])
            } else {
                (w[1], w[0])
            };
            // skip intervals that touch a pole
            if sign < T::zero() && poles.iter().any(|&p| (-p >= a) && (-p <= b)) {
                let inner: Vec<T> = poles
                    .iter()
                    .map(|&p| -p)
                    .filter(|&p| p >= a && p <= b)
                    .collect();
                let mut cuts = vec![a];
                for p in inner {
                    let gap = (b - a).abs() * T::lit(1e-9);
                    cuts.push(p - gap);
                    cuts.push(p + gap);
                }
                cuts.push(b);
                for pair in cuts.chunks(2) {
                    if pair.len() == 2 && pair[0] < pair[1] {
                        bracket_root(nu, gamma, pair[0], pair[1], &mut roots_m);
                    }
                }
                continue;
            }
            bracket_root(nu, gamma, a, b, &mut roots_m);
        }
    }
    if roots_m.is_empty() {
        return Err(MemlabError::NoEdgeFound);
    }
    let mut lambdas: Vec<T> = roots_m.iter().map(|&m| z_of_m(nu, gamma, m)).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lambdas.dedup_by(|a, b| (*a - *b).abs() <= T::lit(1e-12) * b.abs().max(T::one()));
    let lambda_minus = lambdas[0].max(T::zero());
    let lambda_plus = *lambdas.last().unwrap();
    Ok(SpectralEdges {
        lambda_minus,
        lambda_plus,
        all_roots: lambdas,
    })
}

fn bracket_root<T: Scalar>(nu: &PopulationSpectrum<T>, gamma: T, a: T, b: T, roots: &mut Vec<T>) {
    let fa = edge_defect(nu, gamma, a);
    let fb = edge_defect(nu, gamma, b);
    if !(fa.is_finite() && fb.is_finite()) || (fa > T::zero()) == (fb > T::zero()) {
        return;
    }
    let (mut lo, mut hi, mut flo) = (a, b, fa);
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if (hi - lo).abs() <= T::lit(1e-10) * mid.abs().max(T::lit(EDGE_M_MIN)) {
            break;
        }
        let fm = edge_defect(nu, gamma, mid);
        if (fm > T::zero()) == (flo > T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    roots.push((lo + hi) * T::lit(0.5));
}

/// Limits of `(V_π, J_π, λ)` for a Gaussian prior with population spectrum
/// `ν`: `∫λdμ`, `∫λ⁻¹dμ = m(0)` and `γλ⁺_μ`.
///
/// `γλ⁺_μ` is the limit of `d·‖XΩ^{1/2}‖²_op/n`, the operator-norm parameter
/// after whitening the prior. With an i.i.d. design and `Σ = I`, `λ_Σ` itself
/// tends to `(1+√γ)²` whatever the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLimits<T> {
    pub v_limit: T,
    pub j_limit: T,
    pub lambda_limit: T,
    pub lambda_plus: T,
    pub lambda_minus: T,
}

pub fn gaussian_limits<T: Scalar>(
    nu: &PopulationSpectrum<T>,
    gamma: T,
) -> Result<GaussianLimits<T>> {
    let edges = spectral_edges(nu, gamma)?;
    let m0 = solve_stieltjes(nu, gamma, T::zero())?;
    Ok(GaussianLimits {
        v_limit: nu.mean(),
        j_limit: m0.m,
        lambda_limit: gamma * edges.lambda_plus,
        lambda_plus: edges.lambda_plus,
        lambda_minus: edges.lambda_minus,
    })
}

/// `(V, J, λ_Σ)` limits for the isotropic prior: `(1, γ/(γ−1), (1+√γ)²)`.
pub fn isotropic_limits<T: Scalar>(gamma: T) -> Result<(T, T, T)> {
    let mp = mp_functionals(gamma)?;
    let root = gamma.sqrt();
    Ok((mp.mean, mp.inv_mean, (T::one() + root) * (T::one() + root)))
}

/// Behaviour of the low-rank Fisher limit as `η → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowRankRegime {
    /// `ρ < 1`: `J ~ γ(1−ρ)/(η(γ−1))`.
    Underparameterized,
    /// `ρ = 1`: `J ~ √(γ/(η(γ−1)))`.
    Critical,
    /// `ρ > 1`: `J → ρ/(ρ−1)`.
    Overparameterized,
}

impl fmt::Display for LowRankRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LowRankRegime::Underparameterized => "underparameterized",
            LowRankRegime::Critical => "critical",
            LowRankRegime::Overparameterized => "overparameterized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankLimit<T> {
    pub j_limit: T,
    pub v_limit: T,
    pub lambda_limit: T,
    pub regime: LowRankRegime,
    /// Leading-order `η → 0` value for the regime.
    pub leading_order: T,
}

/// Positive root of `Lη(γ−1)m² + γ(γ−L−η)m − γ² = 0` with
/// `L = (1−η)γ/ρ + η`, which is `m(0)` for the two-atom spectrum of
/// [`PopulationSpectrum::low_rank`].
pub fn lowrank_quadratic_root<T: Scalar>(gamma: T, rho: T, eta: T) -> T {
    let one = T::one();
    let spike = (one - eta) * gamma / rho + eta;
    let a = spike * eta * (gamma - one);
    let b = gamma * (gamma - spike - eta);
    let c = gamma * gamma;
    let disc = (b * b + T::lit(4.0) * a * c).sqrt();
    if b > T::zero() {
        T::lit(2.0) * c / (b + disc)
    } else {
        (disc - b) / (T::lit(2.0) * a)
    }
}

pub fn lowrank_limit_params<T: Scalar>(gamma: T, rho: T, eta: T) -> Result<LowRankLimit<T>> {
    ensure!(gamma > T::one(), "γ must exceed 1 (got {gamma})");
    ensure!(
        rho > T::zero() && rho <= gamma,
        "ρ must lie in (0, γ] (got {rho})"
    );
    ensure!(
        eta > T::zero() && eta <= T::one(),
        "η must lie in (0, 1] (got {eta})"
    );
    let one = T::one();
    let (regime, leading_order) = if rho < one {
        (
            LowRankRegime::Underparameterized,
            gamma * (one - rho) / (eta * (gamma - one)),
        )
    } else if rho == one {
        (
            LowRankRegime::Critical,
            (gamma / (eta * (gamma - one))).sqrt(),
        )
    } else {
        (LowRankRegime::Overparameterized, rho / (rho - one))
    };
    let root = gamma.sqrt();
    Ok(LowRankLimit {
        j_limit: lowrank_quadratic_root(gamma, rho, eta),
        v_limit: one,
        lambda_limit: (one + root) * (one + root),
        regime,
        leading_order,
    })
}

/// Limit of the Bayes training error under the exact low-rank prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactLowRankLimit<T> {
    /// `σ⁴·m` with `m` the positive root of `σ²m² + (σ²ρ + ρ − 1)m − ρ = 0`.
    pub train: T,
    /// `σ²(1−ρ) + σ⁴ρ²/(1−ρ)`.
    pub expansion: T,
}

pub fn exact_lowrank_train_limit<T: Scalar>(rho: T, sigma2: T) -> Result<ExactLowRankLimit<T>> {
    ensure!(
        rho > T::zero() && rho < T::one(),
        "ρ must lie in (0, 1) (got {rho})"
    );
    ensure!(sigma2 > T::zero(), "σ² must be positive");
    let one = T::one();
    let b = sigma2 * rho + rho - one;
    let disc = (b * b + T::lit(4.0) * sigma2 * rho).sqrt();
    let m = if b > T::zero() {
        T::lit(2.0) * rho / (b + disc)
    } else {
        (disc - b) / (T::lit(2.0) * sigma2)
    };
    Ok(ExactLowRankLimit {
        train: sigma2 * sigma2 * m,
        expansion: sigma2 * (one - rho) + sigma2 * sigma2 * rho * rho / (one - rho),
    })
}

/// `(e(1−1/γ)^{γ−1}/η, γ/(η(γ−1)))`.
pub fn sparse_fisher_bounds<T: Scalar>(gamma: T, eta: T) -> Result<(T, T)> {
    ensure!(gamma > T::one(), "γ must exceed 1 (got {gamma})");
    ensure!(
        eta > T::zero() && eta <= T::one(),
        "η must lie in (0, 1] (got {eta})"
    );
    let one = T::one();
    let log_factor = (gamma - one) * (-gamma.recip()).ln_1p();
    let lower = (one + log_factor).exp() / eta;
    let upper = gamma / (eta * (gamma - one));
    Ok((lower, upper))
}
