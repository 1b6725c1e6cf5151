//! Probability measures on the nonnegative half-line used as population or
//! limiting spectra: finite atom collections plus an optional
//! Marchenko–Pastur continuum.

use crate::error::{ensure, MemlabError, Result};
use crate::quadrature::integrate;
use crate::scalar::Scalar;

/// Marchenko–Pastur law with aspect ratio `gamma = d/n` and variance `scale`:
/// the limiting spectrum of `scale·XXᵀ/d` for an `n×d` design with unit-variance
/// i.i.d. entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchenkoPastur<T> {
    pub gamma: T,
    pub scale: T,
}

impl<T: Scalar> MarchenkoPastur<T> {
    pub fn new(gamma: T, scale: T) -> Result<Self> {
        ensure!(gamma > T::zero(), "aspect ratio must be positive");
        ensure!(scale > T::zero(), "scale must be positive");
        Ok(Self { gamma, scale })
    }

    pub fn edges(&self) -> (T, T) {
        let r = self.gamma.sqrt().recip();
        let lo = (T::one() - r) * (T::one() - r) * self.scale;
        let hi = (T::one() + r) * (T::one() + r) * self.scale;
        (lo, hi)
    }

    /// Mass of the atom at zero, `(1 - γ)₊`.
    pub fn zero_atom(&self) -> T {
        (T::one() - self.gamma).max(T::zero())
    }

    /// Density of the continuous part at `lambda`.
    pub fn density(&self, lambda: T) -> T {
        let (a, b) = self.edges();
        if lambda <= a || lambda >= b {
            return T::zero();
        }
        self.gamma * ((b - lambda) * (lambda - a)).sqrt() / (T::two_pi() * self.scale * lambda)
    }

    /// Integral of `f` against the continuous part. Uses λ = (a+b)/2 − (b−a)/2·cos φ
    /// so the square-root edges become smooth.
    pub fn integrate_continuous(&self, f: impl Fn(T) -> T) -> T {
        let (a, b) = self.edges();
        let mid = (a + b) * T::lit(0.5);
        let half = (b - a) * T::lit(0.5);
        let g = |phi: T| {
            let s = phi.sin();
            let lambda = mid - half * phi.cos();
            if lambda <= T::zero() {
                return T::zero();
            }
            f(lambda) * self.gamma * half * half * s * s / (T::two_pi() * self.scale * lambda)
        };
        integrate(g, T::zero(), T::pi(), T::lit(1e-15), T::lit(1e-13))
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        let atom = self.zero_atom();
        let cont = self.integrate_continuous(&f);
        if atom > T::zero() {
            cont + atom * f(T::zero())
        } else {
            cont
        }
    }
}

/// A probability measure given by weighted atoms and an optional
/// Marchenko–Pastur component. Weights of all parts sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure<T> {
    atoms: Vec<(T, T)>,
    continuum: Option<(T, MarchenkoPastur<T>)>,
}

impl<T: Scalar> SpectralMeasure<T> {
    /// Measure from `(location, weight)` pairs.
    pub fn atoms(atoms: Vec<(T, T)>) -> Result<Self> {
        Self::build(atoms, None)
    }

    pub fn dirac(location: T) -> Self {
        Self {
            atoms: vec![(location, T::one())],
            continuum: None,
        }
    }

    pub fn marchenko_pastur(law: MarchenkoPastur<T>) -> Self {
        Self {
            atoms: Vec::new(),
            continuum: Some((T::one(), law)),
        }
    }

    /// Uniform measure on the given eigenvalues.
    pub fn empirical(values: &[T]) -> Result<Self> {
        ensure!(
            !values.is_empty(),
            "empirical measure needs at least one value"
        );
        let w = T::of_usize(values.len()).recip();
        Self::build(values.iter().map(|&v| (v, w)).collect(), None)
    }

    pub fn with_continuum(atoms: Vec<(T, T)>, weight: T, law: MarchenkoPastur<T>) -> Result<Self> {
        Self::build(atoms, Some((weight, law)))
    }

    fn build(atoms: Vec<(T, T)>, continuum: Option<(T, MarchenkoPastur<T>)>) -> Result<Self> {
        let mut total = T::zero();
        for &(loc, w) in &atoms {
            ensure!(
                loc >= T::zero() && loc.is_finite(),
                "atom location must be finite and nonnegative"
            );
            ensure!(w >= T::zero(), "atom weight must be nonnegative");
            total += w;
        }
        if let Some((w, _)) = continuum {
            ensure!(w >= T::zero(), "continuum weight must be nonnegative");
            total += w;
        }
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(MemlabError::Precondition(format!(
                "spectral weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms, continuum })
    }

    pub fn atom_list(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn continuum(&self) -> Option<&(T, MarchenkoPastur<T>)> {
        self.continuum.as_ref()
    }

    /// `∫ f dν`.
    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        let mut acc = T::zero();
        for &(loc, w) in &self.atoms {
            if w > T::zero() {
                acc += w * f(loc);
            }
        }
        if let Some((w, law)) = &self.continuum {
            if *w > T::zero() {
                acc += *w * law.integrate(&f);
            }
        }
        acc
    }

    pub fn mean(&self) -> T {
        self.integrate(|x| x)
    }

    /// Support bounds `(min, max)` over atoms with positive weight and the continuum.
    pub fn support(&self) -> (T, T) {
        let mut lo = T::max_value().unwrap();
        let mut hi = T::zero();
        for &(loc, w) in &self.atoms {
            if w > T::zero() {
                lo = lo.min(loc);
                hi = hi.max(loc);
            }
        }
        if let Some((w, law)) = &self.continuum {
            if *w > T::zero() {
                let (a, b) = law.edges();
                let a = if law.zero_atom() > T::zero() {
                    T::zero()
                } else {
                    a
                };
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        (lo, hi)
    }

    /// Mass of the measure at exactly zero.
    pub fn mass_at_zero(&self) -> T {
        let mut m = T::zero();
        for &(loc, w) in &self.atoms {
            if loc == T::zero() {
                m += w;
            }
        }
        if let Some((w, law)) = &self.continuum {
            m += *w * law.zero_atom();
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mp_mass_and_moments() {
        for &gamma in &[0.3f64, 1.0, 4.0] {
            let law = MarchenkoPastur::new(gamma, 1.0).unwrap();
            assert_relative_eq!(law.integrate(|_| 1.0), 1.0, epsilon = 1e-11);
            // mean of XXᵀ/d eigenvalues is 1, second moment is 1 + 1/γ
            assert_relative_eq!(law.integrate(|x| x), 1.0, epsilon = 1e-11);
            assert_relative_eq!(law.integrate(|x| x * x), 1.0 + 1.0 / gamma, epsilon = 1e-10);
        }
    }

    #[test]
    fn mp_scaled_edges() {
        let law = MarchenkoPastur::new(4.0f64, 2.0).unwrap();
        let (a, b) = law.edges();
        assert_relative_eq!(a, 0.5, epsilon = 1e-14);
        assert_relative_eq!(b, 4.5, epsilon = 1e-14);
        assert_relative_eq!(law.integrate(|x| x), 2.0, epsilon = 1e-11);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(SpectralMeasure::atoms(vec![(1.0f64, 0.5)]).is_err());
        let m = SpectralMeasure::atoms(vec![(1.0f64, 0.5), (3.0, 0.5)]).unwrap();
        assert_relative_eq!(m.mean(), 2.0);
        assert_eq!(m.support(), (1.0, 3.0));
    }
}
