//! Prior families. Every family is a finite uniform mixture of Gaussians whose
//! covariances share a diagonal base and differ by a rank-K coordinate update.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{MemlabError, Result};
use crate::rng::{seeded, standard_normal};
use crate::scalar::Scalar;

/// Largest number of mixture components enumerated exactly.
pub const MAX_COMPONENTS: u128 = 1_000_000;

/// Description of a prior on `θ ∈ R^d`.
///
/// `LowRankGaussian` with `eta = 0` is the exact low-rank prior (uniform on the
/// first `r` coordinates); its pushforward has no density but closed-form
/// training errors remain available.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    IsotropicGaussian { d: usize },
    LowRankGaussian { d: usize, r: usize, eta: f64 },
    SparseMixture { d: usize, k: usize, eta: f64 },
    ScalarTwoPointMixture { eta: f64 },
}

/// One mixture component: covariance `diag(base) + update·Σ_{i∈support} eᵢeᵢᵀ`
/// and mean `mean` (zero when `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Component<T: Scalar> {
    pub support: Vec<usize>,
    pub mean: Option<DVector<T>>,
}

/// Expanded mixture representation with equal weights.
#[derive(Debug, Clone)]
pub struct PriorComponents<T: Scalar> {
    pub base: DVector<T>,
    pub update: T,
    pub components: Vec<Component<T>>,
}

impl<T: Scalar> PriorComponents<T> {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn log_weight(&self) -> T {
        -T::of_usize(self.len()).ln()
    }

    /// True when the prior is a single zero-mean Gaussian.
    pub fn is_single_gaussian(&self) -> bool {
        self.components.len() == 1
            && self.components[0].support.is_empty()
            && self.components[0].mean.is_none()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

fn for_each_subset(d: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < d - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

impl PriorSpec {
    pub fn isotropic(d: usize) -> Result<Self> {
        Self::IsotropicGaussian { d }.validated()
    }

    pub fn low_rank(d: usize, r: usize, eta: f64) -> Result<Self> {
        Self::LowRankGaussian { d, r, eta }.validated()
    }

    pub fn sparse(d: usize, k: usize, eta: f64) -> Result<Self> {
        Self::SparseMixture { d, k, eta }.validated()
    }

    pub fn two_point(eta: f64) -> Result<Self> {
        Self::ScalarTwoPointMixture { eta }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MemlabError::InvalidPrior(msg));
        match *self {
            PriorSpec::IsotropicGaussian { d: 0 } => bad("d must be positive".into()),
            PriorSpec::LowRankGaussian { d, r, eta } => {
                if d == 0 {
                    bad("d must be positive".into())
                } else if r == 0 || r > d {
                    bad(format!("r must lie in 1..=d (got r={r}, d={d})"))
                } else if !(0.0..=1.0).contains(&eta) {
                    bad(format!("eta must lie in [0, 1] (got {eta})"))
                } else {
                    Ok(())
                }
            }
            PriorSpec::SparseMixture { d, k, eta } => {
                if d == 0 {
                    bad("d must be positive".into())
                } else if k == 0 || k > d {
                    bad(format!("K must lie in 1..=d (got K={k}, d={d})"))
                } else if !(eta > 0.0 && eta <= 1.0) {
                    bad(format!("eta must lie in (0, 1] (got {eta})"))
                } else {
                    Ok(())
                }
            }
            PriorSpec::ScalarTwoPointMixture { eta } if !(eta > 0.0 && eta.is_finite()) => {
                bad(format!("eta must be positive (got {eta})"))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PriorSpec::IsotropicGaussian { .. } => "isotropic",
            PriorSpec::LowRankGaussian { .. } => "lowrank",
            PriorSpec::SparseMixture { .. } => "sparse",
            PriorSpec::ScalarTwoPointMixture { .. } => "two-point",
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match *self {
            PriorSpec::IsotropicGaussian { d }
            | PriorSpec::LowRankGaussian { d, .. }
            | PriorSpec::SparseMixture { d, .. } => d,
            PriorSpec::ScalarTwoPointMixture { .. } => 1,
        }
    }

    /// True for the families that are a single zero-mean Gaussian.
    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            PriorSpec::IsotropicGaussian { .. } | PriorSpec::LowRankGaussian { .. }
        )
    }

    /// Number of mixture components.
    pub fn component_count(&self) -> u128 {
        match *self {
            PriorSpec::SparseMixture { d, k, .. } => binomial(d, k),
            PriorSpec::ScalarTwoPointMixture { .. } => 2,
            _ => 1,
        }
    }

    fn base_diag<T: Scalar>(&self) -> DVector<T> {
        match *self {
            PriorSpec::IsotropicGaussian { d } => DVector::from_element(d, T::of_usize(d).recip()),
            PriorSpec::LowRankGaussian { d, r, eta } => {
                let spike = (1.0 - eta) / r as f64;
                let floor = eta / d as f64;
                DVector::from_fn(d, |i, _| T::lit(if i < r { spike + floor } else { floor }))
            }
            PriorSpec::SparseMixture { d, eta, .. } => {
                DVector::from_element(d, T::lit(eta / d as f64))
            }
            PriorSpec::ScalarTwoPointMixture { eta } => DVector::from_element(1, T::lit(eta)),
        }
    }

    /// Diagonal of `E[θθᵀ]`; every family has a diagonal second moment.
    pub fn second_moment_diag<T: Scalar>(&self) -> DVector<T> {
        match *self {
            PriorSpec::SparseMixture { d, .. } => DVector::from_element(d, T::of_usize(d).recip()),
            PriorSpec::ScalarTwoPointMixture { eta } => DVector::from_element(1, T::lit(1.0 + eta)),
            _ => self.base_diag(),
        }
    }

    /// Expands the prior into its mixture components.
    pub fn components<T: Scalar>(&self) -> Result<PriorComponents<T>> {
        self.validate()?;
        let count = self.component_count();
        if count > MAX_COMPONENTS {
            return Err(MemlabError::TooManyComponents {
                count,
                cap: MAX_COMPONENTS,
            });
        }
        let base = self.base_diag();
        let (update, components) = match *self {
            PriorSpec::SparseMixture { d, k, eta } => {
                let mut comps = Vec::with_capacity(count as usize);
                for_each_subset(d, k, |s| {
                    comps.push(Component {
                        support: s.to_vec(),
                        mean: None,
                    })
                });
                (T::lit((1.0 - eta) / k as f64), comps)
            }
            PriorSpec::ScalarTwoPointMixture { .. } => (
                T::zero(),
                vec![
                    Component {
                        support: vec![],
                        mean: Some(DVector::from_element(1, -T::one())),
                    },
                    Component {
                        support: vec![],
                        mean: Some(DVector::from_element(1, T::one())),
                    },
                ],
            ),
            _ => (
                T::zero(),
                vec![Component {
                    support: vec![],
                    mean: None,
                }],
            ),
        };
        Ok(PriorComponents {
            base,
            update,
            components,
        })
    }

    /// One draw of θ under `seed`.
    pub fn sample_theta<T: Scalar>(&self, seed: u64) -> Result<DVector<T>> {
        self.validate()?;
        Ok(self.sample_with(&mut seeded(seed)))
    }

    /// One draw of θ from an existing stream. The spec must be valid.
    pub fn sample_with<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        match *self {
            PriorSpec::SparseMixture { d, k, eta } => {
                let support = sample_indices(rng, d, k);
                let floor = T::lit(eta / d as f64).sqrt();
                let mut theta = DVector::from_fn(d, |_, _| floor * standard_normal::<T, _>(rng));
                let spike = T::lit((1.0 - eta) / k as f64).sqrt();
                for i in support.iter() {
                    theta[i] += spike * standard_normal::<T, _>(rng);
                }
                theta
            }
            PriorSpec::ScalarTwoPointMixture { eta } => {
                let sign = if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                };
                DVector::from_element(1, sign + T::lit(eta).sqrt() * standard_normal::<T, _>(rng))
            }
            _ => {
                let base = self.base_diag::<T>();
                DVector::from_fn(base.len(), |i, _| {
                    base[i].sqrt() * standard_normal::<T, _>(rng)
                })
            }
        }
    }

    /// Flat key-value form with keys `kind`, `d`, `r`, `eta`, `K`.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("kind".to_string(), self.kind().to_string());
        match *self {
            PriorSpec::IsotropicGaussian { d } => {
                kv.insert("d".into(), d.to_string());
            }
            PriorSpec::LowRankGaussian { d, r, eta } => {
                kv.insert("d".into(), d.to_string());
                kv.insert("r".into(), r.to_string());
                kv.insert("eta".into(), eta.to_string());
            }
            PriorSpec::SparseMixture { d, k, eta } => {
                kv.insert("d".into(), d.to_string());
                kv.insert("K".into(), k.to_string());
                kv.insert("eta".into(), eta.to_string());
            }
            PriorSpec::ScalarTwoPointMixture { eta } => {
                kv.insert("eta".into(), eta.to_string());
            }
        }
        kv
    }

    /// Inverse of [`PriorSpec::to_kv`]; unknown keys are ignored.
    pub fn from_kv<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let map: BTreeMap<&str, &str> = pairs
            .into_iter()
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |key: &str| {
            map.get(key)
                .copied()
                .ok_or_else(|| MemlabError::InvalidPrior(format!("missing field `{key}`")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| {
                MemlabError::InvalidPrior(format!("field `{key}` is not a nonnegative integer"))
            })
        };
        let real = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| MemlabError::InvalidPrior(format!("field `{key}` is not a number")))
        };
        let spec = match get("kind")? {
            "isotropic" => PriorSpec::IsotropicGaussian { d: int("d")? },
            "lowrank" => PriorSpec::LowRankGaussian {
                d: int("d")?,
                r: int("r")?,
                eta: real("eta")?,
            },
            "sparse" => PriorSpec::SparseMixture {
                d: int("d")?,
                k: int("K")?,
                eta: real("eta")?,
            },
            "two-point" => PriorSpec::ScalarTwoPointMixture { eta: real("eta")? },
            other => {
                return Err(MemlabError::InvalidPrior(format!(
                    "field `kind` has unknown value `{other}`"
                )))
            }
        };
        spec.validated()
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PriorSpec::IsotropicGaussian { d } => write!(f, "isotropic(d={d})"),
            PriorSpec::LowRankGaussian { d, r, eta } => write!(f, "lowrank(d={d},r={r},eta={eta})"),
            PriorSpec::SparseMixture { d, k, eta } => write!(f, "sparse(d={d},K={k},eta={eta})"),
            PriorSpec::ScalarTwoPointMixture { eta } => write!(f, "two-point(eta={eta})"),
        }
    }
}
