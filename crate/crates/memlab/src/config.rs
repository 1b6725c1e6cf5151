//! INI experiment configuration.
//!
//! Every section other than the optional leading `[general]` block describes
//! one run; the section name becomes the run name. Keys in `[general]` (or
//! before the first section) are defaults for every run.
//!
//! ```ini
//! output_dir = out
//! seed = 7
//!
//! [gamma4]
//! experiment = isotropic
//! n = 200
//! d = 800
//! sigma2 = logspace(1e-6, 1e4, 25)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, ParseOption};
use memlab_core::{BuiltinEstimator, EntryLaw, PopulationSpectrum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("[{section}] missing field `{field}`")]
    Missing { section: String, field: String },
    #[error("[{section}] field `{field}`: {message}")]
    Field {
        section: String,
        field: String,
        message: String,
    },
    #[error("config defines no experiments")]
    Empty,
}

impl ConfigError {
    /// Name of the offending field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Missing { field, .. } | ConfigError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    Isotropic,
    LowRank,
    LowRankExact,
    Sparse,
    Scalar,
    RmtConvergence,
    BoundsAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Isotropic,
        ExperimentKind::LowRank,
        ExperimentKind::LowRankExact,
        ExperimentKind::Sparse,
        ExperimentKind::Scalar,
        ExperimentKind::RmtConvergence,
        ExperimentKind::BoundsAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Isotropic => "isotropic",
            ExperimentKind::LowRank => "lowrank",
            ExperimentKind::LowRankExact => "lowrank-exact",
            ExperimentKind::Sparse => "sparse",
            ExperimentKind::Scalar => "scalar",
            ExperimentKind::RmtConvergence => "rmt-convergence",
            ExperimentKind::BoundsAudit => "bounds-audit",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            ExperimentKind::Isotropic => {
                "isotropic Gaussian prior: parameters, noise curve, bounds and limits"
            }
            ExperimentKind::LowRank => {
                "approximately low-rank Gaussian prior against its random-matrix limit"
            }
            ExperimentKind::LowRankExact => {
                "exact low-rank prior: training error against the closed-form limit"
            }
            ExperimentKind::Sparse => {
                "sparse Gaussian mixture: Monte Carlo Fisher information and its bounds"
            }
            ExperimentKind::Scalar => {
                "scalar two-point mixture: noise sweep, mmse derivative and small-noise expansion"
            }
            ExperimentKind::RmtConvergence => {
                "finite-n convergence of J to its limit and Stieltjes solver traces"
            }
            ExperimentKind::BoundsAudit => {
                "sandwich and noise-asymptotic checks over random Gaussian models"
            }
        }
    }

    /// Keys accepted in addition to the common ones.
    fn keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Isotropic => &[
                "n",
                "d",
                "sigma2",
                "seeds",
                "estimators",
                "cost_sigma2",
                "tolerance",
            ],
            ExperimentKind::LowRank => &[
                "n",
                "d",
                "r",
                "eta",
                "sigma2",
                "seeds",
                "estimators",
                "cost_sigma2",
                "tolerance",
            ],
            ExperimentKind::LowRankExact => &["n", "d", "r", "sigma2", "seeds", "tolerance"],
            ExperimentKind::Sparse => &[
                "n",
                "d",
                "K",
                "eta",
                "sigma2",
                "seeds",
                "estimators",
                "cost_sigma2",
                "slack",
            ],
            ExperimentKind::Scalar => &["eta", "t", "snr", "extremum"],
            ExperimentKind::RmtConvergence => &["gamma", "rho", "eta", "sizes", "seeds", "nu", "z"],
            ExperimentKind::BoundsAudit => &["models", "n_max", "sigma2"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Test covariance used for prediction errors. Only the identity is
/// selectable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSelector {
    Identity,
}

const COMMON_KEYS: &[&str] = &[
    "experiment",
    "reps",
    "seed",
    "sigma",
    "entries",
    "output_dir",
];

/// One run, fully validated.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub k: Option<usize>,
    pub eta: Option<f64>,
    pub sigma2: Vec<f64>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub seeds: usize,
    pub sigma: CovarianceSelector,
    pub entries: EntryLaw,
    pub estimators: Vec<BuiltinEstimator>,
    pub cost_sigma2: Vec<f64>,
    pub tolerance: Option<f64>,
    pub slack: Option<f64>,
    pub t: Vec<f64>,
    pub snr: Vec<f64>,
    /// Whether the scalar sweep must show an interior extremum of `Train/t`.
    pub require_extremum: bool,
    pub sizes: Vec<usize>,
    pub nu: Option<PopulationSpectrum<f64>>,
    pub z: Vec<f64>,
    pub models: usize,
    pub n_max: usize,
    pub output_dir: PathBuf,
    /// Effective key-value pairs after merging defaults, for the manifest.
    pub echo: BTreeMap<String, String>,
}

/// Parses a whole config file.
pub fn load_config(path: &Path) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let opt = ParseOption {
        enabled_quote: false,
        enabled_escape: false,
        ..ParseOption::default()
    };
    let ini = Ini::load_from_str_opt(text, opt).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut defaults = BTreeMap::new();
    let mut runs = Vec::new();
    for (section, props) in ini.iter() {
        let label = section.unwrap_or("general");
        let mut map = BTreeMap::new();
        for (key, value) in props.iter() {
            if map
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(field_error(label, key, "given more than once"));
            }
        }
        match section {
            None | Some("general") => {
                for key in map.keys() {
                    if !COMMON_KEYS.contains(&key.as_str()) || key == "experiment" {
                        return Err(field_error(
                            label,
                            key,
                            "not allowed in the general section",
                        ));
                    }
                }
                defaults.extend(map);
            }
            Some(name) => {
                if runs
                    .iter()
                    .any(|r: &(String, BTreeMap<String, String>)| r.0 == name)
                {
                    return Err(ConfigError::Syntax(format!(
                        "section [{name}] appears twice"
                    )));
                }
                runs.push((name.to_string(), map));
            }
        }
    }
    if runs.is_empty() {
        return Err(ConfigError::Empty);
    }
    runs.into_iter()
        .map(|(name, map)| {
            let mut merged = defaults.clone();
            merged.extend(map);
            build(name, merged)
        })
        .collect()
}

fn field_error(section: &str, field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        section: section.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

struct Fields<'a> {
    section: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl Fields<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        field_error(self.section, key, message)
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| self.err(key, format!("`{v}` is not {what}")))
            })
            .transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        let v = self.parse::<usize>(key, "a nonnegative integer")?;
        if v == Some(0) {
            return Err(self.err(key, "must be positive"));
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.parse::<f64>(key, "a number")?;
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(self.err(key, format!("must be positive (got {x})")))
            }
            _ => Ok(v),
        }
    }

    fn required<T>(&self, key: &str, value: Option<T>) -> Result<T, ConfigError> {
        value.ok_or_else(|| ConfigError::Missing {
            section: self.section.to_string(),
            field: key.to_string(),
        })
    }

    /// A list of reals: `a, b, c` or `logspace(lo, hi, count)`.
    fn grid(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(text) = self.raw(key) else {
            return Ok(None);
        };
        let values = if let Some(inner) = text
            .strip_prefix("logspace(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(self.err(key, "logspace takes (lo, hi, count)"));
            }
            let lo: f64 = parts[0]
                .parse()
                .map_err(|_| self.err(key, "logspace bound is not a number"))?;
            let hi: f64 = parts[1]
                .parse()
                .map_err(|_| self.err(key, "logspace bound is not a number"))?;
            let count: usize = parts[2]
                .parse()
                .map_err(|_| self.err(key, "logspace count is not an integer"))?;
            if !(lo > 0.0 && hi > lo && count >= 2) {
                return Err(self.err(key, "logspace needs 0 < lo < hi and count ≥ 2"));
            }
            memlab_core::scalar_lab::log_grid(lo, hi, count)
        } else {
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| self.err(key, format!("`{s}` is not a number")))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() {
            return Err(self.err(key, "grid is empty"));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(self.err(key, format!("grid values must be positive (got {bad})")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.err(key, "grid must be strictly ascending"));
        }
        Ok(Some(values))
    }

    fn sizes(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(text) = self.raw(key) else {
            return Ok(None);
        };
        let sizes = text
            .split(',')
            .map(str::trim)
            .map(|s| match s.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(self.err(key, format!("`{s}` is not a positive integer"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if sizes.len() < 2 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.err(key, "needs at least two strictly increasing sizes"));
        }
        Ok(Some(sizes))
    }
}

fn build(name: String, map: BTreeMap<String, String>) -> Result<ExperimentConfig, ConfigError> {
    let f = Fields {
        section: &name,
        map: &map,
    };
    let experiment: ExperimentKind = {
        let raw = f.required("experiment", f.raw("experiment"))?;
        raw.parse().map_err(|e: String| f.err("experiment", e))?
    };
    for key in map.keys() {
        if !COMMON_KEYS.contains(&key.as_str()) && !experiment.keys().contains(&key.as_str()) {
            return Err(f.err(key, format!("not a field of `{experiment}` experiments")));
        }
    }

    let sigma = match f.raw("sigma").unwrap_or("identity") {
        "identity" => CovarianceSelector::Identity,
        other => return Err(f.err("sigma", format!("unknown test covariance `{other}`"))),
    };
    let entries = match f.raw("entries") {
        None => EntryLaw::Gaussian,
        Some(v) => v
            .parse()
            .map_err(|_| f.err("entries", format!("unknown entry law `{v}`")))?,
    };
    let estimators = match f.raw("estimators") {
        None => Vec::new(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<BuiltinEstimator>()
                    .map_err(|e| f.err("estimators", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let nu = f
        .raw("nu")
        .map(|v| PopulationSpectrum::parse(v).map_err(|e| f.err("nu", e.to_string())))
        .transpose()?;
    let z = match f.raw("z") {
        // magnitudes are given, the solver runs at their negatives
        Some(_) => f
            .grid("z")?
            .unwrap()
            .into_iter()
            .rev()
            .map(|v| -v)
            .collect(),
        None => Vec::new(),
    };

    let mut cfg = ExperimentConfig {
        name: name.clone(),
        experiment,
        n: f.count("n")?,
        d: f.count("d")?,
        r: f.parse("r", "a nonnegative integer")?,
        k: f.count("K")?,
        eta: f.parse("eta", "a number")?,
        sigma2: f.grid("sigma2")?.unwrap_or_default(),
        gamma: f.positive("gamma")?,
        rho: f.positive("rho")?,
        reps: f.count("reps")?.unwrap_or(10_000),
        seed: f.parse("seed", "an unsigned integer")?.unwrap_or(0),
        seeds: f.count("seeds")?.unwrap_or(1),
        sigma,
        entries,
        estimators,
        cost_sigma2: f.grid("cost_sigma2")?.unwrap_or_default(),
        tolerance: f.positive("tolerance")?,
        slack: f.positive("slack")?,
        t: f.grid("t")?.unwrap_or_default(),
        snr: f.grid("snr")?.unwrap_or_default(),
        require_extremum: match f.raw("extremum").unwrap_or("required") {
            "required" => true,
            "report" => false,
            other => {
                return Err(f.err(
                    "extremum",
                    format!("expected `required` or `report` (got `{other}`)"),
                ))
            }
        },
        sizes: f.sizes("sizes")?.unwrap_or_default(),
        nu,
        z,
        models: f.count("models")?.unwrap_or(20),
        n_max: f.count("n_max")?.unwrap_or(100),
        output_dir: PathBuf::from(f.raw("output_dir").unwrap_or("out")),
        echo: map.clone(),
    };

    let needs_mc = matches!(experiment, ExperimentKind::Sparse) || !cfg.estimators.is_empty();
    if needs_mc && cfg.reps < 100 {
        return Err(f.err(
            "reps",
            format!(
                "Monte Carlo runs need at least 100 replicates (got {})",
                cfg.reps
            ),
        ));
    }
    if !cfg.estimators.is_empty() && cfg.cost_sigma2.is_empty() {
        return Err(ConfigError::Missing {
            section: name,
            field: "cost_sigma2".into(),
        });
    }
    if let Some(eta) = cfg.eta {
        let lower_ok = if experiment == ExperimentKind::Scalar {
            eta > 0.0
        } else {
            eta > 0.0 && eta <= 1.0
        };
        if !lower_ok {
            return Err(f.err("eta", format!("out of range (got {eta})")));
        }
    }

    match experiment {
        ExperimentKind::Isotropic => {
            f.required("n", cfg.n)?;
            f.required("d", cfg.d)?;
            default_grid(&mut cfg.sigma2, 1e-6, 1e4, 25);
        }
        ExperimentKind::LowRank => {
            f.required("n", cfg.n)?;
            f.required("d", cfg.d)?;
            f.required("r", cfg.r)?;
            f.required("eta", cfg.eta)?;
            default_grid(&mut cfg.sigma2, 1e-6, 1e4, 25);
        }
        ExperimentKind::LowRankExact => {
            let n = f.required("n", cfg.n)?;
            f.required("d", cfg.d)?;
            let r = f.required("r", cfg.r)?;
            if r == 0 || r >= n {
                return Err(f.err("r", format!("must satisfy 0 < r < n (got {r})")));
            }
            if cfg.sigma2.is_empty() {
                cfg.sigma2 = vec![0.01, 0.05];
            }
        }
        ExperimentKind::Sparse => {
            f.required("n", cfg.n)?;
            f.required("d", cfg.d)?;
            f.required("K", cfg.k)?;
            f.required("eta", cfg.eta)?;
            default_grid(&mut cfg.sigma2, 1e-4, 1e2, 7);
        }
        ExperimentKind::Scalar => {
            f.required("eta", cfg.eta)?;
            default_grid(&mut cfg.t, 1e-3, 10.0, 200);
            if cfg.snr.is_empty() {
                cfg.snr = vec![0.1, 1.0, 10.0];
            }
        }
        ExperimentKind::RmtConvergence => {
            let gamma = f.required("gamma", cfg.gamma)?;
            if gamma <= 1.0 {
                return Err(f.err("gamma", format!("must exceed 1 (got {gamma})")));
            }
            if let Some(rho) = cfg.rho {
                if rho > gamma {
                    return Err(f.err("rho", format!("must not exceed gamma (got {rho})")));
                }
                f.required("eta", cfg.eta)?;
            }
            if cfg.sizes.is_empty() {
                cfg.sizes = vec![100, 400];
            }
            if cfg.z.is_empty() {
                cfg.z = memlab_core::scalar_lab::log_grid(1e-4, 100.0, 50)
                    .into_iter()
                    .rev()
                    .map(|v| -v)
                    .collect();
            }
            if cfg.seeds == 1 && f.raw("seeds").is_none() {
                cfg.seeds = 5;
            }
        }
        ExperimentKind::BoundsAudit => {
            if cfg.n_max < 20 {
                return Err(f.err("n_max", "must be at least 20"));
            }
            default_grid(&mut cfg.sigma2, 1e-6, 1e4, 25);
        }
    }
    Ok(cfg)
}

fn default_grid(grid: &mut Vec<f64>, lo: f64, hi: f64, count: usize) {
    if grid.is_empty() {
        *grid = memlab_core::scalar_lab::log_grid(lo, hi, count);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfgs = parse_config(
            "seed = 3\noutput_dir = results\n[a]\nexperiment = isotropic\nn = 10\nd = 40\n[b]\nexperiment = scalar\neta = 0.05\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!((cfgs[0].seed, cfgs[1].seed), (3, 9));
        assert_eq!(cfgs[0].sigma2.len(), 25);
        assert_eq!(cfgs[1].t.len(), 200);
        assert_eq!(cfgs[0].output_dir, PathBuf::from("results"));
    }

    #[test]
    fn grids() {
        let cfg = &parse_config("[x]\nexperiment = isotropic\nn=2\nd=4\nsigma2 = 0.1, 1, 10\n")
            .unwrap()[0];
        assert_eq!(cfg.sigma2, vec![0.1, 1.0, 10.0]);
        let err =
            parse_config("[x]\nexperiment = isotropic\nn=2\nd=4\nsigma2 = 1, 0.1\n").unwrap_err();
        assert_eq!(err.field(), Some("sigma2"));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[x]\nn = 3\n", "experiment"),
            ("[x]\nexperiment = isotropic\nd = 4\n", "n"),
            (
                "[x]\nexperiment = isotropic\nn = 4\nd = 8\nbogus = 1\n",
                "bogus",
            ),
            (
                "[x]\nexperiment = sparse\nn = 4\nd = 8\nK = 1\neta = 0.1\nreps = 50\n",
                "reps",
            ),
            (
                "[x]\nexperiment = lowrank\nn = 4\nd = 8\nr = 2\neta = 1.5\n",
                "eta",
            ),
            (
                "[x]\nexperiment = isotropic\nn = 4\nd = 8\nsigma = diag\n",
                "sigma",
            ),
            (
                "[x]\nexperiment = isotropic\nn = 4\nd = 8\nestimators = lasso\ncost_sigma2 = 1\n",
                "estimators",
            ),
            ("[x]\nexperiment = nope\n", "experiment"),
        ];
        for (text, field) in cases {
            let err = parse_config(text).unwrap_err();
            assert_eq!(err.field(), Some(field), "{text}: {err}");
            assert!(err.to_string().contains(field));
        }
    }
}
