//! Configuration-driven experiment runner for `memlab-core`.
//!
//! A config file names one or more runs; each run writes CSV tables to
//! `<output_dir>/<experiment>/<run>-<table>.csv` and every output directory
//! receives a `manifest.json` with the config echo, content hashes, timings
//! and the seed ledger.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use output::{RunManifest, RunRecord};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("[{run}] {source}")]
    Experiment {
        run: String,
        #[source]
        source: memlab_core::MemlabError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Size of the rayon pool: `MEMLAB_THREADS` when set to a positive integer.
pub fn thread_budget() -> Option<usize> {
    std::env::var("MEMLAB_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Applies [`thread_budget`] to the global rayon pool. Later calls are no-ops.
pub fn init_threads() {
    if let Some(n) = thread_budget() {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Loads and runs a config file. Returns one manifest per output directory.
pub fn run_file(path: &Path) -> Result<Vec<(PathBuf, RunManifest)>, RunError> {
    let text = std::fs::read(path).map_err(|source| {
        RunError::Config(ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    let configs = parse_config(&String::from_utf8_lossy(&text))?;
    run_configs(&configs, Some(path), &text)
}

/// Runs already parsed configs; `source` is the raw config used for the hash.
pub fn run_configs(
    configs: &[ExperimentConfig],
    config_path: Option<&Path>,
    source: &[u8],
) -> Result<Vec<(PathBuf, RunManifest)>, RunError> {
    let hash = output::blob_hash(source);
    let mut groups: BTreeMap<PathBuf, (Vec<RunRecord>, Vec<output::SeedEntry>, f64)> =
        BTreeMap::new();
    for cfg in configs {
        let start = Instant::now();
        let outcome = experiments::run_experiment(cfg).map_err(|source| RunError::Experiment {
            run: cfg.name.clone(),
            source,
        })?;
        let dir = cfg.output_dir.join(cfg.experiment.name());
        let mut outputs = Vec::new();
        for table in &outcome.tables {
            let mut named = table.clone();
            named.name = format!("{}-{}", cfg.name, table.name);
            let file = named.write(&dir).map_err(|source| RunError::Io {
                path: dir.clone(),
                source,
            })?;
            outputs.push(file);
        }
        let seconds = start.elapsed().as_secs_f64();
        let entry = groups.entry(cfg.output_dir.clone()).or_default();
        entry.0.push(RunRecord {
            name: cfg.name.clone(),
            experiment: cfg.experiment.name().to_string(),
            config: cfg.echo.clone(),
            outputs,
            checks: outcome.checks,
            failures: outcome.failures,
            wall_clock_seconds: seconds,
        });
        entry.1.extend(outcome.seeds);
        entry.2 += seconds;
    }
    let mut manifests = Vec::new();
    for (dir, (runs, seed_ledger, seconds)) in groups {
        let manifest = RunManifest {
            config_path: config_path.map(Path::to_path_buf),
            config_hash: hash.clone(),
            threads: rayon::current_num_threads(),
            passed: runs.iter().all(|r| r.failures.is_empty()),
            runs,
            seed_ledger,
            wall_clock_seconds: seconds,
        };
        let path = manifest.write(&dir).map_err(|source| RunError::Io {
            path: dir.clone(),
            source,
        })?;
        manifests.push((path, manifest));
    }
    Ok(manifests)
}
