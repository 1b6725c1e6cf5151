//! Experiment pipelines. Each one fills CSV tables, records the random streams
//! it reads and counts the assertions it makes; the runner writes the files.

use std::sync::Arc;

use memlab_core::info::gaussian_fisher_derivative;
use memlab_core::rmt::{isotropic_limits, lowrank_quadratic_root};
use memlab_core::scalar_lab::{
    figure2_curves, mmse_derivative_check, sigma6_expansion_check, ScalarCurves, Sigma6Check,
};
use memlab_core::{
    bayes_train_bounds, check_monotonicity, classify_regime, compute_info_params,
    compute_info_params_with, cost_lower_bound, evaluate_estimators, exact_lowrank_train_limit,
    lowrank_limit_params, make_design, noise_curve_with, solve_stieltjes, sparse_fisher_bounds,
    spectral_edges, train_error_exact, Estimator, InfoParams, McOptions, MemlabError,
    ModelInstance, PopulationSpectrum, PriorSpec, Provenance, Result, ScalarMixture,
};
use rand::{Rng, RngCore};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{SeedEntry, Table};

/// Relative slack for comparisons that hold exactly in exact arithmetic.
pub const EXACT_SLACK: f64 = 1e-10;
/// Monte Carlo comparisons allow this many standard errors.
pub const MC_SIGMAS: f64 = 4.0;

/// Tables, seed ledger and assertion outcomes of one run.
#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub tables: Vec<Table>,
    pub seeds: Vec<SeedEntry>,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl ExperimentOutcome {
    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(message());
        }
    }

    fn seed(
        &mut self,
        run: &str,
        purpose: impl Into<String>,
        seed: u64,
        streams: impl Into<String>,
    ) {
        self.seeds.push(SeedEntry {
            run: run.to_string(),
            purpose: purpose.into(),
            seed,
            streams: streams.into(),
        });
    }
}

/// Stream purposes used by [`derive_seed`].
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    Design = 1,
    Fisher = 2,
    NoiseCurve = 3,
    Estimators = 4,
    Models = 5,
}

/// A child seed for `(purpose, index)` drawn from the run seed, so that
/// different purposes never share a stream.
pub fn derive_seed(base: u64, purpose: Purpose, index: u64) -> u64 {
    let mut rng = memlab_core::rng::replicate_stream(base, purpose as u64);
    let mut value = 0;
    for _ in 0..=index {
        value = rng.next_u64();
    }
    value
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut out = ExperimentOutcome::default();
    match cfg.experiment {
        ExperimentKind::Isotropic | ExperimentKind::LowRank | ExperimentKind::Sparse => {
            model_family(cfg, &mut out)?
        }
        ExperimentKind::LowRankExact => lowrank_exact(cfg, &mut out)?,
        ExperimentKind::Scalar => scalar(cfg, &mut out)?,
        ExperimentKind::RmtConvergence => rmt_convergence(cfg, &mut out)?,
        ExperimentKind::BoundsAudit => bounds_audit(cfg, &mut out)?,
    }
    Ok(out)
}

fn prior_for(cfg: &ExperimentConfig, n: usize, d: usize) -> Result<PriorSpec> {
    match cfg.experiment {
        ExperimentKind::Isotropic => PriorSpec::isotropic(d),
        ExperimentKind::LowRank => {
            PriorSpec::low_rank(d, cfg.r.unwrap_or(0), cfg.eta.unwrap_or(0.0))
        }
        ExperimentKind::LowRankExact => PriorSpec::low_rank(d, cfg.r.unwrap_or(0), 0.0),
        ExperimentKind::Sparse => PriorSpec::sparse(d, cfg.k.unwrap_or(0), cfg.eta.unwrap_or(0.0)),
        _ => Err(MemlabError::Precondition(format!(
            "no prior for experiment {} (n={n})",
            cfg.experiment
        ))),
    }
}

fn build_model(
    cfg: &ExperimentConfig,
    out: &mut ExperimentOutcome,
    replicate: u64,
    sigma2: f64,
) -> Result<ModelInstance<f64>> {
    let (n, d) = (cfg.n.unwrap_or(0), cfg.d.unwrap_or(0));
    let seed = derive_seed(cfg.seed, Purpose::Design, replicate);
    out.seed(
        &cfg.name,
        format!("design entries, replicate {replicate}"),
        seed,
        "0 (seed+1 on rank-deficient draw)",
    );
    let design = Arc::new(make_design::<f64>(n, d, cfg.entries, seed)?);
    ModelInstance::new(design, prior_for(cfg, n, d)?, sigma2)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Limits to compare the seed-averaged parameters against, with a tolerance.
enum FamilyLimit {
    Point {
        j: f64,
        v: f64,
        lambda: f64,
        tol: f64,
    },
    FisherBand {
        lower: f64,
        upper: f64,
        slack: f64,
    },
    None(String),
}

fn family_limit(cfg: &ExperimentConfig) -> Result<FamilyLimit> {
    let (n, d) = (cfg.n.unwrap_or(1) as f64, cfg.d.unwrap_or(1) as f64);
    let gamma = d / n;
    if gamma <= 1.0 {
        return Ok(FamilyLimit::None(format!(
            "no limit for gamma = {gamma} <= 1"
        )));
    }
    Ok(match cfg.experiment {
        ExperimentKind::Isotropic => {
            let (v, j, lambda) = isotropic_limits(gamma)?;
            FamilyLimit::Point {
                j,
                v,
                lambda,
                tol: cfg.tolerance.unwrap_or(0.05),
            }
        }
        ExperimentKind::LowRank => {
            let rho = cfg.r.unwrap_or(0) as f64 / n;
            let lim = lowrank_limit_params(gamma, rho, cfg.eta.unwrap_or(1.0))?;
            FamilyLimit::Point {
                j: lim.j_limit,
                v: lim.v_limit,
                lambda: lim.lambda_limit,
                tol: cfg.tolerance.unwrap_or(0.10),
            }
        }
        ExperimentKind::Sparse => {
            let (lower, upper) = sparse_fisher_bounds(gamma, cfg.eta.unwrap_or(1.0))?;
            FamilyLimit::FisherBand {
                lower,
                upper,
                slack: cfg.slack.unwrap_or(0.2),
            }
        }
        _ => FamilyLimit::None(String::new()),
    })
}

fn model_family(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<()> {
    let mut params_t = Table::new(
        "params",
        &[
            "seed",
            "j_pi",
            "j_pi_se",
            "v_pi",
            "lambda_sigma",
            "provenance",
        ],
    );
    let mut curve_t = Table::new(
        "noise_curve",
        &[
            "seed",
            "sigma2",
            "train",
            "train_se",
            "j",
            "jprime",
            "lower_bound",
            "upper_bound",
            "regime_label",
        ],
    );
    let mut est_t = Table::new(
        "estimators",
        &[
            "model",
            "estimator",
            "sigma2",
            "train",
            "train_se",
            "cost",
            "cost_se",
            "cross",
            "cross_se",
            "cost_lower_bound",
            "seed",
        ],
    );
    let mc_note = format!("Monte Carlo tolerance {MC_SIGMAS} standard errors");
    curve_t.comment(format!(
        "sandwich tolerance {EXACT_SLACK:e} relative (exact), {mc_note}"
    ));
    curve_t.comment(
        "monotonicity slack 1e-12 relative (exact), 4 combined standard errors (Monte Carlo)",
    );

    let mut collected: Vec<InfoParams<f64>> = Vec::new();
    for s in 0..cfg.seeds as u64 {
        let model = build_model(cfg, out, s, cfg.sigma2[0])?;
        let fisher_seed = derive_seed(cfg.seed, Purpose::Fisher, s);
        let is_mc = matches!(model.prior(), PriorSpec::SparseMixture { .. });
        let params = compute_info_params_with(
            &model,
            McOptions {
                reps: cfg.reps,
                seed: fisher_seed,
            },
        )?;
        if is_mc {
            out.seed(
                &cfg.name,
                format!("J at zero noise, replicate {s}"),
                fisher_seed,
                format!("0..{}", cfg.reps),
            );
        }
        params_t.push(vec![
            s.into(),
            params.j_pi.into(),
            params.j_pi_stderr.into(),
            params.v_pi.into(),
            params.lambda_sigma.into(),
            params.provenance.to_string().into(),
        ]);
        collected.push(params);

        let curve_seed = derive_seed(cfg.seed, Purpose::NoiseCurve, s);
        let curve = noise_curve_with(
            &model,
            &cfg.sigma2,
            true,
            McOptions {
                reps: cfg.reps,
                seed: curve_seed,
            },
        )?;
        if is_mc {
            for i in 0..cfg.sigma2.len() as u64 {
                out.seed(
                    &cfg.name,
                    format!("noise curve point {i}, replicate {s}"),
                    curve_seed.wrapping_add(i),
                    format!("0..{}", cfg.reps),
                );
            }
        }
        let jprime = curve.jprime.clone().unwrap_or_default();
        for (i, &t) in curve.grid.iter().enumerate() {
            let (lo, hi) = bayes_train_bounds(&params, t);
            let train = curve.train[i];
            let slack = if curve.provenance == Provenance::MonteCarlo {
                let hi_se = t * t * params.j_pi_stderr / (1.0 + t * params.j_pi).powi(2);
                MC_SIGMAS * (curve.train_se[i].powi(2) + hi_se.powi(2)).sqrt()
            } else {
                EXACT_SLACK * train
            };
            out.check(lo <= train + slack && train <= hi + slack, || {
                format!("seed {s}, sigma2 {t:e}: train {train:e} outside [{lo:e}, {hi:e}]")
            });
            curve_t.push(vec![
                s.into(),
                t.into(),
                train.into(),
                curve.train_se[i].into(),
                curve.j[i].into(),
                jprime[i].into(),
                lo.into(),
                hi.into(),
                classify_regime(&params, t).label().into(),
            ]);
        }
        let mono = check_monotonicity(&curve);
        out.check(mono.is_clean(), || {
            format!("seed {s}: monotonicity violations {mono:?}")
        });

        if !cfg.estimators.is_empty() {
            estimator_rows(cfg, out, &model, &params, s, &mut est_t)?;
        }
    }

    let count = collected.len() as f64;
    let mean = |f: fn(&InfoParams<f64>) -> f64| collected.iter().map(f).sum::<f64>() / count;
    let (j, v, lambda) = (mean(|p| p.j_pi), mean(|p| p.v_pi), mean(|p| p.lambda_sigma));
    params_t.comment(format!(
        "seed means: j_pi {j:.10e}, v_pi {v:.10e}, lambda_sigma {lambda:.10e}"
    ));
    match family_limit(cfg)? {
        FamilyLimit::Point {
            j: jl,
            v: vl,
            lambda: ll,
            tol,
        } => {
            params_t.comment(format!(
                "limits: j {jl:.10e}, v {vl:.10e}, lambda {ll:.10e}; tolerance {tol} relative"
            ));
            for (label, got, want) in [
                ("j_pi", j, jl),
                ("v_pi", v, vl),
                ("lambda_sigma", lambda, ll),
            ] {
                out.check(relative(got, want) <= tol, || {
                    format!("mean {label} {got:.6} differs from limit {want:.6} by more than {tol}")
                });
            }
        }
        FamilyLimit::FisherBand {
            lower,
            upper,
            slack,
        } => {
            params_t.comment(format!(
                "Fisher bounds: lower {lower:.10e}, upper {upper:.10e}; accepted band [{}, {}]",
                lower * (1.0 - slack),
                upper * (1.0 + slack)
            ));
            out.check(
                j >= lower * (1.0 - slack) && j <= upper * (1.0 + slack),
                || format!("mean j_pi {j:.6} outside [{lower:.6}, {upper:.6}] with slack {slack}"),
            );
        }
        FamilyLimit::None(note) => {
            if !note.is_empty() {
                params_t.comment(note);
            }
        }
    }

    out.tables.push(params_t);
    out.tables.push(curve_t);
    if !cfg.estimators.is_empty() {
        est_t.comment(format!(
            "cost >= cost_lower_bound - {MC_SIGMAS} se; bayes cost and every cross term within {MC_SIGMAS} se of 0"
        ));
        out.tables.push(est_t);
    }
    Ok(())
}

fn estimator_rows(
    cfg: &ExperimentConfig,
    out: &mut ExperimentOutcome,
    model: &ModelInstance<f64>,
    params: &InfoParams<f64>,
    replicate: u64,
    table: &mut Table,
) -> Result<()> {
    let refs: Vec<&dyn Estimator<f64>> = cfg
        .estimators
        .iter()
        .map(|e| e as &dyn Estimator<f64>)
        .collect();
    for (i, &s2) in cfg.cost_sigma2.iter().enumerate() {
        let m = model.with_sigma2(s2)?;
        let seed = derive_seed(cfg.seed, Purpose::Estimators, replicate * 1_000 + i as u64);
        out.seed(
            &cfg.name,
            format!("estimators at sigma2 {s2:e}, replicate {replicate}"),
            seed,
            format!("0..{}", cfg.reps),
        );
        for r in evaluate_estimators(&m, &refs, cfg.reps, seed)? {
            let lb = cost_lower_bound(params, s2, r.train.value);
            out.check(r.cost.value >= lb - MC_SIGMAS * r.cost.stderr, || {
                format!(
                    "{} at sigma2 {s2:e}: cost {:e} below bound {lb:e}",
                    r.name, r.cost.value
                )
            });
            out.check(r.cross.within(0.0, MC_SIGMAS), || {
                format!(
                    "{} at sigma2 {s2:e}: cross term {:e} ± {:e}",
                    r.name, r.cross.value, r.cross.stderr
                )
            });
            if r.name == "bayes" {
                out.check(r.cost.within(0.0, MC_SIGMAS), || {
                    format!("bayes cost {:e} is not zero", r.cost.value)
                });
            }
            table.push(vec![
                m.descriptor().into(),
                r.name.clone().into(),
                s2.into(),
                r.train.value.into(),
                r.train.stderr.into(),
                r.cost.value.into(),
                r.cost.stderr.into(),
                r.cross.value.into(),
                r.cross.stderr.into(),
                lb.into(),
                seed.into(),
            ]);
        }
    }
    Ok(())
}

fn lowrank_exact(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<()> {
    let n = cfg.n.unwrap_or(1);
    let rho = cfg.r.unwrap_or(0) as f64 / n as f64;
    let tol = cfg.tolerance.unwrap_or(0.01);
    let models = (0..cfg.seeds as u64)
        .map(|s| build_model(cfg, out, s, cfg.sigma2[0]))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "train_limit",
        &[
            "sigma2",
            "train_mean",
            "train_sd",
            "closed_form",
            "expansion",
            "rel_error_closed",
            "rel_error_expansion",
        ],
    );
    table.comment(format!(
        "rho {rho}; seeds {}; tolerance {tol} relative to the closed form",
        cfg.seeds
    ));
    for &s2 in &cfg.sigma2 {
        let trains = models
            .iter()
            .map(|m| train_error_exact(&m.with_sigma2(s2)?))
            .collect::<Result<Vec<f64>>>()?;
        let k = trains.len() as f64;
        let mean = trains.iter().sum::<f64>() / k;
        let sd = if trains.len() > 1 {
            (trains.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let limit = exact_lowrank_train_limit(rho, s2)?;
        let (e_closed, e_exp) = (relative(mean, limit.train), relative(mean, limit.expansion));
        out.check(e_closed <= tol, || {
            format!(
                "sigma2 {s2:e}: mean train {mean:e} vs closed form {:e} ({e_closed:e})",
                limit.train
            )
        });
        table.push(vec![
            s2.into(),
            mean.into(),
            sd.into(),
            limit.train.into(),
            limit.expansion.into(),
            e_closed.into(),
            e_exp.into(),
        ]);
    }
    out.tables.push(table);
    Ok(())
}

/// Checks on the noise sweep of the scalar mixture, shared with the
/// acceptance suite. Returns the interior extrema of `Train/t`.
pub fn scalar_sweep_checks(table: &ScalarCurves<f64>) -> (bool, bool, Vec<f64>) {
    let slack = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs());
    let train_up = table
        .train
        .windows(2)
        .all(|w| w[1] >= w[0] - slack(w[0], w[1]));
    let ratio_down = table
        .train_over_t2
        .windows(2)
        .all(|w| w[1] <= w[0] + slack(w[0], w[1]));
    let (lo, hi) = (table.t[0], table.t[table.len() - 1]);
    let extrema = ScalarCurves::interior_extrema(&table.train_over_t, &table.t, lo, hi)
        .into_iter()
        .map(|i| table.t[i])
        .collect();
    (train_up, ratio_down, extrema)
}

/// Gaussian case of the small-noise expansion: `J(0) = 1/η`, `J′(0) = −1/η²`.
pub fn merged_gaussian_gap(eta: f64) -> Result<(f64, f64)> {
    let check: Sigma6Check<f64> = sigma6_expansion_check(&ScalarMixture::merged(eta)?)?;
    Ok((
        relative(check.j0, 1.0 / eta),
        relative(check.jprime0, -1.0 / (eta * eta)),
    ))
}

fn scalar(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<()> {
    let eta = cfg.eta.unwrap_or(0.05);
    let mix = ScalarMixture::new(eta)?;
    let sweep = figure2_curves(&mix, &cfg.t)?;
    let (train_up, ratio_down, extrema) = scalar_sweep_checks(&sweep);
    out.check(train_up, || "Train is not non-decreasing in t".into());
    out.check(ratio_down, || "Train/t^2 is not non-increasing in t".into());
    if cfg.require_extremum {
        out.check(!extrema.is_empty(), || {
            "Train/t has no interior extremum".into()
        });
    }
    let mut curves = Table::new(
        "curves",
        &["t", "train", "train_over_t", "train_over_t2", "j", "jprime"],
    );
    curves.comment(format!(
        "two-point mixture, eta {eta}; deterministic Gauss-Hermite quadrature"
    ));
    curves.comment("monotonicity slack 1e-12 relative");
    curves.comment(format!(
        "interior extrema of train_over_t at t = {extrema:?}"
    ));
    for i in 0..sweep.len() {
        curves.push(vec![
            sweep.t[i].into(),
            sweep.train[i].into(),
            sweep.train_over_t[i].into(),
            sweep.train_over_t2[i].into(),
            sweep.j[i].into(),
            sweep.jprime[i].into(),
        ]);
    }
    out.tables.push(curves);

    let mut mmse_t = Table::new(
        "mmse_derivative",
        &["snr", "analytic", "finite_difference", "relative_gap"],
    );
    mmse_t.comment("tolerance 1e-5 relative");
    for &snr in &cfg.snr {
        let c = mmse_derivative_check(&mix, snr)?;
        let gap = c.relative_gap();
        out.check(gap <= 1e-5, || {
            format!("mmse derivative gap {gap:e} at snr {snr}")
        });
        mmse_t.push(vec![
            snr.into(),
            c.analytic.into(),
            c.finite_difference.into(),
            gap.into(),
        ]);
    }
    out.tables.push(mmse_t);

    let check: Sigma6Check<f64> = sigma6_expansion_check(&mix)?;
    let (gj, gjp) = merged_gaussian_gap(eta)?;
    out.check(check.max_t_valid >= 1e-4, || {
        format!("expansion valid only up to t = {:e}", check.max_t_valid)
    });
    out.check(gj <= 1e-9 && gjp <= 1e-9, || {
        format!("Gaussian expansion gaps {gj:e}, {gjp:e}")
    });
    let mut exp_t = Table::new("expansion", &["t", "relative_residual"]);
    exp_t.comment(format!(
        "j0 {:.16e}; jprime0 {:.16e}",
        check.j0, check.jprime0
    ));
    exp_t.comment(format!(
        "max_t_valid {:e} (required >= 1e-4); pointwise tolerance 0.05",
        check.max_t_valid
    ));
    exp_t.comment(format!(
        "Gaussian case relative gaps {gj:e} {gjp:e} (tolerance 1e-9)"
    ));
    for (t, r) in check.grid.iter().zip(&check.relative_residual) {
        exp_t.push(vec![(*t).into(), (*r).into()]);
    }
    out.tables.push(exp_t);
    Ok(())
}

fn rmt_convergence(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<()> {
    let gamma = cfg.gamma.unwrap_or(4.0);
    let mut families: Vec<(&str, f64)> = vec![("isotropic", isotropic_limits(gamma)?.1)];
    if let Some(rho) = cfg.rho {
        families.push((
            "lowrank",
            lowrank_quadratic_root(gamma, rho, cfg.eta.unwrap_or(1.0)),
        ));
    }
    let mut table = Table::new(
        "convergence",
        &["family", "n", "seed", "j_pi", "j_limit", "rel_error"],
    );
    table.comment(
        "criterion: mean relative error at the largest n is at most twice that at the smallest n",
    );
    let mut counter = 0u64;
    for &(family, limit) in &families {
        let mut mean_errors = Vec::new();
        for &n in &cfg.sizes {
            let d = (gamma * n as f64).round() as usize;
            let mut total = 0.0;
            for s in 0..cfg.seeds as u64 {
                let spec = match family {
                    "isotropic" => PriorSpec::isotropic(d)?,
                    _ => {
                        let r = ((cfg.rho.unwrap_or(1.0) * n as f64).round() as usize).clamp(1, d);
                        PriorSpec::low_rank(d, r, cfg.eta.unwrap_or(1.0))?
                    }
                };
                let seed = derive_seed(cfg.seed, Purpose::Design, counter);
                counter += 1;
                out.seed(
                    &cfg.name,
                    format!("{family} design n={n}, replicate {s}"),
                    seed,
                    "0",
                );
                let design = Arc::new(make_design::<f64>(n, d, cfg.entries, seed)?);
                let j = compute_info_params(&ModelInstance::new(design, spec, 1.0)?)?.j_pi;
                let err = relative(j, limit);
                total += err;
                table.push(vec![
                    family.into(),
                    n.into(),
                    s.into(),
                    j.into(),
                    limit.into(),
                    err.into(),
                ]);
            }
            mean_errors.push(total / cfg.seeds as f64);
        }
        let (first, last) = (mean_errors[0], mean_errors[mean_errors.len() - 1]);
        table.comment(format!("{family}: mean relative errors {mean_errors:?}"));
        out.check(last <= 2.0 * first, || {
            format!("{family}: error {last:e} at the largest n vs {first:e}")
        });
    }
    out.tables.push(table);

    let nu = match (&cfg.nu, cfg.rho) {
        (Some(nu), _) => nu.clone(),
        (None, Some(rho)) => PopulationSpectrum::low_rank(gamma, rho, cfg.eta.unwrap_or(1.0))?,
        (None, None) => PopulationSpectrum::dirac(1.0),
    };
    let mut trace = Table::new("stieltjes", &["z", "m", "iterations", "residual"]);
    let atoms: Vec<String> = nu.atoms().iter().map(|(v, w)| format!("{v}:{w}")).collect();
    trace.comment(format!(
        "population spectrum {}; gamma {gamma}",
        atoms.join(" ")
    ));
    match spectral_edges(&nu, gamma) {
        Ok(e) => trace.comment(format!(
            "edges lambda_minus {:.12e}, lambda_plus {:.12e}; interior roots {:?}",
            e.lambda_minus,
            e.lambda_plus,
            e.interior()
        )),
        Err(e) => trace.comment(format!("edges unavailable: {e}")),
    }
    for &z in &cfg.z {
        let sol = solve_stieltjes(&nu, gamma, z)?;
        trace.push(vec![
            z.into(),
            sol.m.into(),
            sol.iterations.into(),
            sol.residual.into(),
        ]);
    }
    out.tables.push(trace);
    Ok(())
}

/// A random Gaussian-prior model used by the bounds audit and the acceptance
/// suite: `n ∈ [20, n_max]`, `γ ∈ [2, 4]`, isotropic or low-rank with
/// `ρ ∈ [1, γ]` and `η ∈ [0.1, 1]`. The ranges keep the pushforward spectrum
/// inside `[1e-2, 10]` so that both noise asymptotics are visible at
/// `σ² = 1e-6` and `σ² = 1e4`.
pub fn random_gaussian_model(
    seed: u64,
    index: u64,
    n_max: usize,
    sigma2: f64,
) -> Result<ModelInstance<f64>> {
    let mut rng = memlab_core::rng::replicate_stream(derive_seed(seed, Purpose::Models, index), 0);
    let n = rng.random_range(20..=n_max.max(20));
    let gamma = rng.random_range(2.0..=4.0);
    let d = (gamma * n as f64).round() as usize;
    let spec = if rng.random_bool(1.0 / 3.0) {
        PriorSpec::isotropic(d)?
    } else {
        let rho = rng.random_range(1.0..=gamma);
        let r = ((rho * n as f64).round() as usize).clamp(1, d);
        PriorSpec::low_rank(d, r, rng.random_range(0.1..=1.0))?
    };
    let design_seed = rng.next_u64();
    let design = Arc::new(make_design::<f64>(
        n,
        d,
        memlab_core::EntryLaw::Gaussian,
        design_seed,
    )?);
    ModelInstance::new(design, spec, sigma2)
}

/// Noise-asymptotic errors of a Gaussian model: `|Train/σ⁴ − J|/J` at
/// `σ² = 1e-6` and `|σ² − Train − V|` at `σ² = 1e4`.
pub fn noise_asymptotic_errors(
    model: &ModelInstance<f64>,
    params: &InfoParams<f64>,
) -> Result<(f64, f64)> {
    let low = 1e-6;
    let t_low = train_error_exact(&model.with_sigma2(low)?)?;
    let high = 1e4;
    let t_high = train_error_exact(&model.with_sigma2(high)?)?;
    Ok((
        relative(t_low / (low * low), params.j_pi),
        (high - t_high - params.v_pi).abs(),
    ))
}

fn bounds_audit(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<()> {
    let mut audit = Table::new(
        "audit",
        &[
            "model",
            "descriptor",
            "sigma2",
            "train",
            "lower_bound",
            "upper_bound",
            "jprime",
            "regime_label",
        ],
    );
    audit.comment(format!("sandwich tolerance {EXACT_SLACK:e} relative"));
    let mut asym = Table::new(
        "asymptotics",
        &[
            "model",
            "descriptor",
            "j_pi",
            "v_pi",
            "low_noise_rel_error",
            "high_noise_abs_error",
        ],
    );
    asym.comment("low noise sigma2 1e-6: tolerance 1e-3 relative; high noise sigma2 1e4: tolerance 1e-3 absolute");
    let mut violations = 0usize;
    for i in 0..cfg.models as u64 {
        let model = random_gaussian_model(cfg.seed, i, cfg.n_max, cfg.sigma2[0])?;
        out.seed(
            &cfg.name,
            format!("random model {i}"),
            derive_seed(cfg.seed, Purpose::Models, i),
            "0",
        );
        let params = compute_info_params(&model)?;
        let eig = model.pushforward_eigen().values.as_slice().to_vec();
        let descriptor = model.descriptor();
        for &t in &cfg.sigma2 {
            let train = train_error_exact(&model.with_sigma2(t)?)?;
            let (lo, hi) = bayes_train_bounds(&params, t);
            let ok = lo <= train * (1.0 + EXACT_SLACK) && train <= hi * (1.0 + EXACT_SLACK);
            if !ok {
                violations += 1;
            }
            out.check(ok, || {
                format!("model {i}, sigma2 {t:e}: train {train:e} outside [{lo:e}, {hi:e}]")
            });
            audit.push(vec![
                i.into(),
                descriptor.clone().into(),
                t.into(),
                train.into(),
                lo.into(),
                hi.into(),
                gaussian_fisher_derivative(&eig, t).into(),
                classify_regime(&params, t).label().into(),
            ]);
        }
        let (low, high) = noise_asymptotic_errors(&model, &params)?;
        out.check(low <= 1e-3, || {
            format!("model {i}: low-noise relative error {low:e}")
        });
        out.check(high <= 1e-3, || {
            format!("model {i}: high-noise error {high:e}")
        });
        asym.push(vec![
            i.into(),
            descriptor.into(),
            params.j_pi.into(),
            params.v_pi.into(),
            low.into(),
            high.into(),
        ]);
    }
    audit.comment(format!("violations: {violations}"));
    out.tables.push(audit);
    out.tables.push(asym);
    Ok(())
}
