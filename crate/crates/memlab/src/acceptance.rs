//! The acceptance suite behind `memlab check`.
//!
//! Each criterion returns a [`CriterionResult`]; a criterion fails when its
//! numerical assertion fails or when it exceeds its runtime budget.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use memlab_core::rmt::lowrank_quadratic_root;
use memlab_core::scalar_lab::{log_grid, Sigma6Check};
use memlab_core::{
    bayes_train_bounds, compute_info_params, compute_info_params_with, cost_lower_bound, draw_pair,
    evaluate_estimators, exact_lowrank_train_limit, figure2_curves, fitted_values_tweedie,
    lowrank_limit_params, make_design, mmse_derivative_check, posterior_mean,
    sigma6_expansion_check, solve_stieltjes, sparse_fisher_bounds, train_error_exact,
    BuiltinEstimator, EntryLaw, Estimator, McOptions, ModelInstance, PopulationSpectrum, PriorSpec,
    Result, ScalarMixture,
};
use rand::Rng;

use crate::experiments::{
    merged_gaussian_gap, noise_asymptotic_errors, random_gaussian_model, scalar_sweep_checks,
};

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {} ({:.1}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub budget: Option<Duration>,
    run: fn() -> Result<(bool, String)>,
}

impl Criterion {
    pub fn run(&self) -> CriterionResult {
        let start = Instant::now();
        let outcome = (self.run)();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(budget) = self.budget {
            if elapsed > budget {
                passed = false;
                detail.push_str(&format!("; over the {}s budget", budget.as_secs()));
            }
        }
        CriterionResult {
            id: self.id,
            title: self.title,
            passed,
            detail,
            elapsed,
            budget: self.budget,
        }
    }
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: 1,
            title: "isotropic limits at gamma = 4",
            budget: secs(30),
            run: isotropic_limits,
        },
        Criterion {
            id: 2,
            title: "training-error sandwich",
            budget: secs(10),
            run: sandwich,
        },
        Criterion {
            id: 3,
            title: "noise asymptotics of Train",
            budget: None,
            run: noise_asymptotics,
        },
        Criterion {
            id: 4,
            title: "excess-risk lower bounds for ridge",
            budget: secs(120),
            run: cost_bounds,
        },
        Criterion {
            id: 5,
            title: "low-rank Stieltjes root and regimes",
            budget: secs(5),
            run: lowrank_root,
        },
        Criterion {
            id: 6,
            title: "exact low-rank training error",
            budget: secs(30),
            run: exact_lowrank,
        },
        Criterion {
            id: 7,
            title: "sparse-mixture Fisher bounds",
            budget: secs(120),
            run: sparse_bounds,
        },
        Criterion {
            id: 8,
            title: "scalar noise sweep shape",
            budget: secs(5),
            run: scalar_sweep,
        },
        Criterion {
            id: 9,
            title: "mmse derivative",
            budget: None,
            run: mmse_derivative,
        },
        Criterion {
            id: 10,
            title: "small-noise expansion",
            budget: None,
            run: small_noise_expansion,
        },
        Criterion {
            id: 11,
            title: "Tweedie identity",
            budget: None,
            run: tweedie,
        },
    ]
}

/// Runs every criterion in order, reporting each result as it finishes.
pub fn run_all(mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    criteria()
        .iter()
        .map(|c| {
            let r = c.run();
            report(&r);
            r
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gaussian_model(n: usize, spec: PriorSpec, sigma2: f64, seed: u64) -> Result<ModelInstance<f64>> {
    let design = Arc::new(make_design::<f64>(n, spec.dim(), EntryLaw::Gaussian, seed)?);
    ModelInstance::new(design, spec, sigma2)
}

fn isotropic_limits() -> Result<(bool, String)> {
    let mut sums = [0.0f64; 3];
    for seed in 0..5 {
        let p = compute_info_params(&gaussian_model(200, PriorSpec::isotropic(800)?, 1.0, seed)?)?;
        sums[0] += p.j_pi / 5.0;
        sums[1] += p.v_pi / 5.0;
        sums[2] += p.lambda_sigma / 5.0;
    }
    let errs = [
        rel(sums[0], 4.0 / 3.0),
        rel(sums[1], 1.0),
        rel(sums[2], 9.0),
    ];
    Ok((
        errs.iter().all(|&e| e <= 0.05),
        format!(
            "J {:.4} V {:.4} lambda {:.4}; relative errors {:.2e} {:.2e} {:.2e} (tol 5e-2)",
            sums[0], sums[1], sums[2], errs[0], errs[1], errs[2]
        ),
    ))
}

const AUDIT_SEED: u64 = 2024;

fn audit_models() -> Result<Vec<ModelInstance<f64>>> {
    (0..20)
        .map(|i| random_gaussian_model(AUDIT_SEED, i, 100, 1.0))
        .collect()
}

fn sandwich() -> Result<(bool, String)> {
    let grid = log_grid(1e-6, 1e4, 25);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for model in audit_models()? {
        let params = compute_info_params(&model)?;
        for &t in &grid {
            let train = train_error_exact(&model.with_sigma2(t)?)?;
            let (lo, hi) = bayes_train_bounds(&params, t);
            worst = worst.max((lo - train) / train).max((train - hi) / hi);
            if lo > train * (1.0 + 1e-10) || train > hi * (1.0 + 1e-10) {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations in 500 checks; largest relative excess {worst:.2e}"),
    ))
}

fn noise_asymptotics() -> Result<(bool, String)> {
    let (mut worst_low, mut worst_high) = (0.0f64, 0.0f64);
    for model in audit_models()? {
        let params = compute_info_params(&model)?;
        let (low, high) = noise_asymptotic_errors(&model, &params)?;
        worst_low = worst_low.max(low);
        worst_high = worst_high.max(high);
    }
    Ok((
        worst_low <= 1e-3 && worst_high <= 1e-3,
        format!("worst |Train/s^4 - J|/J {worst_low:.2e} (tol 1e-3); worst |s^2 - Train - V| {worst_high:.2e} (tol 1e-3)"),
    ))
}

fn cost_bounds() -> Result<(bool, String)> {
    let sigma2 = 0.5;
    let model = gaussian_model(50, PriorSpec::isotropic(200)?, sigma2, 2)?;
    let ridges: Vec<BuiltinEstimator> = [0.005, 0.02, 0.1, 0.25, 1.0, 2.5, 5.0, 20.0]
        .iter()
        .map(|&l| BuiltinEstimator::Ridge(l))
        .collect();
    let mut refs: Vec<&dyn Estimator<f64>> = vec![&BuiltinEstimator::Bayes];
    refs.extend(ridges.iter().map(|e| e as &dyn Estimator<f64>));
    let reports = evaluate_estimators(&model, &refs, 100_000, 5)?;
    let params = compute_info_params(&model)?;
    let mut failures = Vec::new();
    let mut tightest = f64::INFINITY;
    for r in &reports[1..] {
        let lb = cost_lower_bound(&params, sigma2, r.train.value);
        tightest = tightest.min((r.cost.value - lb) / r.cost.stderr);
        if r.cost.value < lb - 4.0 * r.cost.stderr {
            failures.push(r.name.clone());
        }
    }
    let bayes = &reports[0].cost;
    let bayes_ok = bayes.value.abs() <= 4.0 * bayes.stderr;
    if !bayes_ok {
        failures.push("bayes".into());
    }
    Ok((
        failures.is_empty(),
        format!(
            "8 ridge levels, reps 1e5; smallest (cost - bound)/se {tightest:.1}; bayes cost {:.1e} ± {:.1e}{}",
            bayes.value,
            bayes.stderr,
            if failures.is_empty() { String::new() } else { format!("; failed: {failures:?}") }
        ),
    ))
}

fn lowrank_root() -> Result<(bool, String)> {
    let mut rng = memlab_core::rng::replicate_stream(55, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let gamma: f64 = rng.random_range(1.1..10.0);
        // the low-rank spectrum needs r ≤ d, i.e. ρ ≤ γ
        let rho: f64 = rng.random_range(0.1..gamma.min(5.0));
        let eta: f64 = rng.random_range(0.01..1.0);
        let nu = PopulationSpectrum::low_rank(gamma, rho, eta)?;
        let fixed = solve_stieltjes(&nu, gamma, 0.0)?.m;
        worst = worst.max(rel(fixed, lowrank_quadratic_root(gamma, rho, eta)));
    }
    // regime asymptotes at η = 1e-4 on a grid clear of the ρ ≈ 1 crossover
    let mut regime_worst: [f64; 3] = [0.0; 3];
    for &gamma in &[2.0, 4.0, 8.0] {
        for &rho in &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0] {
            if rho > gamma {
                continue;
            }
            let lim = lowrank_limit_params(gamma, rho, 1e-4)?;
            let slot = if rho > 1.0 {
                0
            } else if rho < 1.0 {
                1
            } else {
                2
            };
            regime_worst[slot] = regime_worst[slot].max(rel(lim.j_limit, lim.leading_order));
        }
    }
    let ok = worst <= 1e-9
        && regime_worst[0] <= 0.02
        && regime_worst[1] <= 0.10
        && regime_worst[2] <= 0.10;
    Ok((
        ok,
        format!(
            "50 draws: worst root gap {worst:.1e} (tol 1e-9); regime gaps rho>1 {:.1e} (2%), rho<1 {:.1e} (10%), rho=1 {:.1e} (10%)",
            regime_worst[0], regime_worst[1], regime_worst[2]
        ),
    ))
}

fn exact_lowrank() -> Result<(bool, String)> {
    let models = (0..5u64)
        .map(|s| gaussian_model(400, PriorSpec::low_rank(1600, 200, 0.0)?, 0.01, s))
        .collect::<Result<Vec<_>>>()?;
    let mut parts = Vec::new();
    let mut ok = true;
    for &s2 in &[0.01, 0.05] {
        let mean = models
            .iter()
            .map(|m| train_error_exact(&m.with_sigma2(s2)?))
            .sum::<Result<f64>>()?
            / 5.0;
        let expansion = exact_lowrank_train_limit(0.5, s2)?.expansion;
        let e = rel(mean, expansion);
        ok &= e <= 0.01;
        parts.push(format!("s2 {s2}: {mean:.6} vs {expansion:.6} ({e:.1e})"));
    }
    Ok((ok, format!("{} (tol 1e-2)", parts.join("; "))))
}

fn sparse_bounds() -> Result<(bool, String)> {
    let (lower, upper) = sparse_fisher_bounds(4.0f64, 0.1)?;
    let formula_ok = (lower - 11.468).abs() < 5e-4 && (upper - 13.333).abs() < 5e-4;
    let (l6, u6) = sparse_fisher_bounds(1e6f64, 0.1)?;
    let limit_ok = rel(l6, 10.0) <= 1e-4 && rel(u6, 10.0) <= 1e-4;
    let model = gaussian_model(40, PriorSpec::sparse(160, 2, 0.1)?, 1.0, 1)?;
    let p = compute_info_params_with(
        &model,
        McOptions {
            reps: 100_000,
            seed: 3,
        },
    )?;
    let band_ok = p.j_pi >= 0.8 * lower && p.j_pi <= 1.2 * upper;
    Ok((
        formula_ok && limit_ok && band_ok,
        format!(
            "bounds ({lower:.4}, {upper:.4}); gamma=1e6 gaps {:.1e} {:.1e}; MC J {:.3} ± {:.3} in [{:.3}, {:.3}]",
            rel(l6, 10.0),
            rel(u6, 10.0),
            p.j_pi,
            p.j_pi_stderr,
            0.8 * lower,
            1.2 * upper
        ),
    ))
}

fn scalar_sweep() -> Result<(bool, String)> {
    let table = figure2_curves(&ScalarMixture::new(0.05)?, &log_grid(1e-3, 10.0, 200))?;
    let (train_up, ratio_down, extrema) = scalar_sweep_checks(&table);
    Ok((
        train_up && ratio_down && !extrema.is_empty(),
        format!("Train non-decreasing {train_up}; Train/t^2 non-increasing {ratio_down}; Train/t extrema at {extrema:.3?}"),
    ))
}

fn mmse_derivative() -> Result<(bool, String)> {
    let mix = ScalarMixture::new(0.05)?;
    let gaps = [0.1, 1.0, 10.0]
        .iter()
        .map(|&s| Ok(mmse_derivative_check(&mix, s)?.relative_gap()))
        .collect::<Result<Vec<f64>>>()?;
    Ok((
        gaps.iter().all(|&g| g <= 1e-5),
        format!(
            "relative gaps {} at snr 0.1, 1, 10 (tol 1e-5)",
            gaps.iter()
                .map(|g| format!("{g:.1e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ))
}

fn small_noise_expansion() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut ok = true;
    for eta in [0.05, 1.0] {
        let c: Sigma6Check<f64> = sigma6_expansion_check(&ScalarMixture::new(eta)?)?;
        ok &= c.max_t_valid >= 1e-4;
        parts.push(format!("eta {eta}: valid to t = {:.1e}", c.max_t_valid));
    }
    let (gj, gjp) = merged_gaussian_gap(0.05)?;
    ok &= gj <= 1e-9 && gjp <= 1e-9;
    Ok((
        ok,
        format!(
            "{}; Gaussian gaps {gj:.1e} {gjp:.1e} (tol 1e-9)",
            parts.join("; ")
        ),
    ))
}

fn tweedie() -> Result<(bool, String)> {
    let mut failures = 0;
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let model = random_gaussian_model(77, i, 60, 0.05 + 0.1 * i as f64)?;
        for j in 0..10 {
            let (_, y) = draw_pair(&model, 1000 + i, j);
            let via_mean = model.x() * posterior_mean(&model, &y)?;
            let via_score = fitted_values_tweedie(&model, &y)?;
            let ratio = (via_mean - via_score).norm() / y.norm();
            worst = worst.max(ratio);
            if ratio > 1e-8 {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0,
        format!("{failures} failures in 100 pairs; worst gap/|y| {worst:.1e} (tol 1e-8)"),
    ))
}
