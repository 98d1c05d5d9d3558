//! The numbered validation suite shared by the acceptance tests and the
//! command-line `verify` subcommand.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::dynamics::{
    check_kasner, d_residual, h_residual, kasner_radii, kasner_solution, kl_exponents,
    lambda_from_cosmological, lambda_solution, KlParameter, LambdaTerm, Sign,
};
use crate::error::{Error, Result};
use crate::estimate::{
    chernoff_tail, cumulant_expectation, default_beta_grid, expected_scalar_deviation,
    hoeffding_bound, kl_alternative_bound, lyapunov_from_series, markov_bound, maximal_bound,
    perturbed_norm_ensemble, stable_class_moment, stable_class_moment_mc, stable_class_residual,
    stable_class_residual_mc, stable_class_sup_tail, Convention, GrowthLaw,
};
use crate::exec::Execution;
use crate::geometry::{KasnerExponents, OperatorCoefficients, Radii, TimeGrid};
use crate::numeric::{adaptive_simpson, fd_derivatives, linear_fit, splitmix64};
use crate::pulse::{attractor, constant_norm, gaussian_pulse_integral, perturbed_radii, ConstantPulse, GaussianPulse};
use crate::randfield::{EnsembleSpec, Kernel, NoiseMode};
use crate::stochavg::{
    averaged_observables, averaged_with_preexisting_lambda, gbm_lce_experiment,
    mc_averaged_residual, moment_bound_check, white_noise_divergence_scan, BaseTrajectory,
    EvaluationForm, GbmConvention, PerturbedTrajectory,
};

pub const CHECK_COUNT: u8 = 18;

/// Inputs shared by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Multiplies every ensemble size (floored at 100 paths).
    pub scale: f64,
    /// Negative control: inflate the induced-constant prediction by 50%.
    pub corrupt_lambda: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        Self { seed, scale: 1.0, corrupt_lambda: false, exec: Execution::default() }
    }

    fn size(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(100)
    }

    fn seed_for(&self, id: u8, case: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(u64::from(id) << 32 | case))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    pub reports: Vec<Value>,
}

impl CheckResult {
    fn new(id: u8, name: &str) -> Self {
        Self { id, name: name.into(), passed: true, detail: String::new(), metrics: BTreeMap::new(), reports: Vec::new() }
    }

    fn metric(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    fn require(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(what.as_ref());
        }
    }

    fn report<T: Serialize>(&mut self, r: &T) {
        self.reports.push(serde_json::to_value(r).unwrap_or(Value::Null));
    }

    fn note(&mut self, s: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(s.as_ref());
    }

    /// `[PASS] 06 name: detail`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:02} {}{}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            if self.detail.is_empty() { "" } else { ": " },
            self.detail
        )
    }
}

pub fn check_name(id: u8) -> &'static str {
    match id {
        1 => "kasner-exactness",
        2 => "kl-parametrization",
        3 => "cosmological-constant",
        4 => "pulse-closed-form",
        5 => "constant-pulse",
        6 => "induced-lambda-static",
        7 => "induced-lambda-dynamical",
        8 => "preexisting-lambda",
        9 => "cumulant-vs-mc",
        10 => "growth-asymptote",
        11 => "gbm-lce",
        12 => "white-noise-divergence",
        13 => "bound-suite",
        14 => "stable-class",
        15 => "moment-bound",
        16 => "kl-parseval",
        17 => "averaged-observables",
        18 => "determinism",
        _ => "unknown",
    }
}

/// Run one check. Errors inside a check turn into a failure with the error text.
pub fn run_check(id: u8, cfg: &SuiteConfig) -> CheckResult {
    let mut r = CheckResult::new(id, check_name(id));
    let out = match id {
        1 => kasner_exactness(&mut r),
        2 => kl_parametrization(&mut r),
        3 => cosmological_constant(&mut r),
        4 => pulse_closed_form(&mut r),
        5 => constant_pulse(&mut r),
        6 => induced_static(&mut r, cfg),
        7 => induced_dynamical(&mut r, cfg),
        8 => preexisting(&mut r, cfg),
        9 => cumulant_vs_mc(&mut r, cfg),
        10 => growth_asymptote(&mut r, cfg),
        11 => gbm(&mut r, cfg),
        12 => divergence(&mut r, cfg),
        13 => bound_suite(&mut r, cfg),
        14 => stable_class(&mut r, cfg),
        15 => moment_bound(&mut r, cfg),
        16 => kl_parseval(&mut r),
        17 => observables(&mut r, cfg),
        18 => determinism(&mut r, cfg),
        _ => {
            r.require(false, format!("no check numbered {id}"));
            Ok(())
        }
    };
    if let Err(e) = out {
        r.require(false, format!("error: {e}"));
    }
    r
}

pub fn run_checks(ids: &[u8], cfg: &SuiteConfig) -> Vec<CheckResult> {
    ids.iter().map(|id| run_check(*id, cfg)).collect()
}

pub fn all_ids() -> Vec<u8> {
    (1..=CHECK_COUNT).collect()
}

fn kasner_exactness(r: &mut CheckResult) -> Result<()> {
    let coeffs = OperatorCoefficients::einstein();
    let mut worst: f64 = 0.0;
    for p in [vec![-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0], vec![0.0, 0.0, 1.0]] {
        let p = KasnerExponents::new(p)?;
        let a0 = Radii::new(vec![1.3, 0.7, 2.0])?;
        for t in [0.5, 1.0, 2.0, 10.0] {
            let h = h_residual(&kasner_solution(&a0.moduli(), &p, t)?, &coeffs);
            let (a, da, dda) = kasner_radii(&a0, &p, t)?;
            let d = d_residual(&a, &da, &dda, &coeffs)?;
            worst = worst.max(h.abs()).max(d.abs());
        }
    }
    r.metric("max_residual", worst);
    r.require(worst < 1e-9, format!("residual {worst:e} >= 1e-9"));
    Ok(())
}

fn kl_parametrization(r: &mut CheckResult) -> Result<()> {
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let u = 10f64.powf(4.0 * k as f64 / 49.0);
        let c = check_kasner(&kl_exponents(KlParameter::new(u)?));
        worst = worst.max(c.residual);
        r.require(c.valid, format!("u = {u} rejected"));
    }
    let p1 = kl_exponents(KlParameter::new(1.0)?);
    let dev = p1
        .as_slice()
        .iter()
        .zip([-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.metric("max_residual", worst);
    r.metric("u1_deviation", dev);
    r.require(worst < 1e-12, format!("residual {worst:e}"));
    r.require(dev < 1e-15, format!("u = 1 off by {dev:e}"));
    Ok(())
}

fn cosmological_constant(r: &mut CheckResult) -> Result<()> {
    let mut worst: f64 = 0.0;
    for coeffs in [OperatorCoefficients::einstein_diagonal(), OperatorCoefficients::einstein()] {
        for lam in [0.1, 1.0, 4.0] {
            for n in [1, 2, 3, 9] {
                for sign in [Sign::Expanding, Sign::Contracting] {
                    let psi0: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
                    let st = lambda_solution(&psi0, &LambdaTerm::new(lam), sign, 1.7, &coeffs)?;
                    worst = worst.max((h_residual(&st, &coeffs) - lam).abs() / lam);
                }
            }
        }
    }
    let mapped = lambda_from_cosmological(1.0, 3)?.lambda;
    r.metric("max_relative_residual", worst);
    r.metric("lambda_for_Lambda1_n3", mapped);
    r.require(worst < 1e-10, format!("relative residual {worst:e}"));
    r.require((mapped + 2.0).abs() < 1e-15, format!("Lambda = 1, n = 3 gives {mapped}"));
    Ok(())
}

fn pulse_closed_form(r: &mut CheckResult) -> Result<()> {
    let mut worst: f64 = 0.0;
    for a in [-2.0, -0.5, 0.1, 1.0, 3.0] {
        for theta in [0.01, 0.05, 0.1, 0.5, 1.0] {
            for t in [0.0, 0.01, 0.1, 1.0, 5.0] {
                let closed = gaussian_pulse_integral(a, theta, t)?;
                let quad = adaptive_simpson(|s| a * (-s * s / (2.0 * theta * theta)).exp(), 0.0, t, 1e-14);
                worst = worst.max((closed - quad).abs());
            }
        }
    }
    r.metric("max_quadrature_gap", worst);
    r.require(worst < 1e-10, format!("closed form vs quadrature {worst:e}"));
    let a_e = Radii::new(vec![1.0, 0.5, 2.0])?;
    let mut conv: f64 = 0.0;
    for theta in [0.01, 0.1, 0.5] {
        let p = GaussianPulse::new(vec![1.0, -0.7, 2.5], vec![theta; 3])?;
        let star = attractor(&a_e, &p)?;
        let late = perturbed_radii(&a_e, &p, 8.0 * theta)?;
        for (x, y) in late.as_slice().iter().zip(star.as_slice()) {
            conv = conv.max((x - y).abs() / y);
        }
    }
    r.metric("attractor_gap_8_widths", conv);
    r.require(conv < 1e-6, format!("attractor gap {conv:e}"));
    Ok(())
}

fn constant_pulse(r: &mut CheckResult) -> Result<()> {
    let coeffs = OperatorCoefficients::einstein_diagonal();
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for a in [-1.0, 0.25, 0.5, 2.0] {
        for n in [1usize, 2, 3, 5] {
            let psi_e: Vec<f64> = (0..n).map(|i| 0.3 - 0.2 * i as f64).collect();
            let series: Vec<Vec<f64>> =
                (0..n).map(|i| (0..21).map(|k| psi_e[i] + a * (1.0 + k as f64 * dt)).collect()).collect();
            let fd: Vec<(Vec<f64>, Vec<f64>)> = series.iter().map(|s| fd_derivatives(s, dt)).collect();
            let st = crate::geometry::ModuliState::new(
                series.iter().map(|s| s[10]).collect(),
                fd.iter().map(|f| f.0[10]).collect(),
                fd.iter().map(|f| f.1[10]).collect(),
            )?;
            worst = worst.max((h_residual(&st, &coeffs) - n as f64 * a * a).abs());
        }
    }
    r.metric("max_residual_gap", worst);
    r.require(worst < 1e-8, format!("FD residual vs n A^2 off by {worst:e}"));
    let a_e = Radii::new(vec![1.0, 2.0, 0.5])?;
    for a in [0.25, 0.5, 1.0] {
        let times: Vec<f64> = (0..=50).map(|k| 19.0 + 0.02 * k as f64).collect();
        let vals: Vec<f64> =
            times.iter().map(|t| constant_norm(&a_e, ConstantPulse { amplitude: a }, *t) / a_e.norm()).collect();
        let slope = lyapunov_from_series(&times, &vals, 0.0)?;
        let rel = (slope - a).abs() / a;
        r.metric(format!("growth_rel_err_A{a}"), rel);
        r.require(rel < 0.01, format!("A = {a}: fitted exponent {slope}"));
    }
    Ok(())
}

fn corrupt(cfg: &SuiteConfig, v: f64) -> f64 {
    if cfg.corrupt_lambda {
        1.5 * v
    } else {
        v
    }
}

fn ou_grid() -> Result<TimeGrid> {
    TimeGrid::new(0.0, 0.01, 200)
}

fn se_grid() -> Result<TimeGrid> {
    TimeGrid::new(0.0, 0.05, 80)
}

fn score_averaging(
    r: &mut CheckResult,
    cfg: &SuiteConfig,
    label: &str,
    rep: &crate::stochavg::AveragingReport,
) {
    let analytic = rep.base_residual + corrupt(cfg, rep.analytic - rep.base_residual);
    let z = (rep.mc_mean - analytic) / rep.mc_se;
    r.metric(format!("{label}_z"), z);
    r.require(z.abs() <= 3.0, format!("{label}: mean {:.5} vs {:.5} (z = {z:.2})", rep.mc_mean, analytic));
    r.report(rep);
}

fn induced_static(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let coeffs = OperatorCoefficients::einstein();
    let zeta = 0.6;
    let mut case = 0;
    for (kernel, grid, t) in [
        (Kernel::ou(1.0, 0.5)?, ou_grid()?, 1.0),
        (Kernel::squared_exp(1.0, 1.0)?, se_grid()?, 2.0),
    ] {
        for mode in [NoiseMode::Iid, NoiseMode::Shared] {
            for n in 1..=3 {
                case += 1;
                let spec = EnsembleSpec::new(kernel, grid, mode, n, cfg.size(10_000), cfg.seed_for(6, case))?;
                let base = BaseTrajectory::Static { psi_e: (0..n).map(|i| 0.1 * i as f64).collect() };
                let traj = PerturbedTrajectory::new(base, zeta, spec)?;
                let form = EvaluationForm::for_kernel(&kernel);
                let rep = mc_averaged_residual(&traj, &coeffs, t, form, cfg.exec)?;
                score_averaging(r, cfg, &format!("{}_{}_n{n}", kernel.name(), mode.name()), &rep);
            }
        }
    }
    Ok(())
}

fn induced_dynamical(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let coeffs = OperatorCoefficients::einstein_diagonal();
    let zeta = 0.6;
    let mut case = 0;
    for (kernel, grid, t) in [
        (Kernel::ou(1.0, 0.5)?, ou_grid()?, 1.0),
        (Kernel::squared_exp(1.0, 1.0)?, se_grid()?, 2.0),
    ] {
        for mode in [NoiseMode::Iid, NoiseMode::Shared] {
            for n in 1..=3 {
                case += 1;
                let spec = EnsembleSpec::new(kernel, grid, mode, n, cfg.size(10_000), cfg.seed_for(7, case))?;
                let base = BaseTrajectory::Kasner { psi0: vec![0.0; n], p: KasnerExponents::new(vec![1.0; n])? };
                let traj = PerturbedTrajectory::new(base, zeta, spec)?;
                let rep = mc_averaged_residual(&traj, &coeffs, t, EvaluationForm::for_kernel(&kernel), cfg.exec)?;
                score_averaging(r, cfg, &format!("{}_{}_n{n}", kernel.name(), mode.name()), &rep);
            }
        }
    }
    Ok(())
}

fn preexisting(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let coeffs = OperatorCoefficients::einstein();
    let mut case = 0;
    for (kernel, grid, t) in [
        (Kernel::ou(1.0, 0.5)?, ou_grid()?, 1.0),
        (Kernel::squared_exp(1.0, 1.0)?, se_grid()?, 2.0),
    ] {
        for mode in [NoiseMode::Iid, NoiseMode::Shared] {
            for lambda_bar in [0.5, 2.0] {
                case += 1;
                let n = 2;
                let spec = EnsembleSpec::new(kernel, grid, mode, n, cfg.size(10_000), cfg.seed_for(8, case))?;
                let rep = averaged_with_preexisting_lambda(lambda_bar, vec![0.0, 0.3], 0.5, spec, &coeffs, t, cfg.exec)?;
                r.metric(format!("{}_{}_lbar{lambda_bar}_base", kernel.name(), mode.name()), rep.base_residual);
                r.require((rep.base_residual - lambda_bar).abs() < 1e-12, "base residual differs from lambda_bar");
                score_averaging(r, cfg, &format!("{}_{}_lbar{lambda_bar}", kernel.name(), mode.name()), &rep);
            }
        }
    }
    Ok(())
}

/// Ensemble mean of `exp(zeta int_0^{t_k} U)` for the first component.
fn mc_cumulant(spec: &EnsembleSpec, zeta: f64, k: usize, exec: Execution) -> Result<crate::numeric::MeanSe> {
    let sampler = spec.sampler()?;
    let dt = spec.grid.dt();
    Ok(exec.moments(spec.size, 1, |p| {
        let u = sampler.path(p as u64);
        let u = u.component(0);
        let s: f64 = u[..=k].windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
        vec![(zeta * s).exp()]
    })[0])
}

fn cumulant_vs_mc(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let kernel = Kernel::ou(1.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 0.01, 400)?;
    let mut case = 0;
    for (zeta, t) in [(0.5, 4.0), (0.3, 4.0), (1.0, 1.0)] {
        case += 1;
        let double = kernel.integral_variance(t)? / 2.0;
        r.require(zeta * zeta * double <= 1.0, "case outside zeta^2 T <= 1");
        let spec = EnsembleSpec::new(kernel, grid, NoiseMode::Iid, 1, cfg.size(100_000), cfg.seed_for(9, case))?;
        let mc = mc_cumulant(&spec, zeta, grid.index_of(t)?, cfg.exec)?;
        let exact = cumulant_expectation(&spec.simulated_kernel(), zeta, t)?;
        let rel = (mc.mean - exact).abs() / exact;
        r.metric(format!("rel_err_zeta{zeta}_t{t}"), rel);
        r.require(rel < 0.05, format!("zeta = {zeta}, t = {t}: relative error {rel:.4}"));
    }
    Ok(())
}

fn growth_asymptote(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let zeta = 0.1f64.sqrt();
    let mut case = 0;
    for (kernel, dt, target) in [
        (Kernel::ou(1.0, 1.0)?, 0.01f64, 0.5 * zeta * zeta * 1.0),
        (Kernel::squared_exp(1.0, 1.0)?, 0.05, 0.5 * 1.0 * zeta * zeta),
    ] {
        case += 1;
        let steps = (20.0 / dt).round() as usize;
        let grid = TimeGrid::new(0.0, dt, steps)?;
        let spec = EnsembleSpec::new(kernel, grid, NoiseMode::Iid, 1, cfg.size(100_000), cfg.seed_for(10, case))?;
        let idx: Vec<usize> = (0..=20).map(|j| grid.index_of(10.0 + 0.5 * j as f64)).collect::<Result<_>>()?;
        let ens = perturbed_norm_ensemble(&spec, zeta, 1.0, &idx, 1, cfg.exec)?;
        let means = ens.means(1);
        let mc_slope = linear_fit(&ens.times, &means.iter().map(|m| m.ln()).collect::<Vec<_>>())?.slope;
        let sim = spec.simulated_kernel();
        let exact: Vec<f64> =
            ens.times.iter().map(|t| expected_scalar_deviation(&sim, zeta, 1.0, *t).map(f64::ln)).collect::<Result<_>>()?;
        let exact_slope = linear_fit(&ens.times, &exact)?.slope;
        let half = GrowthLaw::new(sim, zeta, 1.0, 1, Convention::HalfTriangle)?.rate();
        let full = GrowthLaw::new(sim, zeta, 1.0, 1, Convention::Exact)?.rate();
        let name = kernel.name();
        r.metric(format!("{name}_mc_slope"), mc_slope);
        r.metric(format!("{name}_target_rate"), target);
        r.metric(format!("{name}_exact_window_slope"), exact_slope);
        r.metric(format!("{name}_half_triangle_rate"), half);
        r.metric(format!("{name}_exact_rate"), full);
        let rel = (mc_slope - target).abs() / target;
        let rel_exact = (mc_slope - exact_slope).abs() / exact_slope;
        r.require(rel < 0.10, format!("{name}: slope {mc_slope:.4} vs rate {target:.4} ({:.0}% off)", 100.0 * rel));
        r.note(format!(
            "{name}: slope vs exact curve {:.1}% off, asymptote zeta^2 int J = {full:.4}",
            100.0 * rel_exact
        ));
    }
    Ok(())
}

fn gbm(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let n = cfg.size(10_000);
    let mut case = 0;
    for (alpha, zeta) in [(0.5, 0.5), (1.0, 1.0), (0.2, 1.5)] {
        case += 1;
        let rep = gbm_lce_experiment(1.0, alpha, zeta, GbmConvention::Decaying, 10.0, 500, n, cfg.seed_for(11, case), cfg.exec)?;
        r.metric(format!("decaying_a{alpha}_z{zeta}_z_score"), rep.z_score);
        r.require(rep.z_score.abs() <= 3.0, format!("alpha = {alpha}, zeta = {zeta}: z = {:.2}", rep.z_score));
        r.report(&rep);
    }
    for (alpha, zeta) in [(0.1, 1.0), (1.0, 0.5), (0.3, 1.0), (0.6, 1.0)] {
        case += 1;
        let rep = gbm_lce_experiment(1.0, alpha, zeta, GbmConvention::Growing, 50.0, 500, n, cfg.seed_for(11, case), cfg.exec)?;
        let want = alpha - 0.5 * zeta * zeta < 0.0;
        r.require(rep.mc_stable == want, format!("alpha = {alpha}, zeta = {zeta}: verdict mismatch"));
        r.metric(format!("growing_a{alpha}_z{zeta}_mc_lce"), rep.mc_lce);
        r.report(&rep);
    }
    Ok(())
}

fn divergence(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let sigmas = [1.0, 0.5, 0.25, 0.125];
    let scan = white_noise_divergence_scan(&sigmas, 1.0, 0.5, 2, NoiseMode::Iid)?;
    let slope = scan.slope.unwrap_or(f64::NAN);
    r.metric("slope", slope);
    r.require((slope + 1.0).abs() <= 0.05, format!("log-log slope {slope}"));
    let coeffs = OperatorCoefficients::einstein();
    let mut mc = Vec::new();
    for (j, s) in sigmas.iter().enumerate() {
        let grid = TimeGrid::new(0.0, s / 20.0, 40)?;
        let spec = EnsembleSpec::new(Kernel::ou(1.0, *s)?, grid, NoiseMode::Iid, 2, cfg.size(10_000), cfg.seed_for(12, j as u64))?;
        let traj = PerturbedTrajectory::new(BaseTrajectory::Static { psi_e: vec![0.0; 2] }, 0.5, spec)?;
        let rep = mc_averaged_residual(&traj, &coeffs, grid.t_end(), EvaluationForm::Weak, cfg.exec)?;
        r.metric(format!("mc_sigma{s}_z"), rep.z_score);
        r.require(rep.within(3.0), format!("varsigma = {s}: MC z = {:.2}", rep.z_score));
        mc.push((s.ln(), rep.mc_mean.ln()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = mc.into_iter().unzip();
    let mc_slope = linear_fit(&x, &y)?.slope;
    r.metric("mc_slope", mc_slope);
    r.report(&scan);
    Ok(())
}

fn bound_suite(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let n = cfg.size(10_000);
    let exec = cfg.exec;
    // positive synthetic ensemble a^E exp(zeta int_0^2 U)
    let kernel = Kernel::ou(1.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 0.02, 100)?;
    let spec = EnsembleSpec::new(kernel, grid, NoiseMode::Iid, 1, n, cfg.seed_for(13, 1))?;
    let sampler = spec.sampler()?;
    let zeta = 0.5;
    let x: Vec<f64> = exec.map(n, |p| {
        let u = sampler.path(p as u64);
        let s: f64 = u.component(0).windows(2).map(|w| 0.01 * (w[0] + w[1])).sum();
        (zeta * s).exp()
    });
    let mean = cumulant_expectation(&spec.simulated_kernel(), zeta, 2.0)?;
    let mut reports = Vec::new();
    for l in [1.5, 2.0, 4.0] {
        reports.push(markov_bound(mean, &x, l * mean)?);
    }
    for l in [0.25, 0.5, 0.8] {
        reports.push(chernoff_tail(&x, l * mean, &default_beta_grid())?);
    }

    // bounded iid components a^E exp(zeta tanh U_i)
    let m = 16;
    let grid1 = TimeGrid::new(0.0, 0.1, 1)?;
    let spec = EnsembleSpec::new(kernel, grid1, NoiseMode::Iid, m, n, cfg.seed_for(13, 2))?;
    let sampler = spec.sampler()?;
    let zeta_b = 1.0;
    let draws: Vec<Vec<f64>> = exec.map(n, |p| {
        let path = sampler.path(p as u64);
        (0..m).map(|i| (zeta_b * path.component(i)[1].tanh()).exp()).collect()
    });
    let j0 = spec.simulated_kernel().j0()?;
    let density = |u: f64| (-u * u / (2.0 * j0)).exp() / (2.0 * std::f64::consts::PI * j0).sqrt();
    let span = 12.0 * j0.sqrt();
    let expected = adaptive_simpson(|u| (zeta_b * u.tanh()).exp() * density(u), -span, span, 1e-12);
    let lo = vec![(-zeta_b).exp(); m];
    let hi = vec![zeta_b.exp(); m];
    for l in [0.05, 0.1, 0.2] {
        reports.push(hoeffding_bound(&draws, &lo, &hi, l, expected)?);
    }

    // 64 standard normals
    let spec = EnsembleSpec::new(kernel, grid1, NoiseMode::Iid, 64, n, cfg.seed_for(13, 3))?;
    let sampler = spec.sampler()?;
    let scale = 1.0 / spec.simulated_kernel().j0()?.sqrt();
    let normals: Vec<Vec<f64>> = exec.map(n, |p| {
        let path = sampler.path(p as u64);
        (0..64).map(|i| scale * path.component(i)[1]).collect()
    });
    for l in [2.5, 3.0, 3.5] {
        let (e, t) = maximal_bound(&normals, 1.0, l)?;
        if l == 2.5 {
            r.metric("max64_mean", e.empirical_value);
            r.metric("max64_bound", e.bound_value);
            r.require(e.empirical_value <= (2.0 * 64f64.ln()).sqrt(), "E max of 64 normals above sqrt(2 ln 64)");
            reports.push(e);
        }
        reports.push(t);
    }
    for b in &reports {
        r.require(b.holds, format!("{} violated at {:?}", b.name, b.params.get("L")));
        r.report(b);
    }
    r.metric("reports", reports.len() as f64);
    Ok(())
}

fn stable_class(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let n = cfg.size(100_000);
    let mut case = 0;
    for (kernel, zeta, grid) in [
        (Kernel::ou(1.0, 2.0)?, 0.8, TimeGrid::new(0.0, 0.05, 100)?),
        (Kernel::squared_exp(1.0, 1.0)?, 1.0, TimeGrid::new(0.0, 0.05, 100)?),
    ] {
        case += 1;
        let spec = EnsembleSpec::new(kernel, grid, NoiseMode::Iid, 1, n, cfg.seed_for(14, case))?;
        let analytic = stable_class_moment(&spec.simulated_kernel(), zeta)?;
        let mut est = Vec::new();
        for t in [2.0, 4.0] {
            let mc = stable_class_moment_mc(&spec, zeta, grid.index_of(t)?, cfg.exec)?;
            let rel = (mc.mean - analytic).abs() / analytic;
            r.metric(format!("{}_moment_rel_err_t{t}", kernel.name()), rel);
            r.require(rel < 0.02, format!("{} moment at t = {t} off by {:.2}%", kernel.name(), 100.0 * rel));
            est.push(mc);
        }
        let joint = (est[0].se * est[0].se + est[1].se * est[1].se).sqrt();
        let z = (est[0].mean - est[1].mean) / joint;
        r.metric(format!("{}_stationarity_z", kernel.name()), z);
        r.require(z.abs() <= 3.0, format!("{} moments at t and 2t differ (z = {z:.2})", kernel.name()));
    }

    let se = Kernel::squared_exp(0.7, 0.9)?;
    for (j, n_comp) in [1usize, 3].into_iter().enumerate() {
        let grid = TimeGrid::new(0.0, 0.02, 100)?;
        let spec = EnsembleSpec::new(se, grid, NoiseMode::Iid, n_comp, cfg.size(10_000), cfg.seed_for(14, 10 + j as u64))?;
        let zeta = 0.5;
        let analytic = stable_class_residual(&spec.simulated_kernel(), zeta, n_comp)?;
        let mc = stable_class_residual_mc(&spec, zeta, 50, cfg.exec)?;
        let z = (mc.mean - analytic) / mc.se;
        r.metric(format!("residual_n{n_comp}_z"), z);
        r.require(z.abs() <= 3.0, format!("residual n = {n_comp}: {:.4} vs {analytic:.4} (z = {z:.2})", mc.mean));
    }

    let grid = TimeGrid::new(0.0, 0.01, 1000)?;
    let spec = EnsembleSpec::new(Kernel::ou(1.0, 1.0)?, grid, NoiseMode::Iid, 1, n, cfg.seed_for(14, 20))?;
    let tail = stable_class_sup_tail(&spec, 0.3, 1.0, 5.0, cfg.exec)?;
    r.metric("sup_tail_frequency", tail.frequency);
    r.metric("sup_max_observed", tail.max_observed);
    r.require(tail.frequency < 1e-3, format!("P(sup >= 5 mean) = {}", tail.frequency));
    r.report(&tail);
    Ok(())
}

fn moment_bound(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let psi = [0.6, 0.8, 0.0];
    let mut terminal = true;
    for ell in 1..=3 {
        let rep = moment_bound_check(&psi, 1.0, ell, 1.0, 1.0, 1000, cfg.size(10_000), cfg.seed_for(15, ell.into()), cfg.exec)?;
        r.metric(format!("l{ell}_bound"), rep.bound);
        r.metric(format!("l{ell}_sup_mean"), rep.sup_mean);
        r.metric(format!("l{ell}_terminal_mean"), rep.terminal_mean);
        r.require(rep.holds_sup, format!("l = {ell}: E sup {:.4} > bound {:.4}", rep.sup_mean, rep.bound));
        terminal &= rep.holds_terminal;
        r.report(&rep);
    }
    r.note(if terminal { "terminal moments within the bound" } else { "terminal moments above the bound" });
    Ok(())
}

fn kl_parseval(r: &mut CheckResult) -> Result<()> {
    let grid = TimeGrid::spanning(0.0, 5.0, 255)?;
    for (zeta, n) in [(0.5, 1), (0.2, 3)] {
        let rep = kl_alternative_bound(&Kernel::ou(1.0, 1.0)?, &grid, zeta, 1.0, n)?;
        r.metric(format!("trace_rel_err_zeta{zeta}"), rep.trace_relative_error);
        r.metric(format!("bound_over_estimate_zeta{zeta}"), rep.bound / rep.estimate);
        r.require(rep.trace_relative_error < 0.01, format!("trace error {:.4}", rep.trace_relative_error));
        r.require(rep.holds, format!("bound {} below estimate {}", rep.bound, rep.estimate));
        if zeta == 0.5 {
            let mut brief = rep.clone();
            brief.spectrum.truncate(8);
            r.report(&brief);
        }
    }
    Ok(())
}

fn observables(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let p = KasnerExponents::new(vec![-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0])?;
    let mut case = 0;
    for mode in [NoiseMode::Iid, NoiseMode::Shared] {
        case += 1;
        let spec = EnsembleSpec::new(Kernel::ou(1.0, 0.5)?, ou_grid()?, mode, 3, cfg.size(10_000), cfg.seed_for(17, case))?;
        let traj = PerturbedTrajectory::new(BaseTrajectory::Kasner { psi0: vec![0.0; 3], p: p.clone() }, 0.4, spec)?;
        let rep = averaged_observables(&traj, 1.0, cfg.exec)?;
        let m = mode.name();
        r.require(rep.expansion_identity_holds(), format!("{m}: trace expansion shifted"));
        for c in &rep.kretschmann.candidates {
            r.metric(format!("{m}_kretschmann_{}_z", c.name), c.z_score);
        }
        let supported: Vec<&str> =
            rep.kretschmann.candidates.iter().filter(|c| c.supported).map(|c| c.name.as_str()).collect();
        r.note(format!("{m}: Kretschmann candidates supported: [{}]", supported.join(", ")));
        r.report(&rep);
    }
    Ok(())
}

fn determinism(r: &mut CheckResult, cfg: &SuiteConfig) -> Result<()> {
    let mut small = *cfg;
    small.scale = cfg.scale.min(0.05);
    let ids = [6, 9, 13, 14];
    let mut a_cfg = small;
    a_cfg.exec = Execution::Parallel;
    let mut b_cfg = small;
    b_cfg.exec = Execution::Sequential;
    let json = |c: &SuiteConfig| serde_json::to_string(&run_checks(&ids, c)).map_err(|e| Error::Format(e.to_string()));
    let (a, b, c) = (json(&a_cfg)?, json(&a_cfg)?, json(&b_cfg)?);
    r.metric("bytes", a.len() as f64);
    r.require(a == b, "repeat run differs");
    r.require(a == c, "sequential run differs from parallel run");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_checks_pass() {
        let cfg = SuiteConfig::new(1);
        for id in [1, 2, 3, 4, 5, 12, 16] {
            let c = run_check(id, &cfg);
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn unknown_check_fails() {
        assert!(!run_check(99, &SuiteConfig::new(0)).passed);
    }

    #[test]
    fn corrupted_lambda_is_caught() {
        let mut cfg = SuiteConfig::new(3);
        cfg.scale = 0.2;
        cfg.corrupt_lambda = true;
        assert!(!run_check(6, &cfg).passed);
    }
}
