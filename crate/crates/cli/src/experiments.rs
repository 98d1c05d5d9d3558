use serde_json::{json, Value};

use kasnerlab::dynamics::{
    check_kasner, d_residual, h_residual, kasner_radii, kasner_solution, LambdaTerm, Sign,
};
use kasnerlab::estimate::{
    bianchi_radii, chernoff_tail, cumulant_expectation, default_beta_grid, default_burn_in,
    gamma_basin, hoeffding_bound, kl_alternative_bound, lyapunov_from_series, markov_bound,
    maximal_bound, perturbed_norm_ensemble, stable_class_moment, stable_class_moment_mc,
    stable_class_residual, stable_class_residual_mc, stable_class_sup_tail, Convention, GrowthLaw,
};
use kasnerlab::geometry::{expansion, kretschmann, shear_sq};
use kasnerlab::numeric::{adaptive_simpson, fd_derivatives, mean_se};
use kasnerlab::pulse::{
    attractor, constant_norm, constant_perturbation, perturbed_norm, perturbed_norm_bound,
    perturbed_radii, pulse_source_term, relaxation_check, ConstantPulse, GaussianPulse,
};
use kasnerlab::randfield::{EnsembleSpec, Kernel, NoiseMode};
use kasnerlab::stochavg::{
    averaged_observables, brownian_increments, gbm_euler_maruyama, gbm_exact, gbm_lce_experiment,
    gbm_milstein, linear_term_means, mc_averaged_residual, BaseTrajectory, EvaluationForm,
    PerturbedTrajectory,
};
use kasnerlab::{Execution, KasnerExponents, ModuliState, Radii};

use crate::config::{BaseKind, Experiment, ExperimentConfig};
use crate::output::Table;
use crate::CliError;

type Outcome = Result<(Table, Value), CliError>;

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    match cfg.experiment {
        Experiment::Kasner => kasner(cfg),
        Experiment::Pulse => pulse(cfg),
        Experiment::Constant => constant(cfg),
        Experiment::McAvg => mc_avg(cfg, exec),
        Experiment::Estimate => estimate(cfg, exec),
        Experiment::Bounds => bounds(cfg, exec),
        Experiment::Bianchi => bianchi(cfg, exec),
        Experiment::Gbm => gbm(cfg, exec),
        Experiment::StableClass => stable_class(cfg, exec),
    }
}

fn spec(cfg: &ExperimentConfig, n: usize, seed_offset: u64) -> Result<EnsembleSpec, CliError> {
    Ok(EnsembleSpec::new(cfg.kernel()?, cfg.grid()?, cfg.mode, n, cfg.size, cfg.seed.wrapping_add(seed_offset))?)
}

fn exponents(cfg: &ExperimentConfig) -> Result<KasnerExponents, CliError> {
    Ok(KasnerExponents::new(cfg.kasner_p.clone())?)
}

/// About `count` evenly spaced grid indices in `[from, len)`.
fn spread(from: usize, len: usize, count: usize) -> Vec<usize> {
    if from >= len {
        return Vec::new();
    }
    let stride = ((len - from) / count.max(1)).max(1);
    (from..len).step_by(stride).collect()
}

fn kasner(cfg: &ExperimentConfig) -> Outcome {
    let p = exponents(cfg)?;
    let coeffs = cfg.coefficients();
    let a0 = Radii::uniform(cfg.a_e, cfg.n)?;
    let grid = cfg.grid()?;
    let mut table = Table::series();
    let (mut max_h, mut max_d) = (0.0f64, 0.0f64);
    for t in grid.times().into_iter().filter(|t| *t > 0.0) {
        let st = kasner_solution(&a0.moduli(), &p, t)?;
        let (a, da, dda) = kasner_radii(&a0, &p, t)?;
        let h = h_residual(&st, &coeffs);
        let d = d_residual(&a, &da, &dda, &coeffs)?;
        max_h = max_h.max(h.abs());
        max_d = max_d.max(d.abs());
        for (i, v) in a.as_slice().iter().enumerate() {
            table.push(t, &format!("a_{}", i + 1), *v, None);
        }
        table.push(t, "kretschmann", kretschmann(&st), None);
        table.push(t, "expansion", expansion(st.dpsi()), None);
        table.push(t, "shear", shear_sq(st.dpsi()), None);
        table.push(t, "h_residual", h, None);
    }
    Ok((table, json!({
        "exponents": p.as_slice(),
        "check": check_kasner(&p),
        "coefficients": coeffs,
        "max_abs_h_residual": max_h,
        "max_abs_d_residual": max_d,
    })))
}

fn pulse(cfg: &ExperimentConfig) -> Outcome {
    let a_e = Radii::uniform(cfg.a_e, cfg.n)?;
    let p = GaussianPulse::isotropic(cfg.pulse_amplitude, cfg.pulse_theta, cfg.n)?;
    let grid = cfg.grid()?;
    let mut table = Table::series();
    for t in grid.times().into_iter().filter(|t| *t >= 0.0) {
        for (i, v) in perturbed_radii(&a_e, &p, t)?.as_slice().iter().enumerate() {
            table.push(t, &format!("a_{}", i + 1), *v, None);
        }
        table.push(t, "norm_deviation", perturbed_norm(&a_e, &p, t)?, None);
        table.push(t, "source_term", pulse_source_term(&p, t, &cfg.coefficients()), None);
    }
    let positive: Vec<f64> = grid.times().into_iter().filter(|t| *t > 0.0).collect();
    let relax = relaxation_check(&exponents(cfg)?, &p, &positive)?;
    Ok((table, json!({
        "attractor": attractor(&a_e, &p)?.as_slice(),
        "asymptotic_displacements": p.asymptotes(),
        "norm_bound": perturbed_norm_bound(&a_e, &p),
        "relaxation": {
            "kasner_exponents": cfg.kasner_p,
            "max_late_deviation": relax.max_late_deviation,
            "max_deviation": relax.max_deviation,
            "crossing_time": relax.crossing_time,
            "tolerance": relax.tolerance,
            "relaxed": relax.relaxed,
        },
    })))
}

fn constant(cfg: &ExperimentConfig) -> Outcome {
    let coeffs = cfg.coefficients();
    let pulse = ConstantPulse { amplitude: cfg.pulse_amplitude };
    let psi_e = vec![cfg.a_e.ln(); cfg.n];
    let a_e = Radii::uniform(cfg.a_e, cfg.n)?;
    let grid = cfg.grid()?;
    let times = grid.times();
    let mut table = Table::series();
    let norms: Vec<f64> = times.iter().map(|t| constant_norm(&a_e, pulse, *t) / a_e.norm()).collect();
    for (t, v) in times.iter().zip(&norms) {
        table.push(*t, "relative_norm", *v, None);
    }
    // residual of the sampled trajectory by finite differences
    let series: Vec<f64> = times.iter().map(|t| psi_e[0] + cfg.pulse_amplitude * t).collect();
    let (d1, d2) = fd_derivatives(&series, grid.dt());
    let mut fd_max_gap: f64 = 0.0;
    let (_, exact) = constant_perturbation(&psi_e, pulse, cfg.t, &coeffs)?;
    for k in 0..times.len() {
        let st = ModuliState::new(vec![series[k]; cfg.n], vec![d1[k]; cfg.n], vec![d2[k]; cfg.n])?;
        let h = h_residual(&st, &coeffs);
        fd_max_gap = fd_max_gap.max((h - exact).abs());
        table.push(times[k], "h_residual", h, None);
    }
    let half = times.len() / 2;
    let positive: Vec<(f64, f64)> =
        times[half..].iter().zip(&norms[half..]).filter(|(_, v)| **v > 0.0).map(|(t, v)| (*t, *v)).collect();
    let (ft, fv): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
    let exponent = lyapunov_from_series(&ft, &fv, 0.0).ok();
    Ok((table, json!({
        "amplitude": cfg.pulse_amplitude,
        "residual": exact,
        "n_amplitude_squared": cfg.n as f64 * cfg.pulse_amplitude.powi(2),
        "fd_max_gap": fd_max_gap,
        "fitted_growth_exponent": exponent,
    })))
}

fn trajectory(cfg: &ExperimentConfig) -> Result<PerturbedTrajectory, CliError> {
    let psi0 = vec![cfg.a_e.ln(); cfg.n];
    let base = match cfg.base {
        BaseKind::Static => BaseTrajectory::Static { psi_e: psi0 },
        BaseKind::Kasner => BaseTrajectory::Kasner { psi0, p: exponents(cfg)? },
        BaseKind::Lambda => {
            BaseTrajectory::lambda(psi0, &LambdaTerm::new(cfg.lambda_bar), Sign::Expanding, &cfg.coefficients())?
        }
    };
    Ok(PerturbedTrajectory::new(base, cfg.zeta, spec(cfg, cfg.n, 0)?)?)
}

fn mc_avg(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let traj = trajectory(cfg)?;
    let coeffs = cfg.coefficients();
    let kernel = traj.ensemble.simulated_kernel();
    let form = EvaluationForm::for_kernel(&kernel);
    let grid = cfg.grid()?;
    let report = mc_averaged_residual(&traj, &coeffs, cfg.t, form, exec)?;
    let mut table = Table::series();
    let first = (1..grid.len()).find(|k| cfg.base != BaseKind::Kasner || grid.t(*k) > 0.0).unwrap_or(grid.len());
    for k in spread(first, grid.len() - 1, 5) {
        let t = grid.t(k);
        let r = mc_averaged_residual(&traj, &coeffs, t, form, exec)?;
        table.push(t, "mc_mean", r.mc_mean, None);
        table.push(t, "mc_se", r.mc_se, None);
        table.push(t, "analytic", r.analytic, None);
    }
    let obs = averaged_observables(&traj, cfg.t, exec)?;
    let (derivative, velocity) = linear_term_means(&traj, &coeffs, cfg.t, exec)?;
    Ok((table, json!({
        "averaging": report,
        "observables": obs,
        "expansion_identity_holds": obs.expansion_identity_holds(),
        "linear_terms": { "derivative": derivative, "velocity": velocity },
    })))
}

fn estimate(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let s = spec(cfg, cfg.n, 0)?;
    let kernel = s.simulated_kernel();
    let grid = cfg.grid()?;
    let laws = [
        GrowthLaw::new(kernel, cfg.zeta, cfg.a_e, cfg.n, Convention::HalfTriangle)?,
        GrowthLaw::new(kernel, cfg.zeta, cfg.a_e, cfg.n, Convention::Exact)?,
    ];
    let mut table = Table::series();
    let t0 = grid.t_start();
    for k in spread(0, grid.len(), 50) {
        let t = grid.t(k) - t0;
        table.push(grid.t(k), "growth_half_triangle", laws[0].value(t)?, None);
        table.push(grid.t(k), "growth_exact", laws[1].value(t)?, None);
        table.push(grid.t(k), "cumulant", cumulant_expectation(&kernel, cfg.zeta, t)?, None);
    }
    let idx = spread(1, grid.len(), 40);
    let ens = perturbed_norm_ensemble(&s, cfg.zeta, cfg.a_e, &idx, 3, exec)?;
    for (j, t) in ens.times.iter().enumerate() {
        for ell in 1..=3u32 {
            let m = ens.moments[ell as usize - 1][j];
            table.push(*t, &format!("mc_norm_moment_{ell}"), m.mean, None);
        }
    }
    let means = ens.means(1);
    let slope = lyapunov_from_series(&ens.times, &means, default_burn_in(&kernel)).ok();
    let t_end = *ens.times.last().unwrap_or(&grid.t_end());
    let moment_lce: Vec<Value> = (1..=3u32)
        .map(|ell| {
            let m = ens.moments[ell as usize - 1].last().map(|m| m.mean).unwrap_or(f64::NAN);
            json!({ "ell": ell, "value": m.ln() / (t_end - t0) })
        })
        .collect();
    let mut kl = kl_alternative_bound(&kernel, &grid, cfg.zeta, cfg.a_e, cfg.n)?;
    kl.spectrum.truncate(16);
    Ok((table, json!({
        "growth_laws": laws,
        "rates": { "half_triangle": laws[0].rate(), "exact": laws[1].rate() },
        "mc_log_slope": slope,
        "moment_lce": moment_lce,
        "kl": kl,
    })))
}

fn bounds(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let grid = cfg.grid()?;
    let s = spec(cfg, 1, 0)?;
    let sampler = s.sampler()?;
    let dt = grid.dt();
    let zeta = cfg.zeta;
    let x: Vec<f64> = exec.map(cfg.size, |p| {
        let u = sampler.path(p as u64);
        let int: f64 = u.component(0).windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
        cfg.a_e * (zeta * int).exp()
    });
    let span = grid.t_end() - grid.t_start();
    let mean = cfg.a_e * cumulant_expectation(&s.simulated_kernel(), zeta, span)?;
    let level = cfg.bounds_level;
    let mut reports = vec![
        markov_bound(mean, &x, level * mean)?,
        chernoff_tail(&x, mean / level, &default_beta_grid())?,
    ];

    let one = kasnerlab::TimeGrid::new(0.0, dt, 1)?;
    let comps = EnsembleSpec::new(s.kernel, one, NoiseMode::Iid, cfg.n.max(2), cfg.size, cfg.seed.wrapping_add(1))?;
    let cs = comps.sampler()?;
    let m = comps.n_components;
    let j0 = comps.simulated_kernel().j0()?;
    let draws: Vec<Vec<f64>> = exec.map(cfg.size, |p| {
        let path = cs.path(p as u64);
        (0..m).map(|i| path.component(i)[1]).collect()
    });
    let bounded: Vec<Vec<f64>> =
        draws.iter().map(|d| d.iter().map(|u| cfg.a_e * (zeta * u.tanh()).exp()).collect()).collect();
    let sd = j0.sqrt();
    let density = |u: f64| (-u * u / (2.0 * j0)).exp() / (2.0 * std::f64::consts::PI * j0).sqrt();
    let expected = adaptive_simpson(|u| cfg.a_e * (zeta * u.tanh()).exp() * density(u), -12.0 * sd, 12.0 * sd, 1e-12);
    let lo = vec![cfg.a_e * (-zeta.abs()).exp(); m];
    let hi = vec![cfg.a_e * zeta.abs().exp(); m];
    reports.push(hoeffding_bound(&bounded, &lo, &hi, 0.1 * cfg.a_e, expected)?);
    let (e, t) = maximal_bound(&draws, sd, level * sd)?;
    reports.push(e);
    reports.push(t);

    let mut table = Table::new(&["name", "level", "bound", "empirical", "empirical_se", "holds"]);
    for r in &reports {
        table.push_row(vec![
            r.name.clone(),
            crate::output::num(r.params.get("L").copied().unwrap_or(f64::NAN)),
            crate::output::num(r.bound_value),
            crate::output::num(r.empirical_value),
            crate::output::num(r.empirical_se),
            r.holds.to_string(),
        ]);
    }
    let basin = gamma_basin(&x, level * mean, cfg.bounds_gamma)?;
    Ok((table, json!({
        "bounds": reports,
        "all_hold": reports.iter().all(|r| r.holds),
        "gamma_basin": { "level": level * mean, "gamma": cfg.bounds_gamma, "inside": basin },
        "sample": mean_se(&x),
        "expected": mean,
    })))
}

fn bianchi(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let p = exponents(cfg)?;
    let s = spec(cfg, cfg.n, 0)?;
    let grid = cfg.grid()?;
    let first = (0..grid.len()).find(|k| grid.t(*k) > 0.0).ok_or_else(|| CliError::config("grid has no t > 0"))?;
    let idx = spread(first, grid.len(), 40);
    let a_e = vec![cfg.a_e; cfg.n];
    let curve = bianchi_radii(&s, &p, &a_e, cfg.zeta, &idx, exec)?;
    let mut table = Table::series();
    for (j, t) in curve.times.iter().enumerate() {
        for i in 0..cfg.n {
            table.push(*t, &format!("mean_a_{}", i + 1), curve.mean[i][j], None);
            table.push(*t, &format!("se_a_{}", i + 1), curve.se[i][j], None);
            table.push(*t, &format!("exact_a_{}", i + 1), curve.exact[i][j], None);
        }
    }
    let kernel: Kernel = s.simulated_kernel();
    Ok((table, json!({
        "exponents": p.as_slice(),
        "boost_rate": curve.boost_rate,
        "asymptotic_rate": cfg.zeta * cfg.zeta * kernel.half_line_integral(),
    })))
}

fn gbm(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let grid = cfg.grid()?;
    let (t, steps, dt) = (grid.t_end() - grid.t_start(), grid.n_steps(), grid.dt());
    let report = gbm_lce_experiment(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, t, steps, cfg.size, cfg.seed, exec)?;
    let mut table = Table::series();
    let stride = (steps / 200).max(1);
    for path in 0..4u64.min(cfg.size as u64) {
        let inc = brownian_increments(cfg.seed, path, steps, dt);
        let exact = gbm_exact(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, dt, &inc)?;
        let mil = gbm_milstein(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, dt, &inc)?;
        for k in (0..=steps).step_by(stride) {
            table.push(grid.t(k), "exact", exact[k], Some(path));
            table.push(grid.t(k), "milstein", mil[k], Some(path));
        }
    }
    let probe = cfg.size.min(2000);
    let errs: Vec<(f64, f64)> = exec.map(probe, |r| {
        let inc = brownian_increments(cfg.seed, r as u64, steps, dt);
        let ex = gbm_exact(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, dt, &inc).expect("validated");
        let em = gbm_euler_maruyama(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, dt, &inc).expect("validated");
        let mi = gbm_milstein(cfg.a_e, cfg.gbm_alpha, cfg.zeta, cfg.gbm_convention, dt, &inc).expect("validated");
        ((em[steps] - ex[steps]).abs(), (mi[steps] - ex[steps]).abs())
    });
    let (em, mi): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
    Ok((table, json!({
        "report": report,
        "threshold": cfg.gbm_alpha - 0.5 * cfg.zeta * cfg.zeta,
        "strong_error": { "paths": probe, "euler_maruyama": mean_se(&em), "milstein": mean_se(&mi) },
    })))
}

fn stable_class(cfg: &ExperimentConfig, exec: Execution) -> Outcome {
    let s = spec(cfg, cfg.n, 0)?;
    let kernel = s.simulated_kernel();
    let grid = cfg.grid()?;
    let analytic = stable_class_moment(&kernel, cfg.zeta)?;
    let mut table = Table::series();
    for k in spread(0, grid.len(), 10) {
        let m = stable_class_moment_mc(&s, cfg.zeta, k, exec)?;
        table.push(grid.t(k), "mc_moment", m.mean, None);
        table.push(grid.t(k), "mc_moment_se", m.se, None);
        table.push(grid.t(k), "analytic_moment", analytic, None);
    }
    let residual = if kernel.is_differentiable() && grid.len() >= 3 {
        let mc = stable_class_residual_mc(&s, cfg.zeta, grid.len() / 2, exec)?;
        json!({ "analytic": stable_class_residual(&kernel, cfg.zeta, cfg.n)?, "mc": mc })
    } else {
        json!({ "skipped": format!("{} paths are not differentiable", kernel.name()) })
    };
    let tail = stable_class_sup_tail(&s, cfg.zeta, cfg.a_e, 5.0, exec)?;
    Ok((table, json!({
        "moment": analytic,
        "residual": residual,
        "sup_tail": tail,
    })))
}
