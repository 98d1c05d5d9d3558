//! Growth estimates for randomly perturbed radii and the probability bounds
//! used to classify their stability.
//!
//! For a Gaussian field `int_0^t U` has variance `2 T(t)` where `T(t)` is the
//! triangle integral `int_0^t (t - s) J(s) ds`. The exact moment generating
//! function is therefore `exp(zeta^2 T(t))`; [`Convention::HalfTriangle`]
//! keeps the smaller exponent `zeta^2 T(t) / 2` for comparison.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::TimeGrid;
use crate::numeric::{linear_fit, mean_se, MeanSe};
use crate::randfield::{gram_matrix, EnsembleSpec, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Exponent `zeta^2 T(t)`: the exact Gaussian expectation.
    Exact,
    /// Exponent `zeta^2 T(t) / 2`.
    HalfTriangle,
}

impl Convention {
    fn factor(self) -> f64 {
        match self {
            Convention::Exact => 1.0,
            Convention::HalfTriangle => 0.5,
        }
    }
}

/// `E exp(zeta int_0^t U) = exp(zeta^2 T(t))`.
pub fn cumulant_expectation(kernel: &Kernel, zeta: f64, t: f64) -> Result<f64> {
    Ok((zeta * zeta * kernel.triangle_integral(t)?).exp())
}

/// `prefactor exp(rate t + transient(t))` with a bounded transient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthLaw {
    pub kernel: Kernel,
    pub zeta: f64,
    pub prefactor: f64,
    pub convention: Convention,
}

impl GrowthLaw {
    pub fn new(kernel: Kernel, zeta: f64, a_e: f64, n: usize, convention: Convention) -> Result<Self> {
        if !(a_e > 0.0) {
            return Err(Error::Domain("a^E must be positive".into()));
        }
        if n == 0 {
            return Err(Error::Domain("n must be positive".into()));
        }
        kernel.j0()?;
        Ok(Self { kernel, zeta, prefactor: a_e * (n as f64).sqrt(), convention })
    }

    pub fn exponent(&self, t: f64) -> Result<f64> {
        Ok(self.convention.factor() * self.zeta * self.zeta * self.kernel.triangle_integral(t)?)
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.prefactor * self.exponent(t)?.exp())
    }

    /// Asymptotic log-slope, `factor zeta^2 int_0^inf J`.
    pub fn rate(&self) -> f64 {
        self.convention.factor() * self.zeta * self.zeta * self.kernel.half_line_integral()
    }

    pub fn transient(&self, t: f64) -> Result<f64> {
        Ok(self.exponent(t)? - self.rate() * t)
    }
}

/// `a^E sqrt(n) exp(zeta^2 C t / 2 - zeta^2 C s (1 - exp(-t/s)) / 2)`.
pub fn norm_growth_ou(a_e: f64, n: usize, zeta: f64, c: f64, varsigma: f64, t: f64) -> Result<f64> {
    GrowthLaw::new(Kernel::ou(c, varsigma)?, zeta, a_e, n, Convention::HalfTriangle)?.value(t)
}

/// Squared-exponential analogue: exponent
/// `mu^2 C / (2 s^2) [ sqrt(pi) s t erf(t/s) / 2 + s^2 (exp(-t^2/s^2) - 1) / 2 ]`.
pub fn norm_growth_se(a_e: f64, n: usize, mu: f64, c: f64, varsigma: f64, t: f64) -> Result<f64> {
    GrowthLaw::new(Kernel::squared_exp(c, varsigma)?, mu, a_e, n, Convention::HalfTriangle)?.value(t)
}

/// `E |a_hat(t) - a^E|` for one component: with `X = zeta int_0^t U`,
/// `E |e^X - 1| = exp(Var X / 2) erf(sqrt(Var X / 2))`.
pub fn expected_scalar_deviation(kernel: &Kernel, zeta: f64, a_e: f64, t: f64) -> Result<f64> {
    let h = zeta * zeta * kernel.triangle_integral(t)?;
    Ok(a_e * h.exp() * crate::numeric::erf(h.sqrt()))
}

/// Least-squares slope of `ln values` against `times` for `t >= times[0] + burn_in`.
pub fn lyapunov_from_series(times: &[f64], values: &[f64], burn_in: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Dimension { expected: times.len(), got: values.len() });
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("series values must be positive, found {v}")));
    }
    let t0 = times.first().copied().unwrap_or(0.0) + burn_in;
    let (x, y): (Vec<f64>, Vec<f64>) =
        times.iter().zip(values).filter(|(t, _)| **t >= t0).map(|(t, v)| (*t, v.ln())).unzip();
    if x.len() < 10 {
        return Err(Error::Precondition(format!("{} points after burn-in, need 10", x.len())));
    }
    Ok(linear_fit(&x, &y)?.slope)
}

/// Default burn-in `max(10 varsigma, 1)`.
pub fn default_burn_in(kernel: &Kernel) -> f64 {
    kernel.correlation_time().map_or(1.0, |s| (10.0 * s).max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentLce {
    pub value: f64,
    pub moment: f64,
    pub relative_se: f64,
}

/// `(1/t) ln E{X^ell}` over an ensemble of nonnegative values.
pub fn moment_lce(values: &[f64], ell: u32, t: f64) -> Result<MomentLce> {
    if ell < 1 {
        return Err(Error::Domain("moment order must be at least 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Domain("t must be positive".into()));
    }
    if values.len() < 2 {
        return Err(Error::InsufficientEnsemble { got: values.len(), need: 2 });
    }
    let pw: Vec<f64> = values.iter().map(|v| v.abs().powi(ell as i32)).collect();
    let m = mean_se(&pw);
    if !(m.mean > 0.0) || !m.mean.is_finite() {
        return Err(Error::Precondition("degenerate ensemble moment".into()));
    }
    Ok(MomentLce { value: m.mean.ln() / t, moment: m.mean, relative_se: m.se / m.mean })
}

/// Ensemble statistics of `||a_hat(t) - a^E||` with `a_hat_i = a^E exp(zeta int_0^t U_i)`,
/// and of its `ell`-th powers, at the requested grid indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEnsemble {
    pub times: Vec<f64>,
    /// `moments[l - 1][j]`: `E ||.||^l` at `times[j]`.
    pub moments: Vec<Vec<MeanSe>>,
}

impl NormEnsemble {
    pub fn means(&self, ell: u32) -> Vec<f64> {
        self.moments[ell as usize - 1].iter().map(|m| m.mean).collect()
    }
}

pub fn perturbed_norm_ensemble(
    spec: &EnsembleSpec,
    zeta: f64,
    a_e: f64,
    indices: &[usize],
    max_ell: u32,
    exec: Execution,
) -> Result<NormEnsemble> {
    let m = spec.grid.len();
    if let Some(k) = indices.iter().find(|k| **k >= m) {
        return Err(Error::Range(format!("index {k} outside grid of {m} points")));
    }
    if max_ell < 1 {
        return Err(Error::Domain("moment order must be at least 1".into()));
    }
    let sampler = spec.sampler()?;
    let dt = spec.grid.dt();
    let n = spec.n_components;
    let dims = indices.len() * max_ell as usize;
    let stats = exec.moments(spec.size, dims, |r| {
        let p = sampler.path(r as u64);
        let mut sq = vec![0.0; indices.len()];
        for i in 0..n {
            let u = p.component(i);
            let mut acc = 0.0;
            let mut next = 0;
            for (k, w) in std::iter::once(0.0).chain(u.windows(2).map(|w| 0.5 * dt * (w[0] + w[1]))).enumerate() {
                acc += w;
                while next < indices.len() && indices[next] == k {
                    let d = a_e * (zeta * acc).exp_m1();
                    sq[next] += d * d;
                    next += 1;
                }
                if next == indices.len() {
                    break;
                }
            }
        }
        let mut out = Vec::with_capacity(dims);
        for l in 1..=max_ell {
            out.extend(sq.iter().map(|s| s.sqrt().powi(l as i32)));
        }
        out
    });
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if sorted != indices {
        return Err(Error::Precondition("indices must be increasing".into()));
    }
    Ok(NormEnsemble {
        times: indices.iter().map(|k| spec.grid.t(*k)).collect(),
        moments: stats.chunks(indices.len()).map(|c| c.to_vec()).collect(),
    })
}

/// Outcome of comparing an empirical statistic with an analytic bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub bound_value: f64,
    pub empirical_value: f64,
    pub empirical_se: f64,
    /// Relative inflation applied to the bound.
    pub tolerance: f64,
    pub holds: bool,
    pub params: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(name: &str, bound: f64, empirical: MeanSe, params: &[(&str, f64)]) -> Self {
        let se = if empirical.se.is_finite() { empirical.se } else { 0.0 };
        let tolerance = if bound > 0.0 { 5.0 * se / bound } else { 0.0 };
        let holds = empirical.mean <= bound * (1.0 + tolerance) + if bound > 0.0 { 0.0 } else { 3.0 * se };
        Self {
            name: name.into(),
            bound_value: bound,
            empirical_value: empirical.mean,
            empirical_se: se,
            tolerance,
            holds,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

fn frequency(hits: impl Iterator<Item = bool>, n: usize) -> MeanSe {
    let k = hits.filter(|h| *h).count() as f64;
    let p = k / n as f64;
    MeanSe { mean: p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
}

fn check_nonempty(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientEnsemble { got: 0, need: 1 });
    }
    Ok(())
}

/// `P(X >= L) <= E{X} / L` for nonnegative `X`.
pub fn markov_bound(expected: f64, samples: &[f64], level: f64) -> Result<BoundReport> {
    check_nonempty(samples)?;
    if !(level > 0.0) {
        return Err(Error::Domain("level must be positive".into()));
    }
    let tail = frequency(samples.iter().map(|x| *x >= level), samples.len());
    Ok(BoundReport::new("markov", expected / level, tail, &[("L", level), ("expected", expected)]))
}

/// 64 log-spaced points on `[1e-3, 1e3]`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..64).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 63.0)).collect()
}

/// `P(X <= L) <= inf_beta exp(beta L) E{exp(-beta X)}`, with the expectation
/// estimated from the samples and the infimum taken over `betas`.
pub fn chernoff_tail(samples: &[f64], level: f64, betas: &[f64]) -> Result<BoundReport> {
    check_nonempty(samples)?;
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::Domain("beta grid must be nonempty and positive".into()));
    }
    let n = samples.len() as f64;
    let mut best = f64::INFINITY;
    let mut best_beta = betas[0];
    for &b in betas {
        // log-sum-exp of -beta x
        let m = samples.iter().map(|x| -b * x).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = samples.iter().map(|x| (-b * x - m).exp()).sum();
        let log_bound = b * level + m + (s / n).ln();
        if log_bound < best {
            best = log_bound;
            best_beta = b;
        }
    }
    let tail = frequency(samples.iter().map(|x| *x <= level), samples.len());
    Ok(BoundReport::new("chernoff", best.exp().min(1.0), tail, &[("L", level), ("beta", best_beta)]))
}

/// `P(mean - E{mean} >= L) <= exp(-2 n^2 L^2 / sum (hi_i - lo_i)^2)` for draws of
/// `n` independent components bounded in `[lo_i, hi_i]`.
pub fn hoeffding_bound(
    draws: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    level: f64,
    expected_mean: f64,
) -> Result<BoundReport> {
    let n = lo.len();
    if hi.len() != n {
        return Err(Error::Dimension { expected: n, got: hi.len() });
    }
    if draws.is_empty() {
        return Err(Error::InsufficientEnsemble { got: 0, need: 1 });
    }
    for d in draws {
        if d.len() != n {
            return Err(Error::Dimension { expected: n, got: d.len() });
        }
        if d.iter().zip(lo.iter().zip(hi)).any(|(x, (l, h))| x < l || x > h) {
            return Err(Error::Precondition("sample outside its declared range".into()));
        }
    }
    if level < 0.0 {
        return Err(Error::Domain("level must be nonnegative".into()));
    }
    let span: f64 = lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum();
    let nf = n as f64;
    let bound = if span > 0.0 { (-2.0 * nf * nf * level * level / span).exp() } else { 1.0 };
    let tail = frequency(
        draws.iter().map(|d| d.iter().sum::<f64>() / nf - expected_mean >= level),
        draws.len(),
    );
    Ok(BoundReport::new("hoeffding", bound, tail, &[("L", level), ("n", nf), ("span_sq", span)]))
}

/// Expectation and tail forms of the maximal inequality for `n` sub-Gaussian
/// variables with parameter `c`: `E max <= c sqrt(2 ln n)` and
/// `P(max >= L) <= n exp(-L^2 / 2c^2)`.
pub fn maximal_bound(draws: &[Vec<f64>], c: f64, level: f64) -> Result<(BoundReport, BoundReport)> {
    let n = draws.first().map(|d| d.len()).ok_or(Error::InsufficientEnsemble { got: 0, need: 1 })?;
    if n == 0 || draws.iter().any(|d| d.len() != n) {
        return Err(Error::Dimension { expected: n, got: 0 });
    }
    let maxima: Vec<f64> = draws.iter().map(|d| d.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let nf = n as f64;
    let expect = BoundReport::new(
        "maximal-expectation",
        c * (2.0 * nf.ln()).sqrt(),
        mean_se(&maxima),
        &[("n", nf), ("C", c)],
    );
    let tail = BoundReport::new(
        "maximal-tail",
        (nf * (-level * level / (2.0 * c * c)).exp()).min(1.0),
        frequency(maxima.iter().map(|m| *m >= level), maxima.len()),
        &[("n", nf), ("C", c), ("L", level)],
    );
    Ok((expect, tail))
}

/// True iff the empirical `P(X <= L)` is at least `gamma`.
pub fn gamma_basin(finals: &[f64], level: f64, gamma: f64) -> Result<bool> {
    check_nonempty(finals)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let inside = finals.iter().filter(|x| **x <= level).count() as f64;
    Ok(inside / finals.len() as f64 >= gamma)
}

/// `E exp(zeta U(t)) = exp(zeta^2 J(0) / 2)`.
pub fn stable_class_moment(kernel: &Kernel, zeta: f64) -> Result<f64> {
    Ok((0.5 * zeta * zeta * kernel.j0()?).exp())
}

/// `n zeta^2 Xi(0)` with `Xi(0) = -J''(0)` the variance of the derivative field.
pub fn stable_class_residual(kernel: &Kernel, zeta: f64, n: usize) -> Result<f64> {
    Ok(n as f64 * zeta * zeta * -kernel.second_derivative_at_zero()?)
}

/// Ensemble mean of `exp(zeta U_0(t_k))`.
pub fn stable_class_moment_mc(spec: &EnsembleSpec, zeta: f64, k: usize, exec: Execution) -> Result<MeanSe> {
    if k >= spec.grid.len() {
        return Err(Error::Range(format!("index {k} outside grid")));
    }
    let sampler = spec.sampler()?;
    Ok(exec.moments(spec.size, 1, |r| vec![(zeta * sampler.path(r as u64).component(0)[k]).exp()])[0])
}

/// Ensemble mean of the operator on `psi_hat_i = psi^E + zeta U_i(t)`, with
/// Einstein weights and the diagonal reading of the double sum, evaluated
/// with central differences at grid index `k`.
pub fn stable_class_residual_mc(spec: &EnsembleSpec, zeta: f64, k: usize, exec: Execution) -> Result<MeanSe> {
    let kernel = spec.simulated_kernel();
    if !kernel.is_differentiable() {
        return Err(Error::NotDifferentiable(kernel.name()));
    }
    if k == 0 || k + 1 >= spec.grid.len() {
        return Err(Error::Range(format!("index {k} has no central stencil")));
    }
    let coeffs = crate::geometry::OperatorCoefficients::einstein_diagonal();
    let dt = spec.grid.dt();
    let sampler = spec.sampler()?;
    Ok(exec.moments(spec.size, 1, |r| {
        let p = sampler.path(r as u64);
        let n = spec.n_components;
        let d1: Vec<f64> = (0..n).map(|i| zeta * (p.component(i)[k + 1] - p.component(i)[k - 1]) / (2.0 * dt)).collect();
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                let u = p.component(i);
                zeta * (u[k + 1] - 2.0 * u[k] + u[k - 1]) / (dt * dt)
            })
            .collect();
        let st = crate::geometry::ModuliState::new(vec![0.0; n], d1, d2).expect("finite draws");
        vec![crate::dynamics::h_residual(&st, &coeffs)]
    })[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupTail {
    pub analytic_mean: f64,
    pub threshold: f64,
    pub frequency: f64,
    pub max_observed: f64,
}

/// Frequency with which `sup_{t, i} a^E exp(zeta U_i(t))` reaches `factor`
/// times its stationary mean `a^E exp(zeta^2 J(0) / 2)`.
pub fn stable_class_sup_tail(
    spec: &EnsembleSpec,
    zeta: f64,
    a_e: f64,
    factor: f64,
    exec: Execution,
) -> Result<SupTail> {
    let mean = a_e * stable_class_moment(&spec.simulated_kernel(), zeta)?;
    let threshold = factor * mean;
    let sampler = spec.sampler()?;
    let sups = exec.map(spec.size, |r| {
        let p = sampler.path(r as u64);
        p.streams().iter().flatten().fold(f64::NEG_INFINITY, |m, u| m.max(a_e * (zeta * u).exp()))
    });
    let hits = sups.iter().filter(|s| **s >= threshold).count();
    Ok(SupTail {
        analytic_mean: mean,
        threshold,
        frequency: hits as f64 / sups.len() as f64,
        max_observed: sups.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlReport {
    /// Eigenvalues of `Gram * dt`, descending.
    pub spectrum: Vec<f64>,
    pub trace: f64,
    pub expected_trace: f64,
    pub trace_relative_error: f64,
    /// `J(0)`.
    pub c1: f64,
    /// `int_0^inf J`.
    pub c2: f64,
    /// `sqrt(n) a^E exp(zeta (sqrt(C1) + zeta C2 / 2) (t - t0))`.
    pub bound: f64,
    /// `sqrt(n) a^E E exp(zeta int U)`.
    pub estimate: f64,
    pub holds: bool,
}

/// Karhunen-Loeve spectrum of the kernel on the grid and the exponential
/// bound that follows from it.
pub fn kl_alternative_bound(kernel: &Kernel, grid: &TimeGrid, zeta: f64, a_e: f64, n: usize) -> Result<KlReport> {
    let kernel = kernel.regulated(grid.dt());
    let gram = gram_matrix(&kernel, &grid.times())? * grid.dt();
    let psd = crate::randfield::check_psd_matrix(&gram)?;
    if !psd.ok {
        return Err(Error::NotPsd { min_eigenvalue: psd.min_eigenvalue });
    }
    let mut spectrum: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = spectrum.iter().sum();
    let span = grid.t_end() - grid.t_start();
    let c1 = kernel.j0()?;
    let c2 = kernel.half_line_integral();
    let expected_trace = c1 * span;
    let pre = (n as f64).sqrt() * a_e;
    let bound = pre * (zeta * (c1.sqrt() + 0.5 * zeta * c2) * span).exp();
    let estimate = pre * cumulant_expectation(&kernel, zeta, span)?;
    Ok(KlReport {
        spectrum,
        trace,
        expected_trace,
        trace_relative_error: (trace - expected_trace).abs() / expected_trace,
        c1,
        c2,
        bound,
        estimate,
        holds: estimate <= bound * (1.0 + 1e-12),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BianchiCurve {
    pub times: Vec<f64>,
    /// Per radius: ensemble means and standard errors of `a_hat_i(t)`.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// `a_i^E t^{p_i} E exp(zeta int_0^t U)`.
    pub exact: Vec<Vec<f64>>,
    /// Fitted log-slope of `mean_i / (a_i^E t^{p_i})` over the second half.
    pub boost_rate: Vec<f64>,
}

/// Noisy Kasner radii `a_i^E t^{p_i} exp(zeta int_0^t U_i)` averaged over the
/// ensemble at the requested grid indices (which must have `t > 0`).
pub fn bianchi_radii(
    spec: &EnsembleSpec,
    p: &crate::geometry::KasnerExponents,
    a_e: &[f64],
    zeta: f64,
    indices: &[usize],
    exec: Execution,
) -> Result<BianchiCurve> {
    let n = spec.n_components;
    if p.n() != n || a_e.len() != n {
        return Err(Error::Dimension { expected: n, got: p.n().min(a_e.len()) });
    }
    let times: Vec<f64> = indices.iter().map(|k| spec.grid.t(*k)).collect();
    if times.iter().any(|t| !(*t > 0.0)) || indices.iter().any(|k| *k >= spec.grid.len()) {
        return Err(Error::Range("Bianchi curves need grid times t > 0".into()));
    }
    let sampler = spec.sampler()?;
    let dt = spec.grid.dt();
    let kmax = indices.iter().copied().max().unwrap_or(0);
    let m = indices.len();
    let stats = exec.moments(spec.size, n * m, |r| {
        let path = sampler.path(r as u64);
        let mut out = Vec::with_capacity(n * m);
        for (i, a) in a_e.iter().enumerate() {
            let u = path.component(i);
            let mut integ = vec![0.0; kmax + 1];
            for k in 1..=kmax {
                integ[k] = integ[k - 1] + 0.5 * dt * (u[k - 1] + u[k]);
            }
            for (j, &k) in indices.iter().enumerate() {
                out.push(a * times[j].powf(p.as_slice()[i]) * (zeta * integ[k]).exp());
            }
        }
        out
    });
    let kernel = spec.simulated_kernel();
    let mut mean = Vec::with_capacity(n);
    let mut se = Vec::with_capacity(n);
    let mut exact = Vec::with_capacity(n);
    let mut boost_rate = Vec::with_capacity(n);
    for i in 0..n {
        let row = &stats[i * m..(i + 1) * m];
        mean.push(row.iter().map(|s| s.mean).collect::<Vec<_>>());
        se.push(row.iter().map(|s| s.se).collect());
        let base: Vec<f64> = times.iter().map(|t| a_e[i] * t.powf(p.as_slice()[i])).collect();
        exact.push(
            times
                .iter()
                .zip(&base)
                .map(|(t, b)| cumulant_expectation(&kernel, zeta, *t).map(|c| b * c))
                .collect::<Result<Vec<_>>>()?,
        );
        let half = m / 2;
        let ratio: Vec<f64> = row.iter().zip(&base).map(|(s, b)| (s.mean / b).ln()).collect();
        boost_rate.push(if m - half >= 2 { linear_fit(&times[half..], &ratio[half..])?.slope } else { f64::NAN });
    }
    Ok(BianchiCurve { times, mean, se, exact, boost_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulant_edges() {
        let k = Kernel::ou(1.0, 1.0).unwrap();
        assert_eq!(cumulant_expectation(&k, 0.0, 3.0).unwrap(), 1.0);
        assert_eq!(cumulant_expectation(&k, 1.0, 0.0).unwrap(), 1.0);
        // Var int_0^2 U = 2 (2 - (1 - e^-2))
        let want = (2.0 - (1.0 - (-2.0f64).exp())).exp();
        assert!((cumulant_expectation(&k, 1.0, 2.0).unwrap() - want).abs() < 1e-14);
        assert!(cumulant_expectation(&Kernel::white_limit(1.0).unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn ou_growth_law_shape() {
        assert_eq!(norm_growth_ou(2.0, 4, 0.0, 1.0, 1.0, 7.0).unwrap(), 4.0);
        let law = GrowthLaw::new(Kernel::ou(1.0, 1.0).unwrap(), 0.4, 1.0, 2, Convention::HalfTriangle).unwrap();
        assert!((law.rate() - 0.5 * 0.16).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..200 {
            let t = k as f64 * 0.1;
            let v = law.value(t).unwrap();
            assert!(v >= prev);
            prev = v;
            let tr = law.transient(t).unwrap();
            assert!((-0.5 * 0.16 - 1e-15..=0.0).contains(&tr));
        }
    }

    #[test]
    fn se_growth_law_zero_coupling() {
        assert_eq!(norm_growth_se(1.5, 1, 0.0, 1.0, 1.0, 3.0).unwrap(), 1.5);
        let law = GrowthLaw::new(Kernel::squared_exp(2.0, 0.5).unwrap(), 1.0, 1.0, 1, Convention::HalfTriangle).unwrap();
        // rate mu^2 C sqrt(pi) / (4 s)
        assert!((law.rate() - 2.0 * std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_deviation_limits() {
        let k = Kernel::ou(1.0, 1.0).unwrap();
        assert_eq!(expected_scalar_deviation(&k, 0.0, 1.0, 5.0).unwrap(), 0.0);
        // small variance: E|X| = sqrt(2 Var / pi)
        let h = 1e-6 * k.triangle_integral(2.0).unwrap();
        let v = expected_scalar_deviation(&k, 1e-3, 1.0, 2.0).unwrap();
        assert!((v / (4.0 * h / std::f64::consts::PI).sqrt() - 1.0).abs() < 2e-3);
    }

    #[test]
    fn slopes_of_known_series() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (0.3 * t).exp()).collect();
        assert!((lyapunov_from_series(&t, &v, 0.0).unwrap() - 0.3).abs() < 1e-10);
        assert!(lyapunov_from_series(&t, &vec![2.0; 100], 0.0).unwrap().abs() < 1e-14);
        assert!(lyapunov_from_series(&t, &vec![-1.0; 100], 0.0).is_err());
        assert!(lyapunov_from_series(&t, &v, 9.5).is_err());
    }

    #[test]
    fn moment_lce_of_deterministic_ensemble() {
        let q: f64 = 0.2;
        let t = 5.0;
        let v = vec![(q * t).exp(); 10];
        for ell in 1..=3 {
            assert!((moment_lce(&v, ell, t).unwrap().value - ell as f64 * q).abs() < 1e-14);
        }
        assert!(moment_lce(&[0.0, 0.0], 1, 1.0).is_err());
    }

    #[test]
    fn markov_edges() {
        let v = vec![2.0; 50];
        let r = markov_bound(2.0, &v, 3.0).unwrap();
        assert_eq!(r.empirical_value, 0.0);
        assert!(r.holds);
        assert!(markov_bound(2.0, &v, 1e12).unwrap().bound_value < 1e-11);
    }

    #[test]
    fn chernoff_on_constant_ensemble() {
        let v = vec![5.0; 10];
        let r = chernoff_tail(&v, 2.0, &default_beta_grid()).unwrap();
        assert_eq!(r.empirical_value, 0.0);
        assert!(r.bound_value < 1e-300);
        assert!(r.holds);
        assert_eq!(default_beta_grid().len(), 64);
        assert!((default_beta_grid()[63] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn hoeffding_edges() {
        let draws = vec![vec![0.5, 0.2], vec![0.1, 0.9]];
        let r = hoeffding_bound(&draws, &[0.0, 0.0], &[1.0, 1.0], 0.0, 0.4).unwrap();
        assert_eq!(r.bound_value, 1.0);
        let a = hoeffding_bound(&draws, &[0.0, 0.0], &[1.0, 1.0], 0.2, 0.4).unwrap();
        let b = hoeffding_bound(&draws, &[-0.5, -0.5], &[1.5, 1.5], 0.2, 0.4).unwrap();
        assert!(b.bound_value > a.bound_value);
        assert!(matches!(
            hoeffding_bound(&draws, &[0.0, 0.0], &[0.4, 1.0], 0.1, 0.4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn maximal_edges() {
        let draws: Vec<Vec<f64>> = vec![vec![0.1], vec![-0.1]];
        let (e, _) = maximal_bound(&draws, 1.0, 1.0).unwrap();
        assert_eq!(e.bound_value, 0.0);
        assert!(e.holds);
        let (_, t) = maximal_bound(&draws, 1.0, 1e6).unwrap();
        assert_eq!(t.empirical_value, 0.0);
        assert!(t.holds);
    }

    #[test]
    fn gamma_basin_edges() {
        let v = vec![0.3; 10];
        assert!(gamma_basin(&v, 0.5, 1.0).unwrap());
        assert!(!gamma_basin(&v, 0.1, 0.5).unwrap());
        assert!(gamma_basin(&[1e11, 2.0], 1e12, 1.0).unwrap());
        assert!(gamma_basin(&v, 1.0, 0.0).is_err());
    }

    #[test]
    fn stable_class_values() {
        let ou = Kernel::ou(1.0, 2.0).unwrap();
        assert_eq!(stable_class_moment(&ou, 0.0).unwrap(), 1.0);
        assert!((stable_class_moment(&ou, 0.8).unwrap() - (0.25f64 * 0.64).exp()).abs() < 1e-15);
        let se = Kernel::squared_exp(1.0, 1.0).unwrap();
        assert!((stable_class_moment(&se, 1.0).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        let se = Kernel::squared_exp(0.7, 0.9).unwrap();
        let l = stable_class_residual(&se, 0.5, 3).unwrap();
        assert!((l - 2.0 * 3.0 * 0.25 * 0.7 / 0.9f64.powi(4)).abs() < 1e-14);
        assert_eq!(stable_class_residual(&se, 0.5, 6).unwrap(), 2.0 * l);
        assert_eq!(stable_class_residual(&se, 0.0, 3).unwrap(), 0.0);
        assert!(matches!(stable_class_residual(&ou, 1.0, 1), Err(Error::NotDifferentiable(_))));
    }

    #[test]
    fn kl_trace_and_bound() {
        let k = Kernel::ou(1.0, 1.0).unwrap();
        let grid = TimeGrid::spanning(0.0, 5.0, 255).unwrap();
        let r = kl_alternative_bound(&k, &grid, 0.5, 1.0, 1).unwrap();
        assert!(r.trace_relative_error < 0.01);
        assert!(r.holds);
        let z = kl_alternative_bound(&k, &grid, 0.0, 1.0, 1).unwrap();
        assert_eq!(z.bound, 1.0);
        assert_eq!(z.estimate, 1.0);
        assert!(z.holds);
    }
}
