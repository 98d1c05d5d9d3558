//! Random perturbations `psi_hat_i = psi_i + zeta int_0^t U_i` of closed-form
//! solutions, Monte-Carlo averages of the nonlinear operator and of the
//! geometric observables, geometric Brownian motion, and the moment bound
//! for linear diffusions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::{self, h_residual, isotropic_rate, LambdaTerm, Sign};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{
    expansion, kretschmann, shear_sq, CrossSum, KasnerExponents, ModuliState, OperatorCoefficients,
};
use crate::numeric::{linear_fit, mean_se, stream_seed, MeanSe};
use crate::randfield::{EnsembleSpec, Kernel, NoiseMode, NoisePath};

/// Smallest ensemble accepted for averaged residuals.
pub const MIN_ENSEMBLE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseTrajectory {
    Static { psi_e: Vec<f64> },
    Kasner { psi0: Vec<f64>, p: KasnerExponents },
    /// `psi_i = psi_i(0) + rate t`.
    Linear { psi0: Vec<f64>, rate: f64 },
}

impl BaseTrajectory {
    /// The isotropic constant-rate solution of `H = lambda` for these weights.
    pub fn lambda(
        psi0: Vec<f64>,
        lam: &LambdaTerm,
        sign: Sign,
        coeffs: &OperatorCoefficients,
    ) -> Result<Self> {
        let rate = sign.factor() * isotropic_rate(lam.lambda, psi0.len(), coeffs)?;
        Ok(BaseTrajectory::Linear { psi0, rate })
    }

    pub fn n(&self) -> usize {
        match self {
            BaseTrajectory::Static { psi_e } => psi_e.len(),
            BaseTrajectory::Kasner { psi0, .. } | BaseTrajectory::Linear { psi0, .. } => psi0.len(),
        }
    }

    pub fn state(&self, t: f64) -> Result<ModuliState> {
        match self {
            BaseTrajectory::Static { psi_e } => ModuliState::at_rest(psi_e.clone()),
            BaseTrajectory::Kasner { psi0, p } => dynamics::kasner_solution(psi0, p, t),
            BaseTrajectory::Linear { psi0, rate } => {
                let n = psi0.len();
                ModuliState::new(psi0.iter().map(|p| p + rate * t).collect(), vec![*rate; n], vec![0.0; n])
            }
        }
    }
}

/// How the operator is evaluated on a noisy path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluationForm {
    /// Mean-zero derivative-of-noise terms dropped; only `U` itself enters.
    Weak,
    /// Central differences of the sampled `psi_hat`.
    Pathwise,
}

impl EvaluationForm {
    /// Pathwise for differentiable kernels, weak otherwise.
    pub fn for_kernel(kernel: &Kernel) -> Self {
        if kernel.is_differentiable() {
            EvaluationForm::Pathwise
        } else {
            EvaluationForm::Weak
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedTrajectory {
    pub base: BaseTrajectory,
    pub zeta: f64,
    pub ensemble: EnsembleSpec,
}

impl PerturbedTrajectory {
    pub fn new(base: BaseTrajectory, zeta: f64, ensemble: EnsembleSpec) -> Result<Self> {
        if base.n() != ensemble.n_components {
            return Err(Error::Dimension { expected: base.n(), got: ensemble.n_components });
        }
        if !zeta.is_finite() {
            return Err(Error::Domain("coupling must be finite".into()));
        }
        Ok(Self { base, zeta, ensemble })
    }

    /// `psi_hat` with derivatives at grid index `k` of one path.
    pub fn state_at(&self, path: &NoisePath, k: usize, form: EvaluationForm) -> Result<ModuliState> {
        let grid = path.grid();
        let n = self.base.n();
        let z = self.zeta;
        match form {
            EvaluationForm::Weak => {
                let base = self.base.state(grid.t(k))?;
                let psi = (0..n)
                    .map(|i| base.psi()[i] + z * running_integral(path.component(i), grid.dt(), k))
                    .collect();
                let dpsi = (0..n).map(|i| base.dpsi()[i] + z * path.component(i)[k]).collect();
                ModuliState::new(psi, dpsi, base.ddpsi().to_vec())
            }
            EvaluationForm::Pathwise => {
                if !path.kernel().is_differentiable() {
                    return Err(Error::NotDifferentiable(path.kernel().name()));
                }
                if k == 0 || k + 1 >= grid.len() {
                    return Err(Error::Range(format!("index {k} has no central stencil")));
                }
                let dt = grid.dt();
                let (bm, b0, bp) = (
                    self.base.state(grid.t(k - 1))?,
                    self.base.state(grid.t(k))?,
                    self.base.state(grid.t(k + 1))?,
                );
                let mut psi = Vec::with_capacity(n);
                let mut d1 = Vec::with_capacity(n);
                let mut d2 = Vec::with_capacity(n);
                for i in 0..n {
                    let u = path.component(i);
                    let i0 = running_integral(u, dt, k);
                    let im = i0 - 0.5 * dt * (u[k - 1] + u[k]);
                    let ip = i0 + 0.5 * dt * (u[k] + u[k + 1]);
                    let (xm, x0, xp) = (bm.psi()[i] + z * im, b0.psi()[i] + z * i0, bp.psi()[i] + z * ip);
                    psi.push(x0);
                    d1.push((xp - xm) / (2.0 * dt));
                    d2.push((xp - 2.0 * x0 + xm) / (dt * dt));
                }
                ModuliState::new(psi, d1, d2)
            }
        }
    }
}

fn running_integral(u: &[f64], dt: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    for w in u[..=k].windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
    }
    acc
}

/// `E sum_ij U_i U_j / J(0)` for the given weights and mode.
fn pair_count(n: usize, mode: NoiseMode, cross: CrossSum) -> f64 {
    let n = n as f64;
    match (mode, cross) {
        (NoiseMode::Shared, CrossSum::Full) => n * n,
        _ => n,
    }
}

/// Induced constant for Einstein weights: `zeta^2 n J(0)` (iid) or
/// `zeta^2 (n + n^2) J(0) / 2` (shared).
pub fn induced_lambda_analytic(kernel: &Kernel, zeta: f64, n: usize, mode: NoiseMode) -> Result<f64> {
    induced_lambda(kernel, zeta, n, mode, &OperatorCoefficients::einstein())
}

/// `zeta^2 J(0) (c2 n + c3 E sum_ij U_i U_j / J(0))` for general weights.
pub fn induced_lambda(
    kernel: &Kernel,
    zeta: f64,
    n: usize,
    mode: NoiseMode,
    coeffs: &OperatorCoefficients,
) -> Result<f64> {
    let j0 = kernel.j0()?;
    Ok(zeta * zeta * j0 * (coeffs.c2 * n as f64 + coeffs.c3 * pair_count(n, mode, coeffs.cross)))
}

/// A closed-form candidate compared against the ensemble mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormCheck {
    pub name: String,
    pub value: f64,
    pub z_score: f64,
    pub supported: bool,
}

fn form_check(name: &str, value: f64, mc: &MeanSe) -> FormCheck {
    let z = z_score(mc.mean, value, mc.se);
    FormCheck { name: name.into(), value, z_score: z, supported: z.abs() <= 3.0 }
}

fn z_score(mean: f64, analytic: f64, se: f64) -> f64 {
    let d = mean - analytic;
    if se > 0.0 {
        d / se
    } else if d.abs() <= 1e-12 * analytic.abs().max(1.0) {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingReport {
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub z_score: f64,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub mode: NoiseMode,
    pub kernel: Kernel,
    pub zeta: f64,
    pub n: usize,
    pub seed: u64,
    pub form: EvaluationForm,
    pub t: f64,
    /// Deterministic part of the analytic value (the base trajectory's residual).
    pub base_residual: f64,
    /// The shared-mode and iid-mode closed forms, each scored against the ensemble.
    pub forms: Vec<FormCheck>,
}

impl AveragingReport {
    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }
}

/// Ensemble mean of `H(psi_hat)` at time `t`, with its analytic prediction
/// `H(base) + induced`.
pub fn mc_averaged_residual(
    traj: &PerturbedTrajectory,
    coeffs: &OperatorCoefficients,
    t: f64,
    form: EvaluationForm,
    exec: Execution,
) -> Result<AveragingReport> {
    let spec = &traj.ensemble;
    if spec.size < MIN_ENSEMBLE {
        return Err(Error::InsufficientEnsemble { got: spec.size, need: MIN_ENSEMBLE });
    }
    let k = spec.grid.index_of(t)?;
    let t = spec.grid.t(k);
    let kernel = spec.simulated_kernel();
    let n = traj.base.n();
    let base_residual = h_residual(&traj.base.state(t)?, coeffs);
    let analytic = base_residual + induced_lambda(&kernel, traj.zeta, n, spec.mode, coeffs)?;

    let sampler = spec.sampler()?;
    let samples: Vec<Result<f64>> = exec.map(spec.size, |r| {
        let path = sampler.path(r as u64);
        Ok(h_residual(&traj.state_at(&path, k, form)?, coeffs))
    });
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    let mc = mean_se(&samples);

    let mut forms = Vec::new();
    for mode in [NoiseMode::Iid, NoiseMode::Shared] {
        let v = base_residual + induced_lambda(&kernel, traj.zeta, n, mode, coeffs)?;
        forms.push(form_check(mode.name(), v, &mc));
    }
    Ok(AveragingReport {
        analytic,
        mc_mean: mc.mean,
        mc_se: mc.se,
        z_score: z_score(mc.mean, analytic, mc.se),
        n_paths: spec.size,
        mode: spec.mode,
        kernel,
        zeta: traj.zeta,
        n,
        seed: spec.seed,
        form,
        t,
        base_residual,
        forms,
    })
}

/// Noise on top of the isotropic solution of `H = lambda_bar`.
pub fn averaged_with_preexisting_lambda(
    lambda_bar: f64,
    psi0: Vec<f64>,
    zeta: f64,
    ensemble: EnsembleSpec,
    coeffs: &OperatorCoefficients,
    t: f64,
    exec: Execution,
) -> Result<AveragingReport> {
    let base = BaseTrajectory::lambda(psi0, &LambdaTerm::new(lambda_bar), Sign::Expanding, coeffs)?;
    let traj = PerturbedTrajectory::new(base, zeta, ensemble)?;
    let form = EvaluationForm::for_kernel(&ensemble.simulated_kernel());
    mc_averaged_residual(&traj, coeffs, t, form, exec)
}

/// Ensemble means of the two terms that are linear in the noise:
/// `c1 zeta sum dU_i` (pathwise only) and `2 c2 zeta sum U_i dpsi_i`.
pub fn linear_term_means(
    traj: &PerturbedTrajectory,
    coeffs: &OperatorCoefficients,
    t: f64,
    exec: Execution,
) -> Result<(Option<MeanSe>, MeanSe)> {
    let spec = &traj.ensemble;
    let k = spec.grid.index_of(t)?;
    let base = traj.base.state(spec.grid.t(k))?;
    let sampler = spec.sampler()?;
    let dt = spec.grid.dt();
    let differentiable = spec.simulated_kernel().is_differentiable();
    if differentiable && (k == 0 || k + 1 >= spec.grid.len()) {
        return Err(Error::Range(format!("index {k} has no central stencil")));
    }
    let pairs: Vec<(f64, f64)> = exec.map(spec.size, |r| {
        let p = sampler.path(r as u64);
        let n = traj.base.n();
        let mut d = 0.0;
        let mut q = 0.0;
        for i in 0..n {
            let u = p.component(i);
            if differentiable {
                d += (u[k + 1] - u[k - 1]) / (2.0 * dt);
            }
            q += u[k] * base.dpsi()[i];
        }
        (coeffs.c1 * traj.zeta * d, 2.0 * coeffs.c2 * traj.zeta * q)
    });
    let (d, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((differentiable.then(|| mean_se(&d)), mean_se(&q)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableEstimate {
    pub name: String,
    pub base: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// Exact Gaussian expectation for the simulated mode.
    pub exact: f64,
    pub candidates: Vec<FormCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservablesReport {
    pub t: f64,
    pub mode: NoiseMode,
    pub zeta: f64,
    pub j0: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_paths: usize,
    pub form: EvaluationForm,
    pub kretschmann: ObservableEstimate,
    /// `sum dpsi_i^2`.
    pub expansion: ObservableEstimate,
    /// `sum dpsi_i`.
    pub expansion_trace: ObservableEstimate,
    pub shear_sq: ObservableEstimate,
}

impl ObservablesReport {
    /// The trace expansion is unshifted on average.
    pub fn expansion_identity_holds(&self) -> bool {
        let e = &self.expansion_trace;
        z_score(e.mc_mean, e.base, e.mc_se).abs() <= 3.0
    }
}

/// Exact Gaussian `E{K}` for rates `x_i + eps_i`, `E eps_i eps_j = s c_ij`.
fn kretschmann_expectation(base: &ModuliState, s: f64, shared: bool) -> f64 {
    let x = base.dpsi();
    let n = x.len();
    let dd: f64 = base.ddpsi().iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let mut quartic = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = if shared || i == j { 1.0 } else { 0.0 };
            let (a, b) = (x[i], x[j]);
            quartic += a * a * b * b + s * (a * a + b * b) + 4.0 * a * b * s * c + s * s * (1.0 + 2.0 * c * c);
        }
    }
    4.0 * dd + 4.0 * (sq + n as f64 * s) + 2.0 * quartic
}

/// Averaged Kretschmann scalar, expansion (quadratic and trace forms) and
/// shear on a perturbed trajectory, scored against the unshifted values, the
/// exact Gaussian expectation and the shifts `K + 6 n zeta^2 J(0)`,
/// `shear + 4 n zeta^2 J(0)`.
pub fn averaged_observables(
    traj: &PerturbedTrajectory,
    t: f64,
    exec: Execution,
) -> Result<ObservablesReport> {
    let spec = &traj.ensemble;
    let k = spec.grid.index_of(t)?;
    let t = spec.grid.t(k);
    let kernel = spec.simulated_kernel();
    let form = EvaluationForm::for_kernel(&kernel);
    let j0 = kernel.j0()?;
    let n = traj.base.n();
    let nf = n as f64;
    let z2 = traj.zeta * traj.zeta;
    let s = z2 * j0;
    let shared = spec.mode == NoiseMode::Shared || n == 1;
    let base = traj.base.state(t)?;

    let sampler = spec.sampler()?;
    let rows: Vec<Result<[f64; 4]>> = exec.map(spec.size, |r| {
        let p = sampler.path(r as u64);
        let st = traj.state_at(&p, k, form)?;
        Ok([kretschmann(&st), expansion(st.dpsi()), st.dpsi().iter().sum(), shear_sq(st.dpsi())])
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |c: usize| mean_se(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());

    let build = |name: &str, c: usize, b: f64, exact: f64, extra: Vec<(&str, f64)>| {
        let mc = col(c);
        let mut candidates = vec![form_check("unshifted", b, &mc), form_check("exact", exact, &mc)];
        for (nm, v) in extra {
            candidates.push(form_check(nm, v, &mc));
        }
        ObservableEstimate { name: name.into(), base: b, mc_mean: mc.mean, mc_se: mc.se, exact, candidates }
    };

    let k_base = kretschmann(&base);
    let x_base = expansion(base.dpsi());
    let tr_base: f64 = base.dpsi().iter().sum();
    let sh_base = shear_sq(base.dpsi());
    let shear_exact = sh_base + if shared { 0.0 } else { 2.0 * s * (nf * nf - nf) };

    Ok(ObservablesReport {
        t,
        mode: spec.mode,
        zeta: traj.zeta,
        j0,
        n,
        n_paths: spec.size,
        form,
        kretschmann: build(
            "kretschmann",
            0,
            k_base,
            kretschmann_expectation(&base, s, shared),
            vec![("shift 6 n zeta^2 J(0)", k_base + 6.0 * nf * s)],
        ),
        expansion: build("expansion", 1, x_base, x_base + nf * s, vec![]),
        expansion_trace: build("expansion-trace", 2, tr_base, tr_base, vec![]),
        shear_sq: build(
            "shear",
            3,
            sh_base,
            shear_exact,
            vec![("shift 4 n zeta^2 J(0)", sh_base + 4.0 * nf * s)],
        ),
    })
}

/// `sqrt(dt) N(0,1)` increments for stream `(seed, path)`.
pub fn brownian_increments(seed: u64, path: u64, n_steps: usize, dt: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, path, 0));
    let s = dt.sqrt();
    (0..n_steps).map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
}

/// Sign of the deterministic drift of a linear SDE `du = -+ alpha u dt + zeta u dB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GbmConvention {
    /// Drift `-alpha u`.
    Decaying,
    /// Drift `+alpha u`.
    Growing,
}

impl GbmConvention {
    fn drift(self, alpha: f64) -> f64 {
        match self {
            GbmConvention::Decaying => -alpha,
            GbmConvention::Growing => alpha,
        }
    }
}

/// Lyapunov exponent `drift - zeta^2 / 2` of the Ito equation.
pub fn gbm_lce(alpha: f64, zeta: f64, convention: GbmConvention) -> f64 {
    convention.drift(alpha) - 0.5 * zeta * zeta
}

/// Exact solution `u0 exp((drift - zeta^2/2) t + zeta B(t))` at every grid point.
pub fn gbm_exact(
    u0: f64,
    alpha: f64,
    zeta: f64,
    convention: GbmConvention,
    dt: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    check_u0(u0)?;
    let rate = gbm_lce(alpha, zeta, convention);
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(u0);
    let mut b = 0.0;
    for (k, db) in increments.iter().enumerate() {
        b += db;
        out.push(u0 * (rate * (k + 1) as f64 * dt + zeta * b).exp());
    }
    Ok(out)
}

fn check_u0(u0: f64) -> Result<()> {
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(Error::Domain(format!("initial value must be positive, got {u0}")));
    }
    Ok(())
}

/// Euler-Maruyama discretisation on the same increments.
pub fn gbm_euler_maruyama(
    u0: f64,
    alpha: f64,
    zeta: f64,
    convention: GbmConvention,
    dt: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    check_u0(u0)?;
    let mu = convention.drift(alpha);
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut u = u0;
    out.push(u);
    for db in increments {
        u += mu * u * dt + zeta * u * db;
        out.push(u);
    }
    Ok(out)
}

/// Milstein discretisation on the same increments.
pub fn gbm_milstein(
    u0: f64,
    alpha: f64,
    zeta: f64,
    convention: GbmConvention,
    dt: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    check_u0(u0)?;
    let mu = convention.drift(alpha);
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut u = u0;
    out.push(u);
    for db in increments {
        u += mu * u * dt + zeta * u * db + 0.5 * zeta * zeta * u * (db * db - dt);
        out.push(u);
    }
    Ok(out)
}

/// Ensemble of pathwise exponents `(1/T) ln(u(T) / u(0))`.
pub fn lce_empirical(paths: &[Vec<f64>], t_window: f64) -> Result<MeanSe> {
    if !(t_window > 0.0) {
        return Err(Error::Domain("window must be positive".into()));
    }
    let v: Vec<f64> = paths
        .iter()
        .map(|p| {
            let (first, last) = match (p.first(), p.last()) {
                (Some(a), Some(b)) => (*a, *b),
                _ => return Err(Error::Precondition("empty path".into())),
            };
            if !(first > 0.0 && last > 0.0) {
                return Err(Error::Domain("paths must stay positive".into()));
            }
            Ok((last / first).ln() / t_window)
        })
        .collect::<Result<_>>()?;
    Ok(mean_se(&v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbmReport {
    pub alpha: f64,
    pub zeta: f64,
    pub convention: GbmConvention,
    pub t: f64,
    pub analytic_lce: f64,
    pub mc_lce: f64,
    pub mc_se: f64,
    pub z_score: f64,
    pub stable: bool,
    pub mc_stable: bool,
}

/// Simulate `size` exact GBM paths on `n_steps` steps up to `t` and compare
/// the pathwise exponent with `drift - zeta^2/2`.
#[allow(clippy::too_many_arguments)]
pub fn gbm_lce_experiment(
    u0: f64,
    alpha: f64,
    zeta: f64,
    convention: GbmConvention,
    t: f64,
    n_steps: usize,
    size: usize,
    seed: u64,
    exec: Execution,
) -> Result<GbmReport> {
    check_u0(u0)?;
    if n_steps == 0 || !(t > 0.0) {
        return Err(Error::Domain("need t > 0 and at least one step".into()));
    }
    let dt = t / n_steps as f64;
    let rates: Vec<f64> = exec.map(size, |r| {
        let inc = brownian_increments(seed, r as u64, n_steps, dt);
        let path = gbm_exact(u0, alpha, zeta, convention, dt, &inc).expect("u0 checked");
        (path[n_steps] / u0).ln() / t
    });
    let mc = mean_se(&rates);
    let analytic = gbm_lce(alpha, zeta, convention);
    Ok(GbmReport {
        alpha,
        zeta,
        convention,
        t,
        analytic_lce: analytic,
        mc_lce: mc.mean,
        mc_se: mc.se,
        z_score: z_score(mc.mean, analytic, mc.se),
        stable: analytic < 0.0,
        mc_stable: mc.mean < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceScan {
    /// `(varsigma, lambda)` rows.
    pub rows: Vec<(f64, f64)>,
    /// Log-log slope of lambda against varsigma; absent when lambda vanishes.
    pub slope: Option<f64>,
}

/// Induced lambda for OU kernels of shrinking correlation time.
pub fn white_noise_divergence_scan(
    varsigmas: &[f64],
    c: f64,
    zeta: f64,
    n: usize,
    mode: NoiseMode,
) -> Result<DivergenceScan> {
    let rows = varsigmas
        .iter()
        .map(|&s| Ok((s, induced_lambda_analytic(&Kernel::ou(c, s)?, zeta, n, mode)?)))
        .collect::<Result<Vec<_>>>()?;
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.1 > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
        Some(linear_fit(&x, &y)?.slope)
    } else {
        None
    };
    Ok(DivergenceScan { rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBoundReport {
    pub ell: u32,
    pub k: f64,
    pub zeta: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_paths: usize,
    /// `||psi||^ell exp(K ell (ell - 1) T / 2)`.
    pub bound: f64,
    pub sup_mean: f64,
    pub sup_se: f64,
    pub terminal_mean: f64,
    pub terminal_se: f64,
    pub holds_sup: bool,
    pub holds_terminal: bool,
}

/// `d psi_hat = zeta psi_hat dW` (shared `W`, `f(psi) = psi`), solved exactly
/// on a grid. Compares `E sup_t ||psi_hat||^ell` and `E ||psi_hat(T)||^ell`
/// with the Gronwall bound, each inflated by five relative standard errors.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    psi: &[f64],
    zeta: f64,
    ell: u32,
    k: f64,
    t: f64,
    n_steps: usize,
    size: usize,
    seed: u64,
    exec: Execution,
) -> Result<MomentBoundReport> {
    if ell < 1 {
        return Err(Error::Domain("moment order must be at least 1".into()));
    }
    if n_steps == 0 || !(t > 0.0) {
        return Err(Error::Domain("need t > 0 and at least one step".into()));
    }
    let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let l = ell as f64;
    let bound = norm.powf(l) * (0.5 * k * l * (l - 1.0) * t).exp();
    let dt = t / n_steps as f64;
    let pairs: Vec<(f64, f64)> = exec.map(size, |r| {
        let inc = brownian_increments(seed, r as u64, n_steps, dt);
        let mut w = 0.0;
        let mut sup: f64 = 1.0;
        let mut g = 1.0;
        for (j, db) in inc.iter().enumerate() {
            w += db;
            g = (zeta * w - 0.5 * zeta * zeta * (j + 1) as f64 * dt).exp();
            sup = sup.max(g);
        }
        ((norm * sup).powf(l), (norm * g).powf(l))
    });
    let (s, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (s, e) = (mean_se(&s), mean_se(&e));
    let holds = |m: &MeanSe| {
        let rel = if m.mean > 0.0 { m.se / m.mean } else { 0.0 };
        m.mean <= bound * (1.0 + 5.0 * rel) + 1e-12 * bound
    };
    Ok(MomentBoundReport {
        ell,
        k,
        zeta,
        t,
        n_paths: size,
        bound,
        sup_mean: s.mean,
        sup_se: s.se,
        terminal_mean: e.mean,
        terminal_se: e.se,
        holds_sup: holds(&s),
        holds_terminal: holds(&e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TimeGrid;

    fn spec(kernel: Kernel, mode: NoiseMode, n: usize, size: usize) -> EnsembleSpec {
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        EnsembleSpec::new(kernel, grid, mode, n, size, 11).unwrap()
    }

    #[test]
    fn induced_lambda_examples() {
        let ou = Kernel::ou(1.0, 0.5).unwrap();
        assert_eq!(induced_lambda_analytic(&ou, 1.0, 3, NoiseMode::Iid).unwrap(), 6.0);
        assert_eq!(induced_lambda_analytic(&ou, 1.0, 3, NoiseMode::Shared).unwrap(), 12.0);
        for mode in [NoiseMode::Iid, NoiseMode::Shared] {
            assert!((induced_lambda_analytic(&ou, 0.7, 1, mode).unwrap() - 0.98).abs() < 1e-15);
            assert_eq!(induced_lambda_analytic(&ou, 0.0, 4, mode).unwrap(), 0.0);
        }
        let d = OperatorCoefficients::einstein_diagonal();
        assert_eq!(induced_lambda(&ou, 1.0, 3, NoiseMode::Shared, &d).unwrap(), 6.0);
        let w = Kernel::white_limit(1.0).unwrap();
        assert!(matches!(induced_lambda_analytic(&w, 1.0, 2, NoiseMode::Iid), Err(Error::WhiteNoiseDivergence(_))));
    }

    #[test]
    fn zero_coupling_gives_exact_base_residual() {
        let s = spec(Kernel::squared_exp(1.0, 1.0).unwrap(), NoiseMode::Iid, 2, 100);
        let traj = PerturbedTrajectory::new(BaseTrajectory::Static { psi_e: vec![0.1, 0.2] }, 0.0, s).unwrap();
        let e = OperatorCoefficients::einstein();
        for form in [EvaluationForm::Weak, EvaluationForm::Pathwise] {
            let r = mc_averaged_residual(&traj, &e, 1.0, form, Execution::Sequential).unwrap();
            assert_eq!(r.mc_mean, 0.0);
            assert_eq!(r.mc_se, 0.0);
            assert_eq!(r.analytic, 0.0);
            assert_eq!(r.z_score, 0.0);
        }
    }

    #[test]
    fn small_ensembles_rejected() {
        let s = spec(Kernel::ou(1.0, 1.0).unwrap(), NoiseMode::Iid, 1, 99);
        let traj = PerturbedTrajectory::new(BaseTrajectory::Static { psi_e: vec![0.0] }, 1.0, s).unwrap();
        let r = mc_averaged_residual(&traj, &OperatorCoefficients::einstein(), 1.0, EvaluationForm::Weak, Execution::Sequential);
        assert!(matches!(r, Err(Error::InsufficientEnsemble { got: 99, need: 100 })));
    }

    #[test]
    fn pathwise_rejected_for_ou() {
        let s = spec(Kernel::ou(1.0, 1.0).unwrap(), NoiseMode::Iid, 1, 100);
        let traj = PerturbedTrajectory::new(BaseTrajectory::Static { psi_e: vec![0.0] }, 1.0, s).unwrap();
        let r = mc_averaged_residual(&traj, &OperatorCoefficients::einstein(), 1.0, EvaluationForm::Pathwise, Execution::Sequential);
        assert!(matches!(r, Err(Error::NotDifferentiable(_))));
    }

    #[test]
    fn pathwise_and_weak_states_agree_on_smooth_paths() {
        let s = spec(Kernel::squared_exp(1.0, 1.0).unwrap(), NoiseMode::Iid, 3, 100);
        let p = KasnerExponents::new(vec![-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let traj = PerturbedTrajectory::new(BaseTrajectory::Kasner { psi0: vec![0.0; 3], p }, 0.5, s).unwrap();
        let path = s.sampler().unwrap().path(3);
        let w = traj.state_at(&path, 100, EvaluationForm::Weak).unwrap();
        let q = traj.state_at(&path, 100, EvaluationForm::Pathwise).unwrap();
        for i in 0..3 {
            assert!((w.psi()[i] - q.psi()[i]).abs() < 1e-15);
            assert!((w.dpsi()[i] - q.dpsi()[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn kretschmann_expectation_without_noise_is_base() {
        let st = ModuliState::new(vec![0.0; 3], vec![0.3, -0.2, 0.5], vec![0.1, 0.0, -0.4]).unwrap();
        assert!((kretschmann_expectation(&st, 0.0, false) - kretschmann(&st)).abs() < 1e-14);
        assert!((kretschmann_expectation(&st, 0.0, true) - kretschmann(&st)).abs() < 1e-14);
    }

    #[test]
    fn gbm_examples() {
        let inc = brownian_increments(1, 0, 100, 0.01);
        let p = gbm_exact(2.0, 0.5, 0.0, GbmConvention::Decaying, 0.01, &inc).unwrap();
        assert!((p[100] - 2.0 * (-0.5f64).exp()).abs() < 1e-14);
        assert_eq!(gbm_lce(-1.0, 1.0, GbmConvention::Decaying), 0.5);
        assert_eq!(gbm_lce(1.0, 2.0, GbmConvention::Growing), -1.0);
        assert_eq!(gbm_lce(1.0, 2.0, GbmConvention::Decaying), -3.0);
        assert!(gbm_exact(0.0, 1.0, 1.0, GbmConvention::Decaying, 0.01, &inc).is_err());
        let r = lce_empirical(&[p], 1.0).unwrap();
        assert!((r.mean + 0.5).abs() < 1e-14);
    }

    #[test]
    fn lce_of_exponential_paths() {
        let paths: Vec<Vec<f64>> = (0..4).map(|_| (0..=50).map(|k| (0.3 * k as f64 * 0.1).exp()).collect()).collect();
        let r = lce_empirical(&paths, 5.0).unwrap();
        assert!((r.mean - 0.3).abs() < 1e-14);
        assert_eq!(r.se, 0.0);
        assert!(lce_empirical(&[vec![1.0, -1.0]], 1.0).is_err());
    }

    #[test]
    fn divergence_scan_examples() {
        let s = white_noise_divergence_scan(&[1.0, 0.5, 0.25, 0.125], 1.0, 0.5, 3, NoiseMode::Iid).unwrap();
        assert!((s.slope.unwrap() + 1.0).abs() < 1e-12);
        assert!((s.rows[1].1 - 2.0 * s.rows[0].1).abs() < 1e-12);
        let z = white_noise_divergence_scan(&[1.0, 0.5], 1.0, 0.0, 3, NoiseMode::Iid).unwrap();
        assert!(z.rows.iter().all(|r| r.1 == 0.0));
        assert!(z.slope.is_none());
    }

    #[test]
    fn moment_bound_without_noise() {
        for ell in 1..=3 {
            let r = moment_bound_check(&[0.6, 0.8], 0.0, ell, 1.0, 1.0, 50, 10, 3, Execution::Sequential).unwrap();
            assert!((r.sup_mean - 1.0).abs() < 1e-12);
            assert!(r.holds_sup && r.holds_terminal);
        }
        assert!(moment_bound_check(&[1.0], 1.0, 0, 1.0, 1.0, 10, 10, 0, Execution::Sequential).is_err());
    }
}
