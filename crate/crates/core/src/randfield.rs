//! Stationary Gaussian random fields on a time grid.
//!
//! Three covariance kernels are supported: Ornstein-Uhlenbeck
//! `(C/s) exp(-|d|/s)`, squared-exponential `(C/s^2) exp(-d^2/s^2)` and a
//! white-noise limit that only exists through its OU regularisation.
//! OU paths are drawn with the exact AR(1) recursion; any regulated kernel
//! can also be drawn through a Cholesky factor of its Gram matrix.
//!
//! Path `r`, component `i` of an ensemble draws from its own ChaCha8 stream
//! seeded by `stream_seed(seed, r, i)`, so ensembles are reproducible and
//! can be generated in any order.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::TimeGrid;
use crate::numeric::{cumulative_trapezoid, mean_se, stream_seed, MeanSe};

/// Largest grid the Cholesky sampler accepts.
pub const CHOLESKY_CAP: usize = 4096;
/// Correlation time of the OU stand-in for white noise, in units of `dt`.
pub const WHITE_LIMIT_FRACTION: f64 = 0.01;

const JITTER: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-6;
const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    Ou { c: f64, varsigma: f64 },
    SquaredExp { c: f64, varsigma: f64 },
    /// `alpha delta(d)`; equal-time values diverge.
    WhiteLimit { alpha: f64 },
}

impl Kernel {
    pub fn ou(c: f64, varsigma: f64) -> Result<Self> {
        check_params(c, varsigma)?;
        Ok(Kernel::Ou { c, varsigma })
    }

    pub fn squared_exp(c: f64, varsigma: f64) -> Result<Self> {
        check_params(c, varsigma)?;
        Ok(Kernel::SquaredExp { c, varsigma })
    }

    pub fn white_limit(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("white-noise intensity must be positive, got {alpha}")));
        }
        Ok(Kernel::WhiteLimit { alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Ou { .. } => "ou",
            Kernel::SquaredExp { .. } => "squared-exp",
            Kernel::WhiteLimit { .. } => "white-limit",
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Kernel::Ou { c, .. } | Kernel::SquaredExp { c, .. } => c,
            Kernel::WhiteLimit { alpha } => alpha / 2.0,
        }
    }

    pub fn correlation_time(&self) -> Option<f64> {
        match *self {
            Kernel::Ou { varsigma, .. } | Kernel::SquaredExp { varsigma, .. } => Some(varsigma),
            Kernel::WhiteLimit { .. } => None,
        }
    }

    /// `J(delta)`.
    pub fn eval(&self, delta: f64) -> Result<f64> {
        match *self {
            Kernel::Ou { c, varsigma } => Ok(c / varsigma * (-delta.abs() / varsigma).exp()),
            Kernel::SquaredExp { c, varsigma } => {
                let s2 = varsigma * varsigma;
                Ok(c / s2 * (-delta * delta / s2).exp())
            }
            Kernel::WhiteLimit { .. } => Err(Error::WhiteNoiseDivergence(
                "a white-noise kernel cannot be evaluated pointwise",
            )),
        }
    }

    /// `J(0)`.
    pub fn j0(&self) -> Result<f64> {
        self.eval(0.0)
    }

    /// `J''(0)`; exists only for mean-square differentiable fields.
    pub fn second_derivative_at_zero(&self) -> Result<f64> {
        match *self {
            Kernel::SquaredExp { c, varsigma } => Ok(-2.0 * c / varsigma.powi(4)),
            Kernel::Ou { .. } => Err(Error::NotDifferentiable("ou")),
            Kernel::WhiteLimit { .. } => Err(Error::NotDifferentiable("white-limit")),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self, Kernel::SquaredExp { .. })
    }

    /// `int_0^inf J`.
    pub fn half_line_integral(&self) -> f64 {
        match *self {
            Kernel::Ou { c, .. } => c,
            Kernel::SquaredExp { c, varsigma } => c * std::f64::consts::PI.sqrt() / (2.0 * varsigma),
            Kernel::WhiteLimit { alpha } => alpha / 2.0,
        }
    }

    /// `int_0^t (t - s) J(s) ds`, the integral of `J(t1 - t2)` over `0 <= t2 <= t1 <= t`.
    pub fn triangle_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
        }
        match *self {
            Kernel::Ou { c, varsigma } => Ok(c * t - c * varsigma * (-(t / varsigma)).exp_m1().abs()),
            Kernel::SquaredExp { c, varsigma } => {
                let s2 = varsigma * varsigma;
                let a = t * std::f64::consts::PI.sqrt() * varsigma / 2.0 * crate::numeric::erf(t / varsigma);
                let b = s2 / 2.0 * (-(-(t * t) / s2).exp_m1());
                Ok(c / s2 * (a - b))
            }
            Kernel::WhiteLimit { .. } => Err(Error::WhiteNoiseDivergence(
                "use the regulated kernel for finite-time integrals",
            )),
        }
    }

    /// `Var int_0^t U = int_0^t int_0^t J(t1 - t2)`, twice the triangle integral.
    pub fn integral_variance(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.triangle_integral(t)?)
    }

    /// The kernel actually simulated on a grid of step `dt`: white noise becomes
    /// OU with `varsigma = dt / 100` and the same integrated intensity.
    pub fn regulated(&self, dt: f64) -> Kernel {
        match *self {
            Kernel::WhiteLimit { alpha } => Kernel::Ou {
                c: alpha / 2.0,
                varsigma: dt * WHITE_LIMIT_FRACTION,
            },
            k => k,
        }
    }
}

fn check_params(c: f64, varsigma: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("kernel amplitude must be positive, got {c}")));
    }
    if !(varsigma > 0.0) || !varsigma.is_finite() {
        return Err(Error::Domain(format!("correlation time must be positive, got {varsigma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One field shared by every component.
    Shared,
    /// Independent fields per component.
    Iid,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Shared => "shared",
            NoiseMode::Iid => "iid",
        }
    }

    /// Number of independent streams needed for `n` components.
    pub fn streams(self, n: usize) -> usize {
        match self {
            NoiseMode::Shared => 1,
            NoiseMode::Iid => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    /// AR(1) for OU kernels, Cholesky otherwise.
    Auto,
    Cholesky,
}

/// One realisation `U_i(t_k)` of the field for every component.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    kernel: Kernel,
    mode: NoiseMode,
    n_components: usize,
    values: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn new(
        grid: TimeGrid,
        kernel: Kernel,
        mode: NoiseMode,
        n_components: usize,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::Domain("need at least one component".into()));
        }
        let streams = mode.streams(n_components);
        if values.len() != streams {
            return Err(Error::Dimension { expected: streams, got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| v.len() != grid.len()) {
            return Err(Error::Dimension { expected: grid.len(), got: v.len() });
        }
        Ok(Self { grid, kernel, mode, n_components, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn mode(&self) -> NoiseMode {
        self.mode
    }
    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Values of component `i`; in shared mode every component is the same slice.
    pub fn component(&self, i: usize) -> &[f64] {
        match self.mode {
            NoiseMode::Shared => &self.values[0],
            NoiseMode::Iid => &self.values[i],
        }
    }

    /// The independent streams (one in shared mode).
    pub fn streams(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Everything that determines an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kernel: Kernel,
    pub grid: TimeGrid,
    pub mode: NoiseMode,
    pub n_components: usize,
    pub size: usize,
    pub seed: u64,
    pub method: SamplerMethod,
}

impl EnsembleSpec {
    pub fn new(
        kernel: Kernel,
        grid: TimeGrid,
        mode: NoiseMode,
        n_components: usize,
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::Domain("need at least one component".into()));
        }
        if size < 2 {
            return Err(Error::InsufficientEnsemble { got: size, need: 2 });
        }
        Ok(Self { kernel, grid, mode, n_components, size, seed, method: SamplerMethod::Auto })
    }

    pub fn with_method(mut self, method: SamplerMethod) -> Self {
        self.method = method;
        self
    }

    /// The kernel actually simulated.
    pub fn simulated_kernel(&self) -> Kernel {
        self.kernel.regulated(self.grid.dt())
    }

    pub fn sampler(&self) -> Result<PathSampler> {
        PathSampler::new(*self)
    }

    /// Draw and keep every path.
    pub fn generate(&self, exec: Execution) -> Result<Ensemble> {
        let sampler = self.sampler()?;
        let paths = exec.map(self.size, |r| sampler.path(r as u64));
        Ok(Ensemble { spec: *self, paths })
    }
}

#[derive(Debug, Clone)]
enum Draw {
    Ar1 { rho: f64, sigma: f64 },
    /// Row-major packed lower-triangular factor.
    Factor(Arc<Vec<f64>>),
}

/// Draws individual paths of an ensemble without materialising the rest.
#[derive(Debug, Clone)]
pub struct PathSampler {
    spec: EnsembleSpec,
    draw: Draw,
}

impl PathSampler {
    fn new(spec: EnsembleSpec) -> Result<Self> {
        let kernel = spec.simulated_kernel();
        let draw = match (kernel, spec.method) {
            (Kernel::Ou { c, varsigma }, SamplerMethod::Auto) => Draw::Ar1 {
                rho: (-spec.grid.dt() / varsigma).exp(),
                sigma: (c / varsigma).sqrt(),
            },
            _ => Draw::Factor(Arc::new(cholesky_factor(&kernel, &spec.grid.times())?)),
        };
        Ok(Self { spec, draw })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    /// Path `r` of the ensemble.
    pub fn path(&self, r: u64) -> NoisePath {
        let spec = &self.spec;
        let m = spec.grid.len();
        let values = (0..spec.mode.streams(spec.n_components))
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, r, i as u64));
                match &self.draw {
                    Draw::Ar1 { rho, sigma } => ar1(&mut rng, m, *rho, *sigma),
                    Draw::Factor(l) => apply_factor(l, m, &mut rng),
                }
            })
            .collect();
        NoisePath {
            grid: spec.grid,
            kernel: spec.simulated_kernel(),
            mode: spec.mode,
            n_components: spec.n_components,
            values,
        }
    }
}

fn ar1(rng: &mut ChaCha8Rng, m: usize, rho: f64, sigma: f64) -> Vec<f64> {
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(m);
    let z: f64 = StandardNormal.sample(rng);
    let mut u = sigma * z;
    out.push(u);
    for _ in 1..m {
        let z: f64 = StandardNormal.sample(rng);
        u = rho * u + innov * z;
        out.push(u);
    }
    out
}

fn apply_factor(l: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = Vec::with_capacity(m);
    let mut offset = 0;
    for k in 0..m {
        let row = &l[offset..offset + k + 1];
        out.push(row.iter().zip(&z).map(|(a, b)| a * b).sum());
        offset += k + 1;
    }
    out
}

pub fn gram_matrix(kernel: &Kernel, times: &[f64]) -> Result<DMatrix<f64>> {
    let m = times.len();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = kernel.eval(times[i] - times[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Packed Cholesky factor of the jittered Gram matrix, escalating the jitter
/// tenfold from `1e-10 J(0)` up to `1e-6 J(0)` before giving up.
fn cholesky_factor(kernel: &Kernel, times: &[f64]) -> Result<Vec<f64>> {
    let m = times.len();
    if m > CHOLESKY_CAP {
        return Err(Error::Precondition(format!(
            "grid of {m} points exceeds the Cholesky cap of {CHOLESKY_CAP}"
        )));
    }
    let j0 = kernel.j0()?;
    let gram = gram_matrix(kernel, times)?;
    let mut eps = JITTER;
    while eps <= MAX_JITTER * (1.0 + 1e-9) {
        let mut g = gram.clone();
        for k in 0..m {
            g[(k, k)] += eps * j0;
        }
        if let Some(ch) = g.cholesky() {
            let l = ch.l();
            let mut packed = Vec::with_capacity(m * (m + 1) / 2);
            for i in 0..m {
                for j in 0..=i {
                    packed.push(l[(i, j)]);
                }
            }
            return Ok(packed);
        }
        eps *= 10.0;
    }
    Err(Error::NotPsd { min_eigenvalue: min_eigenvalue(&gram) })
}

/// Single draw of a regulated kernel at arbitrary times.
pub fn sample_at_times(kernel: &Kernel, times: &[f64], seed: u64) -> Result<Vec<f64>> {
    let l = cholesky_factor(kernel, times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(apply_factor(&l, times.len(), &mut rng))
}

/// One OU path (path index 0 of the corresponding ensemble).
pub fn sample_ou(
    grid: TimeGrid,
    kernel: Kernel,
    seed: u64,
    mode: NoiseMode,
    n_components: usize,
) -> Result<NoisePath> {
    let kernel = kernel.regulated(grid.dt());
    if !matches!(kernel, Kernel::Ou { .. }) {
        return Err(Error::Precondition("AR(1) sampling needs an OU kernel".into()));
    }
    Ok(EnsembleSpec::new(kernel, grid, mode, n_components, 2, seed)?.sampler()?.path(0))
}

/// One path drawn through the Cholesky factor of the Gram matrix.
pub fn sample_gaussian_kernel(
    grid: TimeGrid,
    kernel: Kernel,
    seed: u64,
    mode: NoiseMode,
    n_components: usize,
) -> Result<NoisePath> {
    Ok(EnsembleSpec::new(kernel, grid, mode, n_components, 2, seed)?
        .with_method(SamplerMethod::Cholesky)
        .sampler()?
        .path(0))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub ok: bool,
}

/// Smallest eigenvalue of a symmetric matrix; `ok` iff it is at least
/// `-1e-8` times the largest diagonal entry.
pub fn check_psd_matrix(m: &DMatrix<f64>) -> Result<PsdReport> {
    if !m.is_square() {
        return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
    }
    let scale = m.diagonal().iter().copied().fold(0.0, f64::max);
    let min = min_eigenvalue(m);
    Ok(PsdReport { min_eigenvalue: min, ok: min >= -PSD_TOLERANCE * scale })
}

pub fn check_psd(kernel: &Kernel, grid: &TimeGrid) -> Result<PsdReport> {
    check_psd_matrix(&gram_matrix(&kernel.regulated(grid.dt()), &grid.times())?)
}

/// A materialised ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub paths: Vec<NoisePath>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Ensemble estimate of `E{U(t) U(t + lag)}` averaged over all valid `t` and
/// components; the standard error comes from the spread of per-path averages.
pub fn estimate_covariance(ensemble: &Ensemble, lag_steps: usize) -> Result<MeanSe> {
    let m = ensemble.spec.grid.len();
    if lag_steps >= m {
        return Err(Error::Range(format!("lag {lag_steps} exceeds grid of {m} points")));
    }
    let per_path: Vec<f64> = ensemble
        .paths
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            for s in p.streams() {
                acc += (0..m - lag_steps).map(|k| s[k] * s[k + lag_steps]).sum::<f64>()
                    / (m - lag_steps) as f64;
            }
            acc / p.streams().len() as f64
        })
        .collect();
    Ok(mean_se(&per_path))
}

/// Ensemble estimate of `E{U(t_k) U(t_k + lag)}` at one time index.
pub fn covariance_at(ensemble: &Ensemble, k: usize, lag_steps: usize) -> Result<MeanSe> {
    let m = ensemble.spec.grid.len();
    if k + lag_steps >= m {
        return Err(Error::Range(format!("index {} exceeds grid of {m} points", k + lag_steps)));
    }
    let v: Vec<f64> =
        ensemble.paths.iter().map(|p| p.component(0)[k] * p.component(0)[k + lag_steps]).collect();
    Ok(mean_se(&v))
}

/// Trapezoidal `int_{t_start}^{upto} U_i` for every component.
pub fn path_integral(path: &NoisePath, upto: f64) -> Result<Vec<f64>> {
    let k = path.grid.index_of(upto)?;
    let dt = path.grid.dt();
    Ok((0..path.n_components)
        .map(|i| {
            let v = &path.component(i)[..=k];
            cumulative_trapezoid(v, dt)[k]
        })
        .collect())
}

/// Central-difference derivative of each component; only for differentiable kernels.
pub fn path_derivative(path: &NoisePath) -> Result<Vec<Vec<f64>>> {
    if !path.kernel.is_differentiable() {
        return Err(Error::NotDifferentiable(path.kernel.name()));
    }
    let dt = path.grid.dt();
    Ok((0..path.n_components)
        .map(|i| crate::numeric::fd_derivatives(path.component(i), dt).0)
        .collect())
}

/// Columnar CSV `t,component,path_id,value`.
pub fn write_csv<W: Write>(ensemble: &Ensemble, mut out: W) -> Result<()> {
    writeln!(out, "t,component,path_id,value")?;
    for (r, p) in ensemble.paths.iter().enumerate() {
        for i in 0..p.n_components {
            for (k, v) in p.component(i).iter().enumerate() {
                writeln!(out, "{},{},{},{}", p.grid.t(k), i, r, v)?;
            }
        }
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"KLENS001";

/// Binary cache: magic, spec header, then every stream as little-endian `f64`.
pub fn write_cache<W: Write>(ensemble: &Ensemble, mut out: W) -> Result<()> {
    let s = &ensemble.spec;
    out.write_all(MAGIC)?;
    let (kind, p1, p2) = match s.kernel {
        Kernel::Ou { c, varsigma } => (0u8, c, varsigma),
        Kernel::SquaredExp { c, varsigma } => (1, c, varsigma),
        Kernel::WhiteLimit { alpha } => (2, alpha, 0.0),
    };
    out.write_all(&[kind, mode_byte(s.mode), method_byte(s.method)])?;
    for v in [p1, p2, s.grid.t_start(), s.grid.dt()] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in [s.grid.n_steps() as u64, s.n_components as u64, s.size as u64, s.seed, ensemble.len() as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    for p in &ensemble.paths {
        for stream in p.streams() {
            for v in stream {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn mode_byte(m: NoiseMode) -> u8 {
    match m {
        NoiseMode::Shared => 0,
        NoiseMode::Iid => 1,
    }
}

fn method_byte(m: SamplerMethod) -> u8 {
    match m {
        SamplerMethod::Auto => 0,
        SamplerMethod::Cholesky => 1,
    }
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_cache<R: BufRead>(mut input: R) -> Result<Ensemble> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ensemble cache".into()));
    }
    let mut tags = [0u8; 3];
    input.read_exact(&mut tags)?;
    let (p1, p2) = (read_f64(&mut input)?, read_f64(&mut input)?);
    let kernel = match tags[0] {
        0 => Kernel::ou(p1, p2)?,
        1 => Kernel::squared_exp(p1, p2)?,
        2 => Kernel::white_limit(p1)?,
        k => return Err(Error::Format(format!("unknown kernel tag {k}"))),
    };
    let mode = match tags[1] {
        0 => NoiseMode::Shared,
        1 => NoiseMode::Iid,
        k => return Err(Error::Format(format!("unknown mode tag {k}"))),
    };
    let method = match tags[2] {
        0 => SamplerMethod::Auto,
        1 => SamplerMethod::Cholesky,
        k => return Err(Error::Format(format!("unknown method tag {k}"))),
    };
    let (t_start, dt) = (read_f64(&mut input)?, read_f64(&mut input)?);
    let n_steps = read_u64(&mut input)? as usize;
    let n_components = read_u64(&mut input)? as usize;
    let size = read_u64(&mut input)? as usize;
    let seed = read_u64(&mut input)?;
    let stored = read_u64(&mut input)? as usize;
    let grid = TimeGrid::new(t_start, dt, n_steps)?;
    let spec = EnsembleSpec::new(kernel, grid, mode, n_components, size, seed)?.with_method(method);
    let sim = spec.simulated_kernel();
    let mut paths = Vec::with_capacity(stored);
    for _ in 0..stored {
        let mut streams = Vec::with_capacity(mode.streams(n_components));
        for _ in 0..mode.streams(n_components) {
            let mut v = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                v.push(read_f64(&mut input)?);
            }
            streams.push(v);
        }
        paths.push(NoisePath::new(grid, sim, mode, n_components, streams)?);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in cache", rest.len())));
    }
    Ok(Ensemble { spec, paths })
}
