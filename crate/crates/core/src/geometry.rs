//! Domain types shared by every module: the time grid, the moduli state
//! `psi_i` with its derivatives, radii `a_i = exp(psi_i)`, Kasner exponents,
//! the operator weight family, and the geometric observables.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Absolute tolerance on `|sum p - sum p^2|` for a vector to count as Kasner.
pub const KASNER_TOLERANCE: f64 = 1e-10;

const TWO_PI_SQ: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Uniform grid `t_k = t_start + k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if !t_start.is_finite() {
            return Err(Error::Domain("grid start must be finite".into()));
        }
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(Self { t_start, dt, n_steps })
    }

    /// Grid covering `[t_start, t_end]` with `n_steps` equal steps.
    pub fn spanning(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Self::new(t_start, (t_end - t_start) / n_steps as f64, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn t(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }
    pub fn t_end(&self) -> f64 {
        self.t(self.n_steps)
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t(k)).collect()
    }

    /// Index of the grid point nearest to `t`, or a range error outside the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = ((t - self.t_start) / self.dt).round();
        if !(0.0..=self.n_steps as f64).contains(&k) {
            return Err(Error::Range(format!(
                "t = {t} outside grid [{}, {}]",
                self.t_start,
                self.t_end()
            )));
        }
        Ok(k as usize)
    }
}

/// The log-radii `psi_i(t)` and their first two time derivatives at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuliState {
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    ddpsi: Vec<f64>,
}

impl ModuliState {
    pub fn new(psi: Vec<f64>, dpsi: Vec<f64>, ddpsi: Vec<f64>) -> Result<Self> {
        let n = psi.len();
        if n == 0 {
            return Err(Error::Domain("moduli state needs n >= 1".into()));
        }
        for v in [&dpsi, &ddpsi] {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
        }
        ensure_finite(&psi, "psi")?;
        ensure_finite(&dpsi, "dpsi")?;
        ensure_finite(&ddpsi, "ddpsi")?;
        Ok(Self { psi, dpsi, ddpsi })
    }

    /// A time-independent (equilibrium) state.
    pub fn at_rest(psi: Vec<f64>) -> Result<Self> {
        let n = psi.len();
        Self::new(psi, vec![0.0; n], vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.psi.len()
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn dpsi(&self) -> &[f64] {
        &self.dpsi
    }
    pub fn ddpsi(&self) -> &[f64] {
        &self.ddpsi
    }

    /// Same state with every index permuted by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect();
        Self { psi: pick(&self.psi), dpsi: pick(&self.dpsi), ddpsi: pick(&self.ddpsi) }
    }
}

/// Torus radii, all strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Radii(Vec<f64>);

impl Radii {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        ensure_finite(&a, "radius")?;
        if let Some(i) = a.iter().position(|&v| v <= 0.0) {
            return Err(Error::Domain(format!("radius a[{i}] = {} must be positive", a[i])));
        }
        if a.is_empty() {
            return Err(Error::Domain("radii need n >= 1".into()));
        }
        Ok(Self(a))
    }

    /// `n` equal radii.
    pub fn uniform(a: f64, n: usize) -> Result<Self> {
        Self::new(vec![a; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn n(&self) -> usize {
        self.0.len()
    }
    pub fn moduli(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.ln()).collect()
    }
    /// Euclidean norm of the radius vector.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Power-law exponents of the rolling-radii solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KasnerExponents(Vec<f64>);

impl KasnerExponents {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Domain("Kasner exponents need n >= 1".into()));
        }
        ensure_finite(&p, "p")?;
        Ok(Self(p))
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn n(&self) -> usize {
        self.0.len()
    }
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
    pub fn sum_sq(&self) -> f64 {
        self.0.iter().map(|p| p * p).sum()
    }
    /// `|sum p_i - sum p_i^2|`.
    pub fn residual(&self) -> f64 {
        (self.sum() - self.sum_sq()).abs()
    }
    pub fn is_valid(&self) -> bool {
        self.residual() < KASNER_TOLERANCE
    }
}

/// How the double sum `sum_i sum_j x_i x_j` in the nonlinear operators is read.
///
/// `Full` is the literal double sum over all pairs. `Diagonal` keeps only
/// `i = j`, which is the reading under which `sum p = sum p^2` alone makes
/// the power laws exact and `q = sqrt(lambda / n)` solves the constant-rate
/// equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CrossSum {
    #[default]
    Full,
    Diagonal,
}

/// Weights `(c1, c2, c3)` of
/// `H = c1 * sum ddpsi + c2 * sum dpsi^2 + c3 * sum_ij dpsi_i dpsi_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub cross: CrossSum,
}

impl OperatorCoefficients {
    /// Reduced Einstein vacuum operator with the literal double sum.
    pub fn einstein() -> Self {
        Self { c1: 1.0, c2: 0.5, c3: 0.5, cross: CrossSum::Full }
    }

    /// Einstein weights with the double sum restricted to its diagonal.
    pub fn einstein_diagonal() -> Self {
        Self { c1: 1.0, c2: 0.5, c3: 0.5, cross: CrossSum::Diagonal }
    }

    /// The one-parameter family `sum ddpsi + beta * sum dpsi^2`.
    pub fn general(beta: f64) -> Self {
        Self { c1: 1.0, c2: beta, c3: 0.0, cross: CrossSum::Full }
    }

    /// `sum_ij x_i x_j` under this convention.
    pub fn cross_sum(&self, x: &[f64]) -> f64 {
        match self.cross {
            CrossSum::Full => {
                let s: f64 = x.iter().sum();
                s * s
            }
            CrossSum::Diagonal => x.iter().map(|v| v * v).sum(),
        }
    }

    /// Number of index pairs the double sum ranges over for a shared
    /// (identical) quantity in `n` components.
    pub fn shared_pair_count(&self, n: usize) -> f64 {
        match self.cross {
            CrossSum::Full => (n * n) as f64,
            CrossSum::Diagonal => n as f64,
        }
    }
}

/// Reading of the `(2,1)` matrix norm for the diagonal metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm21Reading {
    /// Sum of column 2-norms, which for a diagonal matrix is `sum |g_ii|`.
    #[default]
    ColumnSum,
    /// The printed formula taken literally: `n` copies of `(sum |g_ii|^2)^(1/2)`.
    RepeatedIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricNorms {
    pub norm21: f64,
    pub frobenius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryObservables {
    pub volume: f64,
    pub norm21: f64,
    pub frobenius: f64,
    pub kretschmann: f64,
    /// `sum |dpsi_i dpsi_i|`.
    pub expansion: f64,
    /// `sum dpsi_i`, the trace form of the expansion.
    pub expansion_trace: f64,
    pub shear_sq: f64,
}

pub fn radii_from_moduli(psi: &[f64]) -> Result<Radii> {
    ensure_finite(psi, "psi")?;
    let a: Vec<f64> = psi.iter().map(|p| p.exp()).collect();
    if let Some(i) = a.iter().position(|v| !v.is_finite() || *v == 0.0) {
        return Err(Error::Range(format!("exp(psi[{i}]) not representable")));
    }
    Radii::new(a)
}

/// `exp(sum psi_i)`, the product of the radii.
pub fn spatial_volume(psi: &[f64]) -> Result<f64> {
    ensure_finite(psi, "psi")?;
    let v = psi.iter().sum::<f64>().exp();
    if !v.is_finite() {
        return Err(Error::Range("spatial volume overflows".into()));
    }
    Ok(v)
}

/// Norms of the diagonal metric `g_ii = (2 pi)^2 exp(2 psi_i)`.
pub fn metric_norms(psi: &[f64], reading: Norm21Reading) -> Result<MetricNorms> {
    ensure_finite(psi, "psi")?;
    let g: Vec<f64> = psi.iter().map(|p| TWO_PI_SQ * (2.0 * p).exp()).collect();
    let frobenius = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm21 = match reading {
        Norm21Reading::ColumnSum => g.iter().map(|x| x.abs()).sum(),
        Norm21Reading::RepeatedIndex => psi.len() as f64 * frobenius,
    };
    if !norm21.is_finite() {
        return Err(Error::Range("metric norm overflows".into()));
    }
    Ok(MetricNorms { norm21, frobenius })
}

pub fn kretschmann(state: &ModuliState) -> f64 {
    let d = state.dpsi();
    let dd: f64 = state.ddpsi().iter().sum();
    let sq: f64 = d.iter().map(|x| x * x).sum();
    // sum_ij (x_i x_j)^2 = (sum_i x_i^2)^2
    4.0 * dd + 4.0 * sq + 2.0 * sq * sq
}

pub fn expansion(dpsi: &[f64]) -> f64 {
    dpsi.iter().map(|x| (x * x).abs()).sum()
}

pub fn shear_sq(dpsi: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in dpsi {
        for b in dpsi {
            s += (a - b) * (a - b);
        }
    }
    s
}

pub fn observables(state: &ModuliState) -> Result<GeometryObservables> {
    let norms = metric_norms(state.psi(), Norm21Reading::default())?;
    Ok(GeometryObservables {
        volume: spatial_volume(state.psi())?,
        norm21: norms.norm21,
        frobenius: norms.frobenius,
        kretschmann: kretschmann(state),
        expansion: expansion(state.dpsi()),
        expansion_trace: state.dpsi().iter().sum(),
        shear_sq: shear_sq(state.dpsi()),
    })
}
