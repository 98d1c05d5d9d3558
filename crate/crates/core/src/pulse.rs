//! Deterministic perturbations of static solutions: Gaussian short pulses
//! with per-component amplitude and width, and a constant-amplitude pulse
//! switched on at `t = 0`.

use serde::{Deserialize, Serialize};

use crate::dynamics::h_residual;
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{
    expansion, kretschmann, shear_sq, KasnerExponents, ModuliState, OperatorCoefficients, Radii,
};
use crate::numeric::erf;

const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    amplitudes: Vec<f64>,
    widths: Vec<f64>,
}

impl GaussianPulse {
    pub fn new(amplitudes: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != widths.len() {
            return Err(Error::Dimension { expected: amplitudes.len(), got: widths.len() });
        }
        if amplitudes.is_empty() {
            return Err(Error::Domain("pulse needs at least one component".into()));
        }
        ensure_finite(&amplitudes, "amplitudes")?;
        check_width_all(&widths)?;
        Ok(Self { amplitudes, widths })
    }

    pub fn isotropic(amplitude: f64, width: f64, n: usize) -> Result<Self> {
        Self::new(vec![amplitude; n], vec![width; n])
    }

    pub fn n(&self) -> usize {
        self.amplitudes.len()
    }
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_anisotropic(&self) -> bool {
        let (a0, t0) = (self.amplitudes[0], self.widths[0]);
        self.amplitudes.iter().zip(&self.widths).any(|(a, t)| *a != a0 || *t != t0)
    }

    /// Rates `A_i exp(-t^2 / 2 theta_i^2)`.
    pub fn rates(&self, t: f64) -> Vec<f64> {
        self.amplitudes.iter().zip(&self.widths).map(|(a, w)| pulse_rate(*a, *w, t)).collect()
    }

    /// Time derivatives of the rates, `-A t / theta^2 exp(-t^2 / 2 theta^2)`.
    pub fn rate_derivatives(&self, t: f64) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(&self.widths)
            .map(|(a, w)| -t / (w * w) * pulse_rate(*a, *w, t))
            .collect()
    }

    /// Accumulated displacements `int_0^t rate`.
    pub fn displacements(&self, t: f64) -> Result<Vec<f64>> {
        self.amplitudes
            .iter()
            .zip(&self.widths)
            .map(|(a, w)| gaussian_pulse_integral(*a, *w, t))
            .collect()
    }

    /// Long-time displacements `A_i theta_i sqrt(pi / 2)`.
    pub fn asymptotes(&self) -> Vec<f64> {
        self.amplitudes.iter().zip(&self.widths).map(|(a, w)| a * w * SQRT_HALF_PI).collect()
    }
}

fn check_width_all(widths: &[f64]) -> Result<()> {
    for &w in widths {
        check_width(w)?;
    }
    Ok(())
}

fn check_width(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("pulse width must be positive, got {theta}")));
    }
    Ok(())
}

#[inline]
fn pulse_rate(a: f64, theta: f64, t: f64) -> f64 {
    a * (-t * t / (2.0 * theta * theta)).exp()
}

/// `int_0^t A exp(-s^2 / 2 theta^2) ds = A theta sqrt(pi/2) erf(t / (sqrt 2 theta))`.
pub fn gaussian_pulse_integral(amplitude: f64, theta: f64, t: f64) -> Result<f64> {
    check_width(theta)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("pulse integral needs t >= 0, got {t}")));
    }
    Ok(amplitude * theta * SQRT_HALF_PI * erf(t / (std::f64::consts::SQRT_2 * theta)))
}

pub fn perturbed_moduli(psi_e: &[f64], pulse: &GaussianPulse, t: f64) -> Result<ModuliState> {
    if psi_e.len() != pulse.n() {
        return Err(Error::Dimension { expected: pulse.n(), got: psi_e.len() });
    }
    let disp = pulse.displacements(t)?;
    ModuliState::new(
        psi_e.iter().zip(&disp).map(|(p, d)| p + d).collect(),
        pulse.rates(t),
        pulse.rate_derivatives(t),
    )
}

/// A Kasner solution with a pulse superposed on its moduli.
pub fn perturbed_kasner(
    psi0: &[f64],
    p: &KasnerExponents,
    pulse: &GaussianPulse,
    t: f64,
) -> Result<ModuliState> {
    let base = crate::dynamics::kasner_solution(psi0, p, t)?;
    if pulse.n() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: pulse.n() });
    }
    let disp = pulse.displacements(t)?;
    let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<_>>();
    ModuliState::new(
        add(base.psi(), &disp),
        add(base.dpsi(), &pulse.rates(t)),
        add(base.ddpsi(), &pulse.rate_derivatives(t)),
    )
}

pub fn perturbed_radii(a_e: &Radii, pulse: &GaussianPulse, t: f64) -> Result<Radii> {
    if a_e.n() != pulse.n() {
        return Err(Error::Dimension { expected: pulse.n(), got: a_e.n() });
    }
    let disp = pulse.displacements(t)?;
    Radii::new(a_e.as_slice().iter().zip(&disp).map(|(a, d)| a * d.exp()).collect())
}

/// Limit radii `a_i^E exp(A_i theta_i sqrt(pi/2))`.
pub fn attractor(a_e: &Radii, pulse: &GaussianPulse) -> Result<Radii> {
    if a_e.n() != pulse.n() {
        return Err(Error::Dimension { expected: pulse.n(), got: a_e.n() });
    }
    Radii::new(
        a_e.as_slice().iter().zip(pulse.asymptotes()).map(|(a, y)| a * y.exp()).collect(),
    )
}

/// `S(t) = c1 sum G_i' + c2 sum G_i^2 + c3 sum_ij G_i G_j` for rates `G_i`.
pub fn pulse_source_term(pulse: &GaussianPulse, t: f64, coeffs: &OperatorCoefficients) -> f64 {
    let g = pulse.rates(t);
    let dg: f64 = pulse.rate_derivatives(t).iter().sum();
    let sq: f64 = g.iter().map(|x| x * x).sum();
    coeffs.c1 * dg + coeffs.c2 * sq + coeffs.c3 * coeffs.cross_sum(&g)
}

/// Euclidean distance `||a_bar(t) - a^E||`.
pub fn perturbed_norm(a_e: &Radii, pulse: &GaussianPulse, t: f64) -> Result<f64> {
    let a = perturbed_radii(a_e, pulse, t)?;
    Ok(distance(a.as_slice(), a_e.as_slice()))
}

/// Upper bound `sqrt(n) max_i a_i^E (exp(max_i |Y_i|) - 1)` on the perturbed norm.
pub fn perturbed_norm_bound(a_e: &Radii, pulse: &GaussianPulse) -> f64 {
    let n = a_e.n() as f64;
    let amax = a_e.as_slice().iter().copied().fold(0.0, f64::max);
    let ymax = pulse.asymptotes().iter().map(|y| y.abs()).fold(0.0, f64::max);
    n.sqrt() * amax * ymax.exp_m1()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPulse {
    pub amplitude: f64,
}

/// `psi_bar = psi^E + A t` together with its operator residual.
pub fn constant_perturbation(
    psi_e: &[f64],
    pulse: ConstantPulse,
    t: f64,
    coeffs: &OperatorCoefficients,
) -> Result<(ModuliState, f64)> {
    let n = psi_e.len();
    let a = pulse.amplitude;
    let state = ModuliState::new(
        psi_e.iter().map(|p| p + a * t).collect(),
        vec![a; n],
        vec![0.0; n],
    )?;
    let r = h_residual(&state, coeffs);
    Ok((state, r))
}

pub fn constant_radii(a_e: &Radii, pulse: ConstantPulse, t: f64) -> Result<Radii> {
    let g = (pulse.amplitude * t).exp();
    Radii::new(a_e.as_slice().iter().map(|a| a * g).collect())
}

/// `||a_bar(t) - a^E|| = ||a^E|| |exp(A t) - 1|`.
pub fn constant_norm(a_e: &Radii, pulse: ConstantPulse, t: f64) -> f64 {
    a_e.norm() * (pulse.amplitude * t).exp_m1().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableDeviation {
    pub t: f64,
    pub kretschmann: f64,
    pub expansion: f64,
    pub shear_sq: f64,
}

impl ObservableDeviation {
    pub fn max(&self) -> f64 {
        self.kretschmann.max(self.expansion).max(self.shear_sq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationReport {
    /// Relative deviations (unit floor on the denominator) at each grid time.
    pub deviations: Vec<ObservableDeviation>,
    /// Largest deviation over grid times `t > 10 max theta`.
    pub max_late_deviation: f64,
    /// Largest deviation over the whole grid.
    pub max_deviation: f64,
    /// First grid time after which every deviation stays below `tolerance`.
    pub crossing_time: Option<f64>,
    pub tolerance: f64,
    pub relaxed: bool,
}

pub const RELAXATION_TOLERANCE: f64 = 1e-8;

/// Compare Kretschmann scalar, expansion and shear of a pulse-perturbed
/// Kasner solution against the unperturbed ones on the given times (`t > 0`).
pub fn relaxation_check(
    p: &KasnerExponents,
    pulse: &GaussianPulse,
    times: &[f64],
) -> Result<RelaxationReport> {
    if !p.is_valid() {
        return Err(Error::Precondition("Kasner constraint violated".into()));
    }
    let zero = vec![0.0; p.n()];
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
    let mut deviations = Vec::with_capacity(times.len());
    for &t in times {
        let base = crate::dynamics::kasner_solution(&zero, p, t)?;
        let pert = perturbed_kasner(&zero, p, pulse, t)?;
        deviations.push(ObservableDeviation {
            t,
            kretschmann: rel(kretschmann(&pert), kretschmann(&base)),
            expansion: rel(expansion(pert.dpsi()), expansion(base.dpsi())),
            shear_sq: rel(shear_sq(pert.dpsi()), shear_sq(base.dpsi())),
        });
    }
    let late = 10.0 * pulse.max_width();
    let max_late_deviation =
        deviations.iter().filter(|d| d.t > late).map(|d| d.max()).fold(0.0, f64::max);
    let max_deviation = deviations.iter().map(|d| d.max()).fold(0.0, f64::max);
    let tol = RELAXATION_TOLERANCE;
    let crossing_time = match deviations.iter().rposition(|d| d.max() >= tol) {
        None => deviations.first().map(|d| d.t),
        Some(k) => deviations.get(k + 1).map(|d| d.t),
    };
    Ok(RelaxationReport {
        deviations,
        max_late_deviation,
        max_deviation,
        crossing_time,
        tolerance: tol,
        relaxed: max_late_deviation < tol,
    })
}
