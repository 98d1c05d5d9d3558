//! Reference values computed from first principles, with no code shared with
//! `kasnerlab`: Gauss-Legendre quadrature, direct operator sums and normal
//! order statistics.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 20-point Gauss-Legendre rule over `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = legendre_rule(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        total += rule.iter().map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h;
    }
    total
}

pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E max` of `k` independent standard normals, `int x k phi Phi^{k-1}`,
/// accumulating `Phi` panel by panel.
pub fn normal_max_mean(k: usize) -> f64 {
    let (a, b, panels) = (-12.0, 12.0, 2400);
    let rule = legendre_rule(20);
    let h = (b - a) / panels as f64;
    let mut cdf = 0.0;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in &rule {
            let s = mid + 0.5 * h * x;
            // Phi(s) from the left edge of the panel by a nested rule
            let part = integrate(normal_density, lo, s, 1);
            let phi_cdf = cdf + part;
            total += w * 0.5 * h * s * k as f64 * normal_density(s) * phi_cdf.powi(k as i32 - 1);
        }
        cdf += integrate(normal_density, lo, lo + h, 1);
    }
    total
}

/// `E f(sigma Z)` for standard normal `Z`.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, sigma: f64) -> f64 {
    integrate(|z| f(sigma * z) * normal_density(z), -14.0, 14.0, 560)
}

/// `H` of the power law `psi_i = p_i ln t` with Einstein weights, summed
/// term by term; `full` selects the double sum over all pairs.
pub fn kasner_operator(p: &[f64], t: f64, full: bool) -> f64 {
    let mut h = 0.0;
    for (i, pi) in p.iter().enumerate() {
        h += -pi / (t * t) + 0.5 * (pi / t) * (pi / t);
        for (j, pj) in p.iter().enumerate() {
            if full || i == j {
                h += 0.5 * (pi / t) * (pj / t);
            }
        }
    }
    h
}

/// Same operator written on radii `a_i = t^{p_i}`.
pub fn kasner_radii_operator(p: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    let mut sq = 0.0;
    let mut s = 0.0;
    for pi in p {
        let (a, da, dda) = (t.powf(*pi), pi * t.powf(pi - 1.0), pi * (pi - 1.0) * t.powf(pi - 2.0));
        acc += dda / a;
        sq += (da / a) * (da / a);
        s += da / a;
    }
    acc - 0.5 * sq + 0.5 * s * s
}

pub fn ou_covariance(c: f64, varsigma: f64, delta: f64) -> f64 {
    c / varsigma * (-delta.abs() / varsigma).exp()
}

pub fn se_covariance(c: f64, varsigma: f64, delta: f64) -> f64 {
    c / (varsigma * varsigma) * (-delta * delta / (varsigma * varsigma)).exp()
}

/// `int_0^t (t - s) J(s) ds` by quadrature.
pub fn triangle<F: Fn(f64) -> f64>(j: F, t: f64) -> f64 {
    integrate(|s| (t - s) * j(s), 0.0, t, 200)
}

/// `-J''(0)` by a fourth-order central stencil.
pub fn curvature_at_zero<F: Fn(f64) -> f64>(j: F, h: f64) -> f64 {
    -(-j(2.0 * h) + 16.0 * j(h) - 30.0 * j(0.0) + 16.0 * j(-h) - j(-2.0 * h)) / (12.0 * h * h)
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
