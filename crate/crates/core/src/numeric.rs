//! Small numerical helpers shared across modules: compensated reductions,
//! finite-difference stencils, special functions and least-squares slopes.

use crate::error::{Error, Result};

/// Error function (musl port), accurate to about one ulp over the
/// range used here.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Pairwise summation. The recursion depth and split points depend only on
/// the length, so the result is independent of how the input was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
/// The first eight levels are always refined so narrow features are not skipped,
/// and refinement stops once the local error estimate reaches rounding level.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || (depth <= 40 && delta.abs() <= 15.0 * tol.max(floor)) {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Sample mean and standard error of the mean (unbiased variance / sqrt(N)).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return MeanSe { mean, se: f64::NAN, n };
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

/// First and second derivatives of uniformly sampled values: second-order
/// central differences in the interior, second-order one-sided at the ends.
pub fn fd_derivatives(values: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let m = values.len();
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    if m < 3 {
        if m == 2 {
            let s = (values[1] - values[0]) / dt;
            d1 = vec![s, s];
        }
        return (d1, d2);
    }
    for k in 1..m - 1 {
        d1[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
        d2[k] = (values[k + 1] - 2.0 * values[k] + values[k - 1]) / (dt * dt);
    }
    d1[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt);
    d1[m - 1] = (3.0 * values[m - 1] - 4.0 * values[m - 2] + values[m - 3]) / (2.0 * dt);
    if m >= 4 {
        d2[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / (dt * dt);
        d2[m - 1] = (2.0 * values[m - 1] - 5.0 * values[m - 2] + 4.0 * values[m - 3]
            - values[m - 4])
            / (dt * dt);
    } else {
        d2[0] = d2[1];
        d2[m - 1] = d2[1];
    }
    (d1, d2)
}

/// Running trapezoidal integral, starting at zero.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Precondition("linear fit needs at least two points".into()));
    }
    let xm = pairwise_sum(x) / n as f64;
    let ym = pairwise_sum(y) / n as f64;
    let sxx: Vec<f64> = x.iter().map(|v| (v - xm) * (v - xm)).collect();
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).collect();
    let sxx = pairwise_sum(&sxx);
    if sxx == 0.0 {
        return Err(Error::Precondition("linear fit with degenerate abscissae".into()));
    }
    let slope = pairwise_sum(&sxy) / sxx;
    let intercept = ym - slope * xm;
    let slope_se = if n > 2 {
        let res: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .collect();
        (pairwise_sum(&res) / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_se })
}

/// SplitMix64 finaliser, used to derive independent stream seeds.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for path `path` of component `component`: `seed ^ hash(path, component)`.
#[inline]
pub fn stream_seed(seed: u64, path: u64, component: u64) -> u64 {
    seed ^ splitmix64(splitmix64(path).wrapping_add(component.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}
