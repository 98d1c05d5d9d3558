use kasnerlab::estimate::{
    chernoff_tail, cumulant_expectation, default_beta_grid, expected_scalar_deviation, lyapunov_from_series,
    markov_bound, moment_lce, Convention, GrowthLaw,
};
use kasnerlab::numeric::adaptive_simpson;
use kasnerlab::randfield::Kernel;
use proptest::prelude::*;

fn kernels() -> impl Strategy<Value = Kernel> {
    (0.1f64..3.0, 0.1f64..3.0, prop::bool::ANY).prop_map(|(c, s, ou)| {
        if ou { Kernel::ou(c, s).unwrap() } else { Kernel::squared_exp(c, s).unwrap() }
    })
}

/// `int_0^t (t - tau) J(tau) dtau` by quadrature.
fn triangle(k: &Kernel, t: f64) -> f64 {
    adaptive_simpson(|tau| (t - tau) * k.eval(tau).unwrap(), 0.0, t, 1e-13)
}

/// `E|e^X - 1|` for `X ~ N(0, v)` by quadrature.
fn abs_dev(v: f64) -> f64 {
    let sd = v.sqrt();
    let pdf = |x: f64| (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    adaptive_simpson(|x| (x.exp() - 1.0).abs() * pdf(x), -14.0 * sd, 0.0, 1e-13)
        + adaptive_simpson(|x| (x.exp() - 1.0).abs() * pdf(x), 0.0, 14.0 * sd, 1e-13)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cumulant_matches_quadrature(k in kernels(), zeta in 0.0f64..1.5, t in 0.0f64..6.0) {
        let want = (zeta * zeta * triangle(&k, t)).exp();
        let got = cumulant_expectation(&k, zeta, t).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn exact_growth_doubles_the_half_triangle_exponent(k in kernels(), zeta in 0.0f64..1.5, t in 0.0f64..20.0) {
        let h = GrowthLaw::new(k, zeta, 1.0, 3, Convention::HalfTriangle).unwrap();
        let e = GrowthLaw::new(k, zeta, 1.0, 3, Convention::Exact).unwrap();
        prop_assert!((e.exponent(t).unwrap() - 2.0 * h.exponent(t).unwrap()).abs() <= 1e-12 * (1.0 + e.exponent(t).unwrap()));
        prop_assert!((e.rate() - 2.0 * h.rate()).abs() <= 1e-14 * (1.0 + e.rate()));
        // the transient stays bounded as t grows
        prop_assert!(e.transient(t).unwrap() <= 1e-12);
    }

    #[test]
    fn scalar_deviation_matches_quadrature(k in kernels(), zeta in 0.05f64..1.0, t in 0.1f64..4.0, a in 0.2f64..3.0) {
        let h = zeta * zeta * triangle(&k, t);
        let want = a * abs_dev(2.0 * h);
        let got = expected_scalar_deviation(&k, zeta, a, t).unwrap();
        prop_assert!((got - want).abs() <= 1e-7 * want, "{got} vs {want}");
    }

    #[test]
    fn second_moment_exponent_dominates_twice_the_first(
        v in proptest::collection::vec(0.01f64..50.0, 2..200), t in 0.5f64..30.0,
    ) {
        let l1 = moment_lce(&v, 1, t).unwrap().value;
        let l2 = moment_lce(&v, 2, t).unwrap().value;
        prop_assert!(l2 >= 2.0 * l1 - 1e-12);
    }

    #[test]
    fn log_slope_of_exact_exponential(rate in -2.0f64..2.0, scale in 0.1f64..10.0) {
        let times: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| scale * (rate * t).exp()).collect();
        let got = lyapunov_from_series(&times, &values, 0.0).unwrap();
        prop_assert!((got - rate).abs() < 1e-10);
    }
}

#[test]
fn moment_exponent_of_lognormal_sample() {
    // X = exp(s Z) with quantile-spaced Z: E X^l = exp(l^2 s^2 / 2)
    let m = 20_000;
    let s = 0.4;
    let z: Vec<f64> = (0..m).map(|i| probit((i as f64 + 0.5) / m as f64)).collect();
    let x: Vec<f64> = z.iter().map(|z| (s * z).exp()).collect();
    for ell in 1..=3u32 {
        let r = moment_lce(&x, ell, 2.0).unwrap();
        let want = (ell * ell) as f64 * s * s / 2.0 / 2.0;
        assert!((r.value - want).abs() < 2e-3, "ell {ell}: {} vs {want}", r.value);
    }
}

#[test]
fn tail_bounds_dominate_a_known_distribution() {
    let m = 10_000;
    let x: Vec<f64> = (0..m).map(|i| (0.5 * probit((i as f64 + 0.5) / m as f64)).exp()).collect();
    let mean = (0.125f64).exp();
    let mk = markov_bound(mean, &x, 3.0).unwrap();
    assert!(mk.holds);
    assert!(mk.bound_value >= mk.empirical_value);
    let ch = chernoff_tail(&x, 0.5, &default_beta_grid()).unwrap();
    assert!(ch.holds);
    assert!(ch.bound_value <= 1.0);
}

/// Inverse standard normal CDF by bisection on `erf`.
fn probit(p: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + kasnerlab::numeric::erf(x / std::f64::consts::SQRT_2));
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}
