//! The nonlinear operators `H_n` (on moduli) and `D_n` (on radii), and the
//! closed-form deterministic solutions: Kasner power laws, the
//! Khalatnikov-Lifshitz family, constant-rate (cosmological constant)
//! solutions and the one-parameter `beta` family.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{
    KasnerExponents, ModuliState, OperatorCoefficients, Radii, KASNER_TOLERANCE,
};

/// Tolerance on the `beta`-family constraints.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-10;

/// `H(psi) = c1 sum ddpsi + c2 sum dpsi^2 + c3 sum_ij dpsi_i dpsi_j`.
pub fn h_residual(state: &ModuliState, coeffs: &OperatorCoefficients) -> f64 {
    let dd: f64 = state.ddpsi().iter().sum();
    let sq: f64 = state.dpsi().iter().map(|x| x * x).sum();
    coeffs.c1 * dd + coeffs.c2 * sq + coeffs.c3 * coeffs.cross_sum(state.dpsi())
}

/// The same operator written on radii `a = exp(psi)`:
/// `c1 sum a''/a + (c2 - c1) sum (a'/a)^2 + c3 sum_ij (a_i'/a_i)(a_j'/a_j)`.
pub fn d_residual(
    a: &Radii,
    da: &[f64],
    dda: &[f64],
    coeffs: &OperatorCoefficients,
) -> Result<f64> {
    let n = a.n();
    for v in [da, dda] {
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
    }
    ensure_finite(da, "da")?;
    ensure_finite(dda, "dda")?;
    let a = a.as_slice();
    let rate: Vec<f64> = da.iter().zip(a).map(|(d, a)| d / a).collect();
    let acc: f64 = dda.iter().zip(a).map(|(d, a)| d / a).sum();
    let sq: f64 = rate.iter().map(|r| r * r).sum();
    Ok(coeffs.c1 * acc + (coeffs.c2 - coeffs.c1) * sq + coeffs.c3 * coeffs.cross_sum(&rate))
}

/// `psi_i = psi_i(0) + p_i ln t`.
pub fn kasner_solution(psi0: &[f64], p: &KasnerExponents, t: f64) -> Result<ModuliState> {
    if psi0.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: psi0.len() });
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Kasner solutions need t > 0, got {t}")));
    }
    let lt = t.ln();
    let p = p.as_slice();
    ModuliState::new(
        psi0.iter().zip(p).map(|(s, p)| s + p * lt).collect(),
        p.iter().map(|p| p / t).collect(),
        p.iter().map(|p| -p / (t * t)).collect(),
    )
}

/// Radii and their derivatives along `a_i = a_i(0) t^{p_i}`.
pub fn kasner_radii(a0: &Radii, p: &KasnerExponents, t: f64) -> Result<(Radii, Vec<f64>, Vec<f64>)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Kasner solutions need t > 0, got {t}")));
    }
    if a0.n() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: a0.n() });
    }
    let mut a = Vec::with_capacity(p.n());
    let mut da = Vec::with_capacity(p.n());
    let mut dda = Vec::with_capacity(p.n());
    for (&a0, &p) in a0.as_slice().iter().zip(p.as_slice()) {
        a.push(a0 * t.powf(p));
        da.push(a0 * p * t.powf(p - 1.0));
        dda.push(a0 * p * (p - 1.0) * t.powf(p - 2.0));
    }
    Ok((Radii::new(a)?, da, dda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KasnerCheck {
    /// `|sum p - sum p^2|`.
    pub residual: f64,
    pub valid: bool,
    pub sum: f64,
    /// `t^2 H` of the power law under the literal double sum,
    /// `|-sum p + (sum p^2)/2 + (sum p)^2/2|`. Zero needs `sum p` in `{0, 1}` as well.
    pub full_residual: f64,
}

pub fn check_kasner(p: &KasnerExponents) -> KasnerCheck {
    let s = p.sum();
    let s2 = p.sum_sq();
    let residual = p.residual();
    KasnerCheck {
        residual,
        valid: residual < KASNER_TOLERANCE,
        sum: s,
        full_residual: (-s + 0.5 * s2 + 0.5 * s * s).abs(),
    }
}

/// Khalatnikov-Lifshitz parameter, `u >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlParameter(f64);

impl KlParameter {
    pub fn new(u: f64) -> Result<Self> {
        if !(u >= 1.0) || !u.is_finite() {
            return Err(Error::Domain(format!("KL parameter must satisfy u >= 1, got {u}")));
        }
        Ok(Self(u))
    }
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn kl_exponents(u: KlParameter) -> KasnerExponents {
    let u = u.0;
    let d = 1.0 + u + u * u;
    KasnerExponents::new(vec![-u / d, (1.0 + u) / d, u * (1.0 + u) / d])
        .expect("KL exponents are finite")
}

/// Right-hand side of `H = lambda`, optionally derived from a cosmological constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaTerm {
    pub lambda: f64,
    pub cosmological: Option<f64>,
}

impl LambdaTerm {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, cosmological: None }
    }
}

/// `lambda = Lambda (1 + n) / (1 - n)`, singular at `n = 1`.
pub fn lambda_from_cosmological(cosmological: f64, n: usize) -> Result<LambdaTerm> {
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    if n == 1 {
        return Err(Error::Singular("(1 + n) / (1 - n) diverges at n = 1".into()));
    }
    let n = n as f64;
    Ok(LambdaTerm { lambda: cosmological * (1.0 + n) / (1.0 - n), cosmological: Some(cosmological) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Expanding,
    Contracting,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Expanding => 1.0,
            Sign::Contracting => -1.0,
        }
    }
}

/// Magnitude `q` of the isotropic solution `psi_i = psi_i(0) +- q t` of `H = lambda`:
/// `(c2 n + c3 m) q^2 = lambda` with `m` the pair count of the double sum.
/// For the diagonal reading of the Einstein weights this is `sqrt(lambda / n)`.
pub fn isotropic_rate(lambda: f64, n: usize, coeffs: &OperatorCoefficients) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!("lambda = {lambda} < 0 gives an imaginary rate")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let w = coeffs.c2 * n as f64 + coeffs.c3 * coeffs.shared_pair_count(n);
    if !(w > 0.0) {
        return Err(Error::Domain("quadratic weight must be positive for a real rate".into()));
    }
    Ok((lambda / w).sqrt())
}

pub fn lambda_solution(
    psi0: &[f64],
    lam: &LambdaTerm,
    sign: Sign,
    t: f64,
    coeffs: &OperatorCoefficients,
) -> Result<ModuliState> {
    let n = psi0.len();
    let q = sign.factor() * isotropic_rate(lam.lambda, n, coeffs)?;
    ModuliState::new(psi0.iter().map(|p| p + q * t).collect(), vec![q; n], vec![0.0; n])
}

/// Constraint check for an anisotropic constant-rate vector `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaConstraintCheck {
    /// `c2 sum q^2 + c3 sum_ij q_i q_j - lambda` under the operator's convention.
    pub operator_residual: f64,
    /// `(sum_ij q_i q_j) - lambda`: both sums of the printed constraint read as
    /// full double sums (the first carries a stray free index).
    pub printed_residual: f64,
}

pub fn check_lambda_constraint(
    q: &[f64],
    lambda: f64,
    coeffs: &OperatorCoefficients,
) -> LambdaConstraintCheck {
    let sq: f64 = q.iter().map(|x| x * x).sum();
    let total: f64 = q.iter().sum();
    LambdaConstraintCheck {
        operator_residual: coeffs.c2 * sq + coeffs.c3 * coeffs.cross_sum(q) - lambda,
        printed_residual: total * total - lambda,
    }
}

/// Branches of the `sum ddpsi + beta sum dpsi^2 = C` family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaBranch {
    /// `psi_i = psi_i(0) + q_i ln t`, needs `sum q = beta sum q^2`.
    Logarithmic { q: Vec<f64> },
    /// `psi_i = psi_i(0) + q t` with `q = +-sqrt(C / (beta n))`.
    Linear { c: f64, sign: Sign },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSolution {
    pub state: ModuliState,
    /// Value the operator must take on this solution (0 or `C`).
    pub operator_value: f64,
}

pub fn general_solution_beta(
    psi0: &[f64],
    branch: &BetaBranch,
    beta: f64,
    t: f64,
) -> Result<BetaSolution> {
    let n = psi0.len();
    match branch {
        BetaBranch::Logarithmic { q } => {
            if q.len() != n {
                return Err(Error::Dimension { expected: n, got: q.len() });
            }
            if !(t > 0.0) {
                return Err(Error::Domain(format!("logarithmic branch needs t > 0, got {t}")));
            }
            let s: f64 = q.iter().sum();
            let s2: f64 = q.iter().map(|x| x * x).sum();
            if (s - beta * s2).abs() > CONSTRAINT_TOLERANCE {
                return Err(Error::Precondition(format!(
                    "sum q = {s} differs from beta sum q^2 = {}",
                    beta * s2
                )));
            }
            let lt = t.ln();
            let state = ModuliState::new(
                psi0.iter().zip(q).map(|(p, q)| p + q * lt).collect(),
                q.iter().map(|q| q / t).collect(),
                q.iter().map(|q| -q / (t * t)).collect(),
            )?;
            Ok(BetaSolution { state, operator_value: 0.0 })
        }
        BetaBranch::Linear { c, sign } => {
            let q = sign.factor() * isotropic_rate(*c, n, &OperatorCoefficients::general(beta))?;
            let state = ModuliState::new(
                psi0.iter().map(|p| p + q * t).collect(),
                vec![q; n],
                vec![0.0; n],
            )?;
            Ok(BetaSolution { state, operator_value: *c })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::radii_from_moduli;
    use proptest::prelude::*;

    fn triplet() -> KasnerExponents {
        KasnerExponents::new(vec![-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]).unwrap()
    }

    fn radii_along(state: &ModuliState) -> (Radii, Vec<f64>, Vec<f64>) {
        // a = e^psi, a' = psi' a, a'' = (psi'' + psi'^2) a
        let a = radii_from_moduli(state.psi()).unwrap();
        let da = a.as_slice().iter().zip(state.dpsi()).map(|(a, d)| a * d).collect();
        let dda = a
            .as_slice()
            .iter()
            .zip(state.dpsi().iter().zip(state.ddpsi()))
            .map(|(a, (d, dd))| a * (dd + d * d))
            .collect();
        (a, da, dda)
    }

    #[test]
    fn h_residual_examples() {
        let e = OperatorCoefficients::einstein();
        let rest = ModuliState::at_rest(vec![0.3, -0.2]).unwrap();
        assert_eq!(h_residual(&rest, &e), 0.0);

        let s = kasner_solution(&[0.0; 3], &triplet(), 2.0).unwrap();
        assert!(h_residual(&s, &e).abs() < 1e-12);

        // sum p = sum p^2 = 2 is exact only under the diagonal reading
        let p11 = KasnerExponents::new(vec![1.0, 1.0]).unwrap();
        let s = kasner_solution(&[0.0; 2], &p11, 2.0).unwrap();
        assert!(h_residual(&s, &OperatorCoefficients::einstein_diagonal()).abs() < 1e-12);
        assert!((h_residual(&s, &e) - 0.25).abs() < 1e-12);

        let lam = 2.5;
        let d = OperatorCoefficients::einstein_diagonal();
        let s = lambda_solution(&[0.0; 4], &LambdaTerm::new(lam), Sign::Expanding, 0.7, &d).unwrap();
        assert!((s.dpsi()[0] - (lam / 4.0).sqrt()).abs() < 1e-15);
        assert!((h_residual(&s, &d) - lam).abs() < 1e-12);
    }

    #[test]
    fn d_residual_examples() {
        let e = OperatorCoefficients::einstein();
        let a = Radii::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d_residual(&a, &[0.0; 3], &[0.0; 3], &e).unwrap(), 0.0);

        let (a, da, dda) = kasner_radii(&Radii::new(vec![1.5, 0.5, 2.0]).unwrap(), &triplet(), 3.0)
            .unwrap();
        assert!(d_residual(&a, &da, &dda, &e).unwrap().abs() < 1e-10);

        // a = a^E exp(q t), q = sqrt(lambda / n)
        let (lam, n, t) = (3.0, 3usize, 0.4);
        let q = (lam / n as f64).sqrt();
        let a = Radii::new(vec![2.0 * (q * t).exp(); n]).unwrap();
        let da: Vec<f64> = a.as_slice().iter().map(|a| q * a).collect();
        let dda: Vec<f64> = a.as_slice().iter().map(|a| q * q * a).collect();
        let r = d_residual(&a, &da, &dda, &OperatorCoefficients::einstein_diagonal()).unwrap();
        assert!((r - lam).abs() < 1e-12);
    }

    #[test]
    fn kasner_solution_examples() {
        let psi0 = [0.1, -0.4, 0.25];
        assert_eq!(kasner_solution(&psi0, &triplet(), 1.0).unwrap().psi(), &psi0);
        let b = KasnerExponents::new(vec![0.0, 0.0, 1.0]).unwrap();
        let s = kasner_solution(&psi0, &b, std::f64::consts::E).unwrap();
        assert!((s.psi()[2] - (0.25 + 1.0)).abs() < 1e-15);
        let s = kasner_solution(&psi0, &triplet(), 8.0).unwrap();
        assert!((s.psi()[0] - (0.1 - 2f64.ln())).abs() < 1e-15);
        assert!(matches!(kasner_solution(&psi0, &triplet(), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn check_kasner_examples() {
        let c = check_kasner(&triplet());
        assert!(c.valid && c.residual < 1e-15 && c.full_residual < 1e-15);
        assert!(check_kasner(&KasnerExponents::new(vec![0.0, 0.0, 1.0]).unwrap()).valid);
        let c = check_kasner(&KasnerExponents::new(vec![1.0, 1.0]).unwrap());
        assert!(c.valid);
        assert_eq!(c.residual, 0.0);
        assert_eq!(c.full_residual, 1.0);
        assert!(!check_kasner(&KasnerExponents::new(vec![0.5, 0.5]).unwrap()).valid);
    }

    #[test]
    fn kl_examples() {
        let p = kl_exponents(KlParameter::new(1.0).unwrap());
        let want = [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for (a, b) in p.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = kl_exponents(KlParameter::new(1e4).unwrap());
        for (a, b) in p.as_slice().iter().zip([0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-4 + 1e-6, "{a} vs {b}");
        }
        assert!(check_kasner(&kl_exponents(KlParameter::new(2.0).unwrap())).residual < 1e-12);
        assert!(KlParameter::new(0.99).is_err());
    }

    #[test]
    fn kl_large_u_approaches_bianchi_triplet() {
        // p1 = -u/(1+u+u^2) ~ -1/u, so the distance to (0,0,1) is O(1/u)
        for u in [1e4, 1e6, 1e8] {
            let p = kl_exponents(KlParameter::new(u).unwrap());
            let dist = p.as_slice().iter().zip([0.0, 0.0, 1.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dist <= 1.0 / u + 1e-12, "u = {u}: {dist}");
        }
        let p = kl_exponents(KlParameter::new(1e7).unwrap());
        assert!(p.as_slice().iter().zip([0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn lambda_solution_examples() {
        let d = OperatorCoefficients::einstein_diagonal();
        let psi0 = [0.2, 0.3];
        let s = lambda_solution(&psi0, &LambdaTerm::new(0.0), Sign::Expanding, 5.0, &d).unwrap();
        assert_eq!(s.psi(), &psi0);
        assert_eq!(s.dpsi(), &[0.0, 0.0]);

        let n = 3;
        let s = lambda_solution(&[0.0; 3], &LambdaTerm::new(n as f64), Sign::Expanding, 2.0, &d)
            .unwrap();
        assert!(s.psi().iter().all(|p| (p - 2.0).abs() < 1e-15));
        assert!((h_residual(&s, &d) - n as f64).abs() < 1e-12);

        // lambda = 4, n = 1, contracting: a = a^E e^{-2t}
        let s = lambda_solution(&[0.0], &LambdaTerm::new(4.0), Sign::Contracting, 1.5, &d).unwrap();
        assert!((s.dpsi()[0] + 2.0).abs() < 1e-15);
        let a = Radii::new(vec![(-2.0f64 * 1.5).exp()]).unwrap();
        let r = d_residual(&a, &[-2.0 * a.as_slice()[0]], &[4.0 * a.as_slice()[0]], &d).unwrap();
        assert!((r - 4.0).abs() < 1e-12);

        assert!(lambda_solution(&psi0, &LambdaTerm::new(-1.0), Sign::Expanding, 1.0, &d).is_err());
    }

    #[test]
    fn lambda_solution_full_reading_uses_pair_count() {
        let e = OperatorCoefficients::einstein();
        for n in [1usize, 2, 3, 9] {
            let s = lambda_solution(&vec![0.0; n], &LambdaTerm::new(1.0), Sign::Expanding, 1.0, &e)
                .unwrap();
            let nn = n as f64;
            assert!((s.dpsi()[0] - (2.0 / (nn + nn * nn)).sqrt()).abs() < 1e-15);
            assert!((h_residual(&s, &e) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosmological_mapping() {
        assert_eq!(lambda_from_cosmological(0.0, 3).unwrap().lambda, 0.0);
        assert_eq!(lambda_from_cosmological(1.0, 3).unwrap().lambda, -2.0);
        assert_eq!(lambda_from_cosmological(-1.0, 2).unwrap().lambda, 3.0);
        assert!(matches!(lambda_from_cosmological(1.0, 1), Err(Error::Singular(_))));
        let t = lambda_from_cosmological(0.7, 5).unwrap();
        assert!((t.lambda - 0.7 * 6.0 / -4.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_constraint_reports_both_forms() {
        let d = OperatorCoefficients::einstein_diagonal();
        let q = [0.5, 0.5, 0.5, 0.5];
        let c = check_lambda_constraint(&q, 1.0, &d);
        assert!(c.operator_residual.abs() < 1e-15);
        assert!((c.printed_residual - 3.0).abs() < 1e-15);
        let c = check_lambda_constraint(&[1.0, 0.0], 1.0, &OperatorCoefficients::einstein());
        assert!(c.operator_residual.abs() < 1e-15);
    }

    #[test]
    fn beta_family_examples() {
        let q = 0.8;
        let sol = general_solution_beta(
            &[0.0; 3],
            &BetaBranch::Logarithmic { q: vec![q; 3] },
            1.0 / q,
            2.0,
        )
        .unwrap();
        assert_eq!(sol.operator_value, 0.0);
        assert!(h_residual(&sol.state, &OperatorCoefficients::general(1.0 / q)).abs() < 1e-12);

        let n = 5;
        assert!(general_solution_beta(&vec![0.0; n], &BetaBranch::Logarithmic { q: vec![2.0; n] }, 0.5, 1.3).is_ok());

        let sol = general_solution_beta(
            &[0.0; 4],
            &BetaBranch::Linear { c: 1.0, sign: Sign::Contracting },
            1.0,
            1.0,
        )
        .unwrap();
        assert!((sol.state.dpsi()[0] + 0.5).abs() < 1e-15);
        assert!((h_residual(&sol.state, &OperatorCoefficients::general(1.0)) - 1.0).abs() < 1e-12);

        let bad = general_solution_beta(&[0.0; 2], &BetaBranch::Logarithmic { q: vec![1.0, 0.5] }, 1.0, 1.0);
        assert!(matches!(bad, Err(Error::Precondition(_))));
    }

    #[test]
    fn beta_grid_vanishes_only_at_inverse_rate() {
        let q = 0.5;
        let s = kasner_solution(&[0.0; 3], &KasnerExponents::new(vec![q; 3]).unwrap(), 1.7).unwrap();
        for k in 0..41 {
            let beta = 0.5 + 0.1 * k as f64;
            let h = h_residual(&s, &OperatorCoefficients::general(beta));
            assert_eq!(h.abs() < 1e-12, (beta - 1.0 / q).abs() < 1e-9, "beta = {beta}");
        }
    }

    #[test]
    fn fd_residual_of_sampled_kasner_trajectory() {
        // Operators on sampled trajectories use the second-order stencil.
        let dt = 1e-3;
        let p = triplet();
        let times: Vec<f64> = (0..201).map(|k| 1.0 + k as f64 * dt).collect();
        let paths: Vec<Vec<f64>> = (0..3)
            .map(|i| times.iter().map(|t| p.as_slice()[i] * t.ln()).collect())
            .collect();
        let fd: Vec<_> = paths.iter().map(|v| crate::numeric::fd_derivatives(v, dt)).collect();
        let k = 100;
        let s = ModuliState::new(
            paths.iter().map(|v| v[k]).collect(),
            fd.iter().map(|d| d.0[k]).collect(),
            fd.iter().map(|d| d.1[k]).collect(),
        )
        .unwrap();
        assert!(h_residual(&s, &OperatorCoefficients::einstein()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn kl_family_is_exact_and_ordered(u in 1.0f64..1e4, t in prop::sample::select(vec![0.5, 1.0, 2.0, 10.0])) {
            let p = kl_exponents(KlParameter::new(u).unwrap());
            let s = p.as_slice();
            prop_assert!(check_kasner(&p).residual < 1e-12);
            if u > 1.0 {
                prop_assert!(s[0] < s[1] && s[1] <= s[2]);
            }
            prop_assert!((-1.0 / 3.0 - 1e-15..=0.0).contains(&s[0]));
            prop_assert!((0.0..=2.0 / 3.0 + 1e-15).contains(&s[1]));
            prop_assert!((2.0 / 3.0 - 1e-15..=1.0).contains(&s[2]));
            let e = OperatorCoefficients::einstein();
            let st = kasner_solution(&[0.0; 3], &p, t).unwrap();
            prop_assert!(h_residual(&st, &e).abs() < 1e-9);
            let (a, da, dda) = kasner_radii(&Radii::uniform(1.3, 3).unwrap(), &p, t).unwrap();
            prop_assert!(d_residual(&a, &da, &dda, &e).unwrap().abs() < 1e-9);
        }

        #[test]
        fn operators_are_dual(
            psi in proptest::collection::vec(-2.0f64..2.0, 1..6),
            seed in 0u64..1000,
            c2 in -1.0f64..1.0,
            c3 in -1.0f64..1.0,
            diag in any::<bool>(),
        ) {
            let n = psi.len();
            let f = |k: u64| (((seed * 31 + k) as f64) * 0.618).sin() * 2.0;
            let d: Vec<f64> = (0..n as u64).map(f).collect();
            let dd: Vec<f64> = (0..n as u64).map(|k| f(k + 100)).collect();
            let s = ModuliState::new(psi, d, dd).unwrap();
            let coeffs = OperatorCoefficients {
                c1: 1.0, c2, c3,
                cross: if diag { crate::geometry::CrossSum::Diagonal } else { crate::geometry::CrossSum::Full },
            };
            let (a, da, dda) = radii_along(&s);
            let lhs = d_residual(&a, &da, &dda, &coeffs).unwrap();
            prop_assert!((lhs - h_residual(&s, &coeffs)).abs() < 1e-9);
        }

        #[test]
        fn diagonal_reading_makes_every_kasner_vector_exact(
            raw in proptest::collection::vec(0.05f64..2.0, 2..6),
            t in prop::sample::select(vec![0.5, 1.0, 2.0, 10.0]),
        ) {
            // scale so that sum p = sum p^2
            let s: f64 = raw.iter().sum();
            let s2: f64 = raw.iter().map(|x| x * x).sum();
            let p = KasnerExponents::new(raw.iter().map(|x| x * s / s2).collect()).unwrap();
            prop_assert!(check_kasner(&p).valid);
            let st = kasner_solution(&vec![0.0; p.n()], &p, t).unwrap();
            prop_assert!(h_residual(&st, &OperatorCoefficients::einstein_diagonal()).abs() < 1e-9);
        }

        #[test]
        fn lambda_residual_is_lambda(lam in 0.0f64..50.0, n in 1usize..12, full in any::<bool>()) {
            let coeffs = if full { OperatorCoefficients::einstein() } else { OperatorCoefficients::einstein_diagonal() };
            let s = lambda_solution(&vec![0.1; n], &LambdaTerm::new(lam), Sign::Expanding, 3.0, &coeffs).unwrap();
            prop_assert!((h_residual(&s, &coeffs) - lam).abs() <= 1e-10 * lam.max(1.0));
        }
    }
}
