//! Numerical inverse Laplace transforms: Gaver–Stehfest on the real axis
//! and Euler summation (Abate–Whitt) on a vertical line.

use crate::analytic::{generating_complex, BoundaryTransforms, FrontSpec, LaplaceContext};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::LN_2;
use std::sync::OnceLock;

pub const DEFAULT_STEHFEST_TERMS: usize = 14;
pub const DEFAULT_EULER_M: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InversionMethod {
    GaverStehfest { terms: usize },
    /// `2M + 1` complex abscissae.
    EulerSummation { m: usize },
}

impl Default for InversionMethod {
    fn default() -> Self {
        InversionMethod::GaverStehfest {
            terms: DEFAULT_STEHFEST_TERMS,
        }
    }
}

impl InversionMethod {
    pub fn stehfest(terms: usize) -> Result<Self> {
        check_terms(terms)?;
        Ok(InversionMethod::GaverStehfest { terms })
    }

    pub fn euler(m: usize) -> Self {
        InversionMethod::EulerSummation { m }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InversionMethod::GaverStehfest { .. } => "stehfest",
            InversionMethod::EulerSummation { .. } => "euler",
        }
    }

    pub fn terms(&self) -> usize {
        match self {
            InversionMethod::GaverStehfest { terms } => *terms,
            InversionMethod::EulerSummation { m } => 2 * m + 1,
        }
    }
}

fn check_terms(n: usize) -> Result<()> {
    if n % 2 != 0 || !(8..=20).contains(&n) {
        return Err(Error::NonEvenTerms(n));
    }
    Ok(())
}

fn factorial(n: i128) -> i128 {
    (1..=n).product()
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Gaver–Stehfest weights `V_1..V_N`, summed as exact rationals.
fn compute_weights(n: usize) -> Vec<f64> {
    let half = (n / 2) as i128;
    (1..=n as i128)
        .map(|k| {
            let lo = (k + 1) / 2;
            let hi = k.min(half);
            let (mut num, mut den) = (0i128, 1i128);
            for j in lo..=hi {
                let a = j.pow(half as u32) * factorial(2 * j);
                let b = factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k);
                let g = gcd(a, b);
                let (a, b) = (a / g, b / g);
                let l = den / gcd(den, b) * b;
                num = num * (l / den) + a * (l / b);
                den = l;
                let g = gcd(num, den).max(1);
                num /= g;
                den /= g;
            }
            let sign = if (k + half) % 2 == 0 { 1.0 } else { -1.0 };
            sign * (num as f64 / den as f64)
        })
        .collect()
}

static WEIGHTS: [OnceLock<Vec<f64>>; 7] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

/// Cached Stehfest weights for an even `n` in `[8, 20]`.
pub fn stehfest_weights(n: usize) -> Result<&'static [f64]> {
    check_terms(n)?;
    Ok(WEIGHTS[(n - 8) / 2].get_or_init(|| compute_weights(n)))
}

fn euler_weights(m: usize) -> Vec<f64> {
    let mut xi = vec![0.0; 2 * m + 1];
    xi[0] = 0.5;
    for x in xi.iter_mut().take(m + 1).skip(1) {
        *x = 1.0;
    }
    let scale = 2f64.powi(-(m as i32));
    xi[2 * m] = scale;
    let mut binom = 1.0;
    for j in 1..m {
        binom = binom * (m - j + 1) as f64 / j as f64;
        xi[2 * m - j] = xi[2 * m - j + 1] + scale * binom;
    }
    xi
}

/// `L^{-1}[F](t)` for a real-axis transform (Stehfest) or a complex transform
/// (Euler). `fc` is used by Euler summation and must be the analytic
/// continuation of `f`.
pub fn invert_with<F, G>(f: F, fc: G, t: f64, method: InversionMethod) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0) {
        return Err(Error::Abscissa(format!("t = {t} must be positive")));
    }
    match method {
        InversionMethod::GaverStehfest { terms } => {
            let v = stehfest_weights(terms)?;
            let a = LN_2 / t;
            let mut parts = Vec::with_capacity(terms);
            for (k, w) in v.iter().enumerate() {
                let s = a * (k + 1) as f64;
                let fs = f(s).map_err(|e| Error::Abscissa(format!("{s}: {e}")))?;
                parts.push(w * fs);
            }
            Ok(a * pairwise_sum(&parts))
        }
        InversionMethod::EulerSummation { m } => {
            let xi = euler_weights(m);
            let beta0 = m as f64 * std::f64::consts::LN_10 / 3.0;
            let mut parts = Vec::with_capacity(xi.len());
            for (k, w) in xi.iter().enumerate() {
                let beta = Complex64::new(beta0, std::f64::consts::PI * k as f64);
                let s = beta / t;
                let fs = fc(s).map_err(|e| Error::Abscissa(format!("{s}: {e}")))?;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                parts.push(sign * w * fs.re);
            }
            Ok(10f64.powf(m as f64 / 3.0) / t * pairwise_sum(&parts))
        }
    }
}

/// Inverts a transform given only as a complex-capable closure.
pub fn invert<G>(fc: G, t: f64, method: InversionMethod) -> Result<f64>
where
    G: Fn(Complex64) -> Result<Complex64>,
{
    invert_with(|s| fc(Complex64::new(s, 0.0)).map(|v| v.re), &fc, t, method)
}

/// `∫_0^t F dt` of the single front on `t_grid`, as `L^{-1}[f(s) / s]`.
pub fn invert_cumulative(p: &ProblemSpec, t_grid: &[f64], method: InversionMethod) -> Result<Vec<f64>> {
    invert_front_cumulative(&FrontSpec::single(p), p, t_grid, method)
}

/// `F(t)` of the single front on `t_grid`.
pub fn invert_flux(p: &ProblemSpec, t_grid: &[f64], method: InversionMethod) -> Result<Vec<f64>> {
    let front = FrontSpec::single(p);
    t_grid
        .par_iter()
        .map(|&t| invert_with(|s| real_f(&front, p, s), |s| generating_complex(&front, p, s), t, method))
        .collect()
}

fn real_f(front: &FrontSpec, p: &ProblemSpec, s: f64) -> Result<f64> {
    let ctx = LaplaceContext::for_problem(p, s)?;
    let r = crate::analytic::radicand_with(front, &ctx, BoundaryTransforms::of(p, &ctx))?.re;
    if r < 0.0 || r.is_nan() {
        return Err(Error::CriteriaFailedAtAbscissa {
            s,
            reason: format!("negative radicand {r}"),
        });
    }
    Ok(r.sqrt())
}

/// Cumulative flux of an arbitrary front.
pub fn invert_front_cumulative(
    front: &FrontSpec,
    p: &ProblemSpec,
    t_grid: &[f64],
    method: InversionMethod,
) -> Result<Vec<f64>> {
    t_grid
        .par_iter()
        .map(|&t| {
            invert_with(
                |s| real_f(front, p, s).map(|v| v / s),
                |s| generating_complex(front, p, s).map(|v| v / s),
                t,
                method,
            )
            .map_err(|e| match e {
                Error::Abscissa(msg) if msg.contains("negative radicand") => Error::CriteriaFailedAtAbscissa {
                    s: f64::NAN,
                    reason: msg,
                },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::tests::cosine_problem;
    use std::f64::consts::PI;

    fn stehfest(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let unused = |_: Complex64| Err(Error::Numerical("real axis only".into()));
        invert_with(|s| Ok(f(s)), unused, t, InversionMethod::default()).unwrap()
    }

    fn euler(f: impl Fn(Complex64) -> Complex64, t: f64) -> f64 {
        invert(|s| Ok(f(s)), t, InversionMethod::euler(DEFAULT_EULER_M)).unwrap()
    }

    #[test]
    fn weights_sum_to_zero() {
        for n in (8..=20).step_by(2) {
            let v = stehfest_weights(n).unwrap();
            let sum: f64 = v.iter().sum();
            let mag: f64 = v.iter().map(|x| x.abs()).sum();
            assert!(sum.abs() < 1e-12 * mag, "n={n}");
        }
    }

    #[test]
    fn known_weights_for_eight_terms() {
        let v = stehfest_weights(8).unwrap();
        let expected = [-1.0 / 3.0, 145.0 / 3.0, -906.0, 16394.0 / 3.0, -43130.0 / 3.0, 18730.0, -35840.0 / 3.0, 8960.0 / 3.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn odd_or_out_of_range_terms_are_rejected() {
        assert!(matches!(stehfest_weights(13), Err(Error::NonEvenTerms(13))));
        assert!(matches!(stehfest_weights(22), Err(Error::NonEvenTerms(22))));
        assert!(InversionMethod::stehfest(6).is_err());
    }

    #[test]
    fn known_pairs() {
        for t in [0.1, 1.0, 10.0] {
            assert!((stehfest(|s| 1.0 / s, t) - 1.0).abs() < 1e-8);
            assert!((stehfest(|s| 1.0 / (s * s), t) - t).abs() < 1e-5 * t);
            let e = (-t).exp();
            // absolute accuracy; the relative error grows once e^{-t} is small
            assert!((stehfest(|s| 1.0 / (s + 1.0), t) - e).abs() < 5e-5);
            assert!((euler(|s| 1.0 / (s + 1.0), t) - e).abs() < 1e-7);
        }
        assert!((stehfest(|s| 1.0 / (s + 1.0), 1.0) - (-1f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn eigenmode_cumulative_pair() {
        let f = |s: f64| PI / (s + PI * PI) / s;
        let oracle = (1.0 - (-PI * PI * 0.5f64).exp()) / PI;
        assert!((stehfest(f, 0.5) - oracle).abs() < 2e-5);
        let sixteen = InversionMethod::stehfest(16).unwrap();
        let unused = |_: Complex64| Err(Error::Numerical("real axis only".into()));
        let v = invert_with(|s| Ok(f(s)), unused, 0.5, sixteen).unwrap();
        assert!((v - oracle).abs() < 1e-5);
        assert!((oracle - 0.316_021).abs() < 1e-6);
    }

    #[test]
    fn cumulative_flux_of_cosine_mode() {
        let p = cosine_problem();
        let ts = [1e-3, 0.01, 0.1, 0.5, 5.0];
        let st = invert_cumulative(&p, &ts, InversionMethod::default()).unwrap();
        let eu = invert_cumulative(&p, &ts, InversionMethod::euler(DEFAULT_EULER_M)).unwrap();
        for ((t, a), b) in ts.iter().zip(&st).zip(&eu) {
            let oracle = (1.0 - (-PI * PI * t).exp()) / PI;
            assert!((a - oracle).abs() < 1e-4, "t={t}: {a} vs {oracle}");
            assert!((b - oracle).abs() < 1e-6, "t={t}: {b} vs {oracle}");
        }
        assert!((st[4] - 1.0 / PI).abs() < 1e-4);
    }
}
