//! Laplace-domain solution of the fluctuation field on `[0, ell]`.
//!
//! All hyperbolic quantities are evaluated in scaled form: every kernel is
//! written with exponentials `e^{-q z}`, `z >= 0`, so nothing overflows for
//! large `s`. With `q = sqrt(s / D)` and the scaled weights
//!
//! ```text
//! Z1s[x] = e^{-qx} Z1[x],            Z1[x] = ∫_0^x cosh(q x') C0(x') dx'
//! Z2s[x] = e^{-q(ell-x)} Z2[x],      Z2[x] = ∫_x^ell cosh(q(ell-x')) C0(x') dx'
//! ```
//!
//! the transformed field is
//!
//! ```text
//! c(x) = [(1 + e^{-2q(ell-x)}) (j1 e^{-qx} + Z1s[x])
//!       + (1 + e^{-2qx}) (j2 e^{-q(ell-x)} + Z2s[x])] / ((1 - e^{-2q ell}) D q)
//! ```
//!
//! Inside a gap `(alpha, beta)` where `C0 = 0` the field is `a e^{qx} + b e^{-qx}`
//! and `(D c')^2 - s D c^2 = -4 D^2 q^2 a b` is constant; its value is `f^2`.

use crate::error::{Error, Result};
use crate::model::{Axis, ProblemSpec, SignedField};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

type C64 = Complex64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `1 - e^{-z}` without cancellation for small `|z|`.
pub(crate) fn one_minus_exp_neg(z: C64) -> C64 {
    if z.norm() < 0.2 {
        // alternating series z - z^2/2! + z^3/3! - ...
        let mut term = z;
        let mut acc = z;
        for k in 2..30 {
            term = -term * z / k as f64;
            acc += term;
            if term.norm() < 1e-18 * acc.norm() {
                break;
            }
        }
        acc
    } else {
        1.0 - (-z).exp()
    }
}

/// Transform variable and the derived inverse length `q = sqrt(s / D)`.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceContext {
    pub s: C64,
    pub q: C64,
    pub diffusion: f64,
    pub ell: f64,
}

impl LaplaceContext {
    pub fn new(s: f64, diffusion: f64, ell: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Abscissa(format!("{s}")));
        }
        Ok(Self::complex(c(s), diffusion, ell))
    }

    /// Complex abscissa; callers must keep `Re s > 0`.
    pub fn complex(s: C64, diffusion: f64, ell: f64) -> Self {
        Self {
            s,
            q: (s / diffusion).sqrt(),
            diffusion,
            ell,
        }
    }

    pub fn for_problem(p: &ProblemSpec, s: f64) -> Result<Self> {
        Self::new(s, p.diffusion, p.ell)
    }

    pub fn s_real(&self) -> f64 {
        self.s.re
    }

    /// `sinh(q x)`; overflows to infinity for very large arguments.
    pub fn sh(&self, x: f64) -> C64 {
        (self.q * x).sinh()
    }

    /// `cosh(q x)`; overflows to infinity for very large arguments.
    pub fn ch(&self, x: f64) -> C64 {
        (self.q * x).cosh()
    }

    /// `cosh(q x) / sinh(q x)`, finite for every `x > 0`.
    pub fn coth(&self, x: f64) -> C64 {
        let e = (-2.0 * self.q * x).exp();
        (1.0 + e) / one_minus_exp_neg(2.0 * self.q * x)
    }

    /// `sinh(q x) / sinh(q y)` for `0 <= x <= y`, finite for all `q`.
    pub fn sh_ratio(&self, x: f64, y: f64) -> C64 {
        let num = one_minus_exp_neg(2.0 * self.q * x);
        let den = one_minus_exp_neg(2.0 * self.q * y);
        (self.q * (x - y)).exp() * num / den
    }

    /// `sqrt(s D) = D q`.
    pub fn dq(&self) -> C64 {
        self.q * self.diffusion
    }
}

/// Laplace transforms of the boundary fluxes at the context's abscissa.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryTransforms {
    pub j1: C64,
    pub j2: C64,
}

impl BoundaryTransforms {
    pub fn of(p: &ProblemSpec, ctx: &LaplaceContext) -> Self {
        Self {
            j1: p.j1.laplace(ctx.s),
            j2: p.j2.laplace(ctx.s),
        }
    }
}

/// Scaled `Z1s[x]` of a signed field.
pub fn z1_scaled(field: &SignedField, x: f64, q: C64) -> C64 {
    field.integrate_c(
        |xp| 0.5 * ((q * (xp - x)).exp() + (-q * (xp + x)).exp()),
        0.0,
        x,
    )
}

/// Scaled `Z2s[x]` of a signed field on `[0, ell]`.
pub fn z2_scaled(field: &SignedField, x: f64, ell: f64, q: C64) -> C64 {
    field.integrate_c(
        |xp| 0.5 * ((-q * (xp - x)).exp() + (-q * (2.0 * ell - xp - x)).exp()),
        x,
        ell,
    )
}

/// `(Z1[x], Z2[x])` with the unscaled `cosh` kernels. Large `q x` overflows;
/// use [`z1_scaled`]/[`z2_scaled`] there.
pub fn z_weights(p: &ProblemSpec, x: f64, ctx: &LaplaceContext) -> Result<(f64, f64)> {
    check_x(p, x)?;
    let f = p.initial_field();
    let z1 = z1_scaled(f, x, ctx.q) * (ctx.q * x).exp();
    let z2 = z2_scaled(f, x, p.ell, ctx.q) * (ctx.q * (p.ell - x)).exp();
    Ok((z1.re, z2.re))
}

fn check_x(p: &ProblemSpec, x: f64) -> Result<()> {
    if !(0.0..=p.ell).contains(&x) {
        return Err(Error::Domain { x, ell: p.ell });
    }
    Ok(())
}

fn field_parts(field: &SignedField, x: f64, ell: f64, q: C64, bc: BoundaryTransforms) -> (C64, C64) {
    let left = bc.j1 * (-q * x).exp() + z1_scaled(field, x, q);
    let right = bc.j2 * (-q * (ell - x)).exp() + z2_scaled(field, x, ell, q);
    (left, right)
}

/// `c(x, s)` for an arbitrary signed field and boundary transforms.
pub fn eval_c_with(field: &SignedField, x: f64, ctx: &LaplaceContext, bc: BoundaryTransforms) -> C64 {
    let q = ctx.q;
    let ell = ctx.ell;
    let (l, r) = field_parts(field, x, ell, q, bc);
    let num = (1.0 + (-2.0 * q * (ell - x)).exp()) * l + (1.0 + (-2.0 * q * x).exp()) * r;
    num / (one_minus_exp_neg(2.0 * q * ell) * ctx.dq())
}

/// `D dc/dx (x, s)` for an arbitrary signed field and boundary transforms.
pub fn eval_dc_with(field: &SignedField, x: f64, ctx: &LaplaceContext, bc: BoundaryTransforms) -> C64 {
    let q = ctx.q;
    let ell = ctx.ell;
    let (l, r) = field_parts(field, x, ell, q, bc);
    let num = -one_minus_exp_neg(2.0 * q * (ell - x)) * l + one_minus_exp_neg(2.0 * q * x) * r;
    num / one_minus_exp_neg(2.0 * q * ell)
}

/// `c(x, s)` with the problem's own flux transforms.
pub fn eval_c(p: &ProblemSpec, x: f64, ctx: &LaplaceContext) -> Result<f64> {
    check_x(p, x)?;
    let v = eval_c_with(p.initial_field(), x, ctx, BoundaryTransforms::of(p, ctx)).re;
    if v.is_nan() {
        return Err(Error::Numerical(format!("c({x}, {}) is NaN", ctx.s.re)));
    }
    Ok(v)
}

/// `D dc/dx (x, s)` with the problem's own flux transforms.
pub fn eval_dc(p: &ProblemSpec, x: f64, ctx: &LaplaceContext) -> Result<f64> {
    check_x(p, x)?;
    Ok(eval_dc_with(p.initial_field(), x, ctx, BoundaryTransforms::of(p, ctx)).re)
}

/// Boundary fluxes that produce the requested boundary values `c(0,s)`, `c(ell,s)`.
pub fn dirichlet_to_neumann(p: &ProblemSpec, c0: f64, cl: f64, ctx: &LaplaceContext) -> (f64, f64) {
    let (j1, j2) = dirichlet_to_neumann_c(p.initial_field(), c(c0), c(cl), ctx);
    (j1.re, j2.re)
}

/// Complex form of [`dirichlet_to_neumann`] for an arbitrary field.
pub fn dirichlet_to_neumann_c(field: &SignedField, c0: C64, cl: C64, ctx: &LaplaceContext) -> (C64, C64) {
    let q = ctx.q;
    let ell = ctx.ell;
    let e = (-q * ell).exp();
    let w = one_minus_exp_neg(2.0 * q * ell);
    // T0, Tl scaled by e^{-q ell}
    let t0 = ctx.dq() * w * 0.5 * c0 - z2_scaled(field, 0.0, ell, q);
    let tl = ctx.dq() * w * 0.5 * cl - z1_scaled(field, ell, q);
    let h = 1.0 + e * e;
    let j1 = 4.0 * (0.5 * h * t0 - e * tl) / (w * w);
    let j2 = 4.0 * (0.5 * h * tl - e * t0) / (w * w);
    (j1, j2)
}

/// One mixing front: the signed data on either side and the gap between them.
#[derive(Clone, Debug)]
pub struct FrontSpec {
    pub index: usize,
    pub left_support: [f64; 2],
    pub right_support: [f64; 2],
    /// Signed initial data left of the gap (all of `[0, I_i+]`).
    pub left: SignedField,
    /// Signed initial data right of the gap (all of `[I_{i+1}-, ell]`).
    pub right: SignedField,
}

impl FrontSpec {
    /// Front between the first two blocks.
    pub fn single(p: &ProblemSpec) -> Self {
        Self::fronts(p).remove(0)
    }

    /// All fronts of the layout, in order.
    pub fn fronts(p: &ProblemSpec) -> Vec<Self> {
        let field = p.initial_field();
        p.blocks
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let alpha = w[0].support[1];
                let beta = w[1].support[0];
                FrontSpec {
                    index: i + 1,
                    left_support: w[0].support,
                    right_support: w[1].support,
                    left: field.restricted(0.0, alpha),
                    right: field.restricted(beta, p.ell),
                }
            })
            .collect()
    }

    /// Front built from explicit left/right data. Separation is not checked,
    /// so moment-based quantities are available for any placement while
    /// Laplace evaluation needs `alpha <= beta`.
    pub fn from_data(left: SignedField, right: SignedField) -> Self {
        let hull = |f: &SignedField| {
            let lo = f.terms.iter().map(|(_, p)| p.lo()).fold(f64::INFINITY, f64::min);
            let hi = f.terms.iter().map(|(_, p)| p.hi()).fold(f64::NEG_INFINITY, f64::max);
            [lo, hi]
        };
        Self {
            index: 1,
            left_support: hull(&left),
            right_support: hull(&right),
            left,
            right,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.left_support[1]
    }

    pub fn beta(&self) -> f64 {
        self.right_support[0]
    }

    fn require_gap(&self) -> Result<()> {
        if self.beta() < self.alpha() {
            return Err(Error::Separation(format!(
                "front {} has I+ = {} beyond I- = {}",
                self.index,
                self.alpha(),
                self.beta()
            )));
        }
        Ok(())
    }

    /// `(P~, Q~)`: scaled left and right source strengths seen from the gap.
    fn strengths(&self, ctx: &LaplaceContext, bc: BoundaryTransforms) -> (C64, C64) {
        let q = ctx.q;
        let (a, b, ell) = (self.alpha(), self.beta(), ctx.ell);
        let p = bc.j1 * (-q * a).exp() + z1_scaled(&self.left, a, q);
        let qq = bc.j2 * (-q * (ell - b)).exp() + z2_scaled(&self.right, b, ell, q);
        (p, qq)
    }
}

/// `f^2` of a front at (possibly complex) `s`.
pub fn radicand_with(front: &FrontSpec, ctx: &LaplaceContext, bc: BoundaryTransforms) -> Result<C64> {
    front.require_gap()?;
    let (pt, qt) = front.strengths(ctx, bc);
    let q = ctx.q;
    let (a, b, ell) = (front.alpha(), front.beta(), ctx.ell);
    let w = one_minus_exp_neg(2.0 * q * ell);
    let bracket = pt * pt * (2.0 * q * (a - ell)).exp()
        + qt * qt * (-2.0 * q * b).exp()
        + pt * qt * (1.0 + (-2.0 * q * ell).exp()) * (q * (a - b)).exp();
    Ok(-4.0 * bracket / (w * w))
}

/// Location of the zero of `c(., s)` inside the front's gap (complex form).
pub fn locus_with(front: &FrontSpec, ctx: &LaplaceContext, bc: BoundaryTransforms) -> Result<C64> {
    front.require_gap()?;
    let (pt, qt) = front.strengths(ctx, bc);
    let q = ctx.q;
    let (a, b, ell) = (front.alpha(), front.beta(), ctx.ell);
    let sigma = a + b;
    // -(P + Q e^{-q sigma}) = -(P + Q) + Q (1 - e^{-q sigma})
    let num = qt * one_minus_exp_neg(q * sigma) - (pt + qt);
    // P e^{-q(2 ell - sigma)} + Q = (P + Q) - P (1 - e^{-q(2 ell - sigma)})
    let den = (pt + qt) - pt * one_minus_exp_neg(q * (2.0 * ell - sigma));
    Ok(0.5 * sigma + (num / den).ln() / (2.0 * q))
}

/// `y(s)`: the zero of `c(., s)` between the two species.
pub fn mixing_locus(p: &ProblemSpec, ctx: &LaplaceContext) -> Result<f64> {
    mixing_locus_with(p, ctx, BoundaryTransforms::of(p, ctx))
}

/// [`mixing_locus`] with explicitly supplied boundary transforms.
pub fn mixing_locus_with(p: &ProblemSpec, ctx: &LaplaceContext, bc: BoundaryTransforms) -> Result<f64> {
    front_locus(&FrontSpec::single(p), ctx, bc)
}

fn front_locus(front: &FrontSpec, ctx: &LaplaceContext, bc: BoundaryTransforms) -> Result<f64> {
    front.require_gap()?;
    let s = ctx.s_real();
    let (pt, qt) = front.strengths(ctx, bc);
    let q = ctx.q.re;
    let (a, b, ell) = (front.alpha(), front.beta(), ctx.ell);
    let sigma = a + b;
    let (pt, qt) = (pt.re, qt.re);
    let num = qt * one_minus_exp_neg(c(q * sigma)).re - (pt + qt);
    let den = (pt + qt) - pt * one_minus_exp_neg(c(q * (2.0 * ell - sigma))).re;
    let ratio = num / den;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::ArctanhDomain { s });
    }
    let y = 0.5 * sigma + ratio.ln() / (2.0 * q);
    let inside = if b > a {
        y > a && y < b
    } else {
        (y - a).abs() <= 1e-9 * ell
    };
    if !inside {
        return Err(Error::LocusOutOfGap { y, lo: a, hi: b });
    }
    Ok(y)
}

/// `f(s)` together with the radicand it was taken from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratingValue {
    pub f: f64,
    pub radicand: f64,
}

/// `f(s)`, the transform of the mixing flux through the single front.
pub fn generating_function(p: &ProblemSpec, ctx: &LaplaceContext) -> Result<GeneratingValue> {
    generating_function_with(p, ctx, BoundaryTransforms::of(p, ctx))
}

/// [`generating_function`] with explicitly supplied boundary transforms.
pub fn generating_function_with(
    p: &ProblemSpec,
    ctx: &LaplaceContext,
    bc: BoundaryTransforms,
) -> Result<GeneratingValue> {
    front_generating(&FrontSpec::single(p), ctx, bc)
}

fn front_generating(front: &FrontSpec, ctx: &LaplaceContext, bc: BoundaryTransforms) -> Result<GeneratingValue> {
    let r = radicand_with(front, ctx, bc)?.re;
    if r < 0.0 || r.is_nan() {
        return Err(Error::NegativeRadicand {
            s: ctx.s_real(),
            radicand: r,
        });
    }
    Ok(GeneratingValue { f: r.sqrt(), radicand: r })
}

/// Result of [`multifront_generating`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontGenerating {
    pub f: f64,
    pub radicand: f64,
    /// Largest relative spread of `(D c')^2 - s D c^2` over three gap points.
    pub energy_spread: f64,
}

/// `f_i(s)` of one front of a (multi)front layout, with the energy
/// invariance check evaluated inside the gap.
pub fn multifront_generating(front: &FrontSpec, p: &ProblemSpec, ctx: &LaplaceContext) -> Result<FrontGenerating> {
    let bc = BoundaryTransforms::of(p, ctx);
    let radicand = radicand_with(front, ctx, bc)?.re;
    let (a, b) = (front.alpha(), front.beta());
    let mut spread = 0.0;
    if b > a {
        let field = p.initial_field();
        let s = ctx.s_real();
        let mid = 0.5 * (a + b);
        let quarter = 0.25 * (b - a);
        let scale = radicand.abs().max(f64::MIN_POSITIVE);
        for x in [mid - quarter, mid, mid + quarter] {
            let cv = eval_c_with(field, x, ctx, bc).re;
            let dv = eval_dc_with(field, x, ctx, bc).re;
            let energy = dv * dv - s * p.diffusion * cv * cv;
            spread = f64::max(spread, (energy - radicand).abs() / scale);
        }
    }
    if radicand < 0.0 || radicand.is_nan() {
        return Err(Error::NegativeRadicand {
            s: ctx.s_real(),
            radicand,
        });
    }
    Ok(FrontGenerating {
        f: radicand.sqrt(),
        radicand,
        energy_spread: spread,
    })
}

/// Zeroth to second order source strengths of one side of a front:
/// `P(s) = P0 + P1 s + P2 s^2 + O(s^3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SideSeries {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

fn field_moment(field: &SignedField, k: i32, axis: Axis, ell: f64) -> f64 {
    field.integrate(
        |x| match axis {
            Axis::Left => x.powi(k),
            Axis::Right => (ell - x).powi(k),
        },
        0.0,
        ell,
    )
}

fn side_series(field: &SignedField, axis: Axis, p: &ProblemSpec) -> SideSeries {
    let d = p.diffusion;
    let m = match axis {
        Axis::Left => p.j1.moments(),
        Axis::Right => p.j2.moments(),
    };
    SideSeries {
        p0: field_moment(field, 0, axis, p.ell) + m.total,
        p1: field_moment(field, 2, axis, p.ell) / (2.0 * d) - m.first,
        p2: field_moment(field, 4, axis, p.ell) / (24.0 * d * d) + 0.5 * m.second,
    }
}

/// Coefficients of `f^2(s) = a1 / s + a2 + a3 s + O(s^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmallS {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub left: SideSeries,
    pub right: SideSeries,
}

fn series_mul(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0]]
}

/// Small-`s` expansion of `f_i^2` from spatial moments and flux time moments.
///
/// Uses `f^2 = -((P + Q)^2 + P Q 2(cosh u - 1)) / sinh(u)^2` with
/// `u^2 = s ell^2 / D`, expanded as truncated power series in `s`.
pub fn small_s_coefficients(front: &FrontSpec, p: &ProblemSpec) -> SmallS {
    let left = side_series(&front.left, Axis::Left, p);
    let right = side_series(&front.right, Axis::Right, p);
    let kappa = p.ell * p.ell / p.diffusion;
    let ps = [left.p0, left.p1, left.p2];
    let qs = [right.p0, right.p1, right.p2];
    let sum = [ps[0] + qs[0], ps[1] + qs[1], ps[2] + qs[2]];
    let pq = series_mul(&ps, &qs);
    // 2(cosh u - 1) = k s + k^2 s^2 / 12 + k^3 s^3 / 360, shifted by one power of s
    let ch = [kappa, kappa * kappa / 12.0, kappa.powi(3) / 360.0];
    let pq_ch = series_mul(&pq, &ch);
    let sq = series_mul(&sum, &sum);
    // N = sq + s * pq_ch; keep orders s^0..s^2
    let n = [sq[0], sq[1] + pq_ch[0], sq[2] + pq_ch[1]];
    // sinh(u)^2 / (k s) = 1 + k s / 3 + 2 k^2 s^2 / 45
    let den = [1.0, kappa / 3.0, 2.0 * kappa * kappa / 45.0];
    let mut quo = [0.0; 3];
    for i in 0..3 {
        let mut acc = n[i];
        for j in 1..=i {
            acc -= den[j] * quo[i - j];
        }
        quo[i] = acc;
    }
    SmallS {
        a1: -quo[0] / kappa,
        a2: -quo[1] / kappa,
        a3: -quo[2] / kappa,
        left,
        right,
    }
}

/// Numerical small-`s` fit of `s f^2(s)` by least squares on a short grid.
/// Independent of [`small_s_coefficients`]; used as a cross-check.
pub fn small_s_numeric(front: &FrontSpec, p: &ProblemSpec) -> Result<(f64, f64, f64)> {
    let kappa = p.ell * p.ell / p.diffusion;
    let n = 10;
    let deg = 6;
    let h = 0.02 / kappa;
    let mut rows = Vec::with_capacity(n);
    for k in 1..=n {
        let s = h * k as f64;
        let ctx = LaplaceContext::for_problem(p, s)?;
        let r = radicand_with(front, &ctx, BoundaryTransforms::of(p, &ctx))?.re;
        rows.push((s, s * r));
    }
    // normal equations on scaled abscissae
    let mut ata = vec![vec![0.0; deg]; deg];
    let mut atb = vec![0.0; deg];
    for (s, g) in &rows {
        let z = s / h;
        for i in 0..deg {
            atb[i] += z.powi(i as i32) * g;
            for j in 0..deg {
                ata[i][j] += z.powi((i + j) as i32);
            }
        }
    }
    let coef = solve_dense(ata, atb)?;
    Ok((coef[0], coef[1] / h, coef[2] / (h * h)))
}

pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return Err(Error::SingularSystem("dense solve".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= m * a[col][k];
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r][k] * x[k];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}

/// Signed radii of gyration about `x = 0` and `x = ell`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GyrationRadii {
    pub r_plus: f64,
    pub r_minus: f64,
    /// Set when a squared radius is negative; the radius is then NaN.
    pub imaginary: bool,
}

/// `R+ = sqrt(2 D P1 / P0)`, `R- = sqrt(2 D Q1 / Q0)`.
pub fn gyration_radii(front: &FrontSpec, p: &ProblemSpec) -> Result<GyrationRadii> {
    let left = side_series(&front.left, Axis::Left, p);
    let right = side_series(&front.right, Axis::Right, p);
    let scale_l = front.left.integrate(|_| 1.0, 0.0, p.ell).abs() + p.j1.moments().absolute;
    let scale_r = front.right.integrate(|_| 1.0, 0.0, p.ell).abs() + p.j2.moments().absolute;
    if left.p0.abs() <= 1e-12 * scale_l.max(1e-300) {
        return Err(Error::ZeroDenominator("left mass plus total J1 vanishes".into()));
    }
    if right.p0.abs() <= 1e-12 * scale_r.max(1e-300) {
        return Err(Error::ZeroDenominator("right mass plus total J2 vanishes".into()));
    }
    let sq_plus = 2.0 * p.diffusion * left.p1 / left.p0;
    let sq_minus = 2.0 * p.diffusion * right.p1 / right.p0;
    let root = |v: f64| if v >= 0.0 { v.sqrt() } else { f64::NAN };
    Ok(GyrationRadii {
        r_plus: root(sq_plus),
        r_minus: root(sq_minus),
        imaginary: sq_plus < 0.0 || sq_minus < 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    MayPersist,
    CannotPersist,
}

impl Verdict {
    pub fn describe(&self) -> &'static str {
        match self {
            Verdict::MayPersist => "may_persist (necessary conditions hold; not sufficient)",
            Verdict::CannotPersist => "cannot_persist (a necessary condition fails)",
        }
    }
}

/// Outcome of [`homogeneity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Homogeneity {
    pub a1_zero: bool,
    pub a3_negative: bool,
    pub bound_holds: bool,
    pub radii: GyrationRadii,
    pub coefficients: SmallS,
    pub verdict: Verdict,
}

/// Tolerance used for "a1 = 0" relative to the squared side masses.
pub const A1_TOL: f64 = 1e-9;

/// Necessary conditions for a front to persist: balanced mass (`a1 = 0`)
/// and `ell > R+ + R-`.
pub fn homogeneity_check(front: &FrontSpec, p: &ProblemSpec) -> Result<Homogeneity> {
    let coefficients = small_s_coefficients(front, p);
    let radii = gyration_radii(front, p)?;
    let kappa = p.ell * p.ell / p.diffusion;
    let scale = (coefficients.left.p0.abs() + coefficients.right.p0.abs()).powi(2) / kappa;
    let a1_zero = coefficients.a1.abs() <= A1_TOL * scale.max(1e-300);
    let bound_holds = !radii.imaginary && p.ell > radii.r_plus + radii.r_minus;
    let verdict = if a1_zero && bound_holds {
        Verdict::MayPersist
    } else {
        Verdict::CannotPersist
    };
    Ok(Homogeneity {
        a1_zero,
        a3_negative: coefficients.a3 < 0.0,
        bound_holds,
        radii,
        coefficients,
        verdict,
    })
}

/// Outcome of [`cm_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum CmVerdict {
    Pass,
    Fail { s: f64, order: usize, value: f64 },
    Inconclusive,
}

impl CmVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CmVerdict::Pass)
    }
}

/// Highest derivative order accepted by [`cm_probe`].
pub const CM_MAX_ORDER: usize = 6;

/// Relative noise assumed in sampled values of the probed function.
const CM_NOISE: f64 = 1e-13;

fn central_difference<F: Fn(f64) -> f64>(h: &F, s: f64, n: usize, step: f64) -> (f64, f64) {
    // n-th central difference with binomial weights, second order accurate
    let mut acc = 0.0;
    let mut mag = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        let x = s + (0.5 * n as f64 - k as f64) * step;
        let v = h(x);
        let w = if k % 2 == 0 { binom } else { -binom };
        acc += w * v;
        mag += binom * v.abs();
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    let hn = step.powi(n as i32);
    (acc / hn, mag / hn)
}

/// Numerical check of complete monotonicity, `(-1)^n h^(n)(s) >= 0`, for
/// orders `0..=max_order` at every grid point.
pub fn cm_probe<F: Fn(f64) -> f64>(h: F, grid: &[f64], max_order: usize) -> Result<CmVerdict> {
    if max_order > CM_MAX_ORDER {
        return Err(Error::Config(format!(
            "cm_probe order {max_order} exceeds {CM_MAX_ORDER}"
        )));
    }
    let mut resolved = 0usize;
    let mut total = 0usize;
    for &s in grid {
        for n in 0..=max_order {
            let (value, err) = if n == 0 {
                let v = h(s);
                (v, CM_NOISE * v.abs())
            } else {
                let step = 0.08 * s;
                let (d1, m1) = central_difference(&h, s, n, step);
                let (d2, m2) = central_difference(&h, s, n, 0.5 * step);
                let rich = (4.0 * d2 - d1) / 3.0;
                let trunc = (d2 - d1).abs() / 3.0;
                let noise = (f64::EPSILON + CM_NOISE) * (m1 + 4.0 * m2);
                (rich, trunc + noise)
            };
            let signed = if n % 2 == 0 { value } else { -value };
            total += 1;
            if signed < -3.0 * err {
                return Ok(CmVerdict::Fail { s, order: n, value: signed });
            }
            if signed.abs() > 3.0 * err {
                resolved += 1;
            }
        }
    }
    if total > 0 && 2 * resolved >= total {
        Ok(CmVerdict::Pass)
    } else {
        Ok(CmVerdict::Inconclusive)
    }
}

/// Geometric grid of `n` points on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| lo * (r * k as f64).exp()).collect()
}

/// Default `s` grid: 64 geometric points on `[1e-3, 1e3] D / ell^2`.
pub fn default_s_grid(p: &ProblemSpec) -> Vec<f64> {
    let unit = p.diffusion / (p.ell * p.ell);
    geometric_grid(1e-3 * unit, 1e3 * unit, 64)
}

/// Per-abscissa diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointFlags {
    pub radicand_negative: bool,
    pub y_in_gap: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalFlags {
    pub mass_balanced: bool,
    pub a3_negative: bool,
    pub y_in_gap: bool,
    pub cm_probe_passed: bool,
}

/// `f`, `y` and the radicand sampled on an `s` grid, plus summary flags.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratingEval {
    pub s: Vec<f64>,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub radicand: Vec<f64>,
    pub point_flags: Vec<PointFlags>,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub mass_residual: f64,
    pub cm_f: CmVerdict,
    pub cm_left_boundary: CmVerdict,
    pub cm_right_boundary: CmVerdict,
    pub flags: EvalFlags,
}

/// Samples `f` and `y` on `grid` and evaluates the persistence criteria.
pub fn evaluate_grid(p: &ProblemSpec, grid: &[f64]) -> Result<GeneratingEval> {
    let front = FrontSpec::single(p);
    let rows: Vec<Result<(f64, f64, f64, PointFlags)>> = grid
        .par_iter()
        .map(|&s| {
            let ctx = LaplaceContext::for_problem(p, s)?;
            let bc = BoundaryTransforms::of(p, &ctx);
            let r = radicand_with(&front, &ctx, bc)?.re;
            let y = front_locus(&front, &ctx, bc);
            let f = if r >= 0.0 { r.sqrt() } else { f64::NAN };
            Ok((
                f,
                y.as_ref().copied().unwrap_or(f64::NAN),
                r,
                PointFlags {
                    radicand_negative: !(r >= 0.0),
                    y_in_gap: y.is_ok(),
                },
            ))
        })
        .collect();
    let mut f = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    let mut radicand = Vec::with_capacity(grid.len());
    let mut point_flags = Vec::with_capacity(grid.len());
    for row in rows {
        let (fv, yv, rv, fl) = row?;
        f.push(fv);
        y.push(yv);
        radicand.push(rv);
        point_flags.push(fl);
    }
    let series = small_s_coefficients(&front, p);
    let mass_residual = crate::model::mass_balance_residual(p);
    let kappa = p.ell * p.ell / p.diffusion;
    let scale = (series.left.p0.abs() + series.right.p0.abs()).powi(2) / kappa;
    let mass_balanced = series.a1.abs() <= A1_TOL * scale.max(1e-300);

    let probe_grid: Vec<f64> = grid.iter().copied().step_by((grid.len() / 16).max(1)).collect();
    let f_of = |s: f64| {
        LaplaceContext::for_problem(p, s)
            .and_then(|ctx| radicand_with(&front, &ctx, BoundaryTransforms::of(p, &ctx)))
            .map(|r| r.re.max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    };
    let c_at = |x: f64, sign: f64| {
        move |s: f64| {
            LaplaceContext::for_problem(p, s)
                .and_then(|ctx| eval_c(p, x, &ctx))
                .map(|v| sign * v)
                .unwrap_or(f64::NAN)
        }
    };
    let cm_f = cm_probe(f_of, &probe_grid, 4)?;
    let cm_left_boundary = cm_probe(c_at(0.0, 1.0), &probe_grid, 4)?;
    let cm_right_boundary = cm_probe(c_at(p.ell, -1.0), &probe_grid, 4)?;
    let flags = EvalFlags {
        mass_balanced,
        a3_negative: series.a3 < 0.0,
        y_in_gap: point_flags.iter().all(|f| f.y_in_gap),
        cm_probe_passed: cm_f.passed() && cm_left_boundary.passed() && cm_right_boundary.passed(),
    };
    Ok(GeneratingEval {
        s: grid.to_vec(),
        f,
        y,
        radicand,
        point_flags,
        a1: series.a1,
        a2: series.a2,
        a3: series.a3,
        mass_residual,
        cm_f,
        cm_left_boundary,
        cm_right_boundary,
        flags,
    })
}

/// `f(s)` at complex `s`, continuing the square root of the radicand along
/// the segment from the real point `Re s` so that the branch is the one
/// that is positive on the real axis.
pub fn generating_complex(front: &FrontSpec, p: &ProblemSpec, s: C64) -> Result<C64> {
    let eval = |z: C64| -> Result<C64> {
        let ctx = LaplaceContext::complex(z, p.diffusion, p.ell);
        let bc = BoundaryTransforms {
            j1: p.j1.laplace(z),
            j2: p.j2.laplace(z),
        };
        radicand_with(front, &ctx, bc)
    };
    continued_sqrt(&eval, s)
}

/// Square root of `eval(s)` on the branch that is positive on the real
/// axis, continued along the vertical segment from `Re s`.
pub(crate) fn continued_sqrt<E: Fn(C64) -> Result<C64>>(eval: &E, s: C64) -> Result<C64> {
    let start = C64::new(s.re, 0.0);
    let r0 = eval(start)?;
    let mut prev = r0.sqrt();
    if s.im == 0.0 {
        return Ok(prev);
    }
    let steps = 8;
    let mut z0 = start;
    for k in 1..=steps {
        let z1 = C64::new(s.re, s.im * k as f64 / steps as f64);
        prev = continue_root(eval, z0, z1, prev, 0)?;
        z0 = z1;
    }
    Ok(prev)
}

fn continue_root<E: Fn(C64) -> Result<C64>>(eval: &E, z0: C64, z1: C64, prev: C64, depth: u32) -> Result<C64> {
    let w = eval(z1)?.sqrt();
    let (d_plus, d_minus) = ((w - prev).norm(), (w + prev).norm());
    let (best, other) = if d_plus <= d_minus { (w, d_minus) } else { (-w, d_plus) };
    let near = (best - prev).norm();
    if near < 0.25 * other || depth >= 24 {
        return Ok(best);
    }
    let mid = 0.5 * (z0 + z1);
    let m = continue_root(eval, z0, mid, prev, depth + 1)?;
    continue_root(eval, mid, z1, m, depth + 1)
}
