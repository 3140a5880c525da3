//! Problem description: piecewise initial densities, boundary flux
//! schedules and the validated [`ProblemSpec`].
//!
//! Sign convention for boundary fluxes: `J1` and `J2` are the rates at
//! which the fluctuation field `C = C_A - v C_B` enters the domain through
//! `x = 0` and `x = ell`, i.e. `J1 = -D dC/dx(0, t)` and `J2 = D dC/dx(ell, t)`.
//! With this convention `d/dt ∫C dx = J1 + J2` and a negative `J2` injects
//! `B` at the right end.

use crate::error::{Error, Result};
use crate::quad::{self, QuadValue};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Samples per piece used by the nonnegativity check.
pub const NONNEG_SAMPLES: usize = 4096;

/// Functional form of one piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    Constant { value: f64 },
    /// `sum_k coefficients[k] * x^k`, `x` in the owning coordinate.
    Polynomial { coefficients: Vec<f64> },
    /// `amplitude * sin(frequency * x + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub interval: [f64; 2],
    #[serde(flatten)]
    pub kind: PieceKind,
}

impl Piece {
    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        Self {
            interval: [lo, hi],
            kind: PieceKind::Constant { value },
        }
    }

    pub fn polynomial(lo: f64, hi: f64, coefficients: Vec<f64>) -> Self {
        Self {
            interval: [lo, hi],
            kind: PieceKind::Polynomial { coefficients },
        }
    }

    pub fn sinusoid(lo: f64, hi: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            interval: [lo, hi],
            kind: PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            },
        }
    }

    pub fn lo(&self) -> f64 {
        self.interval[0]
    }

    pub fn hi(&self) -> f64 {
        self.interval[1]
    }

    /// Value of the piece formula (ignores the interval).
    pub fn formula(&self, x: f64) -> f64 {
        match &self.kind {
            PieceKind::Constant { value } => *value,
            PieceKind::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * x + phase).sin(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    fn is_finite(&self) -> bool {
        let params_ok = match &self.kind {
            PieceKind::Constant { value } => value.is_finite(),
            PieceKind::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
        };
        params_ok && self.lo().is_finite() && self.hi().is_finite()
    }

    /// Same formula on a mirrored coordinate `x -> ell - x`.
    pub fn reflected(&self, ell: f64) -> Piece {
        let kind = match &self.kind {
            PieceKind::Constant { value } => PieceKind::Constant { value: *value },
            PieceKind::Polynomial { coefficients } => {
                // p(ell - x) expanded by binomial coefficients
                let n = coefficients.len();
                let mut out = vec![0.0; n];
                for (k, c) in coefficients.iter().enumerate() {
                    let mut binom = 1.0;
                    for j in 0..=k {
                        let term = binom * ell.powi((k - j) as i32) * (-1f64).powi(j as i32);
                        out[j] += c * term;
                        binom = binom * (k - j) as f64 / (j + 1) as f64;
                    }
                }
                PieceKind::Polynomial { coefficients: out }
            }
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => PieceKind::Sinusoid {
                // a sin(w(ell - x) + p) = -a sin(w x - w ell - p)
                amplitude: -amplitude,
                frequency: *frequency,
                phase: -frequency * ell - phase,
            },
        };
        Piece {
            interval: [ell - self.hi(), ell - self.lo()],
            kind,
        }
    }

    /// Same formula scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Piece {
        let kind = match &self.kind {
            PieceKind::Constant { value } => PieceKind::Constant {
                value: value * factor,
            },
            PieceKind::Polynomial { coefficients } => PieceKind::Polynomial {
                coefficients: coefficients.iter().map(|c| c * factor).collect(),
            },
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => PieceKind::Sinusoid {
                amplitude: amplitude * factor,
                frequency: *frequency,
                phase: *phase,
            },
        };
        Piece {
            interval: self.interval,
            kind,
        }
    }

    /// Same formula on a shifted coordinate: the result at `x` equals this piece at `x + offset`.
    pub fn shifted(&self, offset: f64) -> Piece {
        let kind = match &self.kind {
            PieceKind::Constant { value } => PieceKind::Constant { value: *value },
            PieceKind::Polynomial { coefficients } => {
                let n = coefficients.len();
                let mut out = vec![0.0; n];
                for (k, c) in coefficients.iter().enumerate() {
                    let mut binom = 1.0;
                    for j in 0..=k {
                        out[j] += c * binom * offset.powi((k - j) as i32);
                        binom = binom * (k - j) as f64 / (j + 1) as f64;
                    }
                }
                PieceKind::Polynomial { coefficients: out }
            }
            PieceKind::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => PieceKind::Sinusoid {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: phase + frequency * offset,
            },
        };
        Piece {
            interval: [self.lo() - offset, self.hi() - offset],
            kind,
        }
    }
}

/// Nonnegative piecewise-analytic density with explicit support.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    pub pieces: Vec<Piece>,
}

impl PiecewiseDensity {
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        pieces.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
        let d = Self { pieces };
        d.validate()?;
        Ok(d)
    }

    pub fn empty() -> Self {
        Self { pieces: Vec::new() }
    }

    /// Uniform block of the given total mass on `[lo, hi]`.
    pub fn block(lo: f64, hi: f64, mass: f64) -> Result<Self> {
        Self::new(vec![Piece::constant(lo, hi, mass / (hi - lo))])
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Hull of all pieces, `None` when empty.
    pub fn support(&self) -> Option<[f64; 2]> {
        let lo = self.pieces.iter().map(Piece::lo).fold(f64::INFINITY, f64::min);
        let hi = self.pieces.iter().map(Piece::hi).fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some([lo, hi])
    }

    fn validate(&self) -> Result<()> {
        for p in &self.pieces {
            if !p.is_finite() {
                return Err(Error::Config("non-finite piece parameter".into()));
            }
            if !(p.hi() > p.lo()) {
                return Err(Error::Config(format!(
                    "piece interval [{}, {}] is empty",
                    p.lo(),
                    p.hi()
                )));
            }
        }
        for w in self.pieces.windows(2) {
            if w[1].lo() < w[0].hi() {
                return Err(Error::Overlap(w[0].lo(), w[0].hi(), w[1].lo(), w[1].hi()));
            }
        }
        for p in &self.pieces {
            let n = NONNEG_SAMPLES;
            for i in 0..n {
                let x = p.lo() + (p.hi() - p.lo()) * i as f64 / (n - 1) as f64;
                let v = p.formula(x);
                if v < -1e-12 * (1.0 + v.abs()) {
                    return Err(Error::NegativeDensity { x, value: v });
                }
            }
        }
        Ok(())
    }

    /// Density value; zero outside the pieces. At a shared endpoint the
    /// left piece wins.
    pub fn value(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.contains(x))
            .map_or(0.0, |p| p.formula(x))
    }

    pub fn mass(&self) -> f64 {
        self.pieces.iter().map(|p| quad::quad(|x| p.formula(x), p.lo(), p.hi())).sum()
    }

    /// Breakpoints (piece endpoints).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().flat_map(|p| [p.lo(), p.hi()]).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.scaled(factor)).collect(),
        }
    }

    pub fn reflected(&self, ell: f64) -> Self {
        let mut pieces: Vec<Piece> = self.pieces.iter().map(|p| p.reflected(ell)).collect();
        pieces.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
        Self { pieces }
    }

    /// Checks continuity on `[0, ell]`: adjacent pieces must agree at shared
    /// endpoints and isolated endpoints must vanish.
    pub fn check_continuous(&self, ell: f64) -> Result<()> {
        let tol = 1e-9;
        let scale = self
            .pieces
            .iter()
            .map(|p| p.formula(p.lo()).abs().max(p.formula(p.hi()).abs()))
            .fold(1.0, f64::max);
        for (i, p) in self.pieces.iter().enumerate() {
            let left_val = p.formula(p.lo());
            let left_ref = if i > 0 && self.pieces[i - 1].hi() == p.lo() {
                self.pieces[i - 1].formula(p.lo())
            } else if p.lo() <= 0.0 {
                left_val
            } else {
                0.0
            };
            if (left_val - left_ref).abs() > tol * scale {
                return Err(Error::Discontinuity {
                    x: p.lo(),
                    jump: left_val - left_ref,
                });
            }
            let right_val = p.formula(p.hi());
            let right_ref = if i + 1 < self.pieces.len() && self.pieces[i + 1].lo() == p.hi() {
                self.pieces[i + 1].formula(p.hi())
            } else if p.hi() >= ell {
                right_val
            } else {
                0.0
            };
            if (right_val - right_ref).abs() > tol * scale {
                return Err(Error::Discontinuity {
                    x: p.hi(),
                    jump: right_val - right_ref,
                });
            }
        }
        Ok(())
    }
}

/// Which axis a moment is taken about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// `x = 0`
    Left,
    /// `x = ell`
    Right,
}

/// `∫ x^k d(x) dx` (left) or `∫ (ell - x)^k d(x) dx` (right).
pub fn moment(d: &PiecewiseDensity, k: u32, axis: Axis, ell: f64) -> f64 {
    d.pieces
        .iter()
        .map(|p| {
            quad::quad(
                |x| {
                    let arm = match axis {
                        Axis::Left => x,
                        Axis::Right => ell - x,
                    };
                    arm.powi(k as i32) * p.formula(x)
                },
                p.lo(),
                p.hi(),
            )
        })
        .sum()
}

/// A signed combination of pieces, `sum_i weight_i * piece_i(x)`.
///
/// This is how the initial fluctuation field `C(x, 0)` is represented; the
/// Laplace-domain kernels integrate against it piece by piece.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SignedField {
    pub terms: Vec<(f64, Piece)>,
}

impl SignedField {
    pub fn from_parts(parts: &[(f64, &PiecewiseDensity)]) -> Self {
        let mut terms = Vec::new();
        for (w, d) in parts {
            if *w != 0.0 {
                terms.extend(d.pieces.iter().map(|p| (*w, p.clone())));
            }
        }
        Self { terms }
    }

    pub fn value(&self, x: f64) -> f64 {
        // pieces of one density never overlap, and the two species are
        // separated, so summation only double counts at shared endpoints
        let mut seen: Vec<(f64, f64)> = Vec::new();
        let mut acc = 0.0;
        for (w, p) in &self.terms {
            if p.contains(x) {
                if seen.iter().any(|(lo, hi)| *hi == p.lo() && x == p.lo() || *lo == p.hi() && x == p.hi()) {
                    continue;
                }
                seen.push((p.lo(), p.hi()));
                acc += w * p.formula(x);
            }
        }
        acc
    }

    /// `∫_a^b kernel(x) C(x) dx`, pieces integrated separately.
    pub fn integrate<T: QuadValue, K: Fn(f64) -> T>(&self, kernel: K, a: f64, b: f64) -> T {
        let mut acc = T::zero();
        for (w, p) in &self.terms {
            let lo = p.lo().max(a);
            let hi = p.hi().min(b);
            if hi > lo {
                let (v, _) = quad::integrate(|x| kernel(x) * p.formula(x), lo, hi, quad::QuadTol::default());
                acc = acc + v * *w;
            }
        }
        acc
    }

    pub fn integrate_c<K: Fn(f64) -> Complex64>(&self, kernel: K, a: f64, b: f64) -> Complex64 {
        self.integrate(kernel, a, b)
    }

    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.integrate(|_| 1.0, a, b)
    }

    /// Restriction to `[a, b]`.
    pub fn restricted(&self, a: f64, b: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .filter_map(|(w, p)| {
                let lo = p.lo().max(a);
                let hi = p.hi().min(b);
                (hi > lo).then(|| {
                    let mut q = p.clone();
                    q.interval = [lo, hi];
                    (*w, q)
                })
            })
            .collect();
        Self { terms }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.terms.iter().flat_map(|(_, p)| [p.lo(), p.hi()]).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// One additive term of a boundary flux schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluxTerm {
    /// `amplitude * exp(-rate t)`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude * exp(-rate t) * sin(omega t + phase)`
    DampedSinusoid {
        amplitude: f64,
        rate: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * sin(omega t + phase)` for `t < end`, zero afterwards.
    WindowedSinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        end: f64,
    },
    /// Samples joined by monotone cubic (Fritsch–Carlson) interpolation;
    /// zero after the last sample.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
        #[serde(skip)]
        slopes: Vec<f64>,
    },
}

fn pchip_slopes(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
        return m;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end_slope = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

impl FluxTerm {
    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Self {
        let slopes = pchip_slopes(&times, &values);
        FluxTerm::Tabulated {
            times,
            values,
            slopes,
        }
    }

    fn prepare(&mut self) -> Result<()> {
        match self {
            FluxTerm::Exponential { amplitude, rate } => {
                if !amplitude.is_finite() || !rate.is_finite() {
                    return Err(Error::Config("non-finite flux parameter".into()));
                }
                if *rate <= 0.0 && *amplitude != 0.0 {
                    return Err(Error::DivergentFlux(format!("exponential rate {rate} must be positive")));
                }
            }
            FluxTerm::DampedSinusoid {
                amplitude,
                rate,
                omega,
                phase,
            } => {
                if ![*amplitude, *rate, *omega, *phase].iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("non-finite flux parameter".into()));
                }
                if *rate <= 0.0 && *amplitude != 0.0 {
                    return Err(Error::DivergentFlux(format!("damping rate {rate} must be positive")));
                }
            }
            FluxTerm::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                end,
            } => {
                if ![*amplitude, *omega, *phase, *end].iter().all(|v| v.is_finite()) {
                    return Err(Error::DivergentFlux("window must be finite".into()));
                }
                if *end < 0.0 {
                    return Err(Error::Config("window end must be nonnegative".into()));
                }
            }
            FluxTerm::Tabulated {
                times,
                values,
                slopes,
            } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(Error::Config("tabulated flux needs >= 2 matching samples".into()));
                }
                if !times.iter().chain(values.iter()).all(|v| v.is_finite()) {
                    return Err(Error::DivergentFlux("non-finite tabulated sample".into()));
                }
                if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("tabulated times must increase from t >= 0".into()));
                }
                *slopes = pchip_slopes(times, values);
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            FluxTerm::Exponential { amplitude, rate } => amplitude * (-rate * t).exp(),
            FluxTerm::DampedSinusoid {
                amplitude,
                rate,
                omega,
                phase,
            } => amplitude * (-rate * t).exp() * (omega * t + phase).sin(),
            FluxTerm::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                end,
            } => {
                if t < *end {
                    amplitude * (omega * t + phase).sin()
                } else {
                    0.0
                }
            }
            FluxTerm::Tabulated {
                times,
                values,
                slopes,
            } => {
                let n = times.len();
                if t < times[0] || t > times[n - 1] {
                    return 0.0;
                }
                let i = match times.binary_search_by(|p| p.total_cmp(&t)) {
                    Ok(i) => return values[i],
                    Err(i) => i - 1,
                };
                let h = times[i + 1] - times[i];
                let u = (t - times[i]) / h;
                let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
                let h10 = u * (1.0 - u) * (1.0 - u);
                let h01 = u * u * (3.0 - 2.0 * u);
                let h11 = u * u * (u - 1.0);
                h00 * values[i] + h10 * h * slopes[i] + h01 * values[i + 1] + h11 * h * slopes[i + 1]
            }
        }
    }

    /// Laplace transform at complex `s` (Re s > 0).
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        let i = Complex64::i();
        match self {
            FluxTerm::Exponential { amplitude, rate } => *amplitude / (s + rate),
            FluxTerm::DampedSinusoid {
                amplitude,
                rate,
                omega,
                phase,
            } => {
                let ep = (i * phase).exp();
                let em = (-i * phase).exp();
                let a = ep / (s + rate - i * omega) - em / (s + rate + i * omega);
                a * *amplitude / (2.0 * i)
            }
            FluxTerm::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                end,
            } => {
                let piece = |sgn: f64| {
                    let z = s - i * omega * sgn;
                    let e = (i * phase * sgn).exp();
                    if z.norm() * end < 1e-8 {
                        e * *end
                    } else {
                        e * (1.0 - (-z * end).exp()) / z
                    }
                };
                (piece(1.0) - piece(-1.0)) * *amplitude / (2.0 * i)
            }
            FluxTerm::Tabulated { times, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for w in times.windows(2) {
                    acc += quad::quad_c(|t| (-s * t).exp() * self.value(t), w[0], w[1]);
                }
                acc
            }
        }
    }

    /// Time after which the term is negligible (or zero).
    fn horizon(&self) -> f64 {
        match self {
            FluxTerm::Exponential { rate, .. } | FluxTerm::DampedSinusoid { rate, .. } => 45.0 / rate,
            FluxTerm::WindowedSinusoid { end, .. } => *end,
            FluxTerm::Tabulated { times, .. } => *times.last().unwrap(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            FluxTerm::WindowedSinusoid { end, .. } => vec![*end],
            FluxTerm::Tabulated { times, .. } => times.clone(),
            _ => Vec::new(),
        }
    }

    fn oscillation(&self) -> f64 {
        match self {
            FluxTerm::DampedSinusoid { omega, .. } | FluxTerm::WindowedSinusoid { omega, .. } => omega.abs(),
            _ => 0.0,
        }
    }

    fn decay_rate(&self) -> f64 {
        match self {
            FluxTerm::Exponential { rate, .. } | FluxTerm::DampedSinusoid { rate, .. } => *rate,
            _ => 0.0,
        }
    }

    /// Closed-form `∫_0^∞ t^n J dt` where available.
    fn closed_moment(&self, n: u32) -> Option<f64> {
        let fact = (1..=n).map(f64::from).product::<f64>();
        match self {
            FluxTerm::Exponential { amplitude, rate } => {
                if *amplitude == 0.0 {
                    Some(0.0)
                } else {
                    Some(amplitude * fact / rate.powi(n as i32 + 1))
                }
            }
            FluxTerm::DampedSinusoid {
                amplitude,
                rate,
                omega,
                phase,
            } => {
                if *amplitude == 0.0 {
                    return Some(0.0);
                }
                let z = Complex64::new(*rate, -omega);
                let v = Complex64::from_polar(1.0, *phase) * fact / z.powi(n as i32 + 1);
                Some(amplitude * v.im)
            }
            _ => None,
        }
    }
}

/// Cached integrals of a flux schedule over `[0, ∞)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FluxMoments {
    /// `∫ J dt`
    pub total: f64,
    /// `∫ t J dt`
    pub first: f64,
    /// `∫ t^2 J dt`
    pub second: f64,
    /// `∫ |J| dt`
    pub absolute: f64,
}

/// Boundary flux as a sum of [`FluxTerm`]s; empty means zero flux.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "FluxScheduleRaw", into = "FluxScheduleRaw")]
pub struct FluxSchedule {
    terms: Vec<FluxTerm>,
    moments: FluxMoments,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct FluxScheduleRaw {
    #[serde(default)]
    terms: Vec<FluxTerm>,
}

impl From<FluxScheduleRaw> for FluxSchedule {
    fn from(raw: FluxScheduleRaw) -> Self {
        // validation happens in `build_problem`; keep the raw terms here
        Self {
            terms: raw.terms,
            moments: FluxMoments::default(),
        }
    }
}

impl From<FluxSchedule> for FluxScheduleRaw {
    fn from(s: FluxSchedule) -> Self {
        Self { terms: s.terms }
    }
}

impl FluxSchedule {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(mut terms: Vec<FluxTerm>) -> Result<Self> {
        for t in &mut terms {
            t.prepare()?;
        }
        let mut s = Self {
            terms,
            moments: FluxMoments::default(),
        };
        s.moments = s.compute_moments();
        Ok(s)
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Result<Self> {
        Self::new(vec![FluxTerm::Exponential { amplitude, rate }])
    }

    /// Re-validates and refreshes caches (used after deserialisation).
    pub fn prepared(self) -> Result<Self> {
        Self::new(self.terms)
    }

    pub fn terms(&self) -> &[FluxTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn moments(&self) -> FluxMoments {
        self.moments
    }

    pub fn value(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.value(t)).sum()
    }

    pub fn laplace(&self, s: Complex64) -> Complex64 {
        self.terms.iter().map(|term| term.laplace(s)).sum()
    }

    pub fn laplace_real(&self, s: f64) -> f64 {
        self.laplace(Complex64::new(s, 0.0)).re
    }

    /// Breakpoints for quadrature of the schedule over `[0, horizon]`.
    pub fn quadrature_breaks(&self) -> (f64, Vec<f64>) {
        let horizon = self.terms.iter().map(FluxTerm::horizon).fold(0.0, f64::max);
        let mut breaks: Vec<f64> = self.terms.iter().flat_map(FluxTerm::breakpoints).collect();
        let omega = self.terms.iter().map(FluxTerm::oscillation).fold(0.0, f64::max);
        let rate = self.terms.iter().map(FluxTerm::decay_rate).fold(0.0, f64::max);
        let mut n = 64usize;
        if omega > 0.0 {
            n = n.max((2.0 * omega * horizon / std::f64::consts::PI).ceil() as usize);
        }
        let n = n.min(20_000);
        for k in 1..n {
            breaks.push(horizon * k as f64 / n as f64);
        }
        // resolve the fastest exponential near t = 0
        if rate > 0.0 {
            let mut t = 0.5 / rate;
            while t > 1e-6 / rate {
                breaks.push(t);
                t *= 0.5;
            }
        }
        breaks.retain(|b| *b > 0.0 && *b < horizon);
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        (horizon, breaks)
    }

    /// `∫_0^∞ g(t, J(t)) dt` by piecewise adaptive quadrature.
    pub fn integrate_with<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        let (horizon, breaks) = self.quadrature_breaks();
        quad::quad_split(|t| g(t, self.value(t)), 0.0, horizon, &breaks)
    }

    fn compute_moments(&self) -> FluxMoments {
        let closed = |n: u32| -> Option<f64> { self.terms.iter().map(|t| t.closed_moment(n)).sum() };
        let total = closed(0).unwrap_or_else(|| self.integrate_with(|_, j| j));
        let first = closed(1).unwrap_or_else(|| self.integrate_with(|t, j| t * j));
        let second = closed(2).unwrap_or_else(|| self.integrate_with(|t, j| t * t * j));
        let absolute = if self.terms.len() == 1 {
            match &self.terms[0] {
                FluxTerm::Exponential { amplitude, rate } => {
                    if *amplitude == 0.0 {
                        0.0
                    } else {
                        amplitude.abs() / rate
                    }
                }
                _ => self.integrate_with(|_, j| j.abs()),
            }
        } else {
            self.integrate_with(|_, j| j.abs())
        };
        FluxMoments {
            total,
            first,
            second,
            absolute,
        }
    }
}

/// Species label of a support block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    A,
    B,
}

/// One species block of the layout: contiguous support of a single species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub species: Species,
    pub support: [f64; 2],
}

/// Raw JSON form of a problem; see `docs/config-schema.md`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub ell: f64,
    #[serde(alias = "D")]
    pub diffusion: f64,
    pub v: f64,
    pub rho_a: PiecewiseDensity,
    pub rho_b: PiecewiseDensity,
    #[serde(default)]
    pub j1: FluxSchedule,
    #[serde(default)]
    pub j2: FluxSchedule,
    /// Alternating species blocks for the multifront case.
    #[serde(default)]
    pub fronts: Option<Vec<Block>>,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub continuous: bool,
    /// Admit supports that touch each other or the domain ends (e.g. a
    /// single cosine mode); the strict single-front separation is the default.
    #[serde(default)]
    pub allow_touching: bool,
}

/// Validated problem on `[0, ell]`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub ell: f64,
    pub diffusion: f64,
    pub v: f64,
    pub rho_a: PiecewiseDensity,
    pub rho_b: PiecewiseDensity,
    pub j1: FluxSchedule,
    pub j2: FluxSchedule,
    /// Ordered, alternating species blocks (two for a single front).
    pub blocks: Vec<Block>,
    pub normalized: bool,
    pub multifront: bool,
    initial: SignedField,
}

/// Parses and validates a JSON configuration document.
pub fn build_problem(raw: &str) -> Result<ProblemSpec> {
    let cfg: ProblemConfig = serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
    ProblemSpec::from_config(cfg)
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite")))
    }
}

impl ProblemSpec {
    pub fn from_config(cfg: ProblemConfig) -> Result<Self> {
        check_finite("ell", cfg.ell)?;
        check_finite("diffusion", cfg.diffusion)?;
        check_finite("v", cfg.v)?;
        if cfg.ell <= 0.0 {
            return Err(Error::Config("ell must be positive".into()));
        }
        if cfg.diffusion <= 0.0 {
            return Err(Error::Config("diffusion must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.v) {
            return Err(Error::Config(format!("v = {} outside [0, 1]", cfg.v)));
        }
        let rho_a = PiecewiseDensity::new(cfg.rho_a.pieces)?;
        let rho_b = PiecewiseDensity::new(cfg.rho_b.pieces)?;
        let ell = cfg.ell;
        for p in rho_a.pieces.iter().chain(rho_b.pieces.iter()) {
            if p.lo() < 0.0 || p.hi() > ell {
                return Err(Error::Config(format!(
                    "piece [{}, {}] leaves the domain [0, {ell}]",
                    p.lo(),
                    p.hi()
                )));
            }
        }
        if cfg.continuous {
            rho_a.check_continuous(ell)?;
            rho_b.check_continuous(ell)?;
        }
        let j1 = cfg.j1.prepared()?;
        let j2 = cfg.j2.prepared()?;

        let (blocks, multifront) = match cfg.fronts {
            Some(blocks) => {
                validate_layout(&blocks, &rho_a, &rho_b, ell)?;
                (blocks, true)
            }
            None => {
                let sa = rho_a
                    .support()
                    .ok_or_else(|| Error::Config("rho_a has no pieces".into()))?;
                let sb = rho_b
                    .support()
                    .ok_or_else(|| Error::Config("rho_b has no pieces".into()))?;
                if cfg.allow_touching {
                    if sb[0] < sa[1] {
                        return Err(Error::Separation(format!(
                            "I_B- = {} < I_A+ = {}",
                            sb[0], sa[1]
                        )));
                    }
                } else {
                    if sb[0] <= sa[1] {
                        return Err(Error::Separation(format!(
                            "I_B- = {} <= I_A+ = {}",
                            sb[0], sa[1]
                        )));
                    }
                    if sa[0] <= 0.0 || sb[1] >= ell {
                        return Err(Error::Separation(
                            "supports must lie strictly inside (0, ell)".into(),
                        ));
                    }
                }
                (
                    vec![
                        Block {
                            species: Species::A,
                            support: sa,
                        },
                        Block {
                            species: Species::B,
                            support: sb,
                        },
                    ],
                    false,
                )
            }
        };

        if cfg.normalized {
            for (name, d) in [("rho_a", &rho_a), ("rho_b", &rho_b)] {
                let m = d.mass();
                if (m - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("{name} has mass {m}, expected 1")));
                }
            }
        }

        let initial = SignedField::from_parts(&[(1.0, &rho_a), (-cfg.v, &rho_b)]);
        Ok(Self {
            ell,
            diffusion: cfg.diffusion,
            v: cfg.v,
            rho_a,
            rho_b,
            j1,
            j2,
            blocks,
            normalized: cfg.normalized,
            multifront,
            initial,
        })
    }

    /// Shortcut for programmatic construction of a single-front problem.
    #[allow(clippy::too_many_arguments)]
    pub fn single(
        ell: f64,
        diffusion: f64,
        rho_a: PiecewiseDensity,
        rho_b: PiecewiseDensity,
        v: f64,
        j1: FluxSchedule,
        j2: FluxSchedule,
        allow_touching: bool,
    ) -> Result<Self> {
        Self::from_config(ProblemConfig {
            ell,
            diffusion,
            v,
            rho_a,
            rho_b,
            j1,
            j2,
            fronts: None,
            normalized: false,
            continuous: false,
            allow_touching,
        })
    }

    /// Shortcut for a multifront layout.
    pub fn with_layout(
        ell: f64,
        diffusion: f64,
        rho_a: PiecewiseDensity,
        rho_b: PiecewiseDensity,
        v: f64,
        blocks: Vec<Block>,
    ) -> Result<Self> {
        Self::from_config(ProblemConfig {
            ell,
            diffusion,
            v,
            rho_a,
            rho_b,
            j1: FluxSchedule::zero(),
            j2: FluxSchedule::zero(),
            fronts: Some(blocks),
            normalized: false,
            continuous: false,
            allow_touching: false,
        })
    }

    /// `C(x, 0) = rho_A - v rho_B` as a signed field.
    pub fn initial_field(&self) -> &SignedField {
        &self.initial
    }

    /// Gap `(I_A+, I_B-)` of the single front (first front in multifront mode).
    pub fn gap(&self) -> (f64, f64) {
        (self.blocks[0].support[1], self.blocks[1].support[0])
    }

    pub fn front_count(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn mass_a(&self) -> f64 {
        self.rho_a.mass()
    }

    pub fn mass_b(&self) -> f64 {
        self.rho_b.mass()
    }

    /// Same problem with `rho_B` rescaled so that the mass balance residual vanishes.
    pub fn balanced_by_rho_b(&self) -> Result<Self> {
        let target = self.mass_a() + self.j1.moments().total + self.j2.moments().total;
        let mb = self.v * self.mass_b();
        if mb == 0.0 {
            return Err(Error::Config("rho_b carries no mass to rescale".into()));
        }
        let mut out = self.clone();
        out.rho_b = self.rho_b.scaled(target / mb);
        out.initial = SignedField::from_parts(&[(1.0, &out.rho_a), (-out.v, &out.rho_b)]);
        Ok(out)
    }

    /// Mirror image `x -> ell - x` with the species roles swapped: the new
    /// `rho_A` is `v rho_B` reflected, the new `rho_B` is `rho_A` reflected
    /// (with `v = 1`), and the two boundary fluxes change place and sign.
    pub fn reflected(&self) -> Result<Self> {
        let neg = |s: &FluxSchedule| -> Result<FluxSchedule> {
            let terms = s
                .terms()
                .iter()
                .map(|t| match t.clone() {
                    FluxTerm::Exponential { amplitude, rate } => FluxTerm::Exponential {
                        amplitude: -amplitude,
                        rate,
                    },
                    FluxTerm::DampedSinusoid {
                        amplitude,
                        rate,
                        omega,
                        phase,
                    } => FluxTerm::DampedSinusoid {
                        amplitude: -amplitude,
                        rate,
                        omega,
                        phase,
                    },
                    FluxTerm::WindowedSinusoid {
                        amplitude,
                        omega,
                        phase,
                        end,
                    } => FluxTerm::WindowedSinusoid {
                        amplitude: -amplitude,
                        omega,
                        phase,
                        end,
                    },
                    FluxTerm::Tabulated { times, values, .. } => {
                        FluxTerm::tabulated(times, values.into_iter().map(|v| -v).collect())
                    }
                })
                .collect();
            FluxSchedule::new(terms)
        };
        let rho_a = self.rho_b.scaled(self.v).reflected(self.ell);
        let rho_b = self.rho_a.reflected(self.ell);
        let blocks = self
            .blocks
            .iter()
            .rev()
            .map(|b| Block {
                species: match b.species {
                    Species::A => Species::B,
                    Species::B => Species::A,
                },
                support: [self.ell - b.support[1], self.ell - b.support[0]],
            })
            .collect::<Vec<_>>();
        let initial = SignedField::from_parts(&[(1.0, &rho_a), (-1.0, &rho_b)]);
        Ok(Self {
            ell: self.ell,
            diffusion: self.diffusion,
            v: 1.0,
            rho_a,
            rho_b,
            j1: neg(&self.j2)?,
            j2: neg(&self.j1)?,
            blocks,
            normalized: false,
            multifront: self.multifront,
            initial,
        })
    }
}

fn validate_layout(blocks: &[Block], rho_a: &PiecewiseDensity, rho_b: &PiecewiseDensity, ell: f64) -> Result<()> {
    if blocks.len() < 2 {
        return Err(Error::Config("multifront layout needs at least two blocks".into()));
    }
    for b in blocks {
        if !(b.support[0] < b.support[1]) || b.support[0] < 0.0 || b.support[1] > ell {
            return Err(Error::Config(format!("bad block support {:?}", b.support)));
        }
    }
    for w in blocks.windows(2) {
        if w[1].support[0] <= w[0].support[1] {
            return Err(Error::Separation(format!(
                "blocks {:?} and {:?} are not strictly ordered",
                w[0].support, w[1].support
            )));
        }
        if w[0].species == w[1].species {
            return Err(Error::Separation("species blocks must alternate".into()));
        }
    }
    let inside = |p: &Piece, sp: Species| {
        blocks
            .iter()
            .any(|b| b.species == sp && p.lo() >= b.support[0] && p.hi() <= b.support[1])
    };
    for p in &rho_a.pieces {
        if !inside(p, Species::A) {
            return Err(Error::Separation(format!("rho_a piece [{}, {}] outside A blocks", p.lo(), p.hi())));
        }
    }
    for p in &rho_b.pieces {
        if !inside(p, Species::B) {
            return Err(Error::Separation(format!("rho_b piece [{}, {}] outside B blocks", p.lo(), p.hi())));
        }
    }
    Ok(())
}

/// `C(x, 0) = rho_A(x) - v rho_B(x)`.
pub fn eval_initial(p: &ProblemSpec, x: f64) -> Result<f64> {
    if !(0.0..=p.ell).contains(&x) {
        return Err(Error::Domain { x, ell: p.ell });
    }
    Ok(p.rho_a.value(x) - p.v * p.rho_b.value(x))
}

/// `∫ C(x, 0) dx + ∫ (J1 + J2) dt`; zero is necessary for a persistent front.
pub fn mass_balance_residual(p: &ProblemSpec) -> f64 {
    p.mass_a() - p.v * p.mass_b() + p.j1.moments().total + p.j2.moments().total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn step_sine_config(k1: f64) -> String {
        format!(
            r#"{{
            "ell": 1.0, "diffusion": 1.0, "v": 1.0,
            "rho_a": {{"pieces": [{{"interval": [0.1, 0.4], "kind": "constant", "value": {a}}}]}},
            "rho_b": {{"pieces": [{{"interval": [0.6, 0.8], "kind": "sinusoid", "amplitude": {k1}, "frequency": {pi}}}]}},
            "j1": {{"terms": []}},
            "j2": {{"terms": [{{"kind": "exponential", "amplitude": -20.0, "rate": 20.0}}]}}
        }}"#,
            a = 20.0 / 3.0,
            k1 = k1,
            pi = PI
        )
    }

    #[test]
    fn step_sine_config_is_valid() {
        let p = build_problem(&step_sine_config(2.0 * PI)).unwrap();
        assert_eq!(p.gap(), (0.4, 0.6));
        assert!(!p.multifront);
    }

    #[test]
    fn overlapping_supports_are_a_separation_error() {
        let cfg = r#"{"ell":1,"diffusion":1,"v":1,
            "rho_a":{"pieces":[{"interval":[0.1,0.5],"kind":"constant","value":1}]},
            "rho_b":{"pieces":[{"interval":[0.4,0.9],"kind":"constant","value":1}]}}"#;
        assert!(matches!(build_problem(cfg), Err(Error::Separation(_))));
    }

    #[test]
    fn negative_coefficient_is_rejected() {
        let cfg = r#"{"ell":1,"diffusion":1,"v":1,
            "rho_a":{"pieces":[{"interval":[0.1,0.3],"kind":"constant","value":1}]},
            "rho_b":{"pieces":[{"interval":[0.6,0.8],"kind":"constant","value":-1}]}}"#;
        assert!(matches!(build_problem(cfg), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn overlapping_pieces_are_rejected() {
        let r = PiecewiseDensity::new(vec![Piece::constant(0.1, 0.3, 1.0), Piece::constant(0.2, 0.4, 1.0)]);
        assert!(matches!(r, Err(Error::Overlap(..))));
    }

    #[test]
    fn divergent_flux_is_rejected() {
        let r = FluxSchedule::new(vec![FluxTerm::Exponential {
            amplitude: 1.0,
            rate: 0.0,
        }]);
        assert!(matches!(r, Err(Error::DivergentFlux(_))));
    }

    #[test]
    fn eval_initial_examples() {
        let p = build_problem(&step_sine_config(2.0 * PI)).unwrap();
        assert!((eval_initial(&p, 0.2).unwrap() - 20.0 / 3.0).abs() < 1e-14);
        assert_eq!(eval_initial(&p, 0.5).unwrap(), 0.0);
        let v = eval_initial(&p, 0.7).unwrap();
        assert!((v + 2.0 * PI * (0.7 * PI).sin()).abs() < 1e-12);
        assert!((v + 5.0832).abs() < 1e-4);
        assert!(matches!(eval_initial(&p, 1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn uniform_block_second_moment() {
        let d = PiecewiseDensity::block(0.2, 0.4, 1.0).unwrap();
        let oracle = (0.4f64.powi(3) - 0.2f64.powi(3)) / (3.0 * 0.2);
        assert!((moment(&d, 2, Axis::Left, 1.0) - oracle).abs() < 1e-12 * oracle);
        assert!((moment(&d, 0, Axis::Left, 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_density_has_equal_axis_moments() {
        let d = PiecewiseDensity::new(vec![Piece::sinusoid(0.0, 1.0, 1.0, PI, 0.0)]).unwrap();
        let l = moment(&d, 2, Axis::Left, 1.0);
        let r = moment(&d, 2, Axis::Right, 1.0);
        assert!((l - r).abs() < 1e-13);
    }

    #[test]
    fn mass_balance_examples() {
        let p = build_problem(&step_sine_config(2.0 * PI)).unwrap();
        assert!(mass_balance_residual(&p).abs() < 1e-9);

        let a = PiecewiseDensity::block(0.1, 0.3, 1.0).unwrap();
        let b = PiecewiseDensity::block(0.6, 0.8, 1.0).unwrap();
        let z = FluxSchedule::zero;
        let p = ProblemSpec::single(1.0, 1.0, a.clone(), b.clone(), 1.0, z(), z(), false).unwrap();
        assert!(mass_balance_residual(&p).abs() < 1e-12);
        let p = ProblemSpec::single(1.0, 1.0, a, b, 0.5, z(), z(), false).unwrap();
        assert!((mass_balance_residual(&p) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn balancing_fixes_sine_amplitude() {
        // oracle: 1 / ∫_{0.6}^{0.8} sin(pi x) dx
        let integral = quad::quad(|x| (PI * x).sin(), 0.6, 0.8);
        let k1 = 1.0 / integral;
        assert!((k1 - 2.0 * PI).abs() < 1e-12);
        let p = build_problem(&step_sine_config(1.0)).unwrap().balanced_by_rho_b().unwrap();
        match &p.rho_b.pieces[0].kind {
            PieceKind::Sinusoid { amplitude, .. } => assert!((amplitude - 2.0 * PI).abs() < 1e-10),
            _ => unreachable!(),
        }
    }

    #[test]
    fn flux_moments_match_quadrature() {
        let sched = FluxSchedule::new(vec![
            FluxTerm::Exponential {
                amplitude: -20.0,
                rate: 20.0,
            },
            FluxTerm::DampedSinusoid {
                amplitude: 0.7,
                rate: 3.0,
                omega: 11.0,
                phase: 0.3,
            },
        ])
        .unwrap();
        let m = sched.moments();
        let q0 = sched.integrate_with(|_, j| j);
        let q1 = sched.integrate_with(|t, j| t * j);
        let q2 = sched.integrate_with(|t, j| t * t * j);
        assert!((m.total - q0).abs() < 1e-10 * m.total.abs());
        assert!((m.first - q1).abs() < 1e-10 * m.first.abs());
        assert!((m.second - q2).abs() < 1e-10 * m.second.abs());
    }

    #[test]
    fn laplace_transforms_match_quadrature() {
        let terms = vec![
            FluxTerm::DampedSinusoid {
                amplitude: 1.3,
                rate: 2.0,
                omega: 5.0,
                phase: 0.4,
            },
            FluxTerm::WindowedSinusoid {
                amplitude: 1.0,
                omega: PI / 10.0,
                phase: 0.0,
                end: 0.2,
            },
            FluxTerm::tabulated(vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 1.0, 0.5, 0.0]),
        ];
        for t in terms {
            let sched = FluxSchedule::new(vec![t]).unwrap();
            for s in [0.3, 2.0, 17.0] {
                let q = sched.integrate_with(|t, j| j * (-s * t).exp());
                let l = sched.laplace_real(s);
                assert!((q - l).abs() < 1e-11 * (1.0 + q.abs()), "s={s}: {q} vs {l}");
            }
        }
    }

    #[test]
    fn pchip_preserves_monotone_data() {
        let t = FluxTerm::tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.1, 2.0, 2.1]);
        let mut prev = t.value(0.0);
        for i in 1..=300 {
            let v = t.value(3.0 * i as f64 / 300.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn reflection_preserves_polynomial_values() {
        let p = Piece::polynomial(0.1, 0.4, vec![0.5, -1.0, 3.0]);
        let r = p.reflected(1.0);
        for x in [0.1, 0.2, 0.33, 0.4] {
            assert!((p.formula(x) - r.formula(1.0 - x)).abs() < 1e-13);
        }
        let s = Piece::sinusoid(0.6, 0.8, 2.0, PI, 0.1);
        let r = s.reflected(1.0);
        assert!((s.formula(0.7) - r.formula(0.3)).abs() < 1e-13);
    }

    #[test]
    fn continuity_flag_rejects_steps() {
        let d = PiecewiseDensity::block(0.1, 0.4, 1.0).unwrap();
        assert!(matches!(d.check_continuous(1.0), Err(Error::Discontinuity { .. })));
        let s = PiecewiseDensity::new(vec![Piece::sinusoid(0.2, 0.4, 1.0, 5.0 * PI, -PI)]).unwrap();
        assert!(s.check_continuous(1.0).is_ok());
    }
}
