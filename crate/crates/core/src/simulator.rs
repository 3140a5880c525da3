//! Theta-scheme (Crank–Nicolson by default) solution of `D C_xx = C_t` on
//! `[0, ell]` with inward boundary fluxes, plus tracking of the mixing
//! point and its flux.
//!
//! Nodes sit at `x_i = i dx`, `i = 0..nx`, including both ends. Node `i`
//! owns the control volume `[x_i - dx/2, x_i + dx/2]` clipped to the
//! domain, so the discrete mass is the trapezoid sum and the boundary rows
//! are the ghost-node rows `du_0/dt = 2D(u_1 - u_0)/dx^2 + 2 J1/dx`.

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SignedField};
use serde::Serialize;

/// Relative magnitude below which nodal values count as zero when
/// looking for sign changes.
pub const ZERO_FLOOR: f64 = 1e-10;

/// Fully implicit half steps taken before switching to the theta scheme.
pub const RANNACHER_HALF_STEPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub theta: f64,
    pub ell: f64,
    pub diffusion: f64,
    /// Number of backward-Euler half steps used to damp step data.
    pub startup_half_steps: usize,
}

impl Grid {
    pub const DEFAULT_NX: usize = 2001;

    pub fn new(p: &ProblemSpec, nx: usize, dt: f64) -> Result<Self> {
        Self::for_domain(p.ell, p.diffusion, nx, dt)
    }

    /// Default resolution: `nx = 2001`, `dt = 1e-5 ell^2 / D`.
    pub fn default_for(p: &ProblemSpec) -> Self {
        Self::new(p, Self::DEFAULT_NX, 1e-5 * p.ell * p.ell / p.diffusion).expect("default grid is valid")
    }

    pub fn for_domain(ell: f64, diffusion: f64, nx: usize, dt: f64) -> Result<Self> {
        if nx < 5 {
            return Err(Error::Config(format!("nx = {nx} is too small")));
        }
        let dx = ell / (nx - 1) as f64;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt = {dt} must be positive")));
        }
        if dt > dx {
            return Err(Error::Config(format!("dt = {dt} exceeds dx = {dx}")));
        }
        Ok(Self {
            nx,
            dx,
            dt,
            theta: 0.5,
            ell,
            diffusion,
            startup_half_steps: RANNACHER_HALF_STEPS,
        })
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn without_startup(mut self) -> Self {
        self.startup_half_steps = 0;
        self
    }

    /// `D dt / dx^2`.
    pub fn diffusion_number(&self) -> f64 {
        self.diffusion * self.dt / (self.dx * self.dx)
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.ell
        } else {
            i as f64 * self.dx
        }
    }

    /// Control-volume width of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nx {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Cell averages of a signed field over the control volumes.
    pub fn project(&self, field: &SignedField) -> Vec<f64> {
        (0..self.nx)
            .map(|i| {
                let lo = (self.x(i) - 0.5 * self.dx).max(0.0);
                let hi = (self.x(i) + 0.5 * self.dx).min(self.ell);
                field.mass(lo, hi) / (hi - lo)
            })
            .collect()
    }

    /// Trapezoid mass of a nodal vector.
    pub fn mass(&self, u: &[f64]) -> f64 {
        let inner: f64 = u[1..u.len() - 1].iter().sum();
        self.dx * (inner + 0.5 * (u[0] + u[u.len() - 1]))
    }
}

/// How the two ends are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Inward fluxes `J1`, `J2` from the problem.
    Flux,
    /// `C(0, t) = C(ell, t) = 0` imposed on the end nodes.
    PinnedZero,
}

/// LU factors of the constant tridiagonal matrix `I - theta dt A`.
#[derive(Clone, Debug)]
struct Factor {
    lower: Vec<f64>,
    pivot_inv: Vec<f64>,
    upper: Vec<f64>,
}

impl Factor {
    fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        let mut lower = vec![0.0; n];
        let mut pivot_inv = vec![0.0; n];
        let mut upper = sup.to_vec();
        let mut piv = diag[0];
        pivot_inv[0] = 1.0 / piv;
        for i in 1..n {
            lower[i] = sub[i] * pivot_inv[i - 1];
            piv = diag[i] - lower[i] * upper[i - 1];
            pivot_inv[i] = 1.0 / piv;
        }
        upper.truncate(n);
        Self {
            lower,
            pivot_inv,
            upper,
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.lower[i] * rhs[i - 1];
        }
        rhs[n - 1] *= self.pivot_inv[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) * self.pivot_inv[i];
        }
    }
}

/// Stepper for one interval; the matrices depend only on the grid.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: Grid,
    mode: BoundaryMode,
    main: (Factor, f64, f64),
    startup: (Factor, f64, f64),
    scratch: Vec<f64>,
}

fn assemble(grid: &Grid, mode: BoundaryMode, theta: f64, dt: f64) -> (Factor, f64, f64) {
    let n = grid.nx;
    let r = grid.diffusion * dt / (grid.dx * grid.dx);
    let mut sub = vec![-theta * r; n];
    let mut diag = vec![1.0 + 2.0 * theta * r; n];
    let mut sup = vec![-theta * r; n];
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    match mode {
        BoundaryMode::Flux => {
            sup[0] = -2.0 * theta * r;
            sub[n - 1] = -2.0 * theta * r;
        }
        BoundaryMode::PinnedZero => {
            diag[0] = 1.0;
            sup[0] = 0.0;
            diag[n - 1] = 1.0;
            sub[n - 1] = 0.0;
        }
    }
    (Factor::new(&sub, &diag, &sup), theta, dt)
}

impl Stepper {
    pub fn new(grid: Grid, mode: BoundaryMode) -> Self {
        let main = assemble(&grid, mode, grid.theta, grid.dt);
        let startup = assemble(&grid, mode, 1.0, 0.5 * grid.dt);
        Self {
            grid,
            mode,
            main,
            startup,
            scratch: vec![0.0; grid.nx],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advances `u` from `t` by one step (`dt`, or `dt/2` when `half` is set,
    /// which uses backward Euler).
    fn advance(&mut self, u: &mut [f64], t: f64, p: &ProblemSpec, half: bool) {
        let (factor, theta, dt) = if half { &self.startup } else { &self.main };
        let (theta, dt) = (*theta, *dt);
        let g = &self.grid;
        let n = g.nx;
        let r = g.diffusion * dt / (g.dx * g.dx);
        let e = 1.0 - theta;
        let rhs = &mut self.scratch;
        for i in 1..n - 1 {
            rhs[i] = u[i] + e * r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
        }
        match self.mode {
            BoundaryMode::Flux => {
                let tj = t + theta * dt;
                let j1 = p.j1.value(tj);
                let j2 = p.j2.value(tj);
                rhs[0] = u[0] + e * 2.0 * r * (u[1] - u[0]) + 2.0 * dt * j1 / g.dx;
                rhs[n - 1] = u[n - 1] + e * 2.0 * r * (u[n - 2] - u[n - 1]) + 2.0 * dt * j2 / g.dx;
            }
            BoundaryMode::PinnedZero => {
                rhs[0] = 0.0;
                rhs[n - 1] = 0.0;
            }
        }
        factor.solve(rhs);
        u.copy_from_slice(rhs);
    }

    /// One full step of length `dt` from time `t`.
    pub fn step(&mut self, u: &mut [f64], t: f64, p: &ProblemSpec) {
        self.advance(u, t, p, false);
    }
}

/// One sign change of the nodal field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Zero {
    pub position: f64,
    /// `dC/dx` at the zero from the nodes on its left.
    pub left_slope: f64,
    /// `dC/dx` at the zero from the nodes on its right.
    pub right_slope: f64,
    /// `C` positive on the left (an `A | B` front).
    pub downward: bool,
    /// The bracketing nodes are separated by a run of (numerical) zeros.
    pub spread: bool,
}

/// Derivative at `x` of the Lagrange polynomial through the given nodes.
fn lagrange_slope(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut d = 0.0;
    for i in 0..n {
        // derivative of the i-th basis polynomial
        let mut denom = 1.0;
        for j in 0..n {
            if j != i {
                denom *= xs[i] - xs[j];
            }
        }
        let mut sum = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut prod = 1.0;
            for j in 0..n {
                if j != i && j != k {
                    prod *= x - xs[j];
                }
            }
            sum += prod;
        }
        d += ys[i] * sum / denom;
    }
    d
}

/// All sign changes of `u` on nodes `xs`; values below `ZERO_FLOOR` times
/// the largest magnitude are treated as zero.
pub fn locate_zeros_at(u: &[f64], xs: &[f64]) -> Vec<Zero> {
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    locate_zeros_scaled(u, xs, scale)
}

/// As [`locate_zeros_at`] with the magnitude scale given explicitly.
pub fn locate_zeros_scaled(u: &[f64], xs: &[f64], scale: f64) -> Vec<Zero> {
    if scale == 0.0 {
        return Vec::new();
    }
    let floor = ZERO_FLOOR * scale;
    let sign = |v: f64| {
        if v > floor {
            1
        } else if v < -floor {
            -1
        } else {
            0
        }
    };
    let mut zeros = Vec::new();
    let mut last: Option<usize> = None;
    for (j, &v) in u.iter().enumerate() {
        let sj = sign(v);
        if sj == 0 {
            continue;
        }
        if let Some(i) = last {
            let si = sign(u[i]);
            if si != sj {
                // a single numerically-zero node between the two signs is
                // still a resolved crossing
                let adjacent = j <= i + 2;
                let position = if adjacent {
                    xs[i] + (xs[j] - xs[i]) * u[i] / (u[i] - u[j])
                } else {
                    0.5 * (xs[i] + xs[j])
                };
                let (left_slope, right_slope) = if adjacent {
                    let l_end = j - 1;
                    let r_start = i + 1;
                    let lo = l_end.saturating_sub(2);
                    let hi = (r_start + 3).min(u.len());
                    (
                        lagrange_slope(&xs[lo..=l_end], &u[lo..=l_end], position),
                        lagrange_slope(&xs[r_start..hi], &u[r_start..hi], position),
                    )
                } else {
                    (0.0, 0.0)
                };
                zeros.push(Zero {
                    position,
                    left_slope,
                    right_slope,
                    downward: si > 0,
                    spread: !adjacent,
                });
            }
        }
        last = Some(j);
    }
    zeros
}

/// Sign changes of an interval state.
pub fn locate_zeros(u: &[f64], grid: &Grid) -> Vec<Zero> {
    let xs: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
    locate_zeros_at(u, &xs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BoundaryHit,
    FrontMerge,
    FrontBranch,
    SignChangeAtBoundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    pub position: f64,
}

/// Sampled history of a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MixingTrace {
    pub times: Vec<f64>,
    /// Tracked `A | B` front position; NaN when there is none.
    pub m: Vec<f64>,
    pub f_left: Vec<f64>,
    pub f_right: Vec<f64>,
    pub f: Vec<f64>,
    pub cum_f: Vec<f64>,
    pub zero_count: Vec<usize>,
    /// `∫_0^M C dx`
    pub mass_left: Vec<f64>,
    /// `-∫_M^ell C dx`
    pub mass_right: Vec<f64>,
    pub mass_total: Vec<f64>,
    /// `∫_0^t J1 dt` and `∫_0^t J2 dt` as applied by the scheme.
    pub cum_j1: Vec<f64>,
    pub cum_j2: Vec<f64>,
    pub events: Vec<Event>,
    /// Largest `|F_left - F_right| / F` over the run where `F` is resolved.
    pub max_flux_mismatch: f64,
}

impl MixingTrace {
    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    /// Linear interpolation of `cum_f` at time `t`.
    pub fn cum_f_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.cum_f, t)
    }

    /// Linear interpolation of `f` at time `t`.
    pub fn f_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.f, t)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|v| *v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub boundary: BoundaryMode,
    /// Record every n-th step (0 picks a value giving about 4000 samples).
    pub record_every: usize,
    /// Stop once the cumulative flux reaches this value.
    pub stop_at_cum_f: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            boundary: BoundaryMode::Flux,
            record_every: 0,
            stop_at_cum_f: None,
        }
    }
}

/// Per-step state of front tracking shared by the interval and graph runs.
#[derive(Clone, Debug)]
pub(crate) struct FrontTracker {
    pub front: Option<Zero>,
    pub zero_count: usize,
    pub cum_f: f64,
    pub prev_f: Option<f64>,
    pub max_mismatch: f64,
}

impl FrontTracker {
    pub fn new(zeros: &[Zero]) -> Self {
        let front = zeros.iter().find(|z| z.downward).copied();
        Self {
            front,
            zero_count: zeros.len(),
            cum_f: 0.0,
            prev_f: front.map(|z| flux_of(&z, 1.0).2),
            max_mismatch: 0.0,
        }
    }

    /// Updates with the zeros after a step of length `dt`; returns the
    /// change in zero count.
    pub fn update(&mut self, zeros: &[Zero], diffusion: f64, dt: f64) -> isize {
        let prev_pos = self.front.map(|z| z.position);
        let next = match prev_pos {
            Some(x) => zeros
                .iter()
                .filter(|z| z.downward)
                .min_by(|a, b| (a.position - x).abs().total_cmp(&(b.position - x).abs()))
                .copied(),
            None => None,
        };
        let f_now = next.map(|z| flux_of(&z, diffusion));
        match (self.prev_f, f_now) {
            (Some(a), Some((fl, fr, b))) => {
                self.cum_f += 0.5 * dt * (a + b);
                if b > 0.0 && !next.unwrap().spread {
                    let mm = (fl - fr).abs() / b;
                    self.max_mismatch = self.max_mismatch.max(mm);
                }
            }
            _ => {}
        }
        self.front = next;
        self.prev_f = f_now.map(|v| v.2);
        let delta = zeros.len() as isize - self.zero_count as isize;
        self.zero_count = zeros.len();
        delta
    }
}

/// `(F_left, F_right, F)` at a zero.
pub(crate) fn flux_of(z: &Zero, diffusion: f64) -> (f64, f64, f64) {
    let fl = diffusion * z.left_slope.abs();
    let fr = diffusion * z.right_slope.abs();
    (fl, fr, 0.5 * (fl + fr))
}

/// Edge-triggered sign tracker for one boundary value.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SignWatch {
    sign: i8,
}

impl SignWatch {
    /// Returns true when the sign flips relative to the last nonzero sign.
    pub fn observe(&mut self, v: f64, floor: f64) -> bool {
        let s = if v > floor {
            1
        } else if v < -floor {
            -1
        } else {
            0
        };
        if s == 0 {
            return false;
        }
        let flipped = self.sign != 0 && s != self.sign;
        self.sign = s;
        flipped
    }
}

fn signed_mass_split(u: &[f64], grid: &Grid, m: f64) -> (f64, f64) {
    // integrate the piecewise-linear interpolant on [0, m] and [m, ell]
    let n = grid.nx;
    let mut left = 0.0;
    let mut right = 0.0;
    for i in 0..n - 1 {
        let (x0, x1) = (grid.x(i), grid.x(i + 1));
        let (u0, u1) = (u[i], u[i + 1]);
        if x1 <= m {
            left += 0.5 * (u0 + u1) * (x1 - x0);
        } else if x0 >= m {
            right += 0.5 * (u0 + u1) * (x1 - x0);
        } else {
            let um = u0 + (u1 - u0) * (m - x0) / (x1 - x0);
            left += 0.5 * (u0 + um) * (m - x0);
            right += 0.5 * (um + u1) * (x1 - m);
        }
    }
    (left, -right)
}

/// Simulates `p` up to `horizon` with default options.
pub fn run(p: &ProblemSpec, grid: &Grid, horizon: f64) -> Result<MixingTrace> {
    run_with(p, grid, horizon, &RunOptions::default())
}

/// Simulates `p` up to `horizon`.
pub fn run_with(p: &ProblemSpec, grid: &Grid, horizon: f64, opts: &RunOptions) -> Result<MixingTrace> {
    let u = grid.project(p.initial_field());
    run_from(p, grid, u, horizon, opts)
}

/// Simulates from an explicit nodal state.
pub fn run_from(p: &ProblemSpec, grid: &Grid, mut u: Vec<f64>, horizon: f64, opts: &RunOptions) -> Result<MixingTrace> {
    if u.len() != grid.nx {
        return Err(Error::Config("state length does not match the grid".into()));
    }
    let steps = (horizon / grid.dt).round() as usize;
    let record_every = if opts.record_every == 0 {
        (steps / 4000).max(1)
    } else {
        opts.record_every
    };
    let mut stepper = Stepper::new(*grid, opts.boundary);
    let mut trace = MixingTrace::default();
    let n = grid.nx;
    let pinned = opts.boundary == BoundaryMode::PinnedZero;
    let (ib0, ib1) = if pinned { (1, n - 2) } else { (0, n - 1) };

    let zeros = locate_zeros(&u, grid);
    let mut tracker = FrontTracker::new(&zeros);
    let mut watch0 = SignWatch::default();
    let mut watch1 = SignWatch::default();
    let scale0 = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    watch0.observe(u[ib0], ZERO_FLOOR * scale0);
    watch1.observe(u[ib1], ZERO_FLOOR * scale0);
    let mut at_boundary = false;
    let mut cum_j = (0.0, 0.0);

    let record = |trace: &mut MixingTrace, t: f64, u: &[f64], tr: &FrontTracker, cum_j: (f64, f64)| {
        trace.times.push(t);
        let (m, fl, fr, f) = match tr.front {
            Some(z) => {
                let (fl, fr, f) = flux_of(&z, grid.diffusion);
                (z.position, fl, fr, f)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        trace.m.push(m);
        trace.f_left.push(fl);
        trace.f_right.push(fr);
        trace.f.push(f);
        trace.cum_f.push(tr.cum_f);
        trace.zero_count.push(tr.zero_count);
        let (ml, mr) = if m.is_nan() {
            (f64::NAN, f64::NAN)
        } else {
            signed_mass_split(u, grid, m)
        };
        trace.mass_left.push(ml);
        trace.mass_right.push(mr);
        trace.mass_total.push(grid.mass(u));
        trace.cum_j1.push(cum_j.0);
        trace.cum_j2.push(cum_j.1);
    };
    record(&mut trace, 0.0, &u, &tracker, cum_j);

    let mut t = 0.0;
    let startup_steps = grid.startup_half_steps / 2;
    for k in 1..=steps {
        let t_prev = t;
        if k <= startup_steps {
            // two backward-Euler half steps
            for _ in 0..2 {
                stepper.advance(&mut u, t, p, true);
                t += 0.5 * grid.dt;
                if !pinned {
                    cum_j.0 += 0.5 * grid.dt * p.j1.value(t);
                    cum_j.1 += 0.5 * grid.dt * p.j2.value(t);
                }
            }
        } else {
            let tj = t + grid.theta * grid.dt;
            stepper.step(&mut u, t, p);
            if !pinned {
                cum_j.0 += grid.dt * p.j1.value(tj);
                cum_j.1 += grid.dt * p.j2.value(tj);
            }
        }
        t = k as f64 * grid.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at t = {t}")));
        }
        let zeros = locate_zeros(&u, grid);
        let delta = tracker.update(&zeros, grid.diffusion, t - t_prev);
        if delta > 0 {
            trace.events.push(Event {
                kind: EventKind::FrontBranch,
                time: t,
                position: tracker.front.map_or(f64::NAN, |z| z.position),
            });
        } else if delta < 0 {
            trace.events.push(Event {
                kind: EventKind::FrontMerge,
                time: t,
                position: tracker.front.map_or(f64::NAN, |z| z.position),
            });
        }
        let near = zeros
            .iter()
            .find(|z| z.position <= grid.dx || z.position >= grid.ell - grid.dx)
            .map(|z| z.position);
        // a zero leaving the domain through the end node also counts
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = ZERO_FLOOR * scale;
        let flip0 = watch0.observe(u[ib0], floor);
        let flip1 = watch1.observe(u[ib1], floor);
        let hit = near.or(if flip0 {
            Some(0.0)
        } else if flip1 {
            Some(grid.ell)
        } else {
            None
        });
        match hit {
            Some(x) if !at_boundary => {
                trace.events.push(Event {
                    kind: EventKind::BoundaryHit,
                    time: t,
                    position: x,
                });
                at_boundary = true;
            }
            None => at_boundary = false,
            _ => {}
        }
        if flip0 {
            trace.events.push(Event {
                kind: EventKind::SignChangeAtBoundary,
                time: t,
                position: 0.0,
            });
        }
        if flip1 {
            trace.events.push(Event {
                kind: EventKind::SignChangeAtBoundary,
                time: t,
                position: grid.ell,
            });
        }
        let stop = opts.stop_at_cum_f.is_some_and(|c| tracker.cum_f >= c);
        if k % record_every == 0 || k >= steps || stop {
            record(&mut trace, t, &u, &tracker, cum_j);
        }
        if stop {
            break;
        }
    }
    trace.max_flux_mismatch = tracker.max_mismatch;
    Ok(trace)
}

/// Budget identities of a run, see [`mass_audit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MassAudit {
    /// End of the audited window (last sample with a tracked front).
    pub t_end: f64,
    /// `Δ(∫_0^M C) - (∫J1 - ∫F)` over the window.
    pub left_residual: f64,
    /// `Δ(-∫_M^ell C) - (-∫J2 - ∫F)` over the window.
    pub right_residual: f64,
    /// Total initial mass used to normalise the residuals.
    pub mass_scale: f64,
    /// `‖F‖` over the window.
    pub total_flux: f64,
    /// `‖J2‖ + v m_B - ‖F‖`.
    pub closure_right: f64,
    /// `‖J1‖ + m_A - ‖F‖`.
    pub closure_left: f64,
    /// `|closure_right| / (‖J2‖ + v m_B)`.
    pub closure_right_rel: f64,
    pub closure_left_rel: f64,
}

/// Checks the left/right mass budgets of a trace and the closure
/// `‖J2‖ + v m_B = ‖F‖ = ‖J1‖ + m_A`.
pub fn mass_audit(trace: &MixingTrace, p: &ProblemSpec) -> Result<MassAudit> {
    if trace.is_empty() || trace.m[0].is_nan() {
        return Err(Error::UndefinedFront(0.0));
    }
    let last = trace.m.iter().rposition(|m| !m.is_nan()).unwrap();
    let t_end = trace.times[last];
    let left_residual = (trace.mass_left[last] - trace.mass_left[0]) - (trace.cum_j1[last] - trace.cum_f[last]);
    let right_residual = (trace.mass_right[last] - trace.mass_right[0]) - (-trace.cum_j2[last] - trace.cum_f[last]);
    let m_a = p.mass_a();
    let vm_b = p.v * p.mass_b();
    let total_flux = trace.cum_f[last];
    let j1 = p.j1.moments().absolute;
    let j2 = p.j2.moments().absolute;
    let closure_right = j2 + vm_b - total_flux;
    let closure_left = j1 + m_a - total_flux;
    Ok(MassAudit {
        t_end,
        left_residual,
        right_residual,
        mass_scale: m_a + vm_b,
        total_flux,
        closure_right,
        closure_left,
        closure_right_rel: closure_right.abs() / (j2 + vm_b),
        closure_left_rel: closure_left.abs() / (j1 + m_a),
    })
}
