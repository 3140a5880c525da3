//! Fluctuation field on metric trees: JSON specification, the T-tree
//! generator, the Laplace-domain junction solve, the interval generating
//! function between two source points, and a finite-volume time stepper on
//! the graph.

use crate::analytic::{continued_sqrt, one_minus_exp_neg};
use crate::error::{Error, Result};
use crate::inversion::{invert_with, InversionMethod};
use crate::model::{FluxSchedule, PiecewiseDensity, SignedField, Species};
use crate::simulator::{
    flux_of, locate_zeros_scaled, BoundaryMode, Event, EventKind, FrontTracker, MixingTrace, RunOptions, SignWatch, Zero,
    RANNACHER_HALF_STEPS, ZERO_FLOOR,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Leaf,
    Junction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: String,
    /// Checked against the degree when given; derived otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<VertexKind>,
    /// Inward flux through a leaf.
    #[serde(default, skip_serializing_if = "FluxSchedule::is_zero")]
    pub flux: FluxSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub length: f64,
    /// Densities in the edge-local coordinate measured from `from`.
    #[serde(default, skip_serializing_if = "PiecewiseDensity::is_empty")]
    pub a: PiecewiseDensity,
    #[serde(default, skip_serializing_if = "PiecewiseDensity::is_empty")]
    pub b: PiecewiseDensity,
}

/// Instantaneous point release at `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Release {
    pub vertex: String,
    pub species: Species,
    pub amount: f64,
}

fn default_diffusion() -> f64 {
    1.0
}

/// Raw JSON form of a network; see `docs/config-schema.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_diffusion", alias = "D")]
    pub diffusion: f64,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub releases: Vec<Release>,
    /// Observation path as a vertex sequence.
    pub path: Vec<String>,
    /// Source points on the path; all path vertices when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    /// Width over which the time stepper spreads each release; zero puts
    /// the whole release into the vertex control volume.
    #[serde(default)]
    pub release_width: f64,
}

#[derive(Clone, Debug)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub length: f64,
    /// `rho_A - rho_B` in edge-local coordinates.
    pub field: SignedField,
}

/// Validated network.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub diffusion: f64,
    pub ids: Vec<String>,
    pub kinds: Vec<VertexKind>,
    pub flux: Vec<FluxSchedule>,
    pub edges: Vec<EdgeSpec>,
    /// Signed released mass per vertex (A positive).
    pub releases: Vec<f64>,
    pub release_width: f64,
    /// Path vertices in order.
    pub path: Vec<usize>,
    /// Path edges with their orientation (`true` when `from` comes first).
    pub path_edges: Vec<(usize, bool)>,
    /// Indices into `path` of the source points.
    pub sources: Vec<usize>,
    /// Incident edges per vertex.
    pub incident: Vec<Vec<usize>>,
    config: NetworkConfig,
}

pub fn build_network(raw: &str) -> Result<NetworkSpec> {
    let cfg: NetworkConfig = serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
    NetworkSpec::from_config(cfg)
}

impl NetworkSpec {
    pub fn from_config(cfg: NetworkConfig) -> Result<Self> {
        let bad = |m: String| Err(Error::Network(m));
        if !(cfg.diffusion > 0.0) || !cfg.diffusion.is_finite() {
            return Err(Error::Config(format!("diffusion = {} must be positive", cfg.diffusion)));
        }
        let mut index = HashMap::new();
        for (i, v) in cfg.vertices.iter().enumerate() {
            if index.insert(v.id.clone(), i).is_some() {
                return bad(format!("duplicate vertex `{}`", v.id));
            }
        }
        let lookup = |id: &str| -> Result<usize> {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Network(format!("unknown vertex `{id}`")))
        };
        let nv = cfg.vertices.len();
        let mut incident = vec![Vec::new(); nv];
        let mut edges = Vec::with_capacity(cfg.edges.len());
        let mut pairs = HashMap::new();
        for (k, e) in cfg.edges.iter().enumerate() {
            let (from, to) = (lookup(&e.from)?, lookup(&e.to)?);
            if from == to {
                return bad(format!("edge {k} is a self-loop"));
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                return bad(format!("edge {k} has length {}", e.length));
            }
            for d in [&e.a, &e.b] {
                if let Some([lo, hi]) = d.support() {
                    if lo < 0.0 || hi > e.length {
                        return Err(Error::Domain { x: if lo < 0.0 { lo } else { hi }, ell: e.length });
                    }
                }
            }
            if pairs.insert((from.min(to), from.max(to)), k).is_some() {
                return bad(format!("edge {k} duplicates another edge"));
            }
            incident[from].push(k);
            incident[to].push(k);
            edges.push(EdgeSpec {
                from,
                to,
                length: e.length,
                field: SignedField::from_parts(&[(1.0, &e.a), (-1.0, &e.b)]),
            });
        }
        if nv == 0 || edges.len() + 1 != nv {
            return bad(format!("{nv} vertices and {} edges do not form a tree", edges.len()));
        }
        // connectivity
        let mut seen = vec![false; nv];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &k in &incident[v] {
                let w = if edges[k].from == v { edges[k].to } else { edges[k].from };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return bad(format!("vertex `{}` is disconnected", cfg.vertices[v].id));
        }
        let mut kinds = Vec::with_capacity(nv);
        let mut flux = Vec::with_capacity(nv);
        for (i, v) in cfg.vertices.iter().enumerate() {
            let kind = if incident[i].len() == 1 {
                VertexKind::Leaf
            } else {
                VertexKind::Junction
            };
            if v.kind.is_some_and(|k| k != kind) {
                return bad(format!("vertex `{}` has degree {}", v.id, incident[i].len()));
            }
            if kind == VertexKind::Junction && !v.flux.is_zero() {
                return bad(format!("flux imposed on non-leaf `{}`", v.id));
            }
            kinds.push(kind);
            flux.push(v.flux.clone().prepared()?);
        }
        let mut releases = vec![0.0; nv];
        for r in &cfg.releases {
            if !(r.amount >= 0.0) || !r.amount.is_finite() {
                return Err(Error::NegativeDensity { x: f64::NAN, value: r.amount });
            }
            let sign = if r.species == Species::A { 1.0 } else { -1.0 };
            releases[lookup(&r.vertex)?] += sign * r.amount;
        }
        if !(cfg.release_width >= 0.0) {
            return Err(Error::Config(format!("release_width = {}", cfg.release_width)));
        }
        let path = cfg.path.iter().map(|id| lookup(id)).collect::<Result<Vec<_>>>()?;
        if path.len() < 2 {
            return bad("path needs at least two vertices".into());
        }
        let mut path_edges = Vec::with_capacity(path.len() - 1);
        for w in path.windows(2) {
            match pairs.get(&(w[0].min(w[1]), w[0].max(w[1]))) {
                Some(&k) => path_edges.push((k, edges[k].from == w[0])),
                None => return bad(format!("no edge between `{}` and `{}`", cfg.vertices[w[0]].id, cfg.vertices[w[1]].id)),
            }
        }
        let mut on_path = vec![false; nv];
        for &v in &path {
            if std::mem::replace(&mut on_path[v], true) {
                return bad(format!("path visits `{}` twice", cfg.vertices[v].id));
            }
        }
        let sources = match &cfg.sources {
            None => (0..path.len()).collect(),
            Some(ids) => {
                let mut out = Vec::with_capacity(ids.len());
                for id in ids {
                    let v = lookup(id)?;
                    match path.iter().position(|&p| p == v) {
                        Some(i) if out.last().is_none_or(|&l| i > l) => out.push(i),
                        Some(_) => return bad("sources are not in path order".into()),
                        None => return bad(format!("source `{id}` is not on the path")),
                    }
                }
                if out.len() < 2 {
                    return bad("at least two sources are required".into());
                }
                out
            }
        };
        Ok(Self {
            diffusion: cfg.diffusion,
            ids: cfg.vertices.iter().map(|v| v.id.clone()).collect(),
            kinds,
            flux,
            edges,
            releases,
            release_width: cfg.release_width,
            path,
            path_edges,
            sources,
            incident,
            config: cfg,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn vertex(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|v| v == id)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn other_end(&self, e: usize, v: usize) -> usize {
        if self.edges[e].from == v {
            self.edges[e].to
        } else {
            self.edges[e].from
        }
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Path coordinate of every path vertex.
    pub fn path_positions(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &(k, _) in &self.path_edges {
            out.push(out.last().unwrap() + self.edges[k].length);
        }
        out
    }

    /// `ell_f`, the length of the observation path.
    pub fn path_length(&self) -> f64 {
        *self.path_positions().last().unwrap()
    }

    /// Path coordinates of the source points `x_0 .. x_N`.
    pub fn source_positions(&self) -> Vec<f64> {
        let pos = self.path_positions();
        self.sources.iter().map(|&i| pos[i]).collect()
    }

    /// Total signed mass (edge data plus releases).
    pub fn signed_mass(&self) -> f64 {
        let edges: f64 = self.edges.iter().map(|e| e.field.mass(0.0, e.length)).sum();
        edges + self.releases.iter().sum::<f64>()
    }

    pub fn has_leaf_flux(&self) -> bool {
        self.flux.iter().any(|f| !f.is_zero())
    }
}

/// Shape of the T-tree generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTreeShape {
    /// Relative position of the attachment point along the parent line.
    pub attach: f64,
    /// Length of a branch relative to its parent line.
    pub ratio: f64,
}

impl Default for TTreeShape {
    fn default() -> Self {
        Self { attach: 0.5, ratio: 0.5 }
    }
}

pub const MAX_TTREE_ITERATIONS: usize = 8;

/// T-tree with the default shape: midpoint attachment, halved lengths.
pub fn build_ttree(iterations: usize, base_length: f64) -> Result<NetworkSpec> {
    build_ttree_with(iterations, base_length, TTreeShape::default())
}

/// Iteration 1 is one line of length `base_length`; every later iteration
/// attaches a perpendicular branch to each line added by the previous one.
///
/// The observation path runs from the start of the base line through each
/// attachment point and up the newest branch to its tip. Path edges are
/// subdivided into equal segments when their lengths are integer multiples
/// of the shortest one. Path vertices are `x0, x1, ...`; the off-path tip
/// hanging from `x_i` is `x_i'`.
pub fn build_ttree_with(iterations: usize, base_length: f64, shape: TTreeShape) -> Result<NetworkSpec> {
    if iterations == 0 || iterations > MAX_TTREE_ITERATIONS {
        return Err(Error::Config(format!("iterations = {iterations} outside 1..={MAX_TTREE_ITERATIONS}")));
    }
    if !(base_length > 0.0) || !(shape.attach > 0.0 && shape.attach < 1.0) || !(shape.ratio > 0.0) {
        return Err(Error::Config("invalid T-tree shape".into()));
    }
    // each iteration adds one line, attached to the line of the previous
    // iteration; the path leaves every line at its attachment point
    let mut segments = Vec::new();
    let mut side = Vec::new();
    let mut len = base_length;
    for it in 0..iterations {
        if it + 1 == iterations {
            segments.push(len);
        } else {
            segments.push(shape.attach * len);
            side.push((segments.len(), (1.0 - shape.attach) * len));
        }
        len *= shape.ratio;
    }
    let h = segments.iter().cloned().fold(f64::INFINITY, f64::min);
    let parts: Vec<usize> = segments
        .iter()
        .map(|&s| {
            let r = s / h;
            if (r - r.round()).abs() < 1e-9 * r {
                r.round() as usize
            } else {
                1
            }
        })
        .collect();
    let subdivide = segments.iter().zip(&parts).all(|(s, &n)| ((s / n as f64) - h).abs() < 1e-9 * h);
    let mut vertices = vec![];
    let mut edges = vec![];
    let mut path = vec!["x0".to_string()];
    // path index of the end of each original segment
    let mut seg_end = Vec::new();
    for (s, &n) in segments.iter().zip(&parts) {
        let n = if subdivide { n } else { 1 };
        for _ in 0..n {
            let id = format!("x{}", path.len());
            edges.push(Edge {
                from: path.last().unwrap().clone(),
                to: id.clone(),
                length: s / n as f64,
                a: PiecewiseDensity::empty(),
                b: PiecewiseDensity::empty(),
            });
            path.push(id);
        }
        seg_end.push(path.len() - 1);
    }
    for id in &path {
        vertices.push(Vertex {
            id: id.clone(),
            kind: None,
            flux: FluxSchedule::zero(),
        });
    }
    for (seg, length) in side {
        let at = &path[seg_end[seg - 1]];
        let tip = format!("{at}'");
        vertices.push(Vertex {
            id: tip.clone(),
            kind: None,
            flux: FluxSchedule::zero(),
        });
        edges.push(Edge {
            from: at.clone(),
            to: tip,
            length,
            a: PiecewiseDensity::empty(),
            b: PiecewiseDensity::empty(),
        });
    }
    NetworkSpec::from_config(NetworkConfig {
        diffusion: 1.0,
        vertices,
        edges,
        releases: Vec::new(),
        path,
        sources: None,
        release_width: 0.0,
    })
}

/// Laplace-domain vertex values and edge coefficients at one `s`.
#[derive(Clone, Debug)]
pub struct JunctionSolution {
    pub s: C64,
    /// `p_v = c(v, s)` per vertex.
    pub p: Vec<C64>,
    /// `(A_e, B_e)` of the homogeneous part `A ch(qx) + B sh(qx)` per edge,
    /// in the edge-local coordinate.
    pub coefficients: Vec<(C64, C64)>,
    /// Largest vertex-equation residual relative to the equation scale.
    pub residual: f64,
}

/// `sh(q(L - d)) / sh(q L)` in non-overflowing form.
fn sh_ratio(q: C64, len: f64, d: f64) -> C64 {
    (-q * d).exp() * one_minus_exp_neg(2.0 * q * (len - d)) / one_minus_exp_neg(2.0 * q * len)
}

/// Solves for the vertex values by continuity at every vertex and flux
/// conservation `sum_e -D dc/dn = m_v + J_v(s)`, with the outward normal
/// pointing into each incident edge.
pub fn laplace_solve(net: &NetworkSpec, s: C64) -> Result<JunctionSolution> {
    if !(s.re > 0.0) {
        return Err(Error::Abscissa(format!("s = {s} must have a positive real part")));
    }
    let d = net.diffusion;
    let q = (s / d).sqrt();
    let dq = d * q;
    let n = net.ids.len();
    let mut a = vec![vec![C64::new(0.0, 0.0); n]; n];
    let mut b: Vec<C64> = (0..n).map(|v| net.releases[v] + net.flux[v].laplace(s)).collect();
    for e in &net.edges {
        let big_e = (-q * e.length).exp();
        let w = one_minus_exp_neg(2.0 * q * e.length);
        let coth = (1.0 + big_e * big_e) / w;
        let csch = 2.0 * big_e / w;
        for (v, other, near_from) in [(e.from, e.to, true), (e.to, e.from, false)] {
            a[v][v] += dq * coth;
            a[v][other] -= dq * csch;
            if !e.field.is_zero() {
                let len = e.length;
                let load = e.field.integrate_c(
                    |x| {
                        let dist = if near_from { x } else { len - x };
                        sh_ratio(q, len, dist)
                    },
                    0.0,
                    len,
                );
                b[v] += load;
            }
        }
    }
    let p = solve_complex(a.clone(), b.clone())?;
    let mut residual = 0.0f64;
    for v in 0..n {
        let mut r = -b[v];
        let mut scale = b[v].norm();
        for w in 0..n {
            r += a[v][w] * p[w];
            scale = scale.max((a[v][w] * p[w]).norm());
        }
        if scale > 0.0 {
            residual = residual.max(r.norm() / scale);
        }
    }
    let coefficients = net
        .edges
        .iter()
        .map(|e| {
            let (pa, pb) = (p[e.from], p[e.to]);
            let ql = q * e.length;
            (pa, (pb - pa * ql.cosh()) / ql.sinh())
        })
        .collect();
    Ok(JunctionSolution { s, p, coefficients, residual })
}

fn solve_complex(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Result<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        if a[piv][col].norm() == 0.0 || !a[piv][col].norm().is_finite() {
            return Err(Error::SingularSystem("junction system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            if m.norm() == 0.0 {
                continue;
            }
            for k in col..n {
                let t = a[col][k];
                a[r][k] -= m * t;
            }
            let t = b[col];
            b[r] -= m * t;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r][k] * x[k];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}

impl JunctionSolution {
    /// `c(x, s)` at local coordinate `x` of edge `k`.
    pub fn edge_value(&self, net: &NetworkSpec, k: usize, x: f64) -> C64 {
        let e = &net.edges[k];
        let d = net.diffusion;
        let q = (self.s / d).sqrt();
        let len = e.length;
        let hom = self.p[e.from] * sh_ratio(q, len, x) + self.p[e.to] * sh_ratio(q, len, len - x);
        if e.field.is_zero() {
            return hom;
        }
        // Dirichlet Green's function sh(q x<) sh(q (L - x>)) / (D q sh(q L))
        let w = one_minus_exp_neg(2.0 * q * len);
        let g = |lo: f64, hi: f64| 0.5 * (-q * (hi - lo)).exp() * one_minus_exp_neg(2.0 * q * lo) * one_minus_exp_neg(2.0 * q * (len - hi)) / w;
        let left = e.field.integrate_c(|xp| g(xp, x), 0.0, x);
        let right = e.field.integrate_c(|xp| g(x, xp), x, len);
        hom + (left + right) / (d * q)
    }

    /// `c(x, s)` at path coordinate `x`.
    pub fn path_value(&self, net: &NetworkSpec, x: f64) -> C64 {
        let (k, local) = locate_on_path(net, x);
        self.edge_value(net, k, local)
    }
}

/// Edge and local coordinate of a path coordinate.
pub fn locate_on_path(net: &NetworkSpec, x: f64) -> (usize, f64) {
    let pos = net.path_positions();
    let i = (pos.partition_point(|p| *p <= x).max(1) - 1).min(net.path_edges.len() - 1);
    let (k, forward) = net.path_edges[i];
    let off = (x - pos[i]).clamp(0.0, net.edges[k].length);
    (k, if forward { off } else { net.edges[k].length - off })
}

/// Generating function between two consecutive source points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NetworkGenerating {
    pub s: f64,
    /// `D q sqrt(...) / sh(q ell)`, the dimensionally consistent form.
    pub f: f64,
    /// `sqrt(s) sqrt(...) / sh(q ell)` as printed; equal to `f` when `D = 1`.
    pub f_printed: f64,
    /// `(p_i^2 + p_{i+1}^2 - 2 p_i p_{i+1} ch(q ell)) / sh(q ell)^2`.
    pub radicand: f64,
    /// Path coordinate of the Laplace-domain zero.
    pub y: f64,
    pub p_left: f64,
    pub p_right: f64,
}

/// Checks that the interval between sources `i` and `i + 1` carries no
/// data and no side branches; returns its path coordinates.
pub fn source_interval(net: &NetworkSpec, i: usize) -> Result<(f64, f64)> {
    if i + 1 >= net.sources.len() {
        return Err(Error::Network(format!("interval {i} needs sources {i} and {}", i + 1)));
    }
    let (a, b) = (net.sources[i], net.sources[i + 1]);
    for j in a..b {
        let (k, _) = net.path_edges[j];
        if !net.edges[k].field.is_zero() {
            return Err(Error::Network(format!("edge {k} inside interval {i} carries initial data")));
        }
    }
    for &v in &net.path[a + 1..b] {
        if net.degree(v) != 2 || net.releases[v] != 0.0 {
            return Err(Error::Network(format!("vertex `{}` inside interval {i} is a source", net.ids[v])));
        }
    }
    let pos = net.path_positions();
    Ok((pos[a], pos[b]))
}

/// Squared radicand scaled by `sh(q ell)^-2`, in powers of `e^{-q ell}`.
fn interval_radicand(pl: C64, pr: C64, q: C64, ell: f64) -> C64 {
    let e = (-q * ell).exp();
    let w = one_minus_exp_neg(2.0 * q * ell);
    4.0 * (e * e * (pl * pl + pr * pr) - pl * pr * e * (1.0 + e * e)) / (w * w)
}

pub fn network_generating(net: &NetworkSpec, i: usize, s: f64) -> Result<NetworkGenerating> {
    let (lo, hi) = source_interval(net, i)?;
    let sol = laplace_solve(net, C64::new(s, 0.0))?;
    let (pl, pr) = (sol.p[net.path[net.sources[i]]], sol.p[net.path[net.sources[i + 1]]]);
    let ell = hi - lo;
    let d = net.diffusion;
    let q = (s / d).sqrt();
    let rad = interval_radicand(pl, pr, C64::new(q, 0.0), ell).re;
    if !(rad >= 0.0) {
        return Err(Error::NegativeRadicand { s, radicand: rad });
    }
    // tanh(q y) = p_l sh(q ell) / (p_l ch(q ell) - p_r)
    let e = (-q * ell).exp();
    let r = pl.re * (1.0 - e * e) / (pl.re * (1.0 + e * e) - 2.0 * pr.re * e);
    let y = if r.abs() < 1.0 {
        lo + ((1.0 + r) / (1.0 - r)).ln() / (2.0 * q)
    } else {
        f64::NAN
    };
    Ok(NetworkGenerating {
        s,
        f: d * q * rad.sqrt(),
        f_printed: s.sqrt() * rad.sqrt(),
        radicand: rad,
        y,
        p_left: pl.re,
        p_right: pr.re,
    })
}

/// Complex `f(s)` on the branch continued from the real axis.
pub fn network_generating_c(net: &NetworkSpec, i: usize, s: C64) -> Result<C64> {
    let (lo, hi) = source_interval(net, i)?;
    let (vl, vr) = (net.path[net.sources[i]], net.path[net.sources[i + 1]]);
    let d = net.diffusion;
    let eval = |z: C64| -> Result<C64> {
        let sol = laplace_solve(net, z)?;
        let q = (z / d).sqrt();
        Ok(d * d * q * q * interval_radicand(sol.p[vl], sol.p[vr], q, hi - lo))
    };
    continued_sqrt(&eval, s)
}

/// `∫_0^t F dt` for the front between sources `i` and `i + 1`.
pub fn invert_network_cumulative(net: &NetworkSpec, i: usize, t_grid: &[f64], method: InversionMethod) -> Result<Vec<f64>> {
    source_interval(net, i)?;
    t_grid
        .par_iter()
        .map(|&t| {
            invert_with(
                |s| network_generating(net, i, s).map(|g| g.f / s),
                |s| network_generating_c(net, i, s).map(|f| f / s),
                t,
                method,
            )
        })
        .collect()
}

/// `F(t)` for the front between sources `i` and `i + 1`.
pub fn invert_network_flux(net: &NetworkSpec, i: usize, t_grid: &[f64], method: InversionMethod) -> Result<Vec<f64>> {
    source_interval(net, i)?;
    t_grid
        .par_iter()
        .map(|&t| {
            invert_with(
                |s| network_generating(net, i, s).map(|g| g.f),
                |s| network_generating_c(net, i, s),
                t,
                method,
            )
        })
        .collect()
}

/// Spatial and temporal resolution of a graph run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NetworkGrid {
    /// Target spacing; every edge gets `max(1, round(L / dx))` cells.
    pub dx: f64,
    pub dt: f64,
    pub theta: f64,
    pub startup_half_steps: usize,
}

impl NetworkGrid {
    pub fn new(dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0) || !(dt > 0.0) || !dx.is_finite() || !dt.is_finite() {
            return Err(Error::Config(format!("dx = {dx}, dt = {dt} must be positive")));
        }
        Ok(Self {
            dx,
            dt,
            theta: 0.5,
            startup_half_steps: RANNACHER_HALF_STEPS,
        })
    }

    /// `dx = ell_f / 2000` (at most a quarter of the shortest edge) and
    /// `dt = 1e-5 ell_f^2 / D`.
    pub fn default_for(net: &NetworkSpec) -> Self {
        let lf = net.path_length();
        let shortest = net.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
        let dx = (lf / 2000.0).min(0.25 * shortest);
        Self::new(dx, 1e-5 * lf * lf / net.diffusion).expect("default grid is valid")
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

/// Nodes of the discretised graph. Vertices own the union of the half
/// cells of their incident edges, so mass is the trapezoid sum per edge.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub volume: Vec<f64>,
    /// Neighbours with conductance `D / dx_e`.
    pub neighbours: Vec<Vec<(usize, f64)>>,
    pub vertex_node: Vec<usize>,
    /// Node sequence of each edge from `from` to `to`.
    pub edge_nodes: Vec<Vec<usize>>,
    pub edge_dx: Vec<f64>,
    /// Node sequence along the path and its path coordinates.
    pub path_nodes: Vec<usize>,
    pub path_x: Vec<f64>,
}

impl Mesh {
    pub fn new(net: &NetworkSpec, dx: f64) -> Self {
        let nv = net.ids.len();
        let mut volume = vec![0.0; nv];
        let mut neighbours = vec![Vec::new(); nv];
        let mut edge_nodes = Vec::with_capacity(net.edges.len());
        let mut edge_dx = Vec::with_capacity(net.edges.len());
        for e in &net.edges {
            let cells = ((e.length / dx).round() as usize).max(1);
            let h = e.length / cells as f64;
            let g = net.diffusion / h;
            let mut nodes = vec![e.from];
            for _ in 1..cells {
                nodes.push(volume.len());
                volume.push(h);
                neighbours.push(Vec::new());
            }
            nodes.push(e.to);
            volume[e.from] += 0.5 * h;
            volume[e.to] += 0.5 * h;
            for w in nodes.windows(2) {
                neighbours[w[0]].push((w[1], g));
                neighbours[w[1]].push((w[0], g));
            }
            edge_nodes.push(nodes);
            edge_dx.push(h);
        }
        let mut path_nodes = vec![net.path[0]];
        let mut path_x = vec![0.0];
        for &(k, forward) in &net.path_edges {
            let nodes = &edge_nodes[k];
            let h = edge_dx[k];
            let start = *path_x.last().unwrap();
            let seq: Vec<usize> = if forward {
                nodes.clone()
            } else {
                nodes.iter().rev().copied().collect()
            };
            let cells = seq.len() - 1;
            for (j, &node) in seq.iter().enumerate().skip(1) {
                path_nodes.push(node);
                path_x.push(if j == cells { start + net.edges[k].length } else { start + j as f64 * h });
            }
        }
        Self {
            volume,
            neighbours,
            vertex_node: (0..nv).collect(),
            edge_nodes,
            edge_dx,
            path_nodes,
            path_x,
        }
    }

    pub fn len(&self) -> usize {
        self.volume.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volume.is_empty()
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        self.volume.iter().zip(u).map(|(v, x)| v * x).sum()
    }

    /// Cell averages of the edge data plus the releases.
    pub fn project(&self, net: &NetworkSpec) -> Result<Vec<f64>> {
        let mut mass = vec![0.0; self.len()];
        let w = 0.5 * net.release_width;
        for (k, e) in net.edges.iter().enumerate() {
            let nodes = &self.edge_nodes[k];
            let h = self.edge_dx[k];
            let cells = nodes.len() - 1;
            let mut release = Vec::new();
            for (v, near_from) in [(e.from, true), (e.to, false)] {
                let m = net.releases[v];
                if m != 0.0 && w > 0.0 {
                    if w > e.length {
                        return Err(Error::Config(format!("release_width exceeds edge {k}")));
                    }
                    let rho = m / (net.degree(v) as f64 * w);
                    release.push(if near_from { (0.0, w, rho) } else { (e.length - w, e.length, rho) });
                }
            }
            for (j, &node) in nodes.iter().enumerate() {
                let x = if j == cells { e.length } else { j as f64 * h };
                let lo = (x - 0.5 * h).max(0.0);
                let hi = (x + 0.5 * h).min(e.length);
                let mut acc = if e.field.is_zero() { 0.0 } else { e.field.mass(lo, hi) };
                for &(a, b, rho) in &release {
                    acc += rho * (hi.min(b) - lo.max(a)).max(0.0);
                }
                mass[node] += acc;
            }
        }
        if w == 0.0 {
            for (v, &m) in net.releases.iter().enumerate() {
                mass[self.vertex_node[v]] += m;
            }
        }
        Ok(mass.iter().zip(&self.volume).map(|(m, v)| m / v).collect())
    }
}

/// Exact elimination of `V/dt + theta K` on a tree, leaves first.
#[derive(Clone, Debug)]
struct TreeFactor {
    /// Breadth-first order from the root.
    order: Vec<usize>,
    parent: Vec<usize>,
    /// Coupling to the parent.
    off: Vec<f64>,
    pivot: Vec<f64>,
}

impl TreeFactor {
    fn new(mesh: &Mesh, theta: f64, dt: f64) -> Self {
        let n = mesh.len();
        let root = 0;
        let mut parent = vec![usize::MAX; n];
        let mut off = vec![0.0; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        seen[root] = true;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            for &(j, g) in &mesh.neighbours[i] {
                if !seen[j] {
                    seen[j] = true;
                    parent[j] = i;
                    off[j] = -theta * g;
                    order.push(j);
                }
            }
        }
        let mut pivot: Vec<f64> = (0..n)
            .map(|i| mesh.volume[i] / dt + theta * mesh.neighbours[i].iter().map(|(_, g)| g).sum::<f64>())
            .collect();
        for &i in order.iter().skip(1).rev() {
            let p = parent[i];
            pivot[p] -= off[i] * off[i] / pivot[i];
        }
        Self { order, parent, off, pivot }
    }

    fn solve(&self, rhs: &mut [f64]) {
        for &i in self.order.iter().skip(1).rev() {
            let p = self.parent[i];
            rhs[p] -= self.off[i] * rhs[i] / self.pivot[i];
        }
        let root = self.order[0];
        rhs[root] /= self.pivot[root];
        for &i in self.order.iter().skip(1) {
            rhs[i] = (rhs[i] - self.off[i] * rhs[self.parent[i]]) / self.pivot[i];
        }
    }
}

/// Theta-scheme stepper on a mesh; the leaf fluxes enter as sources in the
/// vertex rows, which is the ghost-node treatment of the interval scheme.
#[derive(Clone, Debug)]
pub struct GraphStepper {
    mesh: Mesh,
    leaves: Vec<(usize, usize)>,
    main: (TreeFactor, f64, f64),
    startup: (TreeFactor, f64, f64),
    rhs: Vec<f64>,
    /// Largest relative residual of a junction row seen so far.
    pub max_junction_residual: f64,
    junctions: Vec<usize>,
}

impl GraphStepper {
    pub fn new(net: &NetworkSpec, mesh: Mesh, grid: &NetworkGrid) -> Self {
        let main = (TreeFactor::new(&mesh, grid.theta, grid.dt), grid.theta, grid.dt);
        let startup = (TreeFactor::new(&mesh, 1.0, 0.5 * grid.dt), 1.0, 0.5 * grid.dt);
        let leaves = (0..net.ids.len())
            .filter(|&v| !net.flux[v].is_zero())
            .map(|v| (v, mesh.vertex_node[v]))
            .collect();
        let junctions = (0..net.ids.len())
            .filter(|&v| net.degree(v) > 2)
            .map(|v| mesh.vertex_node[v])
            .collect();
        let n = mesh.len();
        Self {
            mesh,
            leaves,
            main,
            startup,
            rhs: vec![0.0; n],
            max_junction_residual: 0.0,
            junctions,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Advances by `dt` (or by `dt/2` with backward Euler when `half`);
    /// returns the total leaf inflow over the step.
    fn advance(&mut self, u: &mut [f64], t: f64, net: &NetworkSpec, half: bool) -> f64 {
        let (factor, theta, dt) = if half { &self.startup } else { &self.main };
        let (theta, dt) = (*theta, *dt);
        let e = 1.0 - theta;
        let m = &self.mesh;
        for i in 0..m.len() {
            let lap: f64 = m.neighbours[i].iter().map(|&(j, g)| g * (u[j] - u[i])).sum();
            self.rhs[i] = m.volume[i] / dt * u[i] + e * lap;
        }
        let tj = t + theta * dt;
        let mut inflow = 0.0;
        for &(v, node) in &self.leaves {
            let j = net.flux[v].value(tj);
            self.rhs[node] += j;
            inflow += dt * j;
        }
        let before: Vec<(usize, f64)> = self.junctions.iter().map(|&i| (i, self.rhs[i])).collect();
        factor.solve(&mut self.rhs);
        u.copy_from_slice(&self.rhs);
        for (i, b) in before {
            let lap: f64 = m.neighbours[i].iter().map(|&(j, g)| g * (u[j] - u[i])).sum();
            let lhs = m.volume[i] / dt * u[i] - theta * lap;
            let scale = b.abs().max((m.volume[i] / dt * u[i]).abs());
            if scale > 0.0 {
                self.max_junction_residual = self.max_junction_residual.max((lhs - b).abs() / scale);
            }
        }
        inflow
    }

    pub fn step(&mut self, u: &mut [f64], t: f64, net: &NetworkSpec) -> f64 {
        self.advance(u, t, net, false)
    }
}

/// Trace of a graph run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct NetworkTrace {
    /// Path front in path coordinates. `mass_left` and `mass_right` are
    /// NaN, `cum_j1` holds the total leaf inflow and `cum_j2` is zero.
    pub trace: MixingTrace,
    pub path_zero_count: Vec<usize>,
    pub off_path_zero_count: Vec<usize>,
    /// Largest relative residual of a junction row.
    pub max_junction_residual: f64,
    /// Largest per-step `|Δ mass - inflow|` relative to the mass scale.
    pub max_mass_drift: f64,
    /// Path coordinates of the source points.
    pub sources: Vec<f64>,
    /// State at the end of the run.
    pub profile: Vec<ProfilePoint>,
}

/// One node of the final state in edge-local and path coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub edge: usize,
    /// Distance from the edge's `from` vertex.
    pub local_x: f64,
    /// Path coordinate; NaN off the path.
    pub path_x: f64,
    pub value: f64,
}

pub fn run_network(net: &NetworkSpec, grid: &NetworkGrid, horizon: f64) -> Result<NetworkTrace> {
    run_network_with(net, grid, horizon, &RunOptions::default())
}

pub fn run_network_with(net: &NetworkSpec, grid: &NetworkGrid, horizon: f64, opts: &RunOptions) -> Result<NetworkTrace> {
    if opts.boundary != BoundaryMode::Flux {
        return Err(Error::Config("graph runs support flux leaves only".into()));
    }
    let mesh = Mesh::new(net, grid.dx);
    let mut u = mesh.project(net)?;
    let steps = (horizon / grid.dt).round() as usize;
    let record_every = if opts.record_every == 0 {
        (steps / 4000).max(1)
    } else {
        opts.record_every
    };
    let mut stepper = GraphStepper::new(net, mesh, grid);
    let mesh = stepper.mesh().clone();
    let pos = net.path_positions();
    let lf = *pos.last().unwrap();
    let first_dx = mesh.path_x[1] - mesh.path_x[0];
    let last_dx = lf - mesh.path_x[mesh.path_x.len() - 2];
    let path_edge: Vec<bool> = {
        let mut v = vec![false; net.edges.len()];
        for &(k, _) in &net.path_edges {
            v[k] = true;
        }
        v
    };
    // off-path edges with the path coordinate of their path end, if any
    let off_edges: Vec<(usize, f64)> = (0..net.edges.len())
        .filter(|&k| !path_edge[k])
        .map(|k| {
            let e = &net.edges[k];
            let anchor = [e.from, e.to]
                .iter()
                .find_map(|v| net.path.iter().position(|p| p == v))
                .map_or(f64::NAN, |i| pos[i]);
            (k, anchor)
        })
        .collect();
    let edge_x: Vec<Vec<f64>> = (0..net.edges.len())
        .map(|k| {
            let cells = mesh.edge_nodes[k].len() - 1;
            (0..=cells)
                .map(|j| if j == cells { net.edges[k].length } else { j as f64 * mesh.edge_dx[k] })
                .collect()
        })
        .collect();
    let mut path_u = vec![0.0; mesh.path_nodes.len()];
    let mut edge_u: Vec<Vec<f64>> = mesh.edge_nodes.iter().map(|n| vec![0.0; n.len()]).collect();
    let scan = |u: &[f64], path_u: &mut [f64], edge_u: &mut [Vec<f64>]| -> (Vec<Zero>, Vec<usize>) {
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (slot, &node) in path_u.iter_mut().zip(&mesh.path_nodes) {
            *slot = u[node];
        }
        let path_zeros = locate_zeros_scaled(path_u, &mesh.path_x, scale);
        let off: Vec<usize> = off_edges
            .iter()
            .map(|&(k, _)| {
                for (slot, &node) in edge_u[k].iter_mut().zip(&mesh.edge_nodes[k]) {
                    *slot = u[node];
                }
                locate_zeros_scaled(&edge_u[k], &edge_x[k], scale).len()
            })
            .collect();
        (path_zeros, off)
    };

    let mass_scale = mesh
        .volume
        .iter()
        .zip(&u)
        .map(|(v, x)| v * x.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let mut out = NetworkTrace {
        sources: net.source_positions(),
        ..Default::default()
    };
    let (zeros, mut off_counts) = scan(&u, &mut path_u, &mut edge_u);
    let mut tracker = FrontTracker::new(&zeros);
    let (n0, n1) = (mesh.path_nodes[0], *mesh.path_nodes.last().unwrap());
    let scale0 = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut watch0 = SignWatch::default();
    let mut watch1 = SignWatch::default();
    watch0.observe(u[n0], ZERO_FLOOR * scale0);
    watch1.observe(u[n1], ZERO_FLOOR * scale0);
    let mut at_boundary = false;
    let mut inflow = 0.0;
    let mut mass = mesh.mass(&u);

    let record = |out: &mut NetworkTrace, t: f64, u: &[f64], tr: &FrontTracker, off: &[usize], inflow: f64| {
        let trace = &mut out.trace;
        trace.times.push(t);
        let (m, fl, fr, f) = match tr.front {
            Some(z) => {
                let (fl, fr, f) = flux_of(&z, net.diffusion);
                (z.position, fl, fr, f)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        trace.m.push(m);
        trace.f_left.push(fl);
        trace.f_right.push(fr);
        trace.f.push(f);
        trace.cum_f.push(tr.cum_f);
        let off_total: usize = off.iter().sum();
        trace.zero_count.push(tr.zero_count + off_total);
        trace.mass_left.push(f64::NAN);
        trace.mass_right.push(f64::NAN);
        trace.mass_total.push(mesh.mass(u));
        trace.cum_j1.push(inflow);
        trace.cum_j2.push(0.0);
        out.path_zero_count.push(tr.zero_count);
        out.off_path_zero_count.push(off_total);
    };
    record(&mut out, 0.0, &u, &tracker, &off_counts, inflow);

    let mut t = 0.0;
    let startup_steps = grid.startup_half_steps / 2;
    for k in 1..=steps {
        let t_prev = t;
        let step_inflow = if k <= startup_steps {
            let a = stepper.advance(&mut u, t, net, true);
            let b = stepper.advance(&mut u, t + 0.5 * grid.dt, net, true);
            a + b
        } else {
            stepper.step(&mut u, t, net)
        };
        inflow += step_inflow;
        t = k as f64 * grid.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at t = {t}")));
        }
        let new_mass = mesh.mass(&u);
        out.max_mass_drift = out.max_mass_drift.max((new_mass - mass - step_inflow).abs() / mass_scale);
        mass = new_mass;
        let (zeros, offs) = scan(&u, &mut path_u, &mut edge_u);
        let before = tracker.zero_count + off_counts.iter().sum::<usize>();
        tracker.update(&zeros, net.diffusion, t - t_prev);
        let after = tracker.zero_count + offs.iter().sum::<usize>();
        if after != before {
            let branched = offs.iter().zip(&off_counts).position(|(a, b)| a > b);
            let position = match branched {
                Some(i) if after > before => off_edges[i].1,
                _ => tracker.front.map_or(f64::NAN, |z| z.position),
            };
            out.trace.events.push(Event {
                kind: if after > before { EventKind::FrontBranch } else { EventKind::FrontMerge },
                time: t,
                position,
            });
        }
        off_counts = offs;
        let near = zeros
            .iter()
            .find(|z| z.position <= first_dx || z.position >= lf - last_dx)
            .map(|z| z.position);
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = ZERO_FLOOR * scale;
        let flip0 = watch0.observe(u[n0], floor);
        let flip1 = watch1.observe(u[n1], floor);
        let hit = near.or(if flip0 {
            Some(0.0)
        } else if flip1 {
            Some(lf)
        } else {
            None
        });
        match hit {
            Some(x) if !at_boundary => {
                out.trace.events.push(Event {
                    kind: EventKind::BoundaryHit,
                    time: t,
                    position: x,
                });
                at_boundary = true;
            }
            None => at_boundary = false,
            _ => {}
        }
        for (flip, x) in [(flip0, 0.0), (flip1, lf)] {
            if flip {
                out.trace.events.push(Event {
                    kind: EventKind::SignChangeAtBoundary,
                    time: t,
                    position: x,
                });
            }
        }
        let stop = opts.stop_at_cum_f.is_some_and(|c| tracker.cum_f >= c);
        if k % record_every == 0 || k >= steps || stop {
            record(&mut out, t, &u, &tracker, &off_counts, inflow);
        }
        if stop {
            break;
        }
    }
    out.trace.max_flux_mismatch = tracker.max_mismatch;
    out.max_junction_residual = stepper.max_junction_residual;
    let path_offset: Vec<Option<(f64, bool)>> = {
        let mut v = vec![None; net.edges.len()];
        for (i, &(k, forward)) in net.path_edges.iter().enumerate() {
            v[k] = Some((if forward { pos[i] } else { pos[i + 1] }, forward));
        }
        v
    };
    for (k, nodes) in mesh.edge_nodes.iter().enumerate() {
        for (j, &node) in nodes.iter().enumerate() {
            let local_x = edge_x[k][j];
            let path_x = match path_offset[k] {
                Some((start, true)) => start + local_x,
                Some((start, false)) => start - local_x,
                None => f64::NAN,
            };
            out.profile.push(ProfilePoint {
                edge: k,
                local_x,
                path_x,
                value: u[node],
            });
        }
    }
    Ok(out)
}
