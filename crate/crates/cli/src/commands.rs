use crate::output::{num, Outputs};
use crate::{CliError, CliResult, Common, InvArgs, SGrid, SimArgs, TGrid};
use frontmix::analytic::{
    default_s_grid, evaluate_grid, generating_function, geometric_grid, homogeneity_check, CmVerdict, FrontSpec,
    GeneratingEval, LaplaceContext,
};
use frontmix::inversion::{invert as invert_transform, invert_cumulative, invert_flux, InversionMethod};
use frontmix::model::{build_problem, FluxSchedule, Piece, PiecewiseDensity, ProblemSpec};
use frontmix::network::{
    build_network, invert_network_flux, network_generating, source_interval, NetworkGrid, NetworkSpec, NetworkTrace,
};
use frontmix::simulator::{mass_audit, run_with, Event, EventKind, Grid, MixingTrace, RunOptions};
use num_complex::Complex64;
use serde_json::json;
use std::f64::consts::PI;

fn read_config(common: &Common) -> CliResult<Vec<u8>> {
    std::fs::read(&common.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", common.config.display())))
}

fn load_problem(common: &Common) -> CliResult<(Vec<u8>, ProblemSpec)> {
    let bytes = read_config(common)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let p = build_problem(&text)?;
    Ok((bytes, p))
}

fn s_grid(flags: &SGrid, unit: f64) -> CliResult<Vec<f64>> {
    let lo = flags.s_min.unwrap_or(1e-3 * unit);
    let hi = flags.s_max.unwrap_or(1e3 * unit);
    if !(lo > 0.0 && hi >= lo && flags.s_points >= 1) {
        return Err(CliError::Config(format!(
            "bad s grid: s_min = {lo}, s_max = {hi}, s_points = {}",
            flags.s_points
        )));
    }
    Ok(geometric_grid(lo, hi, flags.s_points))
}

fn problem_s_grid(flags: &SGrid, p: &ProblemSpec) -> CliResult<Vec<f64>> {
    if flags.s_min.is_none() && flags.s_max.is_none() && flags.s_points == 64 {
        return Ok(default_s_grid(p));
    }
    s_grid(flags, p.diffusion / (p.ell * p.ell))
}

fn t_grid(flags: &TGrid, horizon: f64) -> CliResult<Vec<f64>> {
    let hi = flags.t_max.unwrap_or(horizon);
    if !(flags.t_min > 0.0 && hi >= flags.t_min && flags.t_points >= 1) {
        return Err(CliError::Config(format!(
            "bad t grid: t_min = {}, t_max = {hi}, t_points = {}",
            flags.t_min, flags.t_points
        )));
    }
    Ok(geometric_grid(flags.t_min, hi, flags.t_points))
}

fn check_horizon(sim: &SimArgs) -> CliResult<()> {
    if sim.horizon > 0.0 && sim.horizon.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("horizon = {} must be positive", sim.horizon)))
    }
}

fn interval_grid(p: &ProblemSpec, sim: &SimArgs) -> CliResult<Grid> {
    check_horizon(sim)?;
    let dt = sim.dt.unwrap_or(1e-5 * p.ell * p.ell / p.diffusion);
    Ok(Grid::new(p, sim.nx, dt)?)
}

fn point_valid(e: &GeneratingEval, i: usize) -> bool {
    !e.point_flags[i].radicand_negative && e.point_flags[i].y_in_gap
}

fn criteria_hold(e: &GeneratingEval) -> bool {
    e.flags.mass_balanced && (0..e.s.len()).all(|i| point_valid(e, i))
}

fn cm_text(v: &CmVerdict) -> String {
    match v {
        CmVerdict::Pass => "pass".into(),
        CmVerdict::Inconclusive => "inconclusive".into(),
        CmVerdict::Fail { s, order, value } => format!("fail (order {order} at s = {s:e}, value {value:e})"),
    }
}

fn print_criteria(e: &GeneratingEval) {
    println!("a1 = {:e}  a2 = {:e}  a3 = {:e}", e.a1, e.a2, e.a3);
    println!("mass_residual = {:e}", e.mass_residual);
    if !e.flags.mass_balanced {
        println!("WARNING: a1 != 0, mass is not balanced; the front cannot persist");
    }
    println!("a3_negative = {}", e.flags.a3_negative);
    println!("y_in_gap (all s) = {}", e.flags.y_in_gap);
    println!("cm_probe f = {}", cm_text(&e.cm_f));
    println!("cm_probe c(0) = {}", cm_text(&e.cm_left_boundary));
    println!("cm_probe -c(ell) = {}", cm_text(&e.cm_right_boundary));
}

fn bool_cell(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

fn event_rows(events: &[Event]) -> Vec<Vec<String>> {
    events
        .iter()
        .map(|e| {
            let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from));
            vec![kind.unwrap_or_default(), num(e.time), num(e.position)]
        })
        .collect()
}

fn trace_rows(tr: &MixingTrace) -> Vec<Vec<String>> {
    (0..tr.len())
        .map(|i| {
            vec![
                num(tr.times[i]),
                num(tr.m[i]),
                num(tr.f_left[i]),
                num(tr.f_right[i]),
                num(tr.f[i]),
                num(tr.cum_f[i]),
                tr.zero_count[i].to_string(),
                num(tr.mass_left[i]),
                num(tr.mass_right[i]),
            ]
        })
        .collect()
}

const TRACE_HEADER: [&str; 9] = [
    "t",
    "M",
    "F_left",
    "F_right",
    "F",
    "cumF",
    "zero_count",
    "mass_left",
    "mass_right",
];
const EVENT_HEADER: [&str; 3] = ["kind", "t", "position"];

pub fn analytic(common: &Common, s: &SGrid) -> CliResult<()> {
    let (bytes, p) = load_problem(common)?;
    let grid = problem_s_grid(s, &p)?;
    let e = evaluate_grid(&p, &grid)?;
    let mut out = Outputs::new(&common.out, "analytic", &bytes, json!({ "common": common, "s": s }))?;
    let rows: Vec<Vec<String>> = (0..e.s.len())
        .map(|i| {
            vec![
                num(e.s[i]),
                num(e.f[i]),
                num(e.y[i]),
                num(e.radicand[i]),
                bool_cell(e.point_flags[i].radicand_negative),
                bool_cell(e.point_flags[i].y_in_gap),
            ]
        })
        .collect();
    out.csv(
        "analytic.csv",
        &["s", "f", "y", "radicand", "radicand_negative", "y_in_gap"],
        &rows,
    )?;
    out.finish()?;
    print_criteria(&e);
    let valid = (0..e.s.len()).filter(|&i| point_valid(&e, i)).count();
    println!("valid abscissae = {valid}/{}", e.s.len());
    if valid == 0 {
        return Err(CliError::Criteria("no abscissa has a real f(s) with y(s) in the gap".into()));
    }
    Ok(())
}

pub fn invert(common: &Common, t: &TGrid, inv: &InvArgs) -> CliResult<()> {
    let (bytes, p) = load_problem(common)?;
    let method = inv.method()?;
    let ts = t_grid(t, 1.0)?;
    let flux = invert_flux(&p, &ts, method)?;
    let cum = invert_cumulative(&p, &ts, method)?;
    let mut out = Outputs::new(&common.out, "invert", &bytes, json!({ "common": common, "t": t, "inv": inv }))?;
    let rows: Vec<Vec<String>> = (0..ts.len())
        .map(|i| {
            vec![
                num(ts[i]),
                num(flux[i]),
                num(cum[i]),
                method.name().into(),
                method.terms().to_string(),
            ]
        })
        .collect();
    out.csv("invert.csv", &["t", "F", "cumF", "method", "terms"], &rows)?;
    out.finish()?;
    println!("method = {} terms = {}", method.name(), method.terms());
    Ok(())
}

pub fn simulate(common: &Common, sim: &SimArgs) -> CliResult<()> {
    let (bytes, p) = load_problem(common)?;
    let grid = interval_grid(&p, sim)?;
    let tr = run_with(&p, &grid, sim.horizon, &RunOptions::default())?;
    let mut out = Outputs::new(&common.out, "simulate", &bytes, json!({ "common": common, "sim": sim }))?;
    out.csv("trace.csv", &TRACE_HEADER, &trace_rows(&tr))?;
    out.csv("events.csv", &EVENT_HEADER, &event_rows(&tr.events))?;
    out.finish()?;
    println!("nx = {} dx = {:e} dt = {:e}", grid.nx, grid.dx, grid.dt);
    println!("cumF(horizon) = {:e}", tr.cum_f.last().copied().unwrap_or(f64::NAN));
    println!("events = {}", tr.events.len());
    match mass_audit(&tr, &p) {
        Ok(a) => {
            println!(
                "mass audit to t = {}: left residual {:e}, right residual {:e} (scale {:e})",
                a.t_end, a.left_residual, a.right_residual, a.mass_scale
            );
            println!(
                "closure: |J2| + v m_B - |F| = {:e}, |J1| + m_A - |F| = {:e}",
                a.closure_right, a.closure_left
            );
        }
        Err(e) => println!("mass audit unavailable: {e}"),
    }
    Ok(())
}

fn first_violation(events: &[Event]) -> Option<&Event> {
    events
        .iter()
        .find(|e| matches!(e.kind, EventKind::BoundaryHit | EventKind::FrontBranch))
}

pub fn validate(common: &Common, s: &SGrid, sim: &SimArgs, t: &TGrid, inv: &InvArgs, tol: f64) -> CliResult<()> {
    let (bytes, p) = load_problem(common)?;
    let method = inv.method()?;
    let grid = problem_s_grid(s, &p)?;
    let e = evaluate_grid(&p, &grid)?;
    print_criteria(&e);
    let ts = t_grid(t, sim.horizon)?;
    let mesh = interval_grid(&p, sim)?;
    let tr = run_with(&p, &mesh, sim.horizon, &RunOptions::default())?;
    let mut out = Outputs::new(
        &common.out,
        "validate",
        &bytes,
        json!({ "common": common, "s": s, "sim": sim, "t": t, "inv": inv, "tol": tol }),
    )?;
    out.csv("events.csv", &EVENT_HEADER, &event_rows(&tr.events))?;
    if let Some(ev) = first_violation(&tr.events) {
        out.finish()?;
        println!("t_c = {}", ev.time);
        let kind = serde_json::to_value(ev.kind).ok().and_then(|v| v.as_str().map(String::from));
        return Err(CliError::Runtime(format!(
            "{} at t = {} (x = {})",
            kind.unwrap_or_default(),
            ev.time,
            ev.position
        )));
    }
    if !criteria_hold(&e) {
        out.finish()?;
        return Err(CliError::Criteria(
            "the s-grid criteria fail (mass balance, real f(s) or y(s) in the gap)".into(),
        ));
    }
    let cum_inv = invert_cumulative(&p, &ts, method)?;
    let mut max_rel = 0.0f64;
    let rows: Vec<Vec<String>> = ts
        .iter()
        .zip(&cum_inv)
        .map(|(&ti, &ci)| {
            let cs = tr.cum_f_at(ti);
            let rel = (cs - ci).abs() / ci.abs().max(f64::MIN_POSITIVE);
            max_rel = max_rel.max(rel);
            vec![num(ti), num(cs), num(ci), num(rel)]
        })
        .collect();
    out.csv("validate.csv", &["t", "cumF_sim", "cumF_inv", "rel_err"], &rows)?;
    out.finish()?;
    println!("max_rel_err = {max_rel:e}");
    if max_rel <= tol {
        Ok(())
    } else {
        Err(CliError::Criteria(format!("max_rel_err = {max_rel:e} exceeds tol = {tol:e}")))
    }
}

pub fn multifront(common: &Common, simulate: bool, sim: &SimArgs) -> CliResult<()> {
    let (bytes, p) = load_problem(common)?;
    let fronts = FrontSpec::fronts(&p);
    let mut rows = Vec::new();
    println!("front  alpha  beta  R+  R-  ell  R++R-  a1  verdict");
    for (i, front) in fronts.iter().enumerate() {
        let h = homogeneity_check(front, &p)?;
        let sum = h.radii.r_plus + h.radii.r_minus;
        let verdict = serde_json::to_value(h.verdict).ok().and_then(|v| v.as_str().map(String::from));
        let verdict = verdict.unwrap_or_default();
        println!(
            "{i}  {}  {}  {:.6e}  {:.6e}  {}  {:.6e}  {:.3e}  {}",
            front.alpha(),
            front.beta(),
            h.radii.r_plus,
            h.radii.r_minus,
            p.ell,
            sum,
            h.coefficients.a1,
            verdict
        );
        rows.push(vec![
            i.to_string(),
            num(front.alpha()),
            num(front.beta()),
            num(h.radii.r_plus),
            num(h.radii.r_minus),
            num(p.ell),
            num(sum),
            num(h.coefficients.a1),
            num(h.coefficients.a3),
            bool_cell(h.radii.imaginary),
            verdict,
        ]);
    }
    let mut out = Outputs::new(
        &common.out,
        "multifront",
        &bytes,
        json!({ "common": common, "simulate": simulate, "sim": sim }),
    )?;
    out.csv(
        "multifront.csv",
        &[
            "front",
            "alpha",
            "beta",
            "r_plus",
            "r_minus",
            "ell",
            "radii_sum",
            "a1",
            "a3",
            "imaginary",
            "verdict",
        ],
        &rows,
    )?;
    if simulate {
        let grid = interval_grid(&p, sim)?;
        let tr = run_with(&p, &grid, sim.horizon, &RunOptions::default())?;
        out.csv("trace.csv", &TRACE_HEADER, &trace_rows(&tr))?;
        out.csv("events.csv", &EVENT_HEADER, &event_rows(&tr.events))?;
        let z0 = tr.zero_count.first().copied().unwrap_or(0);
        let z1 = tr.zero_count.last().copied().unwrap_or(0);
        let merges: Vec<&Event> = tr.events.iter().filter(|e| e.kind == EventKind::FrontMerge).collect();
        println!("zeros at t = 0: {z0}, at t = {}: {z1}", sim.horizon);
        println!("fronts lost = {}", z0.saturating_sub(z1));
        for m in merges {
            println!("front_merge at t = {} (x = {})", m.time, m.position);
        }
    }
    out.finish()?;
    Ok(())
}

fn load_network(common: &Common) -> CliResult<(Vec<u8>, NetworkSpec)> {
    let bytes = read_config(common)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let net = build_network(&text)?;
    Ok((bytes, net))
}

fn network_grid(net: &NetworkSpec, sim: &SimArgs) -> CliResult<NetworkGrid> {
    check_horizon(sim)?;
    if sim.nx < 3 {
        return Err(CliError::Config(format!("nx = {} is too small", sim.nx)));
    }
    let lf = net.path_length();
    let shortest = net.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
    let dx = (lf / (sim.nx - 1) as f64).min(0.25 * shortest);
    let dt = sim.dt.unwrap_or(1e-5 * lf * lf / net.diffusion);
    Ok(NetworkGrid::new(dx, dt)?)
}

/// Source interval holding the last tracked path front.
fn settled_interval(run: &NetworkTrace) -> Option<usize> {
    let m = run.trace.m.iter().rev().find(|m| !m.is_nan())?;
    let src = &run.sources;
    (0..src.len().saturating_sub(1)).find(|&i| *m >= src[i] && *m <= src[i + 1])
}

pub fn network(
    common: &Common,
    s: &SGrid,
    sim: &SimArgs,
    t: &TGrid,
    inv: &InvArgs,
    interval: Option<usize>,
) -> CliResult<()> {
    let (bytes, net) = load_network(common)?;
    let method = inv.method()?;
    let grid = network_grid(&net, sim)?;
    let lf = net.path_length();
    let ss = s_grid(s, net.diffusion / (lf * lf))?;
    let ts = t_grid(t, sim.horizon)?;
    let run = frontmix::network::run_network(&net, &grid, sim.horizon)?;
    let i = match interval.or_else(|| settled_interval(&run)) {
        Some(i) => i,
        None => return Err(CliError::Runtime("no front on the path at the horizon".into())),
    };
    let (x_lo, x_hi) = source_interval(&net, i)?;

    let mut out = Outputs::new(
        &common.out,
        "network",
        &bytes,
        json!({ "common": common, "s": s, "sim": sim, "t": t, "inv": inv, "interval": i }),
    )?;
    let f_rows: Vec<Vec<String>> = ss
        .iter()
        .map(|&sv| match network_generating(&net, i, sv) {
            Ok(g) => vec![
                num(sv),
                num(g.f),
                num(g.f_printed),
                num(g.radicand),
                num(g.y),
                num(g.p_left),
                num(g.p_right),
            ],
            Err(_) => {
                let mut row = vec![num(sv)];
                row.extend(std::iter::repeat(num(f64::NAN)).take(6));
                row
            }
        })
        .collect();
    out.csv(
        "network_f.csv",
        &["s", "f", "f_printed", "radicand", "y", "p_left", "p_right"],
        &f_rows,
    )?;

    let tr = &run.trace;
    let trace_rows: Vec<Vec<String>> = (0..tr.len())
        .map(|k| {
            vec![
                num(tr.times[k]),
                num(tr.m[k]),
                num(tr.f_left[k]),
                num(tr.f_right[k]),
                num(tr.f[k]),
                num(tr.cum_f[k]),
                run.path_zero_count[k].to_string(),
                run.off_path_zero_count[k].to_string(),
                num(tr.mass_total[k]),
                num(tr.cum_j1[k]),
            ]
        })
        .collect();
    out.csv(
        "network_trace.csv",
        &[
            "t",
            "M",
            "F_left",
            "F_right",
            "F",
            "cumF",
            "path_zero_count",
            "off_path_zero_count",
            "mass_total",
            "cum_inflow",
        ],
        &trace_rows,
    )?;
    out.csv("network_events.csv", &EVENT_HEADER, &event_rows(&tr.events))?;
    let profile_rows: Vec<Vec<String>> = run
        .profile
        .iter()
        .map(|pt| {
            let e = &net.edges[pt.edge];
            vec![
                pt.edge.to_string(),
                net.ids[e.from].clone(),
                net.ids[e.to].clone(),
                num(pt.local_x),
                num(pt.path_x),
                num(pt.value),
            ]
        })
        .collect();
    out.csv(
        "network_profile.csv",
        &["edge", "from", "to", "local_x", "path_x", "C"],
        &profile_rows,
    )?;

    let f_inv = invert_network_flux(&net, i, &ts, method);
    let ratio_rows: Vec<Vec<String>> = match &f_inv {
        Ok(fi) => ts
            .iter()
            .zip(fi)
            .map(|(&tv, &fv)| {
                let fs = tr.f_at(tv);
                vec![num(tv), num(fs), num(fv), num(fs / fv)]
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    out.csv("network_ratio.csv", &["t", "F_sim", "F_inv", "ratio"], &ratio_rows)?;
    out.finish()?;

    let branches = tr.events.iter().filter(|e| e.kind == EventKind::FrontBranch).count();
    println!("interval = {i} ({x_lo}, {x_hi})");
    println!(
        "M(horizon) = {}",
        tr.m.iter().rev().find(|m| !m.is_nan()).copied().unwrap_or(f64::NAN)
    );
    println!("front_branch events = {branches}");
    for ev in tr.events.iter().filter(|e| e.kind == EventKind::FrontBranch) {
        println!("front_branch at t = {} (path x = {})", ev.time, ev.position);
    }
    println!("max junction residual = {:e}", run.max_junction_residual);
    println!("max mass drift = {:e}", run.max_mass_drift);
    if let Err(e) = f_inv {
        println!("ratio curve unavailable: {e}");
    }
    Ok(())
}

fn cosine_problem() -> frontmix::Result<ProblemSpec> {
    let a = PiecewiseDensity::new(vec![Piece::sinusoid(0.0, 0.5, 1.0, PI, 0.5 * PI)])?;
    let b = PiecewiseDensity::new(vec![Piece::sinusoid(0.5, 1.0, 1.0, PI, -0.5 * PI)])?;
    ProblemSpec::single(1.0, 1.0, a, b, 1.0, FluxSchedule::zero(), FluxSchedule::zero(), true)
}

fn check(name: &str, err: f64, tol: f64) -> bool {
    let ok = err <= tol;
    println!("{} {name}: error {err:.3e} (tol {tol:.0e})", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn selftest() -> CliResult<()> {
    let p = cosine_problem()?;
    let mut ok = true;

    let mut worst = 0.0f64;
    for s in [1e-3, 0.1, 1.0, 10.0, 1e3] {
        let ctx = LaplaceContext::for_problem(&p, s)?;
        let f = generating_function(&p, &ctx)?.f;
        let exact = PI / (s + PI * PI);
        worst = worst.max((f - exact).abs() / exact);
    }
    ok &= check("eigenmode f(s) = pi/(s+pi^2)", worst, 1e-10);

    let exact = |t: f64| (1.0 - (-PI * PI * t).exp()) / PI;
    for method in [InversionMethod::default(), InversionMethod::euler(frontmix::inversion::DEFAULT_EULER_M)] {
        let t = 0.5;
        let cum = invert_cumulative(&p, &[t], method)?[0];
        ok &= check(
            &format!("eigenmode cumulative flux at t = 0.5 ({})", method.name()),
            (cum - exact(t)).abs(),
            2e-5,
        );
    }

    let ft = invert_transform(|s: Complex64| Ok(1.0 / (s + 1.0)), 1.0, InversionMethod::default())?;
    ok &= check("exp(-t) at t = 1 (stehfest)", (ft - (-1.0f64).exp()).abs(), 1e-5);

    let grid = Grid::new(&p, 1001, 1e-5)?;
    let tr = run_with(&p, &grid, 0.5, &RunOptions::default())?;
    ok &= check(
        "simulated eigenmode cumulative flux at t = 0.5",
        (tr.cum_f_at(0.5) - exact(0.5)).abs() / exact(0.5),
        1e-4,
    );

    if ok {
        Ok(())
    } else {
        Err(CliError::Criteria("selftest failed".into()))
    }
}
