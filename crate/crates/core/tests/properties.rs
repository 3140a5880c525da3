use frontmix::analytic::{
    eval_c, locus_with, mixing_locus, radicand_with, small_s_coefficients,
    BoundaryTransforms,
    FrontSpec, LaplaceContext,
};
use frontmix::model::{mass_balance_residual, FluxSchedule, PiecewiseDensity, ProblemSpec};
use frontmix::simulator::{BoundaryMode, Grid, Stepper};
use proptest::prelude::*;

/// Two constant blocks A | B on `(0, ell)` with a gap between them.
#[derive(Clone, Debug)]
struct Layout {
    ell: f64,
    diffusion: f64,
    v: f64,
    a: [f64; 2],
    b: [f64; 2],
    mass_a: f64,
    mass_b: f64,
}

fn layout() -> impl Strategy<Value = Layout> {
    (
        0.5f64..3.0,
        0.2f64..3.0,
        0.2f64..=1.0,
        prop::array::uniform4(0.05f64..1.0),
        0.2f64..5.0,
        0.2f64..5.0,
    )
        .prop_map(|(ell, diffusion, v, cuts, mass_a, mass_b)| {
            // four increasing cut points in (0.02 ell, 0.98 ell), at least 0.02 ell apart
            let total: f64 = cuts.iter().sum::<f64>() + 1.0;
            let mut x = 0.02;
            let mut pts = [0.0; 4];
            for (k, c) in cuts.iter().enumerate() {
                x += 0.9 * c / total + 0.02;
                pts[k] = x.min(0.98) * ell;
            }
            Layout {
                ell,
                diffusion,
                v,
                a: [pts[0], pts[1]],
                b: [pts[2], pts[3]],
                mass_a,
                mass_b,
            }
        })
}

impl Layout {
    fn problem(&self, j1: FluxSchedule, j2: FluxSchedule) -> ProblemSpec {
        ProblemSpec::single(
            self.ell,
            self.diffusion,
            PiecewiseDensity::block(self.a[0], self.a[1], self.mass_a).unwrap(),
            PiecewiseDensity::block(self.b[0], self.b[1], self.mass_b).unwrap(),
            self.v,
            j1,
            j2,
            false,
        )
        .unwrap()
    }

    fn balanced(&self) -> ProblemSpec {
        self.problem(FluxSchedule::zero(), FluxSchedule::zero())
            .balanced_by_rho_b()
            .unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_vanishes_in_the_gap_exactly_at_the_locus(l in layout(), s_scale in -2.0f64..2.0) {
        let p = l.balanced();
        let s = 10f64.powf(s_scale) * p.diffusion / (p.ell * p.ell);
        let ctx = LaplaceContext::for_problem(&p, s).unwrap();
        let (lo, hi) = p.gap();
        let raw = locus_with(&FrontSpec::single(&p), &ctx, BoundaryTransforms::of(&p, &ctx)).unwrap();
        prop_assert!(raw.im.abs() <= 1e-12 * p.ell);
        if !(lo..=hi).contains(&raw.re) {
            // no zero in the gap: c keeps one sign across it
            prop_assert!(mixing_locus(&p, &ctx).is_err());
            let c_lo = eval_c(&p, lo, &ctx).unwrap();
            let c_hi = eval_c(&p, hi, &ctx).unwrap();
            prop_assert!(c_lo * c_hi > 0.0, "{c_lo:e} {c_hi:e}");
            return Ok(());
        }
        let y = mixing_locus(&p, &ctx).unwrap();
        prop_assert!((y - raw.re).abs() <= 1e-12 * p.ell);
        let scale = (0..=200)
            .map(|k| eval_c(&p, (p.ell * k as f64 / 200.0).min(p.ell), &ctx).unwrap().abs())
            .fold(0.0f64, f64::max);
        let at_y = eval_c(&p, y, &ctx).unwrap().abs();
        prop_assert!(at_y <= 1e-8 * scale, "|c(y)| = {at_y:e}, scale {scale:e}");
    }

    #[test]
    fn each_step_changes_mass_by_the_boundary_inflow(
        l in layout(),
        amp1 in -5.0f64..5.0,
        amp2 in -5.0f64..5.0,
        rate in 0.5f64..20.0,
    ) {
        let j1 = FluxSchedule::exponential(amp1, rate).unwrap();
        let j2 = FluxSchedule::exponential(amp2, rate).unwrap();
        let p = l.problem(j1, j2);
        let grid = Grid::new(&p, 301, 1e-4 * p.ell * p.ell / p.diffusion).unwrap();
        let mut u = grid.project(p.initial_field());
        let mut stepper = Stepper::new(grid, BoundaryMode::Flux);
        let norm: f64 = u.iter().map(|x| x.abs()).sum::<f64>() * grid.dx;
        let mut t = 0.0;
        for _ in 0..50 {
            let before = grid.mass(&u);
            stepper.step(&mut u, t, &p);
            let tj = t + grid.theta * grid.dt;
            let inflow = grid.dt * (p.j1.value(tj) + p.j2.value(tj));
            let change = grid.mass(&u) - before;
            prop_assert!((change - inflow).abs() <= 1e-12 * norm.max(1.0), "{change:e} vs {inflow:e}");
            t += grid.dt;
        }
    }

    #[test]
    fn reflection_negates_residual_and_keeps_f_squared(l in layout(), amp in -2.0f64..2.0, rate in 0.5f64..10.0) {
        let p = l.problem(FluxSchedule::zero(), FluxSchedule::exponential(amp, rate).unwrap());
        let r = p.reflected().unwrap();
        let res = mass_balance_residual(&p);
        let scale = p.mass_a() + p.v * p.mass_b() + amp.abs() / rate;
        prop_assert!((mass_balance_residual(&r) + res).abs() <= 1e-12 * scale);

        let pb = p.balanced_by_rho_b().unwrap();
        let rb = pb.reflected().unwrap();
        for s in [0.1, 1.0, 10.0] {
            let s = s * pb.diffusion / (pb.ell * pb.ell);
            let f2 = |q: &ProblemSpec| {
                let ctx = LaplaceContext::for_problem(q, s).unwrap();
                radicand_with(&FrontSpec::single(q), &ctx, BoundaryTransforms::of(q, &ctx)).unwrap().re
            };
            let (f, g) = (f2(&pb), f2(&rb));
            prop_assert!((f - g).abs() <= 1e-9 * f.abs(), "s = {s}: {f} vs {g}");
        }
    }

    #[test]
    fn a1_vanishes_exactly_when_mass_balances(l in layout(), factor in 0.5f64..1.5) {
        let balanced = l.balanced();
        let scale = (balanced.mass_a() / balanced.ell).powi(2) * balanced.diffusion;
        let a1 = small_s_coefficients(&FrontSpec::single(&balanced), &balanced).a1;
        prop_assert!(a1.abs() <= 1e-10 * scale, "balanced a1 = {a1:e}");

        prop_assume!((factor - 1.0).abs() > 0.01);
        let mut off = balanced.clone();
        off.rho_b = balanced.rho_b.scaled(factor);
        let off = ProblemSpec::single(
            off.ell,
            off.diffusion,
            off.rho_a,
            off.rho_b,
            off.v,
            FluxSchedule::zero(),
            FluxSchedule::zero(),
            false,
        )
        .unwrap();
        prop_assert!(mass_balance_residual(&off).abs() > 0.0);
        let a1 = small_s_coefficients(&FrontSpec::single(&off), &off).a1;
        prop_assert!(a1.abs() > 1e-6 * scale, "unbalanced a1 = {a1:e}");
    }
}
