//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::time::{Duration, Instant};

use oxytaxis::config::{KappaEdges, ModeKind, Preset, RunConfig};
use oxytaxis::driver::{Simulation, StepMeta, TimeSeries};
use oxytaxis::energy::check_energy_inequality;
use oxytaxis::fluid::{build_stokes_basis, leray_project, save_basis, stokes_dimension};
use oxytaxis::synth::robin_compatible_field;
use oxytaxis::verify::{entropy_identity_convergence, operator_convergence, EntropyStudy, DEFAULT_RESOLUTIONS};
use oxytaxis::{build_grid, DomainSpec, VectorField};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

/// Steps of every run, for the positivity criterion.
#[derive(Default)]
struct Observed {
    runs: usize,
    steps: usize,
    n_min: f64,
    c_min: f64,
}

impl Observed {
    fn absorb(&mut self, steps: &[StepMeta]) {
        if self.runs == 0 {
            self.n_min = f64::INFINITY;
            self.c_min = f64::INFINITY;
        }
        self.runs += 1;
        self.steps += steps.len();
        for s in steps {
            self.n_min = self.n_min.min(s.n_min);
            self.c_min = self.c_min.min(s.c_min);
        }
    }
}

fn run(cfg: RunConfig, seen: &mut Observed) -> Result<TimeSeries, Box<dyn std::error::Error>> {
    let mut sim = Simulation::new(cfg)?;
    sim.run(|_, _| Ok(()))?;
    let ts = sim.into_series();
    seen.absorb(&ts.steps);
    Ok(ts)
}

fn mass_conservation(seen: &mut Observed) -> Outcome {
    let cfg = RunConfig {
        nx: 64,
        t_final: 5.0,
        epsilon: 0.0,
        ..RunConfig::named("aerotaxis_drop")?
    };
    let ts = run(cfg, seen)?;
    let m0 = ts.reports[0].mass_n;
    let drift = ts.reports.iter().map(|r| (r.mass_n - m0).abs()).fold(0.0, f64::max);
    Ok((
        drift < 1e-10,
        format!("max |mass - mass0| = {drift:.3e} over {} reports", ts.reports.len()),
    ))
}

fn mass_bound(seen: &mut Observed) -> Outcome {
    let cfg = RunConfig {
        preset: Preset::Uniform,
        nx: 64,
        n0: 3.0,
        c0: 1.0,
        epsilon: 0.1,
        t_final: 20.0,
        report_every: 0.1,
        ..RunConfig::default()
    };
    let ts = run(cfg, seen)?;
    let area = 1.0;
    let bound = ts.initial_mass + 4.0 * 6f64.sqrt() / 9.0 * area + 1e-8;
    let worst = ts.reports.iter().map(|r| r.mass_n).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        worst <= bound,
        format!(
            "max mass {worst:.6} <= {bound:.6}, final {:.6}",
            ts.reports.last().unwrap().mass_n
        ),
    ))
}

fn maximum_principle(seen: &mut Observed) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["equilibrium", "aerotaxis_drop", "uniform"] {
        let ts = run(RunConfig::named(name)?, seen)?;
        let worst = ts
            .steps
            .iter()
            .map(|s| s.c_max - ts.c_bound)
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= worst <= 1e-10;
        detail.push(format!("{name} {worst:.1e}"));
    }

    // empty domain filling with oxygen through the boundary
    let cfg = RunConfig {
        preset: Preset::Uniform,
        n0: 0.0,
        c0: 0.0,
        kappa: 1.0,
        kappa_edges: KappaEdges::All,
        gamma: 1.0,
        t_final: 5.0,
        ..RunConfig::default()
    };
    let ts = run(cfg, seen)?;
    let c: Vec<f64> = ts.steps.iter().map(|s| s.c_max).collect();
    let monotone = c.windows(2).all(|w| w[1] > w[0]) && c[0] > 0.0;
    let below = c.iter().all(|&v| v <= 1.0 + 1e-10);
    let last = *c.last().unwrap();
    ok &= monotone && below && last > 0.99;
    detail.push(format!("filling: monotone {monotone}, c_max(T) = {last:.6}"));
    Ok((ok, detail.join("; ")))
}

fn bernstein() -> Outcome {
    let grid = build_grid(&DomainSpec::unit_square(128))?;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let f = robin_compatible_field(&grid, seed)?;
        let r = oxytaxis::energy::check_bernstein(&grid, &f.bdata, &f.c)?;
        if r.lhs > r.rhs * 1.05 + 1e-12 {
            violations += 1;
        }
        worst = worst.max(r.lhs / r.rhs);
    }
    Ok((
        violations == 0,
        format!("{violations} violations in 200 fields, max lhs/rhs = {worst:.4}"),
    ))
}

fn unforced_decay(seen: &mut Observed) -> Outcome {
    let cfg = RunConfig::named("stokes_decay")?;
    let sim = Simulation::new(cfg.clone())?;
    let e0 = sim.state().u.norm_sq(sim.grid());
    let ts = run(cfg, seen)?;
    let mut energy = vec![e0];
    energy.extend(ts.steps.iter().map(|s| s.u_norm_sq));
    let increases = energy.windows(2).filter(|w| w[1] > w[0]).count();
    let div = ts.steps.iter().map(|s| s.max_div).fold(0.0, f64::max);
    Ok((
        ts.steps.len() == 500 && e0 > 0.0 && increases == 0 && div <= 1e-10,
        format!(
            "{} steps, |u|^2 {e0:.4e} -> {:.4e}, {increases} increases, max div {div:.2e}",
            ts.steps.len(),
            energy.last().unwrap()
        ),
    ))
}

fn galerkin_consistency(seen: &mut Observed) -> Outcome {
    // Both modes are first order in dt and differ by O(dt); low viscosity
    // keeps the flow alive until T.
    let base = RunConfig {
        nx: 32,
        t_final: 0.5,
        dt: 1e-3,
        mu: 0.01,
        u0_amplitude: 1.0,
        report_every: 0.5,
        ..RunConfig::named("aerotaxis_drop")?
    };
    let grid = build_grid(&base.domain_spec())?;
    let m = stokes_dimension(&grid);
    let basis = build_stokes_basis(&grid, m)?;
    let dir = tempfile::tempdir()?;
    let cache = dir.path().join("basis.bin");
    save_basis(&basis, &cache)?;

    let f = VectorField::from_fn_interior(&grid, |x, y| ((3.0 * y).sin() + x * x, (2.0 * x).cos() * y));
    let pf = leray_project(&grid, &basis, &f, m)?;
    let mut ppf = leray_project(&grid, &basis, &pf, m)?;
    ppf.axpy(-1.0, &pf);
    let idem = (ppf.norm_sq(&grid) / pf.norm_sq(&grid)).sqrt();

    let mut proj = Simulation::new(base.clone())?;
    proj.run(|_, _| Ok(()))?;
    let mut gal = Simulation::new(RunConfig {
        mode: ModeKind::Galerkin,
        basis_cache: Some(cache),
        ..base
    })?;
    gal.run(|_, _| Ok(()))?;
    let up = proj.state().u.clone();
    let mut diff = gal.state().u.clone();
    diff.axpy(-1.0, &up);
    let rel = (diff.norm_sq(&grid) / up.norm_sq(&grid)).sqrt();
    seen.absorb(&proj.series().steps);
    seen.absorb(&gal.series().steps);
    Ok((
        rel <= 1e-3 && idem <= 1e-12,
        format!("{m} modes, relative L2 difference {rel:.3e}, idempotence {idem:.2e}"),
    ))
}

fn entropy_identity() -> Outcome {
    let s = entropy_identity_convergence(&EntropyStudy::default())?;
    Ok((
        s.min_order() >= 0.9,
        format!(
            "residuals {:.2e} {:.2e} {:.2e}, orders {:.3?}",
            s.errors[0], s.errors[1], s.errors[2], s.orders
        ),
    ))
}

fn energy_fit(seen: &mut Observed) -> Outcome {
    let cfg = RunConfig {
        nx: 64,
        t_final: 50.0,
        epsilon: 0.0,
        report_every: 0.5,
        ..RunConfig::named("aerotaxis_drop")?
    };
    let ts = run(cfg, seen)?;
    let fit = check_energy_inequality(&ts.reports, (25.0, 50.0))?;
    let f_scale = ts.reports.iter().map(|r| r.F.abs()).fold(1.0, f64::max);
    let finite = fit.p.is_finite() && fit.q.is_finite();
    let no_violation = fit.max_violation <= 1e-6 * f_scale;
    let bounded = fit.x_sup <= (1.05 * fit.x_initial).max(fit.x_ceiling);
    let flat = fit.x_late_slope <= 0.0;
    Ok((
        finite && no_violation && bounded && flat,
        format!(
            "p = {}, q = {:.3e}, violation {:.1e}; sup X = {:.6} vs X0 = {:.6}, C* = {:.6}; slope on [25,50] = {:.2e}",
            fit.p, fit.q, fit.max_violation, fit.x_sup, fit.x_initial, fit.x_ceiling, fit.x_late_slope
        ),
    ))
}

fn operator_orders() -> Outcome {
    let studies = operator_convergence(&DEFAULT_RESOLUTIONS)?;
    let ok = studies.iter().all(|s| s.min_order() >= 1.9);
    let detail: Vec<String> = studies
        .iter()
        .map(|s| format!("{} {:.3}", s.name, s.min_order()))
        .collect();
    Ok((ok, detail.join(", ")))
}

fn report(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let (ok, detail) = match outcome {
        Ok((ok, d)) => (ok && in_time, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let budget = limit.map(|l| format!(" / {}s", l.as_secs())).unwrap_or_default();
    println!(
        "{} {name}: {detail} [{:.1}s{budget}]",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    ok
}

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut seen = Observed::default();
    let mut ok = true;
    ok &= report("mass conservation", min(1), || mass_conservation(&mut seen));
    ok &= report("mass bound with regularization", min(2), || mass_bound(&mut seen));
    ok &= report("maximum principle", min(1), || maximum_principle(&mut seen));
    ok &= report("bernstein sweep", min(5), bernstein);
    ok &= report("unforced fluid decay", min(2), || unforced_decay(&mut seen));
    ok &= report("galerkin consistency", min(10), || galerkin_consistency(&mut seen));
    ok &= report("entropy identity order", None, entropy_identity);
    ok &= report("energy inequality fit", min(15), || energy_fit(&mut seen));
    ok &= report("operator convergence", None, operator_orders);
    ok &= report("positivity", None, || {
        Ok((
            seen.runs > 0 && seen.n_min >= 0.0 && seen.c_min >= 0.0,
            format!(
                "min n = {:.3e}, min c = {:.3e} over {} steps of {} runs",
                seen.n_min, seen.c_min, seen.steps, seen.runs
            ),
        ))
    });
    if !ok {
        std::process::exit(1);
    }
}
