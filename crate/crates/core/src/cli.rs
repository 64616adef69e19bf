//! Command-line front end. Exit codes: 0 success, 1 invariant or check
//! failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::driver::Simulation;
use crate::energy::{check_bernstein, check_energy_inequality};
use crate::error::{Error, Result};
use crate::fluid::{build_stokes_basis, load_basis, save_basis, stokes_dimension};
use crate::geometry::{build_grid, DomainSpec};
use crate::io::{dump_field, write_steps, write_timeseries};
use crate::synth::robin_compatible_field;
use crate::verify::{entropy_identity_convergence, operator_convergence, EntropyStudy, DEFAULT_RESOLUTIONS};

/// Relative slack on the Bernstein right-hand side absorbing quadrature error.
pub const BERNSTEIN_SLACK: f64 = 0.05;
pub const OPERATOR_ORDER: f64 = 1.9;
pub const ENTROPY_ORDER: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "oxytaxis", about = "Chemotaxis-Navier-Stokes with Robin oxygen exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation and write the time series and field dumps.
    Run {
        /// Config file (flat TOML).
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Built-in scenario instead of a config file.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Dump fields every this many reports (0 dumps only the final state).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
        #[arg(long)]
        json: bool,
    },
    /// Check the Bernstein inequality on random Robin-compatible fields.
    CheckBernstein {
        #[arg(long, default_value_t = 200)]
        n: u64,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Build (or load) the discrete Stokes eigenbasis.
    Eigenbasis {
        #[arg(long, default_value_t = 32)]
        res: usize,
        /// Number of modes; the full basis when omitted.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Refinement studies of the operators and the entropy identity.
    VerifyIdentities {
        #[arg(long)]
        json: bool,
    },
    Version {
        #[arg(long)]
        json: bool,
    },
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(parsed.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run {
            config,
            scenario,
            out,
            snapshot_every,
            json,
        } => {
            let cfg = match (config, scenario) {
                (Some(p), None) => RunConfig::load(&p)?,
                (None, Some(s)) => RunConfig::named(&s)?,
                (None, None) => return Err(Error::Config("run needs --config or --scenario".into())),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            run(cfg, &out, snapshot_every, json)
        }
        Command::CheckBernstein { n, res, seed, json } => bernstein(n, res, seed, json),
        Command::Eigenbasis { res, m, cache, json } => eigenbasis(res, m, cache.as_deref(), json),
        Command::VerifyIdentities { json } => verify(json),
        Command::Version { json } => {
            let v = env!("CARGO_PKG_VERSION");
            if json {
                println!("{}", json!({ "name": "oxytaxis", "version": v }));
            } else {
                println!("oxytaxis {v}");
            }
            Ok(0)
        }
    }
}

fn run(cfg: RunConfig, out: &Path, snapshot_every: usize, json: bool) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let mut sim = Simulation::new(cfg)?;
    let mut index = 0usize;
    let result = sim.run(|s, _| {
        if snapshot_every > 0 && index.is_multiple_of(snapshot_every) {
            dump_field(s.grid(), s.state(), &out.join(format!("field_{index:05}.txt")))?;
        }
        index += 1;
        Ok(())
    });
    write_timeseries(&sim.series().reports, &out.join("timeseries.csv"))?;
    write_steps(&sim.series().steps, &out.join("steps.csv"))?;
    if let Err(e) = result {
        dump_field(sim.grid(), sim.state(), &out.join("last_state.txt"))?;
        return Err(e);
    }
    dump_field(sim.grid(), sim.state(), &out.join("field_final.txt"))?;

    let series = sim.series();
    let t_end = sim.config().t_final;
    let fit = check_energy_inequality(&series.reports, (0.5 * t_end, t_end)).ok();
    if json {
        println!(
            "{}",
            json!({
                "reports": series.reports.len(),
                "steps": series.steps.len(),
                "constants": series.constants,
                "decay_rate": series.decay_rate,
                "final": series.reports.last(),
                "fit": fit,
                "out": out,
            })
        );
    } else {
        let last = series.reports.last().expect("at least the initial report");
        println!("reports: {}  steps: {}", series.reports.len(), series.steps.len());
        println!("K = {:.6e}  L = {}", series.constants.k, series.constants.l);
        println!(
            "final t = {}  mass = {:.15e}  c_max = {:.6e}  X = {:.6e}",
            last.t, last.mass_n, last.c_max, last.X
        );
        if let Some(f) = fit {
            println!("fit p = {}  q = {:.6e}  X ceiling = {:.6e}", f.p, f.q, f.x_ceiling);
        }
        println!("wrote {}", out.display());
    }
    Ok(0)
}

fn bernstein(n: u64, res: usize, seed: u64, json: bool) -> Result<i32> {
    if res < 4 {
        return Err(Error::Config(format!("res = {res} is too coarse")));
    }
    let grid = build_grid(&DomainSpec::unit_square(res))?;
    let mut rows = Vec::new();
    let mut violations = 0;
    if !json {
        println!(
            "{:>6} {:>14} {:>14} {:>14} {:>10} ok",
            "seed", "lhs", "rhs", "margin", "robin_res"
        );
    }
    for s in seed..seed + n {
        let f = robin_compatible_field(&grid, s)?;
        let r = check_bernstein(&grid, &f.bdata, &f.c)?;
        let ok = r.lhs <= r.rhs * (1.0 + BERNSTEIN_SLACK) + 1e-12;
        violations += usize::from(!ok);
        if json {
            rows.push(json!({ "seed": s, "report": r, "ok": ok }));
        } else {
            println!(
                "{s:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.3e} {}",
                r.lhs,
                r.rhs,
                r.margin,
                r.robin_residual,
                if ok { "yes" } else { "NO" }
            );
        }
    }
    if json {
        println!("{}", json!({ "res": res, "fields": rows, "violations": violations }));
    } else {
        println!("{violations} violations out of {n}");
    }
    Ok(if violations == 0 { 0 } else { 1 })
}

fn eigenbasis(res: usize, m: Option<usize>, cache: Option<&Path>, json: bool) -> Result<i32> {
    if res < 2 {
        return Err(Error::Config(format!("res = {res} is too coarse")));
    }
    let grid = build_grid(&DomainSpec::unit_square(res))?;
    let m = m.unwrap_or_else(|| stokes_dimension(&grid));
    let basis = match cache {
        Some(p) if p.exists() => match load_basis(p, &grid) {
            Ok(b) if b.len() >= m => b,
            _ => build_stokes_basis(&grid, m)?,
        },
        _ => build_stokes_basis(&grid, m)?,
    };
    if let Some(p) = cache {
        save_basis(&basis, p)?;
    }
    let residual = basis.eigen_residuals(&grid)?.into_iter().fold(0.0, f64::max);
    let shown = &basis.eigenvalues()[..basis.len().min(10)];
    if json {
        println!(
            "{}",
            json!({ "res": res, "modes": basis.len(), "eigenvalues": basis.eigenvalues(), "max_residual": residual })
        );
    } else {
        println!("{} modes on {res}x{res}, max residual {residual:.3e}", basis.len());
        println!("lowest eigenvalues: {shown:?}");
    }
    Ok(0)
}

fn verify(json: bool) -> Result<i32> {
    let ops = operator_convergence(&DEFAULT_RESOLUTIONS)?;
    let constant = entropy_identity_convergence(&EntropyStudy::default())?;
    let drift = entropy_identity_convergence(&EntropyStudy {
        c_slope: 0.3,
        ..EntropyStudy::default()
    })?;
    let ok = ops.iter().all(|s| s.min_order() >= OPERATOR_ORDER) && constant.min_order() >= ENTROPY_ORDER;
    if json {
        println!(
            "{}",
            json!({ "operators": ops, "entropy": [constant, drift], "ok": ok })
        );
    } else {
        for s in ops.iter().chain([&constant, &drift]) {
            let orders: Vec<String> = s.orders.iter().map(|o| format!("{o:.3}")).collect();
            println!("{:<24} errors {:?}  orders {}", s.name, s.errors, orders.join(" "));
        }
    }
    Ok(if ok { 0 } else { 1 })
}
