//! Runs a named scenario and prints the energy ledger as it goes.
//!
//! ```text
//! cargo run --release --example run_scenario -- aerotaxis_drop
//! ```

use oxytaxis::config::RunConfig;
use oxytaxis::driver::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "aerotaxis_drop".into());
    let cfg = RunConfig {
        nx: 32,
        t_final: 1.0,
        ..RunConfig::named(&name)?
    };
    let mut sim = Simulation::new(cfg)?;
    println!(
        "K = {:.4}, decay rate {:?}",
        sim.series().constants.k,
        sim.series().decay_rate
    );
    println!(
        "{:>6} {:>14} {:>10} {:>12} {:>12} {:>12}",
        "t", "mass", "c_max", "F", "X", "|u|^2"
    );
    sim.run(|_, r| {
        println!(
            "{:>6.2} {:>14.10} {:>10.6} {:>12.6} {:>12.6} {:>12.4e}",
            r.t, r.mass_n, r.c_max, r.F, r.X, r.u_l2
        );
        Ok(())
    })?;
    let worst = sim.series().steps.iter().map(|s| s.substeps).max().unwrap_or(1);
    println!("{} base steps, at most {worst} substeps", sim.series().steps.len());
    Ok(())
}
