//! Fits the growth bound `dF/dt <= p F + q` and the ceiling of `X` on an
//! aerotaxis run, then writes the time series as CSV.

use oxytaxis::config::RunConfig;
use oxytaxis::driver::run_simulation;
use oxytaxis::energy::check_energy_inequality;
use oxytaxis::io::{read_timeseries, write_timeseries};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        nx: 32,
        t_final: 4.0,
        ..RunConfig::named("aerotaxis_drop")?
    };
    let ts = run_simulation(cfg)?;
    let fit = check_energy_inequality(&ts.reports, (2.0, 4.0))?;
    println!("p = {}  q = {:.3e}  envelope {:.4}", fit.p, fit.q, fit.envelope_final);
    println!(
        "X(0) = {:.4}  sup X = {:.4}  ceiling {:.4} (lambda {})  late slope {:.2e}",
        fit.x_initial, fit.x_sup, fit.x_ceiling, fit.x_lambda, fit.x_late_slope
    );
    let path = std::env::temp_dir().join("oxytaxis_energy_fit.csv");
    write_timeseries(&ts.reports, &path)?;
    println!("{} rows written to {}", read_timeseries(&path)?.len(), path.display());
    Ok(())
}
