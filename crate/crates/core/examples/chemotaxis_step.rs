//! Bacteria climbing a fixed oxygen gradient on an interval: mass is kept
//! to round-off and the density piles up at the oxygen-rich end.

use oxytaxis::density::{DensityStepParams, DensityStepper};
use oxytaxis::{build_grid, integrate_volume, DomainSpec, ScalarField, VectorField};

fn main() -> oxytaxis::Result<()> {
    let grid = build_grid(&DomainSpec::interval(64, 1.0))?;
    let c = ScalarField::from_fn(&grid, |x, _| 2.0 * x);
    let u = VectorField::zeros(&grid);
    let params = DensityStepParams::new(1e-3, 0.0);
    let stepper = DensityStepper::new(&grid, params.dt)?;
    let mut n = ScalarField::constant(&grid, 1.0);
    let m0 = integrate_volume(&grid, &n)?;
    for _ in 0..2000 {
        n = stepper.step(&grid, &n, &c, &u, &params)?.0;
    }
    let v = n.values();
    println!("mass drift {:.3e}", integrate_volume(&grid, &n)? - m0);
    println!("n(left) = {:.4}  n(right) = {:.4}", v[0], v[v.len() - 1]);
    // the stationary profile is proportional to exp(c)
    let expected = (2.0f64 * (1.0 - 1.0 / 64.0)).exp();
    println!(
        "ratio {:.4} vs exp(c_right - c_left) = {expected:.4}",
        v[v.len() - 1] / v[0]
    );
    Ok(())
}
