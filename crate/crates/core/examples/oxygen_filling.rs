//! An empty box filling with oxygen through its Robin boundary. With no
//! bacteria and no flow, `max c` rises monotonically toward `gamma`.

use oxytaxis::oxygen::{OxygenStepParams, OxygenStepper};
use oxytaxis::{build_grid, integrate_volume, BoundaryData, DomainSpec, ScalarField, VectorField};

fn main() -> oxytaxis::Result<()> {
    let grid = build_grid(&DomainSpec::unit_square(32))?;
    let bdata = BoundaryData::uniform(&grid, 1.0, 1.0)?;
    let stepper = OxygenStepper::new(&grid, &bdata)?;
    let params = OxygenStepParams::new(0.05);
    let n = ScalarField::zeros(&grid);
    let u = VectorField::zeros(&grid);
    let mut c = ScalarField::zeros(&grid);
    for k in 1..=60 {
        c = stepper.step(&grid, &c, &n, &u, &params)?.0;
        if k % 10 == 0 {
            println!(
                "t = {:.2}  min c = {:.6}  max c = {:.6}  mean c = {:.6}",
                k as f64 * params.dt,
                c.min(),
                c.max(),
                integrate_volume(&grid, &c)? / grid.area()
            );
        }
    }
    Ok(())
}
