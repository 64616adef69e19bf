//! Checks the boundary Bernstein inequality on random Robin-compatible
//! oxygen fields.

use oxytaxis::energy::check_bernstein;
use oxytaxis::synth::robin_compatible_field;
use oxytaxis::{build_grid, DomainSpec};

fn main() -> oxytaxis::Result<()> {
    let grid = build_grid(&DomainSpec::unit_square(64))?;
    println!(
        "{:>4} {:>12} {:>12} {:>12} {:>10}",
        "seed", "lhs", "boundary", "rhs", "robin res"
    );
    for seed in 0..10 {
        let f = robin_compatible_field(&grid, seed)?;
        let r = check_bernstein(&grid, &f.bdata, &f.c)?;
        println!(
            "{seed:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e}",
            r.lhs, r.boundary_term, r.rhs, r.robin_residual
        );
        assert!(r.holds);
    }
    Ok(())
}
