//! Builds the discrete Stokes eigenbasis of a small box and uses it as a
//! Leray projector.

use oxytaxis::fluid::{build_stokes_basis, leray_project, max_divergence, stokes_dimension};
use oxytaxis::{build_grid, DomainSpec, VectorField};

fn main() -> oxytaxis::Result<()> {
    let grid = build_grid(&DomainSpec::unit_square(16))?;
    let m = stokes_dimension(&grid);
    let basis = build_stokes_basis(&grid, m)?;
    println!("{m} modes; lowest eigenvalues {:?}", &basis.eigenvalues()[..4]);
    let worst = basis.eigen_residuals(&grid)?.into_iter().fold(0.0, f64::max);
    println!("max eigen residual {worst:.2e}");

    let f = VectorField::from_fn_interior(&grid, |x, y| (x * y, (3.0 * x).sin()));
    for k in [4, 32, m] {
        let pf = leray_project(&grid, &basis, &f, k)?;
        println!(
            "m = {k:>3}: |P f|^2 = {:.6e}  max div {:.1e}",
            pf.norm_sq(&grid),
            max_divergence(&grid, &pf)
        );
    }
    Ok(())
}
