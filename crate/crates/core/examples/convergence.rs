//! Grid and time-step refinement studies with observed orders.

use oxytaxis::verify::{entropy_identity_convergence, operator_convergence, EntropyStudy, DEFAULT_RESOLUTIONS};

fn sci(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
}

fn main() -> oxytaxis::Result<()> {
    for s in operator_convergence(&DEFAULT_RESOLUTIONS)? {
        println!("{:<18} errors {}  orders {:.3?}", s.name, sci(&s.errors), s.orders);
    }
    for slope in [0.0, 0.3] {
        let s = entropy_identity_convergence(&EntropyStudy {
            c_slope: slope,
            ..EntropyStudy::default()
        })?;
        println!(
            "entropy (grad c = {slope}) residuals {}  orders {:.3?}",
            sci(&s.errors),
            s.orders
        );
    }
    Ok(())
}
