//! A drop on an L-shaped domain, dumped as a plain-text field file.

use oxytaxis::config::{DomainKind, RunConfig};
use oxytaxis::driver::Simulation;
use oxytaxis::io::{dump_field, FieldDump};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        domain: DomainKind::LShape,
        nx: 32,
        t_final: 0.5,
        blob_x: 0.25,
        blob_y: 0.75,
        ..RunConfig::named("aerotaxis_drop")?
    };
    let mut sim = Simulation::new(cfg)?;
    sim.run(|_, _| Ok(()))?;
    let path = std::env::temp_dir().join("oxytaxis_l_shape.txt");
    dump_field(sim.grid(), sim.state(), &path)?;
    let dump = FieldDump::read(&path)?;
    let n = dump.block("n").expect("density block");
    let live = n.iter().filter(|v| v.is_finite()).count();
    println!("{} of {} cells inside, t = {}", live, n.len(), dump.t);
    println!("wrote {}", path.display());
    Ok(())
}
