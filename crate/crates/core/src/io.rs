//! Output formats.
//!
//! Time series: CSV with the fixed header of [`EnergyReport::COLUMNS`], one
//! row per report, shortest round-trip float formatting (`{:?}`).
//!
//! Field dump: plain text.
//! ```text
//! nx ny dx dy t
//! 64 64 0.015625 0.015625 5
//! n
//! <ny rows of nx values>
//! c
//! ...
//! ```
//! Blocks come in the order `n, c, u_x, u_y, P`, rows from `j = 0` upward.
//! Velocities are averaged to cell centers; cells outside the domain are
//! `NaN`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::driver::{State, StepMeta};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{Axis, Grid};

pub const FIELD_HEADER: &str = "nx ny dx dy t";
pub const FIELD_BLOCKS: [&str; 5] = ["n", "c", "u_x", "u_y", "P"];

pub fn write_timeseries(reports: &[EnergyReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EnergyReport::COLUMNS)?;
    for r in reports {
        w.write_record(r.values().iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a time series, rejecting any header other than the fixed one.
pub fn read_timeseries(path: &Path) -> Result<Vec<EnergyReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != EnergyReport::COLUMNS {
        return Err(Error::Config(format!("unexpected time-series header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_steps(steps: &[StepMeta], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in steps {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed field dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub t: f64,
    /// Row-major `nx * ny` values per block, in [`FIELD_BLOCKS`] order.
    pub blocks: Vec<Vec<f64>>,
}

impl FieldDump {
    pub fn from_state(grid: &Grid, state: &State) -> Result<Self> {
        state.n.check(grid)?;
        state.c.check(grid)?;
        state.u.check(grid)?;
        state.p.check(grid)?;
        let (ux, uy) = cell_velocity(grid, &state.u);
        let blocks = [state.n.values(), state.c.values(), &ux, &uy, state.p.values()]
            .iter()
            .map(|v| to_box(grid, v))
            .collect();
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            dx: grid.dx,
            dy: grid.dy,
            t: state.t,
            blocks,
        })
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        FIELD_BLOCKS
            .iter()
            .position(|b| *b == name)
            .map(|i| self.blocks[i].as_slice())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{FIELD_HEADER}")?;
        writeln!(w, "{} {} {:?} {:?} {:?}", self.nx, self.ny, self.dx, self.dy, self.t)?;
        for (name, block) in FIELD_BLOCKS.iter().zip(&self.blocks) {
            writeln!(w, "{name}")?;
            for row in block.chunks(self.nx) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
        let mut lines = BufReader::new(File::open(path)?).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("truncated field dump".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != FIELD_HEADER {
            return Err(bad("missing header".into()));
        }
        let meta = next()?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(bad(format!("bad header values '{meta}'")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("'{s}': {e}")));
        let (nx, ny) = (int(parts[0])?, int(parts[1])?);
        let (dx, dy, t) = (num(parts[2])?, num(parts[3])?, num(parts[4])?);
        let mut blocks = Vec::with_capacity(FIELD_BLOCKS.len());
        for name in FIELD_BLOCKS {
            if next()?.trim() != name {
                return Err(bad(format!("expected block '{name}'")));
            }
            let mut block = Vec::with_capacity(nx * ny);
            for _ in 0..ny {
                let row = next()?;
                let vals = row.split_whitespace().map(num).collect::<Result<Vec<f64>>>()?;
                if vals.len() != nx {
                    return Err(bad(format!(
                        "row of {} values in block '{name}', expected {nx}",
                        vals.len()
                    )));
                }
                block.extend(vals);
            }
            blocks.push(block);
        }
        if next().is_ok() {
            return Err(bad("trailing content".into()));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            t,
            blocks,
        })
    }
}

pub fn dump_field(grid: &Grid, state: &State, path: &Path) -> Result<()> {
    FieldDump::from_state(grid, state)?.write(path)
}

fn to_box(grid: &Grid, compact: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; grid.nx * grid.ny];
    for (k, &(i, j)) in grid.cells().iter().enumerate() {
        out[j * grid.nx + i] = compact[k];
    }
    out
}

fn cell_velocity(grid: &Grid, u: &VectorField) -> (Vec<f64>, Vec<f64>) {
    let mut ux = Vec::with_capacity(grid.n_cells());
    let mut uy = Vec::with_capacity(grid.n_cells());
    for &(i, j) in grid.cells() {
        ux.push(0.5 * (u.component(Axis::X)[grid.xface(i, j)] + u.component(Axis::X)[grid.xface(i + 1, j)]));
        uy.push(if grid.dim == 2 {
            0.5 * (u.component(Axis::Y)[grid.yface(i, j)] + u.component(Axis::Y)[grid.yface(i, j + 1)])
        } else {
            0.0
        });
    }
    (ux, uy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::driver::Simulation;

    #[test]
    fn empty_series_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write_timeseries(&[], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "t,mass_n,c_max,S,S_boundary,S_add,F,X,E,lp_n_2,lp_n_3,grad_c_l4,u_l2,grad_u_l2\n"
        );
        assert!(read_timeseries(&p).unwrap().is_empty());
    }

    #[test]
    fn dump_round_trip_on_l_shape() {
        let cfg = RunConfig {
            domain: crate::config::DomainKind::LShape,
            nx: 8,
            t_final: 0.05,
            report_every: 0.05,
            ..RunConfig::named("aerotaxis_drop").unwrap()
        };
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run(|_, _| Ok(())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        dump_field(sim.grid(), sim.state(), &p).unwrap();
        let back = FieldDump::read(&p).unwrap();
        let orig = FieldDump::from_state(sim.grid(), sim.state()).unwrap();
        assert_eq!((back.nx, back.ny, back.t), (8, 8, orig.t));
        for (a, b) in back.blocks.iter().zip(&orig.blocks) {
            assert_eq!(a.len(), 64);
            for (x, y) in a.iter().zip(b) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
        // the removed quadrant is NaN, the rest finite
        let n = back.block("n").unwrap();
        assert!(n[7 * 8 + 7].is_nan() && n[0].is_finite());
    }
}
