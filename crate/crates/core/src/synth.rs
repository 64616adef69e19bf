//! Random smooth positive oxygen fields with boundary data that makes them
//! satisfy the Robin condition exactly at face midpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::ScalarField;
use crate::geometry::{BoundaryData, Grid};

#[derive(Debug, Clone)]
pub struct RobinField {
    pub c: ScalarField,
    pub bdata: BoundaryData,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// `c = c0 exp(sum a sin(k.x + phase))` over a handful of low wavenumbers.
#[derive(Debug, Clone)]
struct LogFourier {
    c0: f64,
    waves: Vec<Wave>,
}

impl LogFourier {
    fn sample(rng: &mut ChaCha8Rng, lx: f64, ly: f64, two_d: bool) -> Self {
        let n_waves = rng.random_range(2..=6);
        let total_amp = rng.random_range(0.1..1.5);
        let mut waves: Vec<Wave> = (0..n_waves)
            .map(|_| {
                let kx = rng.random_range(0..=3) as f64 * std::f64::consts::PI / lx;
                let ky = if two_d {
                    rng.random_range(0..=3) as f64 * std::f64::consts::PI / ly
                } else {
                    0.0
                };
                Wave {
                    kx,
                    ky,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amp: rng.random_range(-1.0..1.0),
                }
            })
            .collect();
        let norm: f64 = waves.iter().map(|w| w.amp.abs()).sum::<f64>().max(1e-12);
        for w in &mut waves {
            w.amp *= total_amp / norm;
        }
        Self {
            c0: rng.random_range(0.2..2.0),
            waves,
        }
    }

    fn value_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (mut g, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for w in &self.waves {
            let arg = w.kx * x + w.ky * y + w.phase;
            g += w.amp * arg.sin();
            gx += w.amp * w.kx * arg.cos();
            gy += w.amp * w.ky * arg.cos();
        }
        let c = self.c0 * g.exp();
        (c, c * gx, c * gy)
    }
}

/// Draws a field from `seed`. On each boundary face `kappa` is random in
/// `[0.2, 5]`, raised where needed so that `gamma = c + d_nu c / kappa` stays
/// at least `c / 2`.
pub fn robin_compatible_field(grid: &Grid, seed: u64) -> Result<RobinField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = grid.nx as f64 * grid.dx;
    let ly = grid.ny as f64 * grid.dy;
    let f = LogFourier::sample(&mut rng, lx, ly, grid.dim == 2);
    let c = ScalarField::from_fn(grid, |x, y| f.value_grad(x, y).0);
    let faces = grid.boundary_faces();
    let mut kappa = Vec::with_capacity(faces.len());
    let mut gamma = Vec::with_capacity(faces.len());
    for face in faces {
        let (x, y) = face.midpoint;
        let (cv, gx, gy) = f.value_grad(x, y);
        let (nx, ny) = face.side.normal();
        let dn = gx * nx + gy * ny;
        let k = rng.random_range(0.2..5.0f64).max(-2.0 * dn / cv);
        kappa.push(k);
        gamma.push(cv + dn / k);
    }
    let lower = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let bdata = BoundaryData::from_face_values(grid, kappa, gamma, lower)?;
    Ok(RobinField { c, bdata, seed })
}
