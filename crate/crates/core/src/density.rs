//! Bacterial density step with zero total flux on the boundary.
//!
//! Substeps, in order:
//! 1. explicit upwind transport with the combined velocity `u + grad c`
//!    (cells swim up the oxygen gradient),
//! 2. backward-Euler Neumann diffusion,
//! 3. growth `eps n` explicit and decay `eps n^3` implicit-diagonal, in one
//!    Patankar update `n (1 + dt eps) / (1 + dt eps n^2)`; `n = 1` stays fixed.
//!
//! Drift faces on the boundary are zero, and so is the diffusive flux, so
//! the total boundary flux vanishes and the first two substeps conserve mass.

use crate::error::{Error, Result};
use crate::field::{FaceField, ScalarField, VectorField};
use crate::geometry::Grid;
use crate::linalg::{conjugate_gradient, CsrMatrix, SolveStats, SolverOptions};
use crate::ops::{advect_upwind, clamp_roundoff_negatives, gradient, max_outflow_rate, neumann_laplacian, Closure};

#[derive(Debug, Clone, Copy)]
pub struct DensityStepParams {
    pub dt: f64,
    pub epsilon: f64,
    /// Split the transport into equal substeps when `dt` exceeds the drift
    /// limit, instead of failing.
    pub substep_drift: bool,
    pub solver: SolverOptions,
}

impl DensityStepParams {
    pub fn new(dt: f64, epsilon: f64) -> Self {
        Self {
            dt,
            epsilon,
            substep_drift: false,
            solver: SolverOptions::default(),
        }
    }
}

/// Face flux `-n_up grad c` on interior faces, with `n_up` taken upwind of
/// the drift `grad c`. Boundary faces carry zero.
pub fn chemotactic_flux(grid: &Grid, n: &ScalarField, c: &ScalarField) -> Result<FaceField> {
    n.check(grid)?;
    let gc = gradient(grid, c, Closure::ZeroFlux)?;
    let nv = n.values();
    let mut out = VectorField::zeros(grid);
    for face in grid.interior_faces() {
        let g = gc.component(face.axis)[face.mac_index];
        let up = if g > 0.0 { nv[face.lower] } else { nv[face.upper] };
        out.component_mut(face.axis)[face.mac_index] = -up * g;
    }
    Ok(out)
}

/// Transport velocity `u + grad c` on interior faces, zero on the boundary.
pub fn drift_velocity(grid: &Grid, c: &ScalarField, u: &VectorField) -> Result<VectorField> {
    u.check(grid)?;
    let mut w = gradient(grid, c, Closure::ZeroFlux)?;
    for face in grid.interior_faces() {
        w.component_mut(face.axis)[face.mac_index] += u.component(face.axis)[face.mac_index];
    }
    Ok(w)
}

/// Largest `dt` for which the explicit transport is a convex combination.
pub fn drift_dt_limit(grid: &Grid, c: &ScalarField, u: &VectorField) -> Result<f64> {
    let rate = max_outflow_rate(grid, &drift_velocity(grid, c, u)?);
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

/// Caches `I - dt L_N` for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct DensityStepper {
    dt: f64,
    diffusion: CsrMatrix,
}

impl DensityStepper {
    pub fn new(grid: &Grid, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let diffusion = CsrMatrix::identity(grid.n_cells()).add_scaled(1.0, &neumann_laplacian(grid), -dt);
        Ok(Self { dt, diffusion })
    }

    pub fn step(
        &self,
        grid: &Grid,
        n: &ScalarField,
        c: &ScalarField,
        u: &VectorField,
        params: &DensityStepParams,
    ) -> Result<(ScalarField, SolveStats)> {
        n.check(grid)?;
        c.check(grid)?;
        if params.dt != self.dt {
            return Err(Error::InvalidParameter(format!(
                "stepper built for dt = {}, called with {}",
                self.dt, params.dt
            )));
        }
        if !(params.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {} < 0", params.epsilon)));
        }
        let dt = self.dt;
        let w = drift_velocity(grid, c, u)?;
        let limit = {
            let rate = max_outflow_rate(grid, &w);
            if rate > 0.0 {
                1.0 / rate
            } else {
                f64::INFINITY
            }
        };
        let substeps = if dt <= limit * (1.0 + 1e-12) {
            1
        } else if params.substep_drift {
            (dt / limit).ceil() as usize
        } else {
            return Err(Error::Cfl { dt, limit });
        };

        let mut cur = n.clone();
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            let tend = advect_upwind(grid, &cur, &w)?;
            for (v, t) in cur.values_mut().iter_mut().zip(tend.values()) {
                *v += h * t;
            }
        }
        let scale = cur.max().max(1.0);
        clamp_roundoff_negatives(cur.values_mut(), scale, "n")?;

        // x0 = b keeps the sum of every CG iterate equal to sum(b)
        let rhs = cur.into_values();
        let mut x = rhs.clone();
        let stats = conjugate_gradient(&self.diffusion, &rhs, &mut x, params.solver)?;
        clamp_roundoff_negatives(&mut x, scale, "n")?;

        let eps = params.epsilon;
        if eps > 0.0 {
            for v in &mut x {
                *v = *v * (1.0 + dt * eps) / (1.0 + dt * eps * *v * *v);
            }
        }
        Ok((ScalarField::new(x), stats))
    }
}

/// One density step with a freshly assembled diffusion matrix.
pub fn step_density(
    grid: &Grid,
    n: &ScalarField,
    c: &ScalarField,
    u: &VectorField,
    params: &DensityStepParams,
) -> Result<ScalarField> {
    DensityStepper::new(grid, params.dt)?
        .step(grid, n, c, u, params)
        .map(|(n, _)| n)
}

/// Mass bound for `eps > 0`: since `2n - n^3 <= 4 sqrt(6) / 9` for `n >= 0`,
/// the mass obeys `m' + eps m <= eps 4 sqrt(6) / 9 |Omega|`.
pub fn regularized_mass_bound(initial_mass: f64, area: f64) -> f64 {
    initial_mass + 4.0 * 6f64.sqrt() / 9.0 * area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, integrate_volume, DomainSpec};

    #[test]
    fn flux_of_linear_oxygen_in_1d() {
        let g = build_grid(&DomainSpec::interval(16, 1.0)).unwrap();
        let n = ScalarField::constant(&g, 1.0);
        let c = ScalarField::from_fn(&g, |x, _| x);
        let f = chemotactic_flux(&g, &n, &c).unwrap();
        for face in g.interior_faces() {
            assert!((f.ux[face.mac_index] + 1.0).abs() < 1e-12);
        }
        for face in g.boundary_faces() {
            assert_eq!(f.ux[face.mac_index], 0.0);
        }
        let zero = chemotactic_flux(&g, &ScalarField::zeros(&g), &c).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let flat = chemotactic_flux(&g, &n, &ScalarField::constant(&g, 0.3)).unwrap();
        assert_eq!(flat.max_abs(), 0.0);
    }

    #[test]
    fn constant_state_is_steady() {
        let g = build_grid(&DomainSpec::unit_square(12)).unwrap();
        let mut n = ScalarField::constant(&g, 0.7);
        let c = ScalarField::constant(&g, 2.0);
        let u = VectorField::zeros(&g);
        let p = DensityStepParams::new(0.01, 0.0);
        let st = DensityStepper::new(&g, p.dt).unwrap();
        for _ in 0..10 {
            n = st.step(&g, &n, &c, &u, &p).unwrap().0;
        }
        assert!(n.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn mass_is_conserved_without_regularization() {
        let g = build_grid(&DomainSpec::l_shape(16, 16, 1.0, 1.0)).unwrap();
        let mut n = ScalarField::from_fn(&g, |x, y| (-20.0 * ((x - 0.3).powi(2) + (y - 0.3).powi(2))).exp());
        let c = ScalarField::from_fn(&g, |x, y| 1.0 + x * y + 0.5 * (3.0 * x).sin());
        let u = VectorField::zeros(&g);
        let dt = 0.5 * drift_dt_limit(&g, &c, &u).unwrap().min(0.01);
        let p = DensityStepParams::new(dt, 0.0);
        let st = DensityStepper::new(&g, dt).unwrap();
        for _ in 0..50 {
            let m0 = integrate_volume(&g, &n).unwrap();
            n = st.step(&g, &n, &c, &u, &p).unwrap().0;
            assert!((integrate_volume(&g, &n).unwrap() - m0).abs() < 1e-12);
            assert!(n.min() >= 0.0);
        }
    }

    #[test]
    fn cells_move_up_the_gradient() {
        let g = build_grid(&DomainSpec::interval(32, 1.0)).unwrap();
        let mut n = ScalarField::constant(&g, 1.0);
        let c = ScalarField::from_fn(&g, |x, _| 10.0 * x);
        let u = VectorField::zeros(&g);
        let p = DensityStepParams::new(0.001, 0.0);
        let st = DensityStepper::new(&g, p.dt).unwrap();
        for _ in 0..50 {
            n = st.step(&g, &n, &c, &u, &p).unwrap().0;
        }
        assert!(n.values()[31] > n.values()[0]);
    }

    #[test]
    fn regularization_follows_the_cubic_ode() {
        // n' = eps n (1 - n^2): 1/n^2 - 1 = (1/n0^2 - 1) e^{-2 eps t}
        let n0: f64 = 2.0;
        let eps: f64 = 0.1;
        let t = 1.0 / eps;
        let exact = (1.0 + (n0.powi(-2) - 1.0) * (-2.0 * eps * t).exp()).powf(-0.5);
        assert!((exact - 1.05497).abs() < 1e-5);

        let g = build_grid(&DomainSpec::interval(4, 1.0)).unwrap();
        let mut n = ScalarField::constant(&g, n0);
        let c = ScalarField::constant(&g, 1.0);
        let u = VectorField::zeros(&g);
        let p = DensityStepParams::new(1e-3, eps);
        let st = DensityStepper::new(&g, p.dt).unwrap();
        let mut prev = n0;
        for _ in 0..10_000 {
            n = st.step(&g, &n, &c, &u, &p).unwrap().0;
            assert!(n.values()[0] < prev && n.values()[0] > 1.0);
            prev = n.values()[0];
        }
        assert!((prev - exact).abs() < 1e-3, "{prev} vs {exact}");
    }

    #[test]
    fn regularized_mass_respects_bound() {
        let g = build_grid(&DomainSpec::unit_square(8)).unwrap();
        let mut n = ScalarField::from_fn(&g, |x, _| 0.01 + x * 0.1);
        let m0 = integrate_volume(&g, &n).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        let u = VectorField::zeros(&g);
        let p = DensityStepParams::new(0.05, 0.1);
        let st = DensityStepper::new(&g, p.dt).unwrap();
        for _ in 0..2000 {
            n = st.step(&g, &n, &c, &u, &p).unwrap().0;
            assert!(integrate_volume(&g, &n).unwrap() <= regularized_mass_bound(m0, 1.0) + 1e-8);
        }
        // relaxes to the stable state n = 1
        assert!(n.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn drift_cfl_is_enforced_or_substepped() {
        let g = build_grid(&DomainSpec::interval(16, 1.0)).unwrap();
        let n = ScalarField::constant(&g, 1.0);
        let c = ScalarField::from_fn(&g, |x, _| 100.0 * x);
        let u = VectorField::zeros(&g);
        let mut p = DensityStepParams::new(0.1, 0.0);
        assert!(matches!(step_density(&g, &n, &c, &u, &p), Err(Error::Cfl { .. })));
        p.substep_drift = true;
        let out = step_density(&g, &n, &c, &u, &p).unwrap();
        assert!(out.min() >= 0.0);
        assert!((integrate_volume(&g, &out).unwrap() - 1.0).abs() < 1e-12);
    }
}
