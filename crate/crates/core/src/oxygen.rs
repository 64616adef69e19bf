//! Oxygen step: backward-Euler Robin diffusion, upwind advection and
//! consumption `n c` taken implicitly on the diagonal.
//!
//! One step solves
//!
//! ```text
//! (I + dt A_up(u) + dt diag(n) - dt L_robin) c_new = c + dt s_robin
//! ```
//!
//! The matrix is an M-matrix with row sums `>= 1`, so the update is
//! positive and obeys `max c_new <= max(max gamma, max c)`.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geometry::{Axis, BoundaryData, Grid};
use crate::linalg::{bicgstab, conjugate_gradient, CsrMatrix, SolveStats, SolverOptions};
use crate::ops::{advection_matrix, assemble_robin_laplacian, clamp_roundoff_negatives, RobinOperator};

#[derive(Debug, Clone, Copy)]
pub struct OxygenStepParams {
    pub dt: f64,
    pub solver: SolverOptions,
}

impl OxygenStepParams {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            solver: SolverOptions::default(),
        }
    }
}

/// Advective limit `0.5 * min(dx / max|u_x|, dy / max|u_y|)`.
pub fn advective_dt_limit(grid: &Grid, u: &VectorField) -> f64 {
    let lim = |h: f64, m: f64| if m > 0.0 { h / m } else { f64::INFINITY };
    0.5 * lim(grid.dx, u.max_abs_component(Axis::X)).min(lim(grid.dy, u.max_abs_component(Axis::Y)))
}

/// Caches the Robin operator for repeated steps on fixed boundary data.
#[derive(Debug, Clone)]
pub struct OxygenStepper {
    robin: RobinOperator,
}

impl OxygenStepper {
    pub fn new(grid: &Grid, bdata: &BoundaryData) -> Result<Self> {
        Ok(Self {
            robin: assemble_robin_laplacian(grid, bdata)?,
        })
    }

    /// The implicit step matrix; exposed for M-matrix checks.
    pub fn step_matrix(&self, grid: &Grid, n: &ScalarField, u: &VectorField, dt: f64) -> Result<CsrMatrix> {
        let adv = advection_matrix(grid, u)?;
        let diag: Vec<f64> = n.values().iter().map(|&v| 1.0 + dt * v).collect();
        Ok(adv.add_scaled(dt, &self.robin.matrix, -dt).add_diagonal(&diag))
    }

    pub fn step(
        &self,
        grid: &Grid,
        c: &ScalarField,
        n: &ScalarField,
        u: &VectorField,
        params: &OxygenStepParams,
    ) -> Result<(ScalarField, SolveStats)> {
        c.check(grid)?;
        n.check(grid)?;
        u.check(grid)?;
        let dt = params.dt;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let limit = advective_dt_limit(grid, u);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let a = self.step_matrix(grid, n, u, dt)?;
        let rhs: Vec<f64> = c
            .values()
            .iter()
            .zip(&self.robin.source)
            .map(|(ci, si)| ci + dt * si)
            .collect();
        let mut x = c.values().to_vec();
        let stats = if u.max_abs() == 0.0 {
            conjugate_gradient(&a, &rhs, &mut x, params.solver)?
        } else {
            bicgstab(&a, &rhs, &mut x, params.solver)?
        };
        clamp_roundoff_negatives(&mut x, c.max().max(1.0), "c")?;
        Ok((ScalarField::new(x), stats))
    }
}

/// One oxygen step with a freshly assembled Robin operator.
pub fn step_oxygen(
    grid: &Grid,
    bdata: &BoundaryData,
    c: &ScalarField,
    n: &ScalarField,
    u: &VectorField,
    params: &OxygenStepParams,
) -> Result<ScalarField> {
    OxygenStepper::new(grid, bdata)?
        .step(grid, c, n, u, params)
        .map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, integrate_volume, DomainSpec};

    fn square(n: usize) -> Grid {
        build_grid(&DomainSpec::unit_square(n)).unwrap()
    }

    fn rotating(grid: &Grid, amp: f64) -> VectorField {
        let psi = |x: f64, y: f64| amp * (x * (1.0 - x) * y * (1.0 - y)).powi(2) * 16.0;
        let mut v = VectorField::zeros(grid);
        for face in grid.interior_faces() {
            let (x0, y0) = grid.center(face.lower);
            let (x1, y1) = grid.center(face.upper);
            let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            match face.axis {
                Axis::X => v.ux[face.mac_index] = (psi(xm, ym + 0.5 * grid.dy) - psi(xm, ym - 0.5 * grid.dy)) / grid.dy,
                Axis::Y => {
                    v.uy[face.mac_index] = -(psi(xm + 0.5 * grid.dx, ym) - psi(xm - 0.5 * grid.dx, ym)) / grid.dx
                }
            }
        }
        v
    }

    #[test]
    fn equilibrium_is_fixed() {
        let g = square(16);
        let bd = BoundaryData::uniform(&g, 1.0, 1.0).unwrap();
        let st = OxygenStepper::new(&g, &bd).unwrap();
        let mut c = ScalarField::constant(&g, 1.0);
        let n = ScalarField::zeros(&g);
        let u = VectorField::zeros(&g);
        for _ in 0..20 {
            c = st.step(&g, &c, &n, &u, &OxygenStepParams::new(0.01)).unwrap().0;
        }
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn filling_from_the_boundary_is_monotone_and_bounded() {
        let g = square(16);
        let bd = BoundaryData::uniform(&g, 1.0, 1.0).unwrap();
        let st = OxygenStepper::new(&g, &bd).unwrap();
        let mut c = ScalarField::zeros(&g);
        let n = ScalarField::zeros(&g);
        let u = VectorField::zeros(&g);
        let mut prev_max = 0.0;
        for _ in 0..100 {
            let next = st.step(&g, &c, &n, &u, &OxygenStepParams::new(0.05)).unwrap().0;
            for (a, b) in next.values().iter().zip(c.values()) {
                assert!(a + 1e-14 >= *b);
            }
            assert!(next.max() <= 1.0 + 1e-12);
            assert!(next.max() >= prev_max);
            prev_max = next.max();
            c = next;
        }
        assert!(prev_max > 0.9);
    }

    #[test]
    fn neumann_limit_conserves_mass() {
        let g = build_grid(&DomainSpec::l_shape(12, 12, 1.0, 1.0)).unwrap();
        let bd = BoundaryData::uniform(&g, 0.0, 1.0).unwrap();
        let st = OxygenStepper::new(&g, &bd).unwrap();
        let mut c = ScalarField::from_fn(&g, |x, y| 1.0 + (4.0 * x).sin() * y);
        let m0 = integrate_volume(&g, &c).unwrap();
        let n = ScalarField::zeros(&g);
        let u = VectorField::zeros(&g);
        for _ in 0..20 {
            c = st.step(&g, &c, &n, &u, &OxygenStepParams::new(0.01)).unwrap().0;
        }
        assert!((integrate_volume(&g, &c).unwrap() - m0).abs() < 1e-12);
    }

    #[test]
    fn step_matrix_is_m_matrix_and_max_principle_holds() {
        let g = square(24);
        let bd = BoundaryData::from_fns(&g, |x, _, _| 2.0 * x, |_, y| 0.5 + y, 0.5).unwrap();
        let st = OxygenStepper::new(&g, &bd).unwrap();
        let u = rotating(&g, 1.0);
        let n = ScalarField::from_fn(&g, |x, y| 3.0 * (-(x - 0.5).powi(2) - (y - 0.3).powi(2)).exp());
        let dt = advective_dt_limit(&g, &u);
        let a = st.step_matrix(&g, &n, &u, dt).unwrap();
        assert!(a.is_m_matrix(1e-12));
        let mut c = ScalarField::from_fn(&g, |x, _| 0.2 + x);
        let bound = bd.gamma_max().max(c.max());
        for _ in 0..30 {
            c = st.step(&g, &c, &n, &u, &OxygenStepParams::new(dt)).unwrap().0;
            assert!(c.min() >= 0.0);
            assert!(c.max() <= bound + 1e-10);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = square(8);
        let bd = BoundaryData::uniform(&g, 1.0, 1.0).unwrap();
        let u = rotating(&g, 10.0);
        let c = ScalarField::constant(&g, 1.0);
        let n = ScalarField::zeros(&g);
        let err = step_oxygen(&g, &bd, &c, &n, &u, &OxygenStepParams::new(1.0)).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }
}
