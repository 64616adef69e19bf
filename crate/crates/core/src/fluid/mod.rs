//! Incompressible Navier-Stokes on the MAC grid with no-slip walls and the
//! buoyancy force `-n grad phi`.
//!
//! Projection mode, one step:
//! 1. explicit conservative upwind convection,
//! 2. backward-Euler viscous solve `(I + dt mu K) u = .`,
//! 3. add `-dt n_f grad phi`,
//! 4. pressure projection onto discretely divergence-free fields.
//!
//! Every stage is an L2 contraction except the force, which gives the exact
//! per-step bound `|u_new|^2 - |u|^2 <= -2 dt <n grad phi, u_new>`.
//!
//! Galerkin mode evolves the coefficients of `u` in a [`StokesBasis`].

mod stokes;

pub use stokes::{build_stokes_basis, leray_project, load_basis, save_basis, stokes_dimension, StokesBasis};

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::field::{FaceField, ScalarField, VectorField};
use crate::geometry::{Axis, Grid};
use crate::linalg::{conjugate_gradient, BandedLu, CsrMatrix, SolverOptions};
use crate::ops::{divergence, gradient, neumann_laplacian, Closure};

/// Where a MAC face sits relative to the masked domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FaceKind {
    /// Unknown; index into the velocity DOF vector.
    Dof(usize),
    /// On the boundary; velocity is zero.
    Wall,
    /// Between two exterior cells or beyond the grid.
    Outside,
}

/// Velocity DOFs are the interior faces, in the order of
/// [`Grid::interior_faces`].
#[derive(Debug, Clone)]
pub(crate) struct MacLayout {
    pub x: Vec<FaceKind>,
    pub y: Vec<FaceKind>,
    pub dofs: Vec<(Axis, usize)>,
}

impl MacLayout {
    pub fn new(grid: &Grid) -> Self {
        let mut x = vec![FaceKind::Outside; grid.n_xfaces()];
        let mut y = vec![FaceKind::Outside; grid.n_yfaces()];
        for face in grid.boundary_faces() {
            match face.side.axis() {
                Axis::X => x[face.mac_index] = FaceKind::Wall,
                Axis::Y => y[face.mac_index] = FaceKind::Wall,
            }
        }
        let mut dofs = Vec::with_capacity(grid.interior_faces().len());
        for (d, face) in grid.interior_faces().iter().enumerate() {
            match face.axis {
                Axis::X => x[face.mac_index] = FaceKind::Dof(d),
                Axis::Y => y[face.mac_index] = FaceKind::Dof(d),
            }
            dofs.push((face.axis, face.mac_index));
        }
        Self { x, y, dofs }
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    fn kind(&self, axis: Axis, mac: usize) -> FaceKind {
        match axis {
            Axis::X => self.x[mac],
            Axis::Y => self.y[mac],
        }
    }

    pub fn gather(&self, v: &VectorField) -> Vec<f64> {
        self.dofs.iter().map(|&(a, m)| v.component(a)[m]).collect()
    }

    pub fn scatter(&self, grid: &Grid, d: &[f64]) -> VectorField {
        let mut v = VectorField::zeros(grid);
        for (&(a, m), &val) in self.dofs.iter().zip(d) {
            v.component_mut(a)[m] = val;
        }
        v
    }
}

/// Lattice position `(i, j)` of a MAC face index.
fn face_ij(grid: &Grid, axis: Axis, mac: usize) -> (usize, usize) {
    match axis {
        Axis::X => (mac % (grid.nx + 1), mac / (grid.nx + 1)),
        Axis::Y => (mac % grid.nx, mac / grid.nx),
    }
}

fn mac_at(grid: &Grid, axis: Axis, i: isize, j: isize) -> Option<usize> {
    let (ni, nj) = match axis {
        Axis::X => (grid.nx + 1, grid.ny),
        Axis::Y => (grid.nx, grid.ny + 1),
    };
    if i < 0 || j < 0 || i as usize >= ni || j as usize >= nj {
        return None;
    }
    Some(match axis {
        Axis::X => grid.xface(i as usize, j as usize),
        Axis::Y => grid.yface(i as usize, j as usize),
    })
}

/// Positive viscous operator `K ~ -Laplacian` on the velocity DOFs.
///
/// Along the face normal a wall neighbor is a zero value one cell away.
/// Across a tangential wall half a cell away the ghost value is `-u`.
pub fn viscous_operator(grid: &Grid) -> CsrMatrix {
    let layout = MacLayout::new(grid);
    let mut t = Vec::new();
    for (d, &(axis, mac)) in layout.dofs.iter().enumerate() {
        let (i, j) = face_ij(grid, axis, mac);
        let (i, j) = (i as isize, j as isize);
        let mut diag = 0.0;
        let dirs: &[(isize, isize, bool)] = if grid.dim == 1 {
            &[(-1, 0, true), (1, 0, true)]
        } else {
            &[(-1, 0, true), (1, 0, true), (0, -1, false), (0, 1, false)]
        };
        for &(di, dj, along_x) in dirs {
            let h = if along_x { grid.dx } else { grid.dy };
            let w = 1.0 / (h * h);
            let normal = (axis == Axis::X) == along_x;
            let kind = mac_at(grid, axis, i + di, j + dj).map_or(FaceKind::Outside, |m| layout.kind(axis, m));
            match kind {
                FaceKind::Dof(e) => {
                    diag += w;
                    t.push((d, e, -w));
                }
                FaceKind::Wall => diag += w,
                // a normal neighbor always exists; a missing tangential one is a wall
                FaceKind::Outside => diag += if normal { w } else { 2.0 * w },
            }
        }
        t.push((d, d, diag));
    }
    CsrMatrix::from_triplets(layout.n_dofs(), layout.n_dofs(), &t)
}

/// Convection tendency `-div(u (x) u)` on interior faces: conservative
/// upwind fluxes on the face-centered control volumes, with transport
/// velocities averaged from the two adjacent faces.
pub fn convection(grid: &Grid, u: &VectorField) -> Result<VectorField> {
    u.check(grid)?;
    let mut out = VectorField::zeros(grid);
    let get = |axis: Axis, i: isize, j: isize| mac_at(grid, axis, i, j).map_or(0.0, |m| u.component(axis)[m]);
    for face in grid.interior_faces() {
        let (i, j) = face_ij(grid, face.axis, face.mac_index);
        let (i, j) = (i as isize, j as isize);
        let me = u.component(face.axis)[face.mac_index];
        let flux = |vel: f64, inner: f64, outer: f64| vel * if vel > 0.0 { inner } else { outer };
        let tend = match face.axis {
            Axis::X => {
                let ue = 0.5 * (me + get(Axis::X, i + 1, j));
                let uw = 0.5 * (get(Axis::X, i - 1, j) + me);
                let vn = 0.5 * (get(Axis::Y, i - 1, j + 1) + get(Axis::Y, i, j + 1));
                let vs = 0.5 * (get(Axis::Y, i - 1, j) + get(Axis::Y, i, j));
                let fe = flux(ue, me, get(Axis::X, i + 1, j));
                let fw = flux(uw, get(Axis::X, i - 1, j), me);
                let fnn = flux(vn, me, get(Axis::X, i, j + 1));
                let fs = flux(vs, get(Axis::X, i, j - 1), me);
                (fe - fw) / grid.dx + (fnn - fs) / grid.dy
            }
            Axis::Y => {
                let vn = 0.5 * (me + get(Axis::Y, i, j + 1));
                let vs = 0.5 * (get(Axis::Y, i, j - 1) + me);
                let ue = 0.5 * (get(Axis::X, i + 1, j - 1) + get(Axis::X, i + 1, j));
                let uw = 0.5 * (get(Axis::X, i, j - 1) + get(Axis::X, i, j));
                let fnn = flux(vn, me, get(Axis::Y, i, j + 1));
                let fs = flux(vs, get(Axis::Y, i, j - 1), me);
                let fe = flux(ue, me, get(Axis::Y, i + 1, j));
                let fw = flux(uw, get(Axis::Y, i - 1, j), me);
                (fe - fw) / grid.dx + (fnn - fs) / grid.dy
            }
        };
        out.component_mut(face.axis)[face.mac_index] = -tend;
    }
    Ok(out)
}

/// Largest `dt` keeping the explicit convection a convex combination:
/// `1 / max` over face control volumes of the total outflow rate.
pub fn convection_dt_limit(grid: &Grid, u: &VectorField) -> f64 {
    let get = |axis: Axis, i: isize, j: isize| mac_at(grid, axis, i, j).map_or(0.0, |m| u.component(axis)[m]);
    let mut rate: f64 = 0.0;
    for face in grid.interior_faces() {
        let (i, j) = face_ij(grid, face.axis, face.mac_index);
        let (i, j) = (i as isize, j as isize);
        let me = u.component(face.axis)[face.mac_index];
        let (e, w, n, s) = match face.axis {
            Axis::X => (
                0.5 * (me + get(Axis::X, i + 1, j)),
                0.5 * (get(Axis::X, i - 1, j) + me),
                0.5 * (get(Axis::Y, i - 1, j + 1) + get(Axis::Y, i, j + 1)),
                0.5 * (get(Axis::Y, i - 1, j) + get(Axis::Y, i, j)),
            ),
            Axis::Y => (
                0.5 * (get(Axis::X, i + 1, j - 1) + get(Axis::X, i + 1, j)),
                0.5 * (get(Axis::X, i, j - 1) + get(Axis::X, i, j)),
                0.5 * (me + get(Axis::Y, i, j + 1)),
                0.5 * (get(Axis::Y, i, j - 1) + me),
            ),
        };
        let out = e.max(0.0) / grid.dx + (-w).max(0.0) / grid.dx + n.max(0.0) / grid.dy + (-s).max(0.0) / grid.dy;
        rate = rate.max(out);
    }
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Factored Neumann Poisson problem `-L p = rhs`, gauge-fixed to zero mean.
#[derive(Debug, Clone)]
pub struct PressureSolver {
    lu: BandedLu,
    minus_lap: CsrMatrix,
}

impl PressureSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let minus_lap = neumann_laplacian(grid).scaled(-1.0);
        // pin cell 0; for compatible data its equation is implied by the rest
        let n = grid.n_cells();
        let mut t: Vec<(usize, usize, f64)> = (1..n)
            .flat_map(|r| minus_lap.row(r).map(move |(c, v)| (r, c, v)))
            .collect();
        t.push((0, 0, 1.0));
        let lu = BandedLu::factor(&CsrMatrix::from_triplets(n, n, &t))?;
        Ok(Self { lu, minus_lap })
    }

    pub fn solve(&self, grid: &Grid, rhs: &[f64], tol: f64) -> Result<ScalarField> {
        check_len(grid.n_cells(), rhs.len())?;
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>();
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        if (mean * rhs.len() as f64).abs() > 1e-9 * scale {
            return Err(Error::IncompatibleRhs { mean });
        }
        self.solve_compatible(rhs, tol)
    }

    /// Solve after removing the mean of `rhs` unconditionally.
    fn solve_compatible(&self, rhs: &[f64], tol: f64) -> Result<ScalarField> {
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        let b: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
        let mut p = b.clone();
        p[0] = 0.0;
        self.lu.solve_in_place(&mut p);
        // one step of iterative refinement
        let ap = self.minus_lap.mul_vec(&p);
        let mut r: Vec<f64> = b.iter().zip(&ap).map(|(x, y)| x - y).collect();
        r[0] = 0.0;
        self.lu.solve_in_place(&mut r);
        for (x, d) in p.iter_mut().zip(&r) {
            *x += d;
        }
        let pm = p.iter().sum::<f64>() / p.len() as f64;
        p.iter_mut().for_each(|x| *x -= pm);

        let ap = self.minus_lap.mul_vec(&p);
        let res = b.iter().zip(&ap).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if res > tol * bn.max(1e-300) && res > 1e-14 {
            return Err(Error::SolverDiverged {
                iterations: 1,
                residual: res,
            });
        }
        Ok(ScalarField::new(p))
    }

    /// Discrete Leray projection: `u - grad p` with `L p = div u`.
    /// Returns the projected field and `p`.
    pub fn project(&self, grid: &Grid, u: &VectorField) -> Result<(VectorField, ScalarField)> {
        u.check(grid)?;
        // telescoping fluxes: the mean of the divergence is round-off
        let rhs: Vec<f64> = divergence(grid, u).iter().map(|d| -d).collect();
        let p = self.solve_compatible(&rhs, 1e-10)?;
        let g = gradient(grid, &p, Closure::ZeroFlux)?;
        let mut out = u.clone();
        out.axpy(-1.0, &g);
        Ok((out, p))
    }
}

/// Solves `-L p = rhs` with homogeneous Neumann data and zero mean.
pub fn pressure_poisson(grid: &Grid, rhs: &ScalarField) -> Result<ScalarField> {
    rhs.check(grid)?;
    PressureSolver::new(grid)?.solve(grid, rhs.values(), 1e-10)
}

/// Maximum absolute cell divergence.
pub fn max_divergence(grid: &Grid, u: &VectorField) -> f64 {
    divergence(grid, u).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidMode {
    Projection,
    /// Evolve the first `m` Stokes modes.
    Galerkin {
        m: usize,
    },
}

#[derive(Debug, Clone)]
pub struct FluidParams {
    pub mu: f64,
    pub dt: f64,
    /// Gravitational potential, cell-centered.
    pub phi: ScalarField,
    pub mode: FluidMode,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct FluidStepOutput {
    pub u: VectorField,
    /// Pressure `p / dt` from the projection; zero in Galerkin mode.
    pub pressure: ScalarField,
    pub viscous_iterations: usize,
}

/// Holds the factored operators for fixed `mu`, `dt`, `phi`.
#[derive(Debug, Clone)]
pub struct FluidStepper {
    params: FluidParams,
    layout: MacLayout,
    viscous: CsrMatrix,
    pressure: PressureSolver,
    grad_phi: FaceField,
    basis: Option<Arc<StokesBasis>>,
}

impl FluidStepper {
    pub fn new(grid: &Grid, params: FluidParams) -> Result<Self> {
        if !(params.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu = {} must be positive", params.mu)));
        }
        if !(params.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", params.dt)));
        }
        params.phi.check(grid)?;
        if let FluidMode::Galerkin { .. } = params.mode {
            return Err(Error::InvalidParameter(
                "Galerkin mode needs a basis; use with_basis".into(),
            ));
        }
        Self::build(grid, params, None)
    }

    /// Galerkin stepper over the first `m` modes of `basis`.
    pub fn with_basis(grid: &Grid, mut params: FluidParams, basis: Arc<StokesBasis>, m: usize) -> Result<Self> {
        if m == 0 || m > basis.len() {
            return Err(Error::InvalidParameter(format!("m = {m} outside 1..={}", basis.len())));
        }
        basis.check_grid(grid)?;
        params.mode = FluidMode::Galerkin { m };
        if !(params.mu > 0.0 && params.dt > 0.0) {
            return Err(Error::InvalidParameter("mu and dt must be positive".into()));
        }
        params.phi.check(grid)?;
        Self::build(grid, params, Some(basis))
    }

    fn build(grid: &Grid, params: FluidParams, basis: Option<Arc<StokesBasis>>) -> Result<Self> {
        let layout = MacLayout::new(grid);
        let k = viscous_operator(grid);
        let viscous = CsrMatrix::identity(layout.n_dofs()).add_scaled(1.0, &k, params.dt * params.mu);
        let pressure = PressureSolver::new(grid)?;
        let grad_phi = gradient(grid, &params.phi, Closure::ZeroFlux)?;
        Ok(Self {
            params,
            layout,
            viscous,
            pressure,
            grad_phi,
            basis,
        })
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn pressure_solver(&self) -> &PressureSolver {
        &self.pressure
    }

    /// Buoyancy face field `n_f grad phi` with `n_f` the face average.
    pub fn buoyancy(&self, grid: &Grid, n: &ScalarField) -> Result<FaceField> {
        n.check(grid)?;
        let nv = n.values();
        let mut f = VectorField::zeros(grid);
        for face in grid.interior_faces() {
            let nf = 0.5 * (nv[face.lower] + nv[face.upper]);
            f.component_mut(face.axis)[face.mac_index] = nf * self.grad_phi.component(face.axis)[face.mac_index];
        }
        Ok(f)
    }

    pub fn step(&self, grid: &Grid, u: &VectorField, n: &ScalarField) -> Result<FluidStepOutput> {
        u.check(grid)?;
        let dt = self.params.dt;
        let limit = convection_dt_limit(grid, u);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let conv = convection(grid, u)?;
        let force = self.buoyancy(grid, n)?;
        match self.params.mode {
            FluidMode::Projection => {
                let mut u1 = u.clone();
                u1.axpy(dt, &conv);
                let b = self.layout.gather(&u1);
                let mut x = b.clone();
                let stats = conjugate_gradient(&self.viscous, &b, &mut x, self.params.solver)?;
                let mut u2 = self.layout.scatter(grid, &x);
                u2.axpy(-dt, &force);
                let (u_new, p) = self.pressure.project(grid, &u2)?;
                Ok(FluidStepOutput {
                    u: u_new,
                    pressure: p.map(|v| v / dt),
                    viscous_iterations: stats.iterations,
                })
            }
            FluidMode::Galerkin { m } => {
                let basis = self.basis.as_ref().expect("Galerkin stepper has a basis");
                let a = basis.coefficients(grid, u, m)?;
                let cn = basis.coefficients(grid, &conv, m)?;
                let cf = basis.coefficients(grid, &force, m)?;
                let mu = self.params.mu;
                let a_new: Vec<f64> = (0..m)
                    .map(|k| (a[k] + dt * cn[k]) / (1.0 + dt * mu * basis.eigenvalues()[k]) - dt * cf[k])
                    .collect();
                Ok(FluidStepOutput {
                    u: basis.synthesize(grid, &a_new)?,
                    pressure: ScalarField::zeros(grid),
                    viscous_iterations: 0,
                })
            }
        }
    }
}

/// Slowest relative decay rate of the unforced linear step
/// `P (I + dt mu K)^-1`: power iteration converges to the ground Stokes
/// mode and the rate is `-ln(|u_{k+1}| / |u_k|) / dt`.
pub fn measure_decay_rate(grid: &Grid, mu: f64, dt: f64) -> Result<f64> {
    let params = FluidParams {
        mu,
        dt,
        phi: ScalarField::zeros(grid),
        mode: FluidMode::Projection,
        solver: SolverOptions::default(),
    };
    let st = FluidStepper::new(grid, params)?;
    // smooth start with a component along the ground mode
    let seed = ScalarField::from_fn(grid, |x, y| (x * 3.1).sin() * (y * 2.3).cos() + x * y);
    let mut u = st.pressure.project(grid, &gradient_perp(grid, &seed))?.0;
    if u.norm_sq(grid) == 0.0 {
        return Err(Error::Eigen("no divergence-free field on this grid".into()));
    }
    let mut rate = f64::NAN;
    for _ in 0..500 {
        let norm0 = u.norm_sq(grid).sqrt();
        u.scale(1.0 / norm0);
        let b = st.layout.gather(&u);
        let mut x = b.clone();
        conjugate_gradient(&st.viscous, &b, &mut x, st.params.solver)?;
        u = st.pressure.project(grid, &st.layout.scatter(grid, &x))?.0;
        let next = -u.norm_sq(grid).sqrt().ln() / dt;
        if (next - rate).abs() <= 1e-10 * next.abs() {
            return Ok(next);
        }
        rate = next;
    }
    Ok(rate)
}

/// Face field `(d_y f, -d_x f)` from a cell field, a cheap non-gradient seed.
fn gradient_perp(grid: &Grid, f: &ScalarField) -> VectorField {
    let cg = crate::ops::cell_gradient(grid, f.values());
    let mut v = VectorField::zeros(grid);
    for face in grid.interior_faces() {
        let (a, b) = (cg[face.lower], cg[face.upper]);
        v.component_mut(face.axis)[face.mac_index] = match face.axis {
            Axis::X => 0.5 * (a.1 + b.1),
            Axis::Y => -0.5 * (a.0 + b.0),
        };
    }
    v
}
