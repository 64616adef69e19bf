//! Discrete differential operators on cell and face fields.
//!
//! All operators are finite-volume on the masked grid: fluxes live on faces,
//! and a cell's divergence is the sum of its face fluxes times face area over
//! the cell volume. Boundary fluxes come from a [`Closure`].

use crate::error::{Error, Result};
use crate::field::{FaceField, ScalarField, VectorField};
use crate::geometry::{Axis, BoundaryData, Grid, Side};
use crate::linalg::CsrMatrix;

/// Boundary closure used when a face gradient is needed on the boundary.
#[derive(Debug, Clone, Copy)]
pub enum Closure<'a> {
    /// Homogeneous Neumann: zero normal derivative. For `n` this is the
    /// zero-total-flux condition once the drift flux is also zeroed.
    ZeroFlux,
    /// `d_nu c = kappa (gamma - c)` with the half-cell face value.
    Robin(&'a BoundaryData),
}

/// Floor used before taking logs or dividing by a concentration.
pub fn diagnostics_floor(c0_max: f64) -> f64 {
    1e-12 * c0_max.max(1.0)
}

/// Effective face transfer coefficient of the half-cell Robin closure:
/// eliminating the face value from `c_f = c_P + h/2 * kappa (gamma - c_f)`
/// gives the outward derivative `kappa / (1 + kappa h / 2) * (gamma - c_P)`.
pub fn robin_coefficient(kappa: f64, half_spacing_times_two: f64) -> f64 {
    kappa / (1.0 + 0.5 * kappa * half_spacing_times_two)
}

fn face_spacing(grid: &Grid, side: Side) -> f64 {
    match side.axis() {
        Axis::X => grid.dx,
        Axis::Y => grid.dy,
    }
}

/// Outward normal derivative `kappa' (gamma - c_cell)` on each boundary face.
pub fn robin_boundary_flux(grid: &Grid, bdata: &BoundaryData, c: &ScalarField) -> Result<Vec<f64>> {
    c.check(grid)?;
    Ok(grid
        .boundary_faces()
        .iter()
        .enumerate()
        .map(|(f, face)| {
            let k = robin_coefficient(bdata.kappa[f], face_spacing(grid, face.side));
            k * (bdata.gamma[f] - c.values()[face.cell])
        })
        .collect())
}

/// Face gradient: compact differences on interior faces, closure values on
/// boundary faces, zero elsewhere.
pub fn gradient(grid: &Grid, f: &ScalarField, closure: Closure<'_>) -> Result<FaceField> {
    f.check(grid)?;
    let v = f.values();
    let mut g = VectorField::zeros(grid);
    for face in grid.interior_faces() {
        g.component_mut(face.axis)[face.mac_index] = (v[face.upper] - v[face.lower]) / face.spacing;
    }
    if let Closure::Robin(bdata) = closure {
        let flux = robin_boundary_flux(grid, bdata, f)?;
        for (face, dn) in grid.boundary_faces().iter().zip(flux) {
            g.component_mut(face.side.axis())[face.mac_index] = dn * face.side.sign();
        }
    }
    Ok(g)
}

fn axis_sides(axis: Axis) -> (Side, Side) {
    match axis {
        Axis::X => (Side::West, Side::East),
        Axis::Y => (Side::South, Side::North),
    }
}

fn spacing(grid: &Grid, axis: Axis) -> f64 {
    match axis {
        Axis::X => grid.dx,
        Axis::Y => grid.dy,
    }
}

/// First derivative of cell data along `axis` at cell `k`: centered when both
/// neighbors exist, one-sided otherwise (second order when two cells are
/// available), zero for an isolated column.
fn cell_derivative(grid: &Grid, v: &[f64], k: usize, axis: Axis) -> f64 {
    if grid.dim == 1 && axis == Axis::Y {
        return 0.0;
    }
    let h = spacing(grid, axis);
    let (lo, hi) = axis_sides(axis);
    match (grid.neighbor(k, lo), grid.neighbor(k, hi)) {
        (Some(a), Some(b)) => (v[b] - v[a]) / (2.0 * h),
        (None, Some(b)) => match grid.neighbor(b, hi) {
            Some(bb) => (4.0 * (v[b] - v[k]) - (v[bb] - v[k])) / (2.0 * h),
            None => (v[b] - v[k]) / h,
        },
        (Some(a), None) => match grid.neighbor(a, lo) {
            Some(aa) => (4.0 * (v[k] - v[a]) - (v[k] - v[aa])) / (2.0 * h),
            None => (v[k] - v[a]) / h,
        },
        (None, None) => 0.0,
    }
}

/// Cell-centered gradient by centered differences (one-sided at the
/// boundary). Used for quadrature of gradient integrals.
pub fn cell_gradient(grid: &Grid, f: &[f64]) -> Vec<(f64, f64)> {
    (0..grid.n_cells())
        .map(|k| {
            (
                cell_derivative(grid, f, k, Axis::X),
                cell_derivative(grid, f, k, Axis::Y),
            )
        })
        .collect()
}

fn second_derivative(grid: &Grid, v: &[f64], k: usize, axis: Axis) -> f64 {
    if grid.dim == 1 && axis == Axis::Y {
        return 0.0;
    }
    let h = spacing(grid, axis);
    let (lo, hi) = axis_sides(axis);
    // the four-point one-sided stencil keeps boundary rows second order
    let one_sided = |dir: Side| -> f64 {
        let b = grid.neighbor(k, dir);
        let bb = b.and_then(|b| grid.neighbor(b, dir));
        let bbb = bb.and_then(|bb| grid.neighbor(bb, dir));
        match (b, bb, bbb) {
            (Some(b), Some(bb), Some(bbb)) => (2.0 * (v[k] - v[b]) - 3.0 * (v[b] - v[bb]) + (v[bb] - v[bbb])) / (h * h),
            (Some(b), Some(bb), None) => (v[k] - 2.0 * v[b] + v[bb]) / (h * h),
            _ => 0.0,
        }
    };
    match (grid.neighbor(k, lo), grid.neighbor(k, hi)) {
        (Some(a), Some(b)) => (v[a] - 2.0 * v[k] + v[b]) / (h * h),
        (None, Some(_)) => one_sided(hi),
        (Some(_), None) => one_sided(lo),
        (None, None) => 0.0,
    }
}

/// Symmetric 2x2 tensor `[xx, xy, yy]` per cell.
pub type Sym2 = [f64; 3];

/// Hessian of `log(max(c, floor))` by centered second differences; the
/// boundary rows use one-sided stencils of the same order.
pub fn hessian_log(grid: &Grid, c: &ScalarField, floor: f64) -> Result<Vec<Sym2>> {
    c.check(grid)?;
    let logc: Vec<f64> = c.values().iter().map(|&v| v.max(floor).ln()).collect();
    Ok(hessian(grid, &logc))
}

pub(crate) fn hessian(grid: &Grid, f: &[f64]) -> Vec<Sym2> {
    let gx: Vec<f64> = (0..grid.n_cells())
        .map(|k| cell_derivative(grid, f, k, Axis::X))
        .collect();
    let gy: Vec<f64> = (0..grid.n_cells())
        .map(|k| cell_derivative(grid, f, k, Axis::Y))
        .collect();
    (0..grid.n_cells())
        .map(|k| {
            let xx = second_derivative(grid, f, k, Axis::X);
            let yy = second_derivative(grid, f, k, Axis::Y);
            let xy = 0.5 * (cell_derivative(grid, &gx, k, Axis::Y) + cell_derivative(grid, &gy, k, Axis::X));
            [xx, xy, yy]
        })
        .collect()
}

/// Frobenius norm squared of a symmetric tensor.
pub fn frobenius_sq(h: &Sym2) -> f64 {
    h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2]
}

/// Neumann (zero-flux) Laplacian over interior cells. Symmetric, row sums 0.
pub fn neumann_laplacian(grid: &Grid) -> CsrMatrix {
    let v = grid.cell_volume();
    let mut t = Vec::with_capacity(5 * grid.n_cells());
    for face in grid.interior_faces() {
        let w = face.area / (face.spacing * v);
        t.push((face.lower, face.lower, -w));
        t.push((face.upper, face.upper, -w));
        t.push((face.lower, face.upper, w));
        t.push((face.upper, face.lower, w));
    }
    // keep isolated cells on the diagonal pattern
    t.extend((0..grid.n_cells()).map(|k| (k, k, 0.0)));
    CsrMatrix::from_triplets(grid.n_cells(), grid.n_cells(), &t)
}

/// `L c + source ~ Laplacian(c)` with the Robin flux on boundary faces.
#[derive(Debug, Clone)]
pub struct RobinOperator {
    pub matrix: CsrMatrix,
    pub source: Vec<f64>,
}

impl RobinOperator {
    pub fn apply(&self, c: &ScalarField) -> Vec<f64> {
        let mut out = self.matrix.mul_vec(c.values());
        for (o, s) in out.iter_mut().zip(&self.source) {
            *o += s;
        }
        out
    }
}

pub fn assemble_robin_laplacian(grid: &Grid, bdata: &BoundaryData) -> Result<RobinOperator> {
    if let Some(k) = bdata.kappa.iter().find(|&&k| k < 0.0) {
        return Err(Error::InvalidParameter(format!("negative kappa {k}")));
    }
    let v = grid.cell_volume();
    let mut diag = vec![0.0; grid.n_cells()];
    let mut source = vec![0.0; grid.n_cells()];
    for (f, face) in grid.boundary_faces().iter().enumerate() {
        let k = robin_coefficient(bdata.kappa[f], face_spacing(grid, face.side));
        diag[face.cell] -= k * face.area / v;
        source[face.cell] += k * bdata.gamma[f] * face.area / v;
    }
    let matrix = neumann_laplacian(grid).add_diagonal(&diag);
    Ok(RobinOperator { matrix, source })
}

fn check_boundary_velocity(grid: &Grid, v: &VectorField) -> Result<()> {
    let tol = 1e-10 * v.max_abs().max(1.0);
    for face in grid.boundary_faces() {
        let value = v.component(face.side.axis())[face.mac_index];
        if value.abs() > tol {
            return Err(Error::BoundaryVelocity { value });
        }
    }
    Ok(())
}

/// Upwind matrix `A` with `A f = div(v f)`; off-diagonals are non-positive.
pub fn advection_matrix(grid: &Grid, v: &VectorField) -> Result<CsrMatrix> {
    v.check(grid)?;
    check_boundary_velocity(grid, v)?;
    let vol = grid.cell_volume();
    let mut t = Vec::with_capacity(4 * grid.interior_faces().len() + grid.n_cells());
    for face in grid.interior_faces() {
        let w = v.component(face.axis)[face.mac_index] * face.area / vol;
        if w > 0.0 {
            t.push((face.lower, face.lower, w));
            t.push((face.upper, face.lower, -w));
        } else if w < 0.0 {
            t.push((face.lower, face.upper, w));
            t.push((face.upper, face.upper, -w));
        }
    }
    t.extend((0..grid.n_cells()).map(|k| (k, k, 0.0)));
    Ok(CsrMatrix::from_triplets(grid.n_cells(), grid.n_cells(), &t))
}

/// Upwind tendency `-div(v f)`; telescoping, so it integrates to zero.
pub fn advect_upwind(grid: &Grid, f: &ScalarField, v: &VectorField) -> Result<ScalarField> {
    f.check(grid)?;
    v.check(grid)?;
    check_boundary_velocity(grid, v)?;
    let vol = grid.cell_volume();
    let fv = f.values();
    let mut out = vec![0.0; grid.n_cells()];
    for face in grid.interior_faces() {
        let w = v.component(face.axis)[face.mac_index];
        let up = if w > 0.0 { fv[face.lower] } else { fv[face.upper] };
        let flux = w * up * face.area / vol;
        out[face.lower] -= flux;
        out[face.upper] += flux;
    }
    Ok(ScalarField::new(out))
}

/// Largest outflow rate `sum_out |w| area / vol` over cells; the explicit
/// upwind update is a convex combination when `dt * rate <= 1`.
pub fn max_outflow_rate(grid: &Grid, v: &VectorField) -> f64 {
    let vol = grid.cell_volume();
    let mut out = vec![0.0; grid.n_cells()];
    for face in grid.interior_faces() {
        let w = v.component(face.axis)[face.mac_index] * face.area / vol;
        if w > 0.0 {
            out[face.lower] += w;
        } else {
            out[face.upper] -= w;
        }
    }
    out.into_iter().fold(0.0, f64::max)
}

/// Tangential derivative of the boundary-cell values along each flat
/// boundary segment, per boundary face. Centered inside a segment, one-sided
/// at its ends (corner faces take the inner one-sided value), zero for a
/// segment of a single face. The component is along `+e_y` for x-faces and
/// `+e_x` for y-faces.
pub fn tangential_gradient_boundary(grid: &Grid, f: &ScalarField) -> Result<Vec<f64>> {
    f.check(grid)?;
    let v = f.values();
    let faces = grid.boundary_faces();
    if grid.dim == 1 {
        return Ok(vec![0.0; faces.len()]);
    }
    let same_side_face = |k: usize, side: Side| grid.neighbor(k, side).is_none();
    Ok(faces
        .iter()
        .map(|face| {
            let tangent = match face.side.axis() {
                Axis::X => Axis::Y,
                Axis::Y => Axis::X,
            };
            let (lo, hi) = axis_sides(tangent);
            let h = spacing(grid, tangent);
            let prev = grid.neighbor(face.cell, lo).filter(|&nb| same_side_face(nb, face.side));
            let next = grid.neighbor(face.cell, hi).filter(|&nb| same_side_face(nb, face.side));
            match (prev, next) {
                (Some(a), Some(b)) => (v[b] - v[a]) / (2.0 * h),
                (None, Some(b)) => (v[b] - v[face.cell]) / h,
                (Some(a), None) => (v[face.cell] - v[a]) / h,
                (None, None) => 0.0,
            }
        })
        .collect())
}

/// `(sum |f|^p dx dy)^(1/p)`, or `max |f|` for `p = inf`.
pub fn lp_norm(grid: &Grid, f: &ScalarField, p: f64) -> Result<f64> {
    f.check(grid)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("L^p exponent {p} < 1")));
    }
    if p.is_infinite() {
        return Ok(f.values().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * grid.cell_volume();
    Ok(s.powf(1.0 / p))
}

/// Zeroes round-off negatives left by an iterative solve, taking the
/// removed mass proportionally from the positive entries so the sum is kept.
/// Fails if a value is more negative than `1e-9 * max(1, scale)`.
pub fn clamp_roundoff_negatives(values: &mut [f64], scale: f64, field: &'static str) -> Result<()> {
    let tol = 1e-9 * scale.max(1.0);
    let mut deficit = 0.0;
    for v in values.iter() {
        if *v < -tol {
            return Err(Error::Negative { field, value: *v });
        }
        if *v < 0.0 {
            deficit -= *v;
        }
    }
    if deficit == 0.0 {
        return Ok(());
    }
    let positive: f64 = values.iter().filter(|v| **v > 0.0).sum();
    let factor = if positive > deficit {
        1.0 - deficit / positive
    } else {
        0.0
    };
    for v in values.iter_mut() {
        *v = if *v < 0.0 { 0.0 } else { *v * factor };
    }
    Ok(())
}

/// Discrete divergence of a face field, per interior cell. Boundary faces
/// contribute their stored values.
pub fn divergence(grid: &Grid, v: &VectorField) -> Vec<f64> {
    let vol = grid.cell_volume();
    let mut out = vec![0.0; grid.n_cells()];
    for face in grid.interior_faces() {
        let flux = v.component(face.axis)[face.mac_index] * face.area / vol;
        out[face.lower] += flux;
        out[face.upper] -= flux;
    }
    for face in grid.boundary_faces() {
        let w = v.component(face.side.axis())[face.mac_index];
        out[face.cell] += face.side.sign() * w * face.area / vol;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, integrate_boundary, integrate_volume, DomainSpec};
    use crate::linalg::{bicgstab, conjugate_gradient, SolverOptions};
    use proptest::prelude::*;

    fn square(n: usize) -> Grid {
        build_grid(&DomainSpec::unit_square(n)).unwrap()
    }

    fn swirl(grid: &Grid) -> VectorField {
        // curl of a node stream function vanishing on the boundary: discretely
        // divergence-free and zero on walls
        let psi = |x: f64, y: f64| (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2);
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
    fn gradient_of_constant_and_linear() {
        let g = square(16);
        let grad = gradient(&g, &ScalarField::constant(&g, 3.0), Closure::ZeroFlux).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
        let grad = gradient(&g, &ScalarField::from_fn(&g, |x, _| x), Closure::ZeroFlux).unwrap();
        for face in g.interior_faces() {
            let (gx, gy) = match face.axis {
                Axis::X => (grad.ux[face.mac_index], 0.0),
                Axis::Y => (0.0, grad.uy[face.mac_index]),
            };
            match face.axis {
                Axis::X => assert!((gx - 1.0).abs() < 1e-12),
                Axis::Y => assert!(gy.abs() < 1e-14),
            }
        }
    }

    #[test]
    fn robin_laplacian_neumann_limit() {
        let g = build_grid(&DomainSpec::l_shape(8, 8, 1.0, 1.0)).unwrap();
        let bd = BoundaryData::uniform(&g, 0.0, 1.0).unwrap();
        let op = assemble_robin_laplacian(&g, &bd).unwrap();
        assert!(op.source.iter().all(|&s| s == 0.0));
        assert!(op.matrix.row_sums().iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn robin_laplacian_equilibrium_and_negative_kappa() {
        let g = square(8);
        let bd = BoundaryData::uniform(&g, 2.5, 1.7).unwrap();
        let op = assemble_robin_laplacian(&g, &bd).unwrap();
        let r = op.apply(&ScalarField::constant(&g, 1.7));
        assert!(r.iter().all(|v| v.abs() < 1e-10));

        let mut bad = bd.clone();
        bad.kappa[0] = -1.0;
        assert!(assemble_robin_laplacian(&g, &bad).is_err());
    }

    #[test]
    fn robin_steady_state_1d_is_constant() {
        let g = build_grid(&DomainSpec::interval(32, 1.0)).unwrap();
        let bd = BoundaryData::uniform(&g, 1.0, 1.0).unwrap();
        let op = assemble_robin_laplacian(&g, &bd).unwrap();
        // -L c = s
        let neg = op.matrix.scaled(-1.0);
        let mut c = vec![0.0; g.n_cells()];
        conjugate_gradient(&neg, &op.source, &mut c, SolverOptions::default()).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn robin_discrete_divergence_theorem() {
        let g = build_grid(&DomainSpec::l_shape(10, 10, 1.0, 1.0)).unwrap();
        let bd = BoundaryData::from_fns(&g, |x, _, _| 1.0 + x, |_, y| 1.0 + y, 1.0).unwrap();
        let op = assemble_robin_laplacian(&g, &bd).unwrap();
        let c = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() + y * y);
        let lhs = integrate_volume(&g, &ScalarField::new(op.apply(&c))).unwrap();
        let rhs = integrate_boundary(&g, &robin_boundary_flux(&g, &bd, &c).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-11);
    }

    #[test]
    fn advection_preserves_constants_and_mass() {
        let g = square(16);
        let v = swirl(&g);
        let div = divergence(&g, &v);
        assert!(div.iter().all(|d| d.abs() < 1e-12));
        let t = advect_upwind(&g, &ScalarField::constant(&g, 1.0), &v).unwrap();
        assert!(t.values().iter().all(|x| x.abs() < 1e-12));
        let f = ScalarField::from_fn(&g, |x, y| (x * 5.0).cos() + y);
        let t = advect_upwind(&g, &f, &v).unwrap();
        assert!(integrate_volume(&g, &t).unwrap().abs() < 1e-12);
        let zero = advect_upwind(&g, &f, &VectorField::zeros(&g)).unwrap();
        assert!(zero.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn advection_matrix_matches_tendency_and_is_m_matrix_shaped() {
        let g = square(12);
        let v = swirl(&g);
        let a = advection_matrix(&g, &v).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| x * y + 0.3);
        let t = advect_upwind(&g, &f, &v).unwrap();
        let af = a.mul_vec(f.values());
        for (p, q) in af.iter().zip(t.values()) {
            assert!((p + q).abs() < 1e-12);
        }
        let shifted = a.add_diagonal(&vec![1.0; g.n_cells()]);
        assert!(shifted.is_m_matrix(1e-12));
    }

    #[test]
    fn boundary_velocity_rejected() {
        let g = square(4);
        let mut v = VectorField::zeros(&g);
        v.ux[g.xface(0, 1)] = 1.0;
        assert!(matches!(
            advect_upwind(&g, &ScalarField::constant(&g, 1.0), &v),
            Err(Error::BoundaryVelocity { .. })
        ));
    }

    #[test]
    fn hessian_log_cases() {
        let g = square(64);
        let h = hessian_log(&g, &ScalarField::constant(&g, 2.0), 1e-12).unwrap();
        assert!(h.iter().all(|t| t.iter().all(|v| v.abs() < 1e-12)));
        let h = hessian_log(&g, &ScalarField::from_fn(&g, |x, _| x.exp()), 1e-12).unwrap();
        assert!(h.iter().all(|t| t.iter().all(|v| v.abs() < 1e-8)));
        let h = hessian_log(&g, &ScalarField::from_fn(&g, |x, _| (x * x).exp()), 1e-12).unwrap();
        for t in &h {
            assert!((t[0] - 2.0).abs() < 1e-8 && t[1].abs() < 1e-8 && t[2].abs() < 1e-8);
        }
    }

    #[test]
    fn tangential_gradient_cases() {
        let g = square(16);
        let t = tangential_gradient_boundary(&g, &ScalarField::constant(&g, 1.0)).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
        let fy = ScalarField::from_fn(&g, |_, y| y);
        let fx = ScalarField::from_fn(&g, |x, _| x);
        let ty = tangential_gradient_boundary(&g, &fy).unwrap();
        let tx = tangential_gradient_boundary(&g, &fx).unwrap();
        for (f, face) in g.boundary_faces().iter().enumerate() {
            if face.side == Side::West {
                assert!((ty[f] - 1.0).abs() < 1e-12);
                assert!(tx[f].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lp_norm_cases() {
        let g = square(8);
        let two = ScalarField::constant(&g, 2.0);
        assert!((lp_norm(&g, &two, 3.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(lp_norm(&g, &two, f64::INFINITY).unwrap(), 2.0);
        assert!(lp_norm(&g, &two, 0.5).is_err());
        let g = square(128);
        let x = ScalarField::from_fn(&g, |x, _| x);
        assert!((lp_norm(&g, &x, 2.0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn robin_and_advection_solves_keep_bicgstab_happy() {
        let g = square(16);
        let bd = BoundaryData::uniform(&g, 1.0, 1.0).unwrap();
        let op = assemble_robin_laplacian(&g, &bd).unwrap();
        let a = advection_matrix(&g, &swirl(&g)).unwrap();
        let sys = CsrMatrix::identity(g.n_cells()).add_scaled(1.0, &a.add_scaled(0.01, &op.matrix, -0.01), 1.0);
        let b = vec![1.0; g.n_cells()];
        let mut x = b.clone();
        bicgstab(&sys, &b, &mut x, SolverOptions::default()).unwrap();
    }

    proptest! {
        #[test]
        fn neumann_laplacian_symmetric_negative(seed in 0u64..1000) {
            let g = build_grid(&DomainSpec::l_shape(6, 6, 1.0, 1.0)).unwrap();
            let l = neumann_laplacian(&g);
            let mk = |s: u64| -> Vec<f64> {
                (0..g.n_cells()).map(|k| (((k as u64 + 1) * (s + 7) * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect()
            };
            let f = mk(seed);
            let h = mk(seed + 13);
            let lf = l.mul_vec(&f);
            let lh = l.mul_vec(&h);
            let a: f64 = lf.iter().zip(&h).map(|(p, q)| p * q).sum();
            let b: f64 = f.iter().zip(&lh).map(|(p, q)| p * q).sum();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            let ff: f64 = lf.iter().zip(&f).map(|(p, q)| p * q).sum();
            prop_assert!(ff <= 1e-12);
        }
    }
}
