use crate::error::{check_len, Result};
use crate::geometry::{Axis, Grid};

/// Cell-centered values over the interior cells of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        Self::new(vec![v; grid.n_cells()])
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(
            (0..grid.n_cells())
                .map(|k| {
                    let (x, y) = grid.center(k);
                    f(x, y)
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        check_len(grid.n_cells(), self.values.len())
    }
}

/// Face-centered (MAC) vector field; also used for face gradients and face
/// fluxes. Faces outside the domain and on its boundary hold whatever the
/// producing operator assigns (zero for admissible velocities).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

/// Face gradients and fluxes share the velocity layout.
pub type FaceField = VectorField;

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            ux: vec![0.0; grid.n_xfaces()],
            uy: vec![0.0; grid.n_yfaces()],
        }
    }

    pub fn component(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.ux,
            Axis::Y => &self.uy,
        }
    }

    pub fn component_mut(&mut self, axis: Axis) -> &mut [f64] {
        match axis {
            Axis::X => &mut self.ux,
            Axis::Y => &mut self.uy,
        }
    }

    /// Samples `f(x, y) -> (vx, vy)` at interior face midpoints; boundary and
    /// exterior faces stay zero.
    pub fn from_fn_interior(grid: &Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut v = Self::zeros(grid);
        for face in grid.interior_faces() {
            let (x0, y0) = grid.center(face.lower);
            let (x1, y1) = grid.center(face.upper);
            let (vx, vy) = f(0.5 * (x0 + x1), 0.5 * (y0 + y1));
            match face.axis {
                Axis::X => v.ux[face.mac_index] = vx,
                Axis::Y => v.uy[face.mac_index] = vy,
            }
        }
        v
    }

    pub fn scale(&mut self, a: f64) {
        self.ux.iter_mut().chain(self.uy.iter_mut()).for_each(|v| *v *= a);
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (p, q) in self.ux.iter_mut().zip(&other.ux) {
            *p += a * q;
        }
        for (p, q) in self.uy.iter_mut().zip(&other.uy) {
            *p += a * q;
        }
    }

    /// Discrete L2 inner product; every face carries the weight `dx * dy`.
    pub fn dot(&self, other: &VectorField, grid: &Grid) -> f64 {
        let s: f64 = self.ux.iter().zip(&other.ux).map(|(a, b)| a * b).sum::<f64>()
            + self.uy.iter().zip(&other.uy).map(|(a, b)| a * b).sum::<f64>();
        s * grid.cell_volume()
    }

    pub fn norm_sq(&self, grid: &Grid) -> f64 {
        self.dot(self, grid)
    }

    pub fn max_abs(&self) -> f64 {
        self.ux.iter().chain(&self.uy).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_component(&self, axis: Axis) -> f64 {
        self.component(axis).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        check_len(grid.n_xfaces(), self.ux.len())?;
        check_len(grid.n_yfaces(), self.uy.len())
    }
}
