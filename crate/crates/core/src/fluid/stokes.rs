//! Discrete Stokes eigenbasis.
//!
//! Divergence-free no-slip fields are exactly the discrete curls of stream
//! functions on interior nodes (nodes whose four cells are all inside), so
//! with `C` the curl matrix the Stokes problem `P K v = lambda v` becomes the
//! symmetric-definite pencil `C^T K C psi = lambda C^T C psi`, solved densely.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{viscous_operator, MacLayout, PressureSolver};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{Axis, Grid};
use crate::linalg::CsrMatrix;

/// Orthonormal (discrete L2) Stokes modes, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct StokesBasis {
    fingerprint: u64,
    dofs: Vec<(Axis, usize)>,
    /// Mode-major, `len * dofs.len()`.
    modes: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl StokesBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.fingerprint() != self.fingerprint {
            return Err(Error::InvalidParameter("basis was built for a different grid".into()));
        }
        Ok(())
    }

    fn mode_dofs(&self, k: usize) -> &[f64] {
        let n = self.dofs.len();
        &self.modes[k * n..(k + 1) * n]
    }

    pub fn mode(&self, grid: &Grid, k: usize) -> Result<VectorField> {
        if k >= self.len() {
            return Err(Error::InvalidParameter(format!("mode {k} of {}", self.len())));
        }
        self.check_grid(grid)?;
        let mut v = VectorField::zeros(grid);
        for (&(a, m), &x) in self.dofs.iter().zip(self.mode_dofs(k)) {
            v.component_mut(a)[m] = x;
        }
        Ok(v)
    }

    /// `<f, v_k>` for `k < m`.
    pub fn coefficients(&self, grid: &Grid, f: &VectorField, m: usize) -> Result<Vec<f64>> {
        if m > self.len() {
            return Err(Error::InvalidParameter(format!("m = {m} > basis size {}", self.len())));
        }
        self.check_grid(grid)?;
        f.check(grid)?;
        let fd: Vec<f64> = self.dofs.iter().map(|&(a, i)| f.component(a)[i]).collect();
        let w = grid.cell_volume();
        Ok((0..m)
            .map(|k| w * self.mode_dofs(k).iter().zip(&fd).map(|(p, q)| p * q).sum::<f64>())
            .collect())
    }

    /// `sum_k a_k v_k`.
    pub fn synthesize(&self, grid: &Grid, a: &[f64]) -> Result<VectorField> {
        if a.len() > self.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients > basis size {}",
                a.len(),
                self.len()
            )));
        }
        self.check_grid(grid)?;
        let mut d = vec![0.0; self.dofs.len()];
        for (k, &ak) in a.iter().enumerate() {
            for (x, v) in d.iter_mut().zip(self.mode_dofs(k)) {
                *x += ak * v;
            }
        }
        let mut out = VectorField::zeros(grid);
        for (&(ax, m), x) in self.dofs.iter().zip(d) {
            out.component_mut(ax)[m] = x;
        }
        Ok(out)
    }

    /// `|P K v_k - lambda_k v_k|` per mode, with `P` the pressure projection.
    pub fn eigen_residuals(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let layout = MacLayout::new(grid);
        let k = viscous_operator(grid);
        let pressure = PressureSolver::new(grid)?;
        (0..self.len())
            .map(|i| {
                let kv = layout.scatter(grid, &k.mul_vec(self.mode_dofs(i)));
                let (mut r, _) = pressure.project(grid, &kv)?;
                r.axpy(-self.eigenvalues[i], &self.mode(grid, i)?);
                Ok(r.norm_sq(grid).sqrt())
            })
            .collect()
    }
}

fn interior_nodes(grid: &Grid) -> (Vec<(usize, usize)>, Vec<Option<usize>>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut nodes = Vec::new();
    let mut index = vec![None; (nx + 1) * (ny + 1)];
    if grid.dim == 1 {
        return (nodes, index);
    }
    for j in 1..ny {
        for i in 1..nx {
            let (ii, jj) = (i as isize, j as isize);
            let inside = [(ii - 1, jj - 1), (ii, jj - 1), (ii - 1, jj), (ii, jj)]
                .iter()
                .all(|&(a, b)| grid.index(a, b).is_some());
            if inside {
                index[j * (nx + 1) + i] = Some(nodes.len());
                nodes.push((i, j));
            }
        }
    }
    (nodes, index)
}

/// Dimension of the discrete divergence-free space, one per interior node.
pub fn stokes_dimension(grid: &Grid) -> usize {
    interior_nodes(grid).0.len()
}

/// Curl matrix from interior-node stream values to velocity DOFs:
/// `u_x = d_y psi`, `u_y = -d_x psi`.
fn curl_matrix(grid: &Grid, layout: &MacLayout) -> (CsrMatrix, usize) {
    let (nodes, index) = interior_nodes(grid);
    let node = |i: usize, j: usize| index[j * (grid.nx + 1) + i];
    let mut t = Vec::new();
    for (d, &(axis, mac)) in layout.dofs.iter().enumerate() {
        match axis {
            Axis::X => {
                let (i, j) = (mac % (grid.nx + 1), mac / (grid.nx + 1));
                if let Some(p) = node(i, j + 1) {
                    t.push((d, p, 1.0 / grid.dy));
                }
                if let Some(p) = node(i, j) {
                    t.push((d, p, -1.0 / grid.dy));
                }
            }
            Axis::Y => {
                let (i, j) = (mac % grid.nx, mac / grid.nx);
                if let Some(p) = node(i + 1, j) {
                    t.push((d, p, -1.0 / grid.dx));
                }
                if let Some(p) = node(i, j) {
                    t.push((d, p, 1.0 / grid.dx));
                }
            }
        }
    }
    (CsrMatrix::from_triplets(layout.n_dofs(), nodes.len(), &t), nodes.len())
}

fn to_dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for r in 0..a.n_rows() {
        for (c, v) in a.row(r) {
            m[(r, c)] = v;
        }
    }
    m
}

/// The `m_max` lowest Stokes modes. The full space has one mode per
/// interior node.
pub fn build_stokes_basis(grid: &Grid, m_max: usize) -> Result<StokesBasis> {
    let layout = MacLayout::new(grid);
    let (c, n_nodes) = curl_matrix(grid, &layout);
    if m_max == 0 || m_max > n_nodes {
        return Err(Error::InvalidParameter(format!(
            "m_max = {m_max} outside 1..={n_nodes} (divergence-free dimension)"
        )));
    }
    let ct = c.transpose();
    let a = to_dense(&ct.mul_mat(&viscous_operator(grid).mul_mat(&c)));
    let b = to_dense(&ct.mul_mat(&c));

    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Eigen("stream-function mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let mut reduced = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(reduced, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    order.truncate(m_max);
    let y = DMatrix::from_fn(n_nodes, m_max, |r, k| eig.eigenvectors[(r, order[k])]);
    let psi = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;

    let ndof = layout.n_dofs();
    let scale = 1.0 / grid.cell_volume().sqrt();
    let mut modes = vec![0.0; m_max * ndof];
    for k in 0..m_max {
        let col: Vec<f64> = psi.column(k).iter().copied().collect();
        let v = c.mul_vec(&col);
        for (dst, src) in modes[k * ndof..(k + 1) * ndof].iter_mut().zip(v) {
            *dst = src * scale;
        }
    }
    let eigenvalues: Vec<f64> = order.iter().map(|&p| eig.eigenvalues[p]).collect();
    if eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Eigen("non-positive Stokes eigenvalue".into()));
    }
    Ok(StokesBasis {
        fingerprint: grid.fingerprint(),
        dofs: layout.dofs,
        modes,
        eigenvalues,
    })
}

/// `sum_{k < m} <f, v_k> v_k`.
pub fn leray_project(grid: &Grid, basis: &StokesBasis, f: &VectorField, m: usize) -> Result<VectorField> {
    let a = basis.coefficients(grid, f, m)?;
    basis.synthesize(grid, &a)
}

/// Writes the basis: grid fingerprint, `m`, dof count (all `u64`), the modes
/// mode-major, then the eigenvalues; little-endian throughout.
pub fn save_basis(basis: &StokesBasis, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&basis.fingerprint.to_le_bytes())?;
    w.write_all(&(basis.len() as u64).to_le_bytes())?;
    w.write_all(&(basis.n_dofs() as u64).to_le_bytes())?;
    for v in basis.modes.iter().chain(&basis.eigenvalues) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_basis(path: &Path, grid: &Grid) -> Result<StokesBasis> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut word)
            .map_err(|e| Error::Cache(format!("truncated basis file: {e}")))?;
        Ok(word)
    };
    let fingerprint = u64::from_le_bytes(next(&mut r)?);
    let m = u64::from_le_bytes(next(&mut r)?) as usize;
    let ndof = u64::from_le_bytes(next(&mut r)?) as usize;
    if fingerprint != grid.fingerprint() {
        return Err(Error::Cache("basis file belongs to a different grid".into()));
    }
    let layout = MacLayout::new(grid);
    if ndof != layout.n_dofs() {
        return Err(Error::Cache(format!(
            "basis has {ndof} dofs, grid has {}",
            layout.n_dofs()
        )));
    }
    let mut vals = Vec::with_capacity(m * (ndof + 1));
    for _ in 0..m * (ndof + 1) {
        vals.push(f64::from_le_bytes(next(&mut r)?));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Cache("trailing bytes in basis file".into()));
    }
    let eigenvalues = vals.split_off(m * ndof);
    Ok(StokesBasis {
        fingerprint,
        dofs: layout.dofs,
        modes: vals,
        eigenvalues,
    })
}
