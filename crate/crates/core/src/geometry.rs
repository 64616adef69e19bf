//! Masked Cartesian domains, boundary faces and quadrature.
//!
//! Cells are indexed `(i, j)` with `i` along x and `j` along y; the
//! interior cells are numbered compactly in row-major order. Staggered
//! (MAC) face arrays use the layout
//!
//! * x-faces: `(nx + 1) * ny`, face `(i, j)` sits at `x = i * dx` between
//!   cells `(i - 1, j)` and `(i, j)`;
//! * y-faces: `nx * (ny + 1)`, face `(i, j)` sits at `y = j * dy` between
//!   cells `(i, j - 1)` and `(i, j)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::field::ScalarField;
use crate::linalg::{conjugate_gradient, CsrMatrix, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Side of a cell; doubles as the outward normal of a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn normal(self) -> (f64, f64) {
        match self {
            Side::West => (-1.0, 0.0),
            Side::East => (1.0, 0.0),
            Side::South => (0.0, -1.0),
            Side::North => (0.0, 1.0),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Side::West | Side::East => Axis::X,
            Side::South | Side::North => Axis::Y,
        }
    }

    /// +1 for East/North, -1 for West/South.
    pub fn sign(self) -> f64 {
        match self {
            Side::East | Side::North => 1.0,
            Side::West | Side::South => -1.0,
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Side::West => (-1, 0),
            Side::East => (1, 0),
            Side::South => (0, -1),
            Side::North => (0, 1),
        }
    }
}

/// A face between an interior cell and the exterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Compact index of the interior cell owning the face.
    pub cell: usize,
    pub side: Side,
    pub area: f64,
    pub midpoint: (f64, f64),
    /// Index into the MAC x- or y-face array, depending on `side.axis()`.
    pub mac_index: usize,
}

impl BoundaryFace {
    pub fn normal(&self) -> (f64, f64) {
        self.side.normal()
    }
}

/// A face shared by two interior cells; `lower` is West/South of `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorFace {
    pub lower: usize,
    pub upper: usize,
    pub axis: Axis,
    pub area: f64,
    /// Center-to-center distance.
    pub spacing: f64,
    pub mac_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    /// Rectangle with the top-right quadrant (`i >= nx/2`, `j >= ny/2`) removed.
    LShape,
    /// One-dimensional interval of length `lx`; forces `ny = 1`.
    Interval,
    /// Explicit row-major mask of length `nx * ny`.
    Mask(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl DomainSpec {
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self {
            shape: Shape::Rectangle,
            nx,
            ny,
            lx,
            ly,
        }
    }

    pub fn unit_square(n: usize) -> Self {
        Self::rectangle(n, n, 1.0, 1.0)
    }

    pub fn l_shape(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self {
            shape: Shape::LShape,
            nx,
            ny,
            lx,
            ly,
        }
    }

    pub fn interval(nx: usize, lx: f64) -> Self {
        Self {
            shape: Shape::Interval,
            nx,
            ny: 1,
            lx,
            ly: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// 1 for intervals, 2 otherwise.
    pub dim: usize,
    mask: Vec<bool>,
    cells: Vec<(usize, usize)>,
    cell_index: Vec<Option<usize>>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
}

pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    Grid::new(spec)
}

impl Grid {
    pub fn new(spec: &DomainSpec) -> Result<Self> {
        let one_d = matches!(spec.shape, Shape::Interval);
        if spec.nx < 2 {
            return Err(Error::InvalidDomain(format!("nx = {} < 2", spec.nx)));
        }
        if one_d && spec.ny != 1 {
            return Err(Error::InvalidDomain("an interval has ny = 1".into()));
        }
        if !one_d && spec.ny < 2 {
            return Err(Error::InvalidDomain(format!("ny = {} < 2", spec.ny)));
        }
        if !(spec.lx > 0.0) || (!one_d && !(spec.ly > 0.0)) {
            return Err(Error::InvalidDomain("domain lengths must be positive".into()));
        }
        let (nx, ny) = (spec.nx, spec.ny);
        let dx = spec.lx / nx as f64;
        let dy = if one_d { 1.0 } else { spec.ly / ny as f64 };
        let mask: Vec<bool> = match &spec.shape {
            Shape::Rectangle | Shape::Interval => vec![true; nx * ny],
            Shape::LShape => (0..nx * ny)
                .map(|k| {
                    let (i, j) = (k % nx, k / nx);
                    !(i >= nx / 2 && j >= ny / 2)
                })
                .collect(),
            Shape::Mask(m) => {
                check_len(nx * ny, m.len())?;
                m.clone()
            }
        };
        Self::from_mask(nx, ny, dx, dy, if one_d { 1 } else { 2 }, mask)
    }

    fn from_mask(nx: usize, ny: usize, dx: f64, dy: f64, dim: usize, mask: Vec<bool>) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cell_index = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if mask[j * nx + i] {
                    cell_index[j * nx + i] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidDomain("empty interior".into()));
        }

        let mut grid = Grid {
            nx,
            ny,
            dx,
            dy,
            dim,
            mask,
            cells,
            cell_index,
            interior_faces: Vec::new(),
            boundary_faces: Vec::new(),
        };
        if !grid.is_connected() {
            return Err(Error::InvalidDomain("mask is not connected".into()));
        }

        let sides: &[Side] = if dim == 1 {
            &[Side::West, Side::East]
        } else {
            &Side::ALL
        };
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for (k, &(i, j)) in grid.cells.iter().enumerate() {
            for &side in sides {
                let (area, spacing) = match side.axis() {
                    Axis::X => (dy, dx),
                    Axis::Y => (dx, dy),
                };
                match grid.neighbor(k, side) {
                    Some(nb) => {
                        // record each shared face once, from its lower cell
                        if side == Side::East || side == Side::North {
                            interior.push(InteriorFace {
                                lower: k,
                                upper: nb,
                                axis: side.axis(),
                                area,
                                spacing,
                                mac_index: grid.mac_face(i, j, side),
                            });
                        }
                    }
                    None => {
                        let (cx, cy) = grid.center_of(i, j);
                        let (ox, oy) = side.normal();
                        boundary.push(BoundaryFace {
                            cell: k,
                            side,
                            area,
                            midpoint: (cx + 0.5 * dx * ox, if dim == 1 { cy } else { cy + 0.5 * dy * oy }),
                            mac_index: grid.mac_face(i, j, side),
                        });
                    }
                }
            }
        }
        grid.interior_faces = interior;
        grid.boundary_faces = boundary;
        Ok(grid)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for side in Side::ALL {
                if let Some(nb) = self.neighbor(k, side) {
                    if !seen[nb] {
                        seen[nb] = true;
                        count += 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
        count == self.cells.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn area(&self) -> f64 {
        self.cells.len() as f64 * self.cell_volume()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn cell_ij(&self, k: usize) -> (usize, usize) {
        self.cells[k]
    }

    /// Compact index of cell `(i, j)`; `None` outside the grid or mask.
    pub fn index(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            return None;
        }
        self.cell_index[j as usize * self.nx + i as usize]
    }

    pub fn neighbor(&self, k: usize, side: Side) -> Option<usize> {
        if self.dim == 1 && side.axis() == Axis::Y {
            return None;
        }
        let (i, j) = self.cells[k];
        let (di, dj) = side.offset();
        self.index(i as isize + di, j as isize + dj)
    }

    fn center_of(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.cells[k];
        self.center_of(i, j)
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn yface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// MAC index of the given side of cell `(i, j)`.
    pub fn mac_face(&self, i: usize, j: usize, side: Side) -> usize {
        match side {
            Side::West => self.xface(i, j),
            Side::East => self.xface(i + 1, j),
            Side::South => self.yface(i, j),
            Side::North => self.yface(i, j + 1),
        }
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_faces.iter().map(|f| f.area).sum()
    }

    /// Whether the cell touches the boundary.
    pub fn is_boundary_cell(&self, k: usize) -> bool {
        let sides: &[Side] = if self.dim == 1 {
            &[Side::West, Side::East]
        } else {
            &Side::ALL
        };
        sides.iter().any(|&s| self.neighbor(k, s).is_none())
    }

    /// Stable 64-bit fingerprint of the grid (sizes, spacings, mask).
    pub fn fingerprint(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.nx as u64).to_le_bytes());
        h.update((self.ny as u64).to_le_bytes());
        h.update(self.dx.to_bits().to_le_bytes());
        h.update(self.dy.to_bits().to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.mask.iter().map(|&b| b as u8).collect::<Vec<_>>());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Midpoint rule over interior cells.
pub fn integrate_volume(grid: &Grid, f: &ScalarField) -> Result<f64> {
    check_len(grid.n_cells(), f.len())?;
    Ok(f.values().iter().sum::<f64>() * grid.cell_volume())
}

/// `sum g_f * area_f` over boundary faces.
pub fn integrate_boundary(grid: &Grid, g: &[f64]) -> Result<f64> {
    check_len(grid.boundary_faces().len(), g.len())?;
    Ok(grid.boundary_faces().iter().zip(g).map(|(f, v)| f.area * v).sum())
}

/// Exchange rate and saturation per boundary face, plus the interior
/// extension of the saturation.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_ext: ScalarField,
    pub gamma_lower: f64,
}

impl BoundaryData {
    /// Builds from per-face values; the interior extension is the discrete
    /// harmonic extension clamped below by `gamma_lower`.
    pub fn from_face_values(grid: &Grid, kappa: Vec<f64>, gamma: Vec<f64>, gamma_lower: f64) -> Result<Self> {
        let nf = grid.boundary_faces().len();
        check_len(nf, kappa.len())?;
        check_len(nf, gamma.len())?;
        if !(gamma_lower > 0.0) {
            return Err(Error::InvalidParameter("gamma_lower must be positive".into()));
        }
        if let Some(k) = kappa.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa = {k} is negative or not finite"
            )));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g >= gamma_lower) || !g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {g} below gamma_lower = {gamma_lower}"
            )));
        }
        let gamma_ext = harmonic_extension(grid, &gamma, gamma_lower)?;
        Ok(Self {
            kappa,
            gamma,
            gamma_ext,
            gamma_lower,
        })
    }

    /// Evaluates `kappa(x, y, side)` and `gamma(x, y)` at face midpoints.
    pub fn from_fns(
        grid: &Grid,
        kappa: impl Fn(f64, f64, Side) -> f64,
        gamma: impl Fn(f64, f64) -> f64,
        gamma_lower: f64,
    ) -> Result<Self> {
        let faces = grid.boundary_faces();
        let k = faces
            .iter()
            .map(|f| kappa(f.midpoint.0, f.midpoint.1, f.side))
            .collect();
        let g = faces.iter().map(|f| gamma(f.midpoint.0, f.midpoint.1)).collect();
        Self::from_face_values(grid, k, g, gamma_lower)
    }

    pub fn uniform(grid: &Grid, kappa: f64, gamma: f64) -> Result<Self> {
        Self::from_fns(grid, |_, _, _| kappa, |_, _| gamma, gamma)
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

/// Discrete Laplace equation with Dirichlet data on boundary cells (mean of
/// the cell's boundary-face values).
fn harmonic_extension(grid: &Grid, gamma: &[f64], gamma_lower: f64) -> Result<ScalarField> {
    let n = grid.n_cells();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut acc = vec![(0.0, 0usize); n];
    for (f, &g) in grid.boundary_faces().iter().zip(gamma) {
        acc[f.cell].0 += g;
        acc[f.cell].1 += 1;
    }
    for k in 0..n {
        if acc[k].1 > 0 {
            fixed[k] = Some(acc[k].0 / acc[k].1 as f64);
        }
    }

    let free: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none()).collect();
    let mut values: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    if !free.is_empty() {
        let mut slot = vec![usize::MAX; n];
        for (s, &k) in free.iter().enumerate() {
            slot[k] = s;
        }
        let mut t = Vec::new();
        let mut rhs = vec![0.0; free.len()];
        for (s, &k) in free.iter().enumerate() {
            for side in Side::ALL {
                let Some(nb) = grid.neighbor(k, side) else {
                    continue;
                };
                let w = match side.axis() {
                    Axis::X => 1.0 / (grid.dx * grid.dx),
                    Axis::Y => 1.0 / (grid.dy * grid.dy),
                };
                t.push((s, s, w));
                match fixed[nb] {
                    Some(v) => rhs[s] += w * v,
                    None => t.push((s, slot[nb], -w)),
                }
            }
        }
        let a = CsrMatrix::from_triplets(free.len(), free.len(), &t);
        let mean = gamma.iter().sum::<f64>() / gamma.len().max(1) as f64;
        let mut x = vec![mean; free.len()];
        conjugate_gradient(&a, &rhs, &mut x, SolverOptions::default())?;
        for (s, &k) in free.iter().enumerate() {
            values[k] = x[s];
        }
    }
    for v in &mut values {
        *v = v.max(gamma_lower);
    }
    Ok(ScalarField::new(values))
}
