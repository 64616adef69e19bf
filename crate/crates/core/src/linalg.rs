//! Compressed sparse row storage and the Krylov solvers used by the steppers.
//!
//! The solvers start from the caller's `x`, which matters for the density
//! step: with `x0 = b` and a matrix whose columns sum to one, every CG
//! iterate keeps `sum(x) == sum(b)` up to round-off.

use crate::error::{Error, Result};

/// Row-major sparse matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = fill[r];
            cols[k] = c;
            vals[k] = v;
            fill[r] += 1;
        }

        // sort each row by column and merge duplicates
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                match col_idx.last() {
                    Some(&last) if last == c && col_idx.len() > row_ptr[r] => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        col_idx.push(c);
                        values.push(v);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Iterates over `(col, value)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `alpha * self + beta * other` on identical shapes.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut t = Vec::with_capacity(self.values.len() + other.values.len());
        for r in 0..self.n_rows {
            t.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= a);
        m
    }

    /// Adds `d[i]` to each diagonal entry.
    pub fn add_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let mut t: Vec<_> = (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect();
        t.extend(d.iter().enumerate().map(|(i, &v)| (i, i, v)));
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, &t)
    }

    /// Row sums, used by the Neumann and M-matrix checks.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &t)
    }

    /// Sparse product `self * other`.
    pub fn mul_mat(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut t = Vec::new();
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                t.extend(other.row(k).map(|(c, b)| (r, c, a * b)));
            }
        }
        CsrMatrix::from_triplets(self.n_rows, other.n_cols, &t)
    }

    /// Off-diagonals non-positive, positive diagonal, weak row dominance.
    pub fn is_m_matrix(&self, tol: f64) -> bool {
        (0..self.n_rows).all(|r| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    diag = v;
                } else if v > tol {
                    return false;
                } else {
                    off += v.abs();
                }
            }
            diag > 0.0 && diag + tol >= off
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop when `||r|| <= rel_tol * ||b|| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unpreconditioned conjugate gradients for symmetric positive (semi)definite
/// systems. For a singular Neumann operator the right-hand side must be
/// compatible; the iterates then stay in the range.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: SolverOptions) -> Result<SolveStats> {
    let n = b.len();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = opts.rel_tol * norm(b) + opts.abs_tol;
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok(SolveStats {
            iterations: 0,
            residual: rr.sqrt(),
        });
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: rr.sqrt(),
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: rr_new.sqrt(),
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: opts.max_iter,
        residual: rr.sqrt(),
    })
}

/// BiCGStab with a Jacobi preconditioner, for the nonsymmetric
/// advection-diffusion systems.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: SolverOptions) -> Result<SolveStats> {
    let n = b.len();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = opts.rel_tol * norm(b) + opts.abs_tol;
    let mut res = norm(&r);
    if res <= target {
        return Ok(SolveStats {
            iterations: 0,
            residual: res,
        });
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: res,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.mul_vec_into(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let resid = residual_norm(a, b, x);
            return Ok(SolveStats {
                iterations: it,
                residual: resid,
            });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.mul_vec_into(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r);
        if res <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
    }
    Err(Error::SolverDiverged {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// LU factors of a banded matrix, without pivoting. Meant for the
/// diagonally dominant grid operators, whose compact row-major numbering
/// keeps the bandwidth near `nx`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i - kl ..= i + ku
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows;
        let (mut kl, mut ku) = (0, 0);
        for r in 0..n {
            for (c, _) in a.row(r) {
                kl = kl.max(r.saturating_sub(c));
                ku = ku.max(c.saturating_sub(r));
            }
        }
        let w = kl + ku + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                band[r * w + c + kl - r] += v;
            }
        }
        let at = |r: usize, c: usize| r * w + c + kl - r;
        for k in 0..n {
            let pivot = band[at(k, k)];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::SolverDiverged {
                    iterations: k,
                    residual: pivot,
                });
            }
            for r in k + 1..(k + kl + 1).min(n) {
                let l = band[at(r, k)] / pivot;
                if l == 0.0 {
                    continue;
                }
                band[at(r, k)] = l;
                for c in k + 1..(k + ku + 1).min(n) {
                    let u = band[at(k, c)];
                    band[at(r, c)] -= l * u;
                }
            }
        }
        Ok(Self { n, kl, ku, band })
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.kl + self.ku + 1;
        let at = |r: usize, c: usize| r * w + c + self.kl - r;
        for r in 0..self.n {
            let mut s = x[r];
            for c in r.saturating_sub(self.kl)..r {
                s -= self.band[at(r, c)] * x[c];
            }
            x[r] = s;
        }
        for r in (0..self.n).rev() {
            let mut s = x[r];
            for c in r + 1..(r + self.ku + 1).min(self.n) {
                s -= self.band[at(r, c)] * x[c];
            }
            x[r] = s / self.band[at(r, r)];
        }
    }
}

pub fn residual_norm(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt()
}
