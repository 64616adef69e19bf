//! Refinement studies: observed orders of the discrete operators against
//! manufactured solutions, and of the entropy identity residual in `dt`.

use serde::Serialize;

use crate::density::{DensityStepParams, DensityStepper};
use crate::energy::check_entropy_identity_n;
use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::fluid::pressure_poisson;
use crate::geometry::{build_grid, Axis, BoundaryData, DomainSpec, Grid};
use crate::linalg::{conjugate_gradient, SolverOptions};
use crate::ops::{assemble_robin_laplacian, gradient, hessian_log, Closure};

#[derive(Debug, Clone, Serialize)]
pub struct OrderStudy {
    pub name: String,
    /// Mesh width or time step, coarse to fine.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
    pub orders: Vec<f64>,
}

impl OrderStudy {
    fn new(name: &str, steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = steps
            .windows(2)
            .zip(errors.windows(2))
            .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        Self {
            name: name.to_string(),
            steps,
            errors,
            orders,
        }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub const DEFAULT_RESOLUTIONS: [usize; 3] = [16, 32, 64];

fn square(n: usize) -> Result<Grid> {
    build_grid(&DomainSpec::unit_square(n))
}

fn face_midpoint(grid: &Grid, lower: usize, upper: usize) -> (f64, f64) {
    let (a, b) = (grid.center(lower), grid.center(upper));
    (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1))
}

/// Face gradient of `sin(2x + 0.3) e^y + cos(pi x y)`, max error over
/// interior faces.
pub fn gradient_convergence(ns: &[usize]) -> Result<OrderStudy> {
    let pi = std::f64::consts::PI;
    let f = |x: f64, y: f64| (2.0 * x + 0.3).sin() * y.exp() + (pi * x * y).cos();
    let df = |x: f64, y: f64| {
        (
            2.0 * (2.0 * x + 0.3).cos() * y.exp() - pi * y * (pi * x * y).sin(),
            (2.0 * x + 0.3).sin() * y.exp() - pi * x * (pi * x * y).sin(),
        )
    };
    let mut errors = Vec::new();
    for &n in ns {
        let g = square(n)?;
        let gf = gradient(&g, &ScalarField::from_fn(&g, f), Closure::ZeroFlux)?;
        let err = g.interior_faces().iter().fold(0.0f64, |m, face| {
            let (x, y) = face_midpoint(&g, face.lower, face.upper);
            let exact = match face.axis {
                Axis::X => df(x, y).0,
                Axis::Y => df(x, y).1,
            };
            m.max((gf.component(face.axis)[face.mac_index] - exact).abs())
        });
        errors.push(err);
    }
    Ok(OrderStudy::new("gradient", steps_of(ns), errors))
}

/// `-Delta c = f` with `d_nu c = kappa (gamma - c)`, where `gamma` is fitted to
/// `c = 2 + sin(1.3x + 0.4) cos(0.9y)`; max error of the solution.
pub fn robin_laplacian_convergence(ns: &[usize]) -> Result<OrderStudy> {
    let c = |x: f64, y: f64| 2.0 + (1.3 * x + 0.4).sin() * (0.9 * y).cos();
    let grad = |x: f64, y: f64| {
        (
            1.3 * (1.3 * x + 0.4).cos() * (0.9 * y).cos(),
            -0.9 * (1.3 * x + 0.4).sin() * (0.9 * y).sin(),
        )
    };
    let kappa = 2.0;
    let mut errors = Vec::new();
    for &n in ns {
        let g = square(n)?;
        let bd = BoundaryData::from_fns(
            &g,
            |_, _, _| kappa,
            |x, y| {
                // gamma = c + d_nu c / kappa needs the side; recover it from the midpoint
                let (gx, gy) = grad(x, y);
                let dn = if x <= 1e-12 {
                    -gx
                } else if x >= 1.0 - 1e-12 {
                    gx
                } else if y <= 1e-12 {
                    -gy
                } else {
                    gy
                };
                c(x, y) + dn / kappa
            },
            0.1,
        )?;
        let op = assemble_robin_laplacian(&g, &bd)?;
        let a = op.matrix.scaled(-1.0);
        let rhs: Vec<f64> = (0..g.n_cells())
            .map(|k| {
                let (x, y) = g.center(k);
                (1.69 + 0.81) * (c(x, y) - 2.0) + op.source[k]
            })
            .collect();
        let mut sol = vec![0.0; g.n_cells()];
        conjugate_gradient(&a, &rhs, &mut sol, SolverOptions::default())?;
        let err = (0..g.n_cells()).fold(0.0f64, |m, k| {
            let (x, y) = g.center(k);
            m.max((sol[k] - c(x, y)).abs())
        });
        errors.push(err);
    }
    Ok(OrderStudy::new("robin_laplacian", steps_of(ns), errors))
}

/// Hessian of `log c` with `log c = sin(x + 0.2) cos(1.5y)`, max error over
/// cells and components.
pub fn hessian_log_convergence(ns: &[usize]) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &n in ns {
        let g = square(n)?;
        let c = ScalarField::from_fn(&g, |x, y| ((x + 0.2).sin() * (1.5 * y).cos()).exp());
        let h = hessian_log(&g, &c, 1e-300)?;
        let err = (0..g.n_cells()).fold(0.0f64, |m, k| {
            let (x, y) = g.center(k);
            let (s, co) = ((x + 0.2).sin(), (x + 0.2).cos());
            let exact = [
                -s * (1.5 * y).cos(),
                -1.5 * co * (1.5 * y).sin(),
                -2.25 * s * (1.5 * y).cos(),
            ];
            h[k].iter().zip(exact).fold(m, |m, (a, b)| m.max((a - b).abs()))
        });
        errors.push(err);
    }
    Ok(OrderStudy::new("hessian_log", steps_of(ns), errors))
}

/// Neumann Poisson `-Delta p = f` with `p = cos(pi x) cos(pi y)`, compared
/// after removing means.
pub fn pressure_poisson_convergence(ns: &[usize]) -> Result<OrderStudy> {
    let pi = std::f64::consts::PI;
    let mut errors = Vec::new();
    for &n in ns {
        let g = square(n)?;
        let exact = ScalarField::from_fn(&g, |x, y| (pi * x).cos() * (pi * y).cos());
        let rhs = exact.map(|v| 2.0 * pi * pi * v);
        let m = rhs.values().iter().sum::<f64>() / rhs.len() as f64;
        let p = pressure_poisson(&g, &rhs.map(|v| v - m))?;
        let em = exact.values().iter().sum::<f64>() / exact.len() as f64;
        errors.push(
            p.values()
                .iter()
                .zip(exact.values())
                .fold(0.0f64, |a, (p, e)| a.max((p - (e - em)).abs())),
        );
    }
    Ok(OrderStudy::new("pressure_poisson", steps_of(ns), errors))
}

fn steps_of(ns: &[usize]) -> Vec<f64> {
    ns.iter().map(|&n| 1.0 / n as f64).collect()
}

pub fn operator_convergence(ns: &[usize]) -> Result<Vec<OrderStudy>> {
    Ok(vec![
        gradient_convergence(ns)?,
        robin_laplacian_convergence(ns)?,
        hessian_log_convergence(ns)?,
        pressure_poisson_convergence(ns)?,
    ])
}

/// Setup of the entropy-identity refinement study.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyStudy {
    pub n: usize,
    /// Finest step; the study uses `4h, 2h, h`.
    pub h: f64,
    /// Evaluation time; a multiple of `4h`.
    pub t_star: f64,
    pub epsilon: f64,
    /// Slope of the frozen oxygen field; 0 gives the constant case.
    pub c_slope: f64,
}

impl Default for EntropyStudy {
    fn default() -> Self {
        Self {
            n: 16,
            h: 0.0005,
            t_star: 0.04,
            epsilon: 0.5,
            c_slope: 0.0,
        }
    }
}

/// Runs the density step from `n0 = 1 + cos(pi x) cos(pi y) / 2` with `c`
/// frozen and `u = 0`, and measures the identity residual at `t_star`.
pub fn entropy_identity_convergence(study: &EntropyStudy) -> Result<OrderStudy> {
    let pi = std::f64::consts::PI;
    let g = square(study.n)?;
    let c = ScalarField::from_fn(&g, |x, _| 0.7 + study.c_slope * x);
    let u = VectorField::zeros(&g);
    let n0 = ScalarField::from_fn(&g, |x, y| 1.0 + 0.5 * (pi * x).cos() * (pi * y).cos());
    let dts = [4.0 * study.h, 2.0 * study.h, study.h];
    let mut errors = Vec::new();
    for &dt in &dts {
        let steps = (study.t_star / dt).round() as usize;
        let params = DensityStepParams::new(dt, study.epsilon);
        let stepper = DensityStepper::new(&g, dt)?;
        let mut states = vec![n0.clone()];
        for _ in 0..=steps {
            let next = stepper.step(&g, states.last().expect("non-empty"), &c, &u, &params)?.0;
            states.push(next);
        }
        let k = steps;
        errors.push(check_entropy_identity_n(
            &g,
            [&states[k - 1], &states[k], &states[k + 1]],
            &c,
            dt,
            study.epsilon,
        )?);
    }
    let name = if study.c_slope == 0.0 {
        "entropy_identity"
    } else {
        "entropy_identity_drift"
    };
    Ok(OrderStudy::new(name, dts.to_vec(), errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_formula() {
        let s = OrderStudy::new("x", vec![0.1, 0.05], vec![4e-2, 1e-2]);
        assert!((s.orders[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.min_order(), s.orders[0]);
    }

    #[test]
    fn operators_are_second_order() {
        for s in operator_convergence(&DEFAULT_RESOLUTIONS).unwrap() {
            assert!(s.min_order() >= 1.9, "{s:?}");
        }
    }

    #[test]
    fn entropy_identity_is_first_order_in_dt() {
        let s = entropy_identity_convergence(&EntropyStudy::default()).unwrap();
        assert!(s.min_order() >= 0.9, "{s:?}");
        assert!(s.errors.iter().all(|e| e.is_finite() && *e > 0.0));
    }
}
