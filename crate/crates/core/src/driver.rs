//! The coupled time loop.
//!
//! Each base step is Lie split fluid, oxygen, density (reversed on request).
//! When a CFL limit scaled by `cfl` would be violated, the base step is
//! redone as `2^L` equal substeps with the smallest sufficient `L`; steppers
//! are cached per level.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{KappaEdges, ModeKind, Preset, RunConfig};
use crate::density::{drift_dt_limit, regularized_mass_bound, DensityStepParams, DensityStepper};
use crate::energy::{check_fluid_energy, EnergyConstants, EnergyLedger, EnergyReport};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::fluid::{
    build_stokes_basis, convection_dt_limit, load_basis, max_divergence, measure_decay_rate, save_basis,
    stokes_dimension, FluidMode, FluidParams, FluidStepper, PressureSolver, StokesBasis,
};
use crate::geometry::{build_grid, integrate_volume, BoundaryData, Grid, Side};
use crate::linalg::SolverOptions;
use crate::oxygen::{advective_dt_limit, OxygenStepParams, OxygenStepper};

const MAX_LEVEL: u32 = 16;

/// Full simulation state. `p` is the last pressure (zero in Galerkin mode).
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
}

/// Per base step diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepMeta {
    pub t: f64,
    pub dt: f64,
    pub substeps: usize,
    pub mass_n: f64,
    pub n_min: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub u_norm_sq: f64,
    pub max_div: f64,
    /// Largest `lhs - rhs` of the kinetic energy check over the substeps.
    pub fluid_margin: f64,
    pub viscous_iterations: usize,
    pub oxygen_iterations: usize,
    pub density_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeSeries {
    pub reports: Vec<EnergyReport>,
    pub steps: Vec<StepMeta>,
    pub constants: EnergyConstants,
    /// Measured unforced fluid decay rate used to calibrate `K`.
    pub decay_rate: Option<f64>,
    /// `max(|gamma|_inf, |c0|_inf)`.
    pub c_bound: f64,
    pub initial_mass: f64,
}

struct Level {
    dt: f64,
    fluid: Option<FluidStepper>,
    density: DensityStepper,
}

pub struct Simulation {
    config: RunConfig,
    grid: Grid,
    bdata: BoundaryData,
    oxygen: OxygenStepper,
    phi: ScalarField,
    basis: Option<(Arc<StokesBasis>, usize)>,
    levels: Vec<Option<Level>>,
    ledger: EnergyLedger,
    state: State,
    series: TimeSeries,
    base_steps: usize,
}

fn boundary_data(grid: &Grid, cfg: &RunConfig) -> Result<BoundaryData> {
    let top = grid.ny as f64 * grid.dy;
    let kappa = cfg.kappa;
    BoundaryData::from_fns(
        grid,
        |_, y, side| match cfg.kappa_edges {
            KappaEdges::All => kappa,
            KappaEdges::Top if side == Side::North && (y - top).abs() < 1e-9 * top.max(1.0) => kappa,
            KappaEdges::Top => 0.0,
        },
        |_, _| cfg.gamma,
        cfg.gamma,
    )
}

/// Smooth random divergence-free field with max-norm `amplitude`.
fn random_velocity(grid: &Grid, pressure: &PressureSolver, amplitude: f64, seed: u64) -> Result<VectorField> {
    if amplitude == 0.0 || grid.dim == 1 {
        return Ok(VectorField::zeros(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, ly) = (grid.nx as f64 * grid.dx, grid.ny as f64 * grid.dy);
    // stream function psi = sum a sin(k pi x / lx) sin(l pi y / ly)
    let modes: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(1..=3) as f64 * PI / lx,
                rng.random_range(1..=3) as f64 * PI / ly,
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let raw = VectorField::from_fn_interior(grid, |x, y| {
        modes.iter().fold((0.0, 0.0), |(ux, uy), &(k, l, a)| {
            (
                ux + a * l * (k * x).sin() * (l * y).cos(),
                uy - a * k * (k * x).cos() * (l * y).sin(),
            )
        })
    });
    let (mut u, _) = pressure.project(grid, &raw)?;
    let m = u.max_abs();
    if m == 0.0 {
        return Err(Error::InvalidParameter("random velocity vanished on this grid".into()));
    }
    u.scale(amplitude / m);
    Ok(u)
}

fn initial_state(grid: &Grid, cfg: &RunConfig, pressure: Option<&PressureSolver>) -> Result<State> {
    let (lx, ly) = (grid.nx as f64 * grid.dx, grid.ny as f64 * grid.dy);
    let (n, c) = match cfg.preset {
        Preset::Equilibrium => (
            ScalarField::constant(grid, cfg.n0),
            ScalarField::constant(grid, cfg.gamma),
        ),
        Preset::Uniform => (ScalarField::constant(grid, cfg.n0), ScalarField::constant(grid, cfg.c0)),
        Preset::AerotaxisDrop => {
            let (bx, by, w) = (cfg.blob_x * lx, cfg.blob_y * ly, cfg.blob_width * lx);
            let n = ScalarField::from_fn(grid, |x, y| {
                let r2 = (x - bx).powi(2) + if grid.dim == 2 { (y - by).powi(2) } else { 0.0 };
                cfg.n0 + cfg.blob_amplitude * (-r2 / (2.0 * w * w)).exp()
            });
            (n, ScalarField::constant(grid, 0.5 * cfg.gamma))
        }
    };
    let u = match pressure {
        Some(p) => random_velocity(grid, p, cfg.u0_amplitude, cfg.seed)?,
        None => VectorField::zeros(grid),
    };
    Ok(State {
        t: 0.0,
        n,
        c,
        u,
        p: ScalarField::zeros(grid),
    })
}

fn galerkin_basis(grid: &Grid, cfg: &RunConfig) -> Result<(Arc<StokesBasis>, usize)> {
    let m = cfg.galerkin_m.unwrap_or_else(|| stokes_dimension(grid));
    if let Some(path) = &cfg.basis_cache {
        if path.exists() {
            let basis = load_basis(path, grid)?;
            if basis.len() >= m {
                return Ok((Arc::new(basis), m));
            }
        }
    }
    let basis = build_stokes_basis(grid, m)?;
    if let Some(path) = &cfg.basis_cache {
        save_basis(&basis, path)?;
    }
    Ok((Arc::new(basis), m))
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = build_grid(&config.domain_spec())?;
        let bdata = boundary_data(&grid, &config)?;
        let oxygen = OxygenStepper::new(&grid, &bdata)?;
        let phi = ScalarField::from_fn(&grid, |_, y| config.gravity * y);
        let with_fluid = grid.dim == 2;
        let pressure = if with_fluid {
            Some(PressureSolver::new(&grid)?)
        } else {
            None
        };
        let basis = if with_fluid && config.mode == ModeKind::Galerkin {
            Some(galerkin_basis(&grid, &config)?)
        } else {
            None
        };

        let mut state = initial_state(&grid, &config, pressure.as_ref())?;
        if let Some((b, m)) = &basis {
            let a = b.coefficients(&grid, &state.u, *m)?;
            state.u = b.synthesize(&grid, &a)?;
        }

        let decay_rate = if with_fluid && config.energy_k.is_none() {
            Some(measure_decay_rate(&grid, config.mu, config.dt)?)
        } else {
            None
        };
        let mut constants = match (config.energy_k, decay_rate) {
            (Some(k), _) => EnergyConstants::with_k(k),
            (None, Some(rate)) => EnergyConstants::calibrated(state.c.max(), bdata.gamma_max(), rate)?,
            (None, None) => EnergyConstants::with_k(1.0),
        };
        if let Some(l) = config.energy_l {
            constants.l = l;
        }
        let ledger = EnergyLedger::new(&grid, bdata.clone(), constants)?;
        let initial_mass = integrate_volume(&grid, &state.n)?;
        let c_bound = bdata.gamma_max().max(state.c.max());
        let first = ledger.report(&grid, 0.0, &state.n, &state.c, &state.u)?;
        let series = TimeSeries {
            reports: vec![first],
            steps: Vec::new(),
            constants,
            decay_rate,
            c_bound,
            initial_mass,
        };
        Ok(Self {
            config,
            grid,
            bdata,
            oxygen,
            phi,
            basis,
            levels: Vec::new(),
            ledger,
            state,
            series,
            base_steps: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary_data(&self) -> &BoundaryData {
        &self.bdata
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn into_series(self) -> TimeSeries {
        self.series
    }

    pub fn is_finished(&self) -> bool {
        self.base_steps >= self.config.total_steps()
    }

    fn level(&mut self, l: u32) -> Result<&Level> {
        let idx = l as usize;
        if self.levels.len() <= idx {
            self.levels.resize_with(idx + 1, || None);
        }
        if self.levels[idx].is_none() {
            let dt = self.config.dt / f64::from(1u32 << l);
            let fluid = if self.grid.dim == 2 {
                let params = FluidParams {
                    mu: self.config.mu,
                    dt,
                    phi: self.phi.clone(),
                    mode: FluidMode::Projection,
                    solver: SolverOptions::default(),
                };
                Some(match &self.basis {
                    Some((b, m)) => FluidStepper::with_basis(&self.grid, params, b.clone(), *m)?,
                    None => FluidStepper::new(&self.grid, params)?,
                })
            } else {
                None
            };
            self.levels[idx] = Some(Level {
                dt,
                fluid,
                density: DensityStepper::new(&self.grid, dt)?,
            });
        }
        Ok(self.levels[idx].as_ref().expect("level was just built"))
    }

    fn predicted_level(&self) -> Result<u32> {
        let s = &self.state;
        let limit = convection_dt_limit(&self.grid, &s.u)
            .min(advective_dt_limit(&self.grid, &s.u))
            .min(drift_dt_limit(&self.grid, &s.c, &s.u)?);
        let ratio = self.config.dt / (self.config.cfl * limit);
        Ok(if ratio <= 1.0 { 0 } else { ratio.log2().ceil() as u32 })
    }

    /// Advances one base step. On error the state is unchanged.
    pub fn step(&mut self) -> Result<StepMeta> {
        let mut l = self.predicted_level()?;
        loop {
            if l > MAX_LEVEL {
                return Err(Error::Invariant(format!(
                    "no stable substep down to dt / 2^{MAX_LEVEL} at t = {}",
                    self.state.t
                )));
            }
            match self.try_base_step(l) {
                Ok((state, meta)) => {
                    self.state = state;
                    self.base_steps += 1;
                    self.series.steps.push(meta);
                    if self.base_steps.is_multiple_of(self.config.report_stride()) || self.is_finished() {
                        let s = &self.state;
                        let r = self.ledger.report(&self.grid, s.t, &s.n, &s.c, &s.u)?;
                        if !r.is_finite() {
                            return Err(Error::Invariant(format!("non-finite report at t = {}", s.t)));
                        }
                        self.series.reports.push(r);
                    }
                    return Ok(meta);
                }
                Err(Error::Cfl { .. }) => l += 1,
                Err(e) => return Err(e),
            }
        }
    }

    fn try_base_step(&mut self, l: u32) -> Result<(State, StepMeta)> {
        self.level(l)?;
        let level = self.levels[l as usize].as_ref().expect("built above");
        let h = level.dt;
        let cfl = self.config.cfl;
        let grid = &self.grid;
        let guard = |limit: f64| {
            if h > cfl * limit {
                Err(Error::Cfl {
                    dt: h,
                    limit: cfl * limit,
                })
            } else {
                Ok(())
            }
        };

        let mut s = self.state.clone();
        let mut meta = StepMeta {
            t: 0.0,
            dt: self.config.dt,
            substeps: 1 << l,
            mass_n: 0.0,
            n_min: 0.0,
            c_min: 0.0,
            c_max: 0.0,
            u_norm_sq: 0.0,
            max_div: 0.0,
            fluid_margin: f64::NEG_INFINITY,
            viscous_iterations: 0,
            oxygen_iterations: 0,
            density_iterations: 0,
        };
        let dparams = DensityStepParams::new(h, self.config.epsilon);
        let oparams = OxygenStepParams::new(h);
        let start = self.state.t;
        for k in 0..(1usize << l) {
            let fluid = |s: &mut State, meta: &mut StepMeta| -> Result<()> {
                let Some(fs) = &level.fluid else { return Ok(()) };
                guard(convection_dt_limit(grid, &s.u))?;
                let out = fs.step(grid, &s.u, &s.n)?;
                let force = fs.buoyancy(grid, &s.n)?;
                let m = check_fluid_energy(grid, &s.u, &out.u, &force, h)?;
                meta.fluid_margin = meta.fluid_margin.max(m.lhs - m.rhs);
                if self.config.check_invariants && !m.holds {
                    return Err(Error::Invariant(format!(
                        "kinetic energy grew by {} > {} at t = {}",
                        m.lhs,
                        m.rhs + m.tol,
                        s.t
                    )));
                }
                meta.viscous_iterations += out.viscous_iterations;
                s.u = out.u;
                s.p = out.pressure;
                Ok(())
            };
            let oxygen = |s: &mut State, meta: &mut StepMeta| -> Result<()> {
                guard(advective_dt_limit(grid, &s.u))?;
                let (c, st) = self.oxygen.step(grid, &s.c, &s.n, &s.u, &oparams)?;
                meta.oxygen_iterations += st.iterations;
                s.c = c;
                Ok(())
            };
            let density = |s: &mut State, meta: &mut StepMeta| -> Result<()> {
                guard(drift_dt_limit(grid, &s.c, &s.u)?)?;
                let (n, st) = level.density.step(grid, &s.n, &s.c, &s.u, &dparams)?;
                meta.density_iterations += st.iterations;
                s.n = n;
                Ok(())
            };
            if self.config.reverse_splitting {
                density(&mut s, &mut meta)?;
                oxygen(&mut s, &mut meta)?;
                fluid(&mut s, &mut meta)?;
            } else {
                fluid(&mut s, &mut meta)?;
                oxygen(&mut s, &mut meta)?;
                density(&mut s, &mut meta)?;
            }
            s.t = start + (k + 1) as f64 * h;
            self.check_substep(&s, &mut meta)?;
        }
        s.t = (self.base_steps + 1) as f64 * self.config.dt;
        meta.t = s.t;
        Ok((s, meta))
    }

    fn check_substep(&self, s: &State, meta: &mut StepMeta) -> Result<()> {
        let grid = &self.grid;
        meta.mass_n = integrate_volume(grid, &s.n)?;
        meta.n_min = s.n.min();
        meta.c_min = s.c.min();
        meta.c_max = s.c.max();
        meta.u_norm_sq = s.u.norm_sq(grid);
        meta.max_div = max_divergence(grid, &s.u);
        if !self.config.check_invariants {
            return Ok(());
        }
        let fail = |msg: String| Err(Error::Invariant(format!("{msg} at t = {}", s.t)));
        if !s.n.is_finite() || !s.c.is_finite() || !s.u.is_finite() {
            return fail("non-finite state".into());
        }
        if meta.n_min < 0.0 || meta.c_min < 0.0 {
            return fail(format!(
                "negative value: min n = {}, min c = {}",
                meta.n_min, meta.c_min
            ));
        }
        let cb = self.series.c_bound;
        if meta.c_max > cb + 1e-10 * cb.max(1.0) {
            return fail(format!("c_max = {} above max(|gamma|, |c0|) = {cb}", meta.c_max));
        }
        let m0 = self.series.initial_mass;
        if self.config.epsilon == 0.0 {
            if (meta.mass_n - m0).abs() > 1e-9 * m0.max(1.0) {
                return fail(format!("mass drifted from {m0} to {}", meta.mass_n));
            }
        } else {
            let bound = regularized_mass_bound(m0, grid.area());
            if meta.mass_n > bound + 1e-8 {
                return fail(format!("mass {} above the bound {bound}", meta.mass_n));
            }
        }
        let h = grid.dx.min(grid.dy);
        if meta.max_div > 1e-9 * (s.u.max_abs() / h).max(1.0) {
            return fail(format!("divergence {}", meta.max_div));
        }
        Ok(())
    }

    /// Runs to `t_final`, calling `on_report` after every new report.
    pub fn run(&mut self, mut on_report: impl FnMut(&Simulation, &EnergyReport) -> Result<()>) -> Result<()> {
        let first = self.series.reports[0];
        on_report(self, &first)?;
        while !self.is_finished() {
            let before = self.series.reports.len();
            self.step()?;
            if self.series.reports.len() > before {
                let r = *self.series.reports.last().expect("just pushed");
                on_report(self, &r)?;
            }
        }
        Ok(())
    }
}

/// Runs a configuration to completion.
pub fn run_simulation(config: RunConfig) -> Result<TimeSeries> {
    let mut sim = Simulation::new(config)?;
    sim.run(|_, _| Ok(()))?;
    Ok(sim.into_series())
}
