//! Run configuration: a flat key-value file (TOML syntax, scalar values
//! only). Every key has a default; see [`RunConfig::default`].
//!
//! ```text
//! preset = "aerotaxis_drop"
//! nx = 64
//! t_final = 5.0
//! dt = 0.01
//! kappa_edges = "top"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `n = n0`, `c = gamma`, `u = 0`. Stationary only for `n0 = 0`, since
    /// any bacteria consume oxygen.
    Equilibrium,
    /// Gaussian blob of bacteria over the background `n0`, `c = gamma / 2`.
    AerotaxisDrop,
    /// `n = n0`, `c = c0`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Rectangle,
    LShape,
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Projection,
    Galerkin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaEdges {
    All,
    /// Only the faces on the top edge `y = ly` exchange oxygen.
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub domain: DomainKind,
    pub nx: usize,
    /// Defaults to `nx` (1 for intervals).
    pub ny: Option<usize>,
    pub lx: f64,
    pub ly: f64,

    pub t_final: f64,
    /// Base step. Steps are halved while a CFL limit (scaled by `cfl`) is
    /// violated.
    pub dt: f64,
    pub cfl: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub mode: ModeKind,
    /// Number of Stokes modes in Galerkin mode; `None` is the full basis.
    pub galerkin_m: Option<usize>,
    pub basis_cache: Option<PathBuf>,

    pub n0: f64,
    pub blob_amplitude: f64,
    /// Blob center as fractions of the bounding box.
    pub blob_x: f64,
    pub blob_y: f64,
    /// Blob standard deviation as a fraction of `lx`.
    pub blob_width: f64,
    /// Initial oxygen for the uniform preset.
    pub c0: f64,
    /// Max-norm of a random smooth divergence-free initial velocity.
    pub u0_amplitude: f64,

    pub kappa: f64,
    pub kappa_edges: KappaEdges,
    pub gamma: f64,
    /// `phi = gravity * y`.
    pub gravity: f64,

    /// Time between reports; a multiple of `dt`.
    pub report_every: f64,
    pub seed: u64,
    pub energy_k: Option<f64>,
    pub energy_l: Option<f64>,
    /// Check positivity, mass, maximum principle, divergence and the
    /// kinetic energy bound after every step.
    pub check_invariants: bool,
    /// Density, oxygen, fluid instead of fluid, oxygen, density.
    pub reverse_splitting: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Equilibrium,
            domain: DomainKind::Rectangle,
            nx: 32,
            ny: None,
            lx: 1.0,
            ly: 1.0,
            t_final: 1.0,
            dt: 0.01,
            cfl: 0.9,
            mu: 1.0,
            epsilon: 0.0,
            mode: ModeKind::Projection,
            galerkin_m: None,
            basis_cache: None,
            n0: 0.0,
            blob_amplitude: 2.0,
            blob_x: 0.5,
            blob_y: 0.6,
            blob_width: 0.1,
            c0: 1.0,
            u0_amplitude: 0.0,
            kappa: 1.0,
            kappa_edges: KappaEdges::All,
            gamma: 1.0,
            gravity: 1.0,
            report_every: 0.1,
            seed: 0,
            energy_k: None,
            energy_l: None,
            check_invariants: true,
            reverse_splitting: false,
        }
    }
}

/// Named scenarios accepted by [`RunConfig::named`].
pub const SCENARIOS: [&str; 4] = ["equilibrium", "aerotaxis_drop", "uniform", "stokes_decay"];

impl RunConfig {
    pub fn named(name: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match name {
            "equilibrium" => base,
            "aerotaxis_drop" => Self {
                preset: Preset::AerotaxisDrop,
                nx: 64,
                t_final: 5.0,
                n0: 0.05,
                kappa: 5.0,
                kappa_edges: KappaEdges::Top,
                ..base
            },
            "uniform" => Self {
                preset: Preset::Uniform,
                n0: 1.0,
                c0: 0.0,
                ..base
            },
            "stokes_decay" => Self {
                preset: Preset::Uniform,
                nx: 64,
                n0: 0.0,
                c0: 1.0,
                gravity: 0.0,
                u0_amplitude: 1.0,
                t_final: 0.5,
                dt: 0.001,
                report_every: 0.01,
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario '{other}' (known: {})",
                    SCENARIOS.join(", ")
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn domain_spec(&self) -> DomainSpec {
        match self.domain {
            DomainKind::Rectangle => DomainSpec::rectangle(self.nx, self.ny.unwrap_or(self.nx), self.lx, self.ly),
            DomainKind::LShape => DomainSpec::l_shape(self.nx, self.ny.unwrap_or(self.nx), self.lx, self.ly),
            DomainKind::Interval => DomainSpec::interval(self.nx, self.lx),
        }
    }

    /// Base steps between reports.
    pub fn report_stride(&self) -> usize {
        (self.report_every / self.dt).round().max(1.0) as usize
    }

    /// Base steps to `t_final`.
    pub fn total_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final = {} must be positive", self.t_final));
        }
        if !(self.dt > 0.0) || self.dt > self.t_final {
            return bad(format!("dt = {} must be in (0, t_final]", self.dt));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} must be in (0, 1]", self.cfl));
        }
        let near_multiple = |a: f64, b: f64| ((a / b) - (a / b).round()).abs() < 1e-9 * (a / b).max(1.0);
        if !near_multiple(self.t_final, self.dt) {
            return bad(format!(
                "t_final = {} is not a multiple of dt = {}",
                self.t_final, self.dt
            ));
        }
        if !(self.report_every >= self.dt) || !near_multiple(self.report_every, self.dt) {
            return bad(format!(
                "report_every = {} must be a positive multiple of dt",
                self.report_every
            ));
        }
        if !(self.mu > 0.0) {
            return bad(format!("mu = {} must be positive", self.mu));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon = {} must be non-negative", self.epsilon));
        }
        if !(self.kappa >= 0.0) {
            return bad(format!("kappa = {} must be non-negative", self.kappa));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma = {} must be positive", self.gamma));
        }
        if !(self.n0 >= 0.0 && self.blob_amplitude >= 0.0 && self.c0 >= 0.0 && self.u0_amplitude >= 0.0) {
            return bad("initial-condition amplitudes must be non-negative".into());
        }
        if !(self.blob_width > 0.0) {
            return bad(format!("blob_width = {} must be positive", self.blob_width));
        }
        if self.galerkin_m == Some(0) {
            return bad("galerkin_m must be at least 1".into());
        }
        if self.domain == DomainKind::Interval && self.mode == ModeKind::Galerkin {
            return bad("Galerkin mode needs a 2D domain".into());
        }
        if let Some(k) = self.energy_k.into_iter().chain(self.energy_l).find(|v| !(*v > 0.0)) {
            return bad(format!("energy constants must be positive, got {k}"));
        }
        let spec = self.domain_spec();
        let min_cells = if spec.shape == Shape::LShape { 4 } else { 2 };
        if spec.nx < min_cells || (self.domain != DomainKind::Interval && spec.ny < min_cells) {
            return bad(format!("resolution {}x{} is too coarse", spec.nx, spec.ny));
        }
        Ok(())
    }
}
