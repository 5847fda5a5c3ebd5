//! Run configuration: JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use gspt_core::integrator::{DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use gspt_core::{IntegrationOptions, Params, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUT_ENV: &str = "GSPT_OUT_DIR";
pub const DEFAULT_OUT: &str = "gspt-out";

/// Initial conditions on a product grid: `u` evenly spaced, `v` a fraction of
/// the room `1 - u` left in the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub u_min: f64,
    pub u_max: f64,
    pub nu: usize,
    pub v_frac_min: f64,
    pub v_frac_max: f64,
    pub nv: usize,
    /// Random offset as a fraction of the grid spacing, drawn from the seed.
    pub jitter: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            u_min: 0.1,
            u_max: 0.9,
            nu: 5,
            v_frac_min: 0.1,
            v_frac_max: 0.9,
            nv: 5,
            jitter: 0.0,
        }
    }
}

fn spaced(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n > 1 {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    } else {
        lo
    }
}

impl GridSpec {
    pub fn points(&self, seed: u64) -> Vec<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let du = if self.nu > 1 {
            (self.u_max - self.u_min) / (self.nu - 1) as f64
        } else {
            0.0
        };
        let dv = if self.nv > 1 {
            (self.v_frac_max - self.v_frac_min) / (self.nv - 1) as f64
        } else {
            0.0
        };
        let mut out = Vec::with_capacity(self.nu * self.nv);
        for i in 0..self.nu {
            for j in 0..self.nv {
                let mut u = spaced(self.u_min, self.u_max, self.nu, i);
                let mut f = spaced(self.v_frac_min, self.v_frac_max, self.nv, j);
                if self.jitter > 0.0 {
                    u += self.jitter * du * rng.gen_range(-0.5..0.5);
                    f += self.jitter * dv * rng.gen_range(-0.5..0.5);
                }
                out.push(State::new(u, (1.0 - u) * f));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<f64>,
    pub eps: Option<f64>,
    /// Explicit initial conditions `[u, v]`.
    pub ics: Vec<[f64; 2]>,
    pub grid: Option<GridSpec>,
    pub t_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    /// Sample count for sweeps, curves and square grids.
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Parameters from the preset (or `default_preset`) with field overrides.
    pub fn params(&self, default_preset: &str) -> Result<Params> {
        let name = self.preset.as_deref().unwrap_or(default_preset);
        let base = Params::preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset '{name}' (expected one of {})",
                Params::PRESETS.join(", ")
            ))
        })?;
        Params::new(
            self.alpha.unwrap_or(base.alpha),
            self.theta.unwrap_or(base.theta),
            self.beta.unwrap_or(base.beta),
            self.d.unwrap_or(base.d),
            self.eps.unwrap_or(base.eps),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn integration(&self, t_max: f64) -> Result<IntegrationOptions> {
        let o = IntegrationOptions::default()
            .with_tols(
                self.rel_tol.unwrap_or(DEFAULT_REL_TOL),
                self.abs_tol.unwrap_or(DEFAULT_ABS_TOL),
            )
            .with_t_max(self.t_max.unwrap_or(t_max));
        o.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(o)
    }

    /// Explicit ICs if any, else the grid, else nothing.
    pub fn initial_conditions(&self) -> Vec<State> {
        if !self.ics.is_empty() {
            return self.ics.iter().map(|&[u, v]| State::new(u, v)).collect();
        }
        self.grid
            .as_ref()
            .map(|g| g.points(self.seed))
            .unwrap_or_default()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
