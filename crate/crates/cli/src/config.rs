use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tlebm_core::{EquilibriumOptions, Error as CoreError, IntegrationOptions, ModelParams, State, SweepParam};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub t_a: f64,
    pub t_s: f64,
}

impl From<InitialState> for State {
    fn from(s: InitialState) -> State {
        State::new(s.t_a, s.t_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { param: SweepParam::EpsilonA, lo: 0.3, hi: 1.9, steps: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpConfig {
    pub eps_star: f64,
    pub eps_plus: f64,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self { eps_star: 0.62, eps_plus: 0.70 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisConfig {
    pub lo: f64,
    pub hi: f64,
    /// Points per leg of the up-down path.
    pub steps: usize,
}

impl Default for HysteresisConfig {
    fn default() -> Self {
        Self { lo: 0.2, hi: 1.2, steps: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinsConfig {
    pub nx: usize,
    pub ny: usize,
    /// Defaults to the equilibrium bounds box when absent.
    pub t_a_range: Option<(f64, f64)>,
    pub t_s_range: Option<(f64, f64)>,
    pub threshold_tol: f64,
    pub separatrix_points: usize,
    pub separatrix_tol: f64,
}

impl Default for BasinsConfig {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            t_a_range: None,
            t_s_range: None,
            threshold_tol: 1e-6,
            separatrix_points: 200,
            separatrix_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityConfig {
    pub epsilon_a: f64,
    pub tol: f64,
    pub samples: usize,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        Self { epsilon_a: 1.999, tol: 1e-4, samples: 1001 }
    }
}

/// Everything a subcommand may read. Every table is optional and falls back to defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub out_dir: Option<PathBuf>,
    pub model: ModelParams,
    pub integrator: IntegrationOptions,
    pub equilibria: EquilibriumOptions,
    pub initial: Option<InitialState>,
    pub sweep: SweepConfig,
    pub jump: JumpConfig,
    pub hysteresis: HysteresisConfig,
    pub basins: BasinsConfig,
    pub convexity: ConvexityConfig,
}

fn bad(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(format!("{key}: {}", reason.into()))
}

fn prefixed(section: &str, e: CoreError) -> CliError {
    match e {
        CoreError::InvalidParams { name, reason } | CoreError::InvalidOptions { name, reason } => {
            bad(&format!("{section}.{name}"), reason)
        }
        other => bad(section, other.to_string()),
    }
}

fn check_range(key: &str, lo: f64, hi: f64) -> Result<(), CliError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(bad(key, format!("need finite lo < hi, got ({lo}, {hi})")))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| prefixed("model", e))?;
        self.integrator.validate().map_err(|e| prefixed("integrator", e))?;
        let eq = &self.equilibria;
        if eq.grid_points < 16 {
            return Err(bad("equilibria.grid_points", "must be >= 16"));
        }
        if !(eq.tangency_tol > 0.0) {
            return Err(bad("equilibria.tangency_tol", "must be > 0"));
        }
        if !(eq.kink_tol > 0.0) {
            return Err(bad("equilibria.kink_tol", "must be > 0"));
        }
        if let Some(s) = self.initial {
            if !(s.t_a.is_finite() && s.t_a >= 0.0) {
                return Err(bad("initial.t_a", "must be finite and >= 0"));
            }
            if !(s.t_s.is_finite() && s.t_s >= 0.0) {
                return Err(bad("initial.t_s", "must be finite and >= 0"));
            }
        }
        check_range("sweep", self.sweep.lo, self.sweep.hi)?;
        if self.sweep.steps == 0 {
            return Err(bad("sweep.steps", "must be > 0"));
        }
        if !(self.jump.eps_plus >= self.jump.eps_star) {
            return Err(bad("jump.eps_plus", "must be >= jump.eps_star"));
        }
        check_range("hysteresis", self.hysteresis.lo, self.hysteresis.hi)?;
        if self.hysteresis.steps < 2 {
            return Err(bad("hysteresis.steps", "must be >= 2"));
        }
        let b = &self.basins;
        if b.nx < 2 || b.ny < 2 {
            return Err(bad("basins.nx", "nx and ny must be >= 2"));
        }
        if let Some((lo, hi)) = b.t_a_range {
            check_range("basins.t_a_range", lo, hi)?;
        }
        if let Some((lo, hi)) = b.t_s_range {
            check_range("basins.t_s_range", lo, hi)?;
        }
        if !(b.threshold_tol > 0.0) {
            return Err(bad("basins.threshold_tol", "must be > 0"));
        }
        if !(b.separatrix_tol > 0.0) {
            return Err(bad("basins.separatrix_tol", "must be > 0"));
        }
        if b.separatrix_points < 2 {
            return Err(bad("basins.separatrix_points", "must be >= 2"));
        }
        let c = &self.convexity;
        if !(c.epsilon_a > 0.0) {
            return Err(bad("convexity.epsilon_a", "must be > 0"));
        }
        if !(c.tol > 0.0) {
            return Err(bad("convexity.tol", "must be > 0"));
        }
        if c.samples < 2 {
            return Err(bad("convexity.samples", "must be >= 2"));
        }
        Ok(())
    }

    pub fn initial_state(&self, command: &str) -> Result<State, CliError> {
        self.initial
            .map(State::from)
            .ok_or_else(|| bad("initial", format!("table with t_a and t_s is required by `{command}`")))
    }

    /// SHA-256 of the fully defaulted config in canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
