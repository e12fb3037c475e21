//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checks::ChecksConfig;
use crate::error::{Error, Result};
use crate::invariance::ConstraintSet;
use crate::models::ModelConfig;
use crate::stepper::{Scheme, StepperConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Seed for every random probe; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Defaults to picard with `dt = min(0.01, eta_ign)` up to `t = 10`.
    #[serde(default)]
    pub stepper: Option<StepperConfig>,
    /// Replaces the preset's constraint set.
    #[serde(default)]
    pub constraint: Option<ConstraintSet>,
    /// Knots used to sample the initial history.
    #[serde(default = "default_history_knots")]
    pub history_knots: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub invariance: InvarianceConfig,
    #[serde(default)]
    pub dependence: DependenceConfig,
    #[serde(default)]
    pub checks: ChecksSection,
}

fn default_history_knots() -> usize {
    65
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputRepresentation {
    #[default]
    Collocation,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub representation: OutputRepresentation,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            representation: OutputRepresentation::Collocation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Oracle intervals per `eta_ign` window.
    pub grid_n: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub schemes: Vec<Scheme>,
    pub dts: Vec<f64>,
    /// Defaults to the stepper's end time.
    pub end_time: Option<f64>,
    /// Fails the run when any sup discrepancy exceeds it.
    pub max_discrepancy: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            grid_n: 2048,
            tol: 1e-13,
            max_sweeps: 200,
            schemes: vec![Scheme::FrozenB, Scheme::Picard],
            dts: vec![0.1, 0.05, 0.025],
            end_time: None,
            max_discrepancy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceConfig {
    /// Boundary probes with one vanishing species at `theta = 0`.
    pub n_probes: usize,
    /// Strictly decreasing; defaults to `1e-2 .. 1e-7`.
    pub h_values: Option<Vec<f64>>,
    /// Random admissible histories solved and monitored besides the model's own.
    pub n_trajectories: usize,
    pub scale: f64,
    pub n_knots: usize,
    /// Also runs the synthetic `B = -1` probe, which must be violated.
    pub control: bool,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        Self {
            n_probes: 50,
            h_values: None,
            n_trajectories: 3,
            scale: 2.0,
            n_knots: 33,
            control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DependenceConfig {
    pub n_perturbations: usize,
    /// Sup norm of each perturbation.
    pub magnitude: f64,
    /// Defaults to `a + r`.
    pub end_time: Option<f64>,
}

impl Default for DependenceConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 20,
            magnitude: 1e-3,
            end_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    pub n_probes: usize,
    pub n_mutations: usize,
    pub n_knots: usize,
    pub scale: f64,
    pub t_span: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        let d = ChecksConfig::default();
        Self {
            n_probes: d.n_probes,
            n_mutations: d.n_mutations,
            n_knots: d.n_knots,
            scale: d.scale,
            t_span: d.t_span,
        }
    }
}

impl ChecksSection {
    pub fn to_config(&self) -> ChecksConfig {
        ChecksConfig {
            n_probes: self.n_probes,
            n_mutations: self.n_mutations,
            n_knots: self.n_knots,
            scale: self.scale,
            t_span: self.t_span,
            ..ChecksConfig::default()
        }
    }
}

impl RunConfig {
    /// Parses TOML; syntax and schema errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_knots < 2 {
            return Err(Error::invalid("history_knots must be >= 2"));
        }
        if let Some(s) = &self.stepper {
            s.validate()?;
        }
        let v = &self.verify;
        if v.dts.is_empty() || v.dts.iter().any(|d| !(*d > 0.0)) || v.schemes.is_empty() {
            return Err(Error::invalid("verify needs at least one scheme and positive dts"));
        }
        let d = &self.dependence;
        if !(d.magnitude > 0.0) {
            return Err(Error::invalid("dependence.magnitude must be > 0"));
        }
        let i = &self.invariance;
        if i.n_knots < 2 || !(i.scale > 0.0) {
            return Err(Error::invalid("invariance needs n_knots >= 2 and scale > 0"));
        }
        Ok(())
    }
}
