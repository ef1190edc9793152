//! Scenario files: a strict TOML schema bundling the flux, grid, time
//! stepping, boundary and initial data, and the solver settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::TraceConfig;
use crate::discretization::{
    AuxiliarySettings, DiffusionScaling, DiscretizationError, FluxSign, Grid, HomotopyKind, HomotopyProblem, Scheme,
    TimeStep, DEFAULT_OMEGA,
};
use crate::metrics::MetricsConfig;
use crate::physics::{max_abs_slope, CoreyFlux, DEFAULT_HULL_SAMPLES};
use crate::solver::NewtonConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid override `{0}`: expected key.path=value")]
    Override(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_cells: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub tau: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub s_inflow: f64,
}

/// Initial saturation, either one value for every cell or a full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialProfile {
    Uniform(f64),
    Cells(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub s0: InitialProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySpec {
    pub kind: HomotopyKind,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub flux_sign: FluxSign,
    #[serde(default)]
    pub diffusion_scaling: DiffusionScaling,
    #[serde(default = "default_hull_samples")]
    pub hull_samples: usize,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

fn default_hull_samples() -> usize {
    DEFAULT_HULL_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub flux: CoreyFlux,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub boundary: BoundarySpec,
    pub initial: InitialSpec,
    pub homotopy: HomotopySpec,
    #[serde(default)]
    pub solver: NewtonConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    load_scenario_with(path, &[])
}

/// Load a scenario file, applying `key.path=value` overrides before
/// validation.
pub fn load_scenario_with(path: &Path, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let mut tree: toml::Value = toml::from_str(text)?;
    for ov in overrides {
        apply_override(&mut tree, ov)?;
    }
    let mut scenario: Scenario = tree.try_into()?;
    scenario.trace.newton = scenario.solver;
    scenario.validate()?;
    Ok(scenario)
}

fn apply_override(tree: &mut toml::Value, spec: &str) -> Result<(), ScenarioError> {
    let bad = || ScenarioError::Override(spec.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let keys: Vec<&str> = key.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad());
    }
    // TOML literal if it parses as one, bare string otherwise
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = keys.split_last().ok_or_else(bad)?;
    let mut node = tree;
    for k in parents {
        let table = node.as_table_mut().ok_or_else(bad)?;
        node = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut().ok_or_else(bad)?.insert(last.to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.name.trim().is_empty() {
            return invalid("name must not be empty".into());
        }
        self.flux.validate().map_err(|e| ScenarioError::Invalid(format!("flux: {e}")))?;
        if self.grid.n_cells < 1 {
            return invalid("grid.n_cells must be >= 1".into());
        }
        if !(self.grid.length > 0.0 && self.grid.length.is_finite()) {
            return invalid(format!("grid.length = {} must be > 0", self.grid.length));
        }
        if !(self.time.tau > 0.0 && self.time.tau.is_finite()) {
            return invalid(format!("time.tau = {} must be > 0", self.time.tau));
        }
        if self.time.n_steps < 1 {
            return invalid("time.n_steps must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.boundary.s_inflow) {
            return invalid(format!("boundary.s_inflow = {} outside [0, 1]", self.boundary.s_inflow));
        }
        match &self.initial.s0 {
            InitialProfile::Uniform(v) if !(0.0..=1.0).contains(v) => {
                return invalid(format!("initial.s0 = {v} outside [0, 1]"));
            }
            InitialProfile::Cells(cells) => {
                if cells.len() != self.grid.n_cells {
                    return invalid(format!(
                        "initial.s0 has {} entries but grid.n_cells = {}",
                        cells.len(),
                        self.grid.n_cells
                    ));
                }
                if let Some((k, v)) = cells.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                    return invalid(format!("initial.s0[{k}] = {v} outside [0, 1]"));
                }
            }
            InitialProfile::Uniform(_) => {}
        }
        if !(self.homotopy.omega > 0.0) {
            return invalid(format!("homotopy.omega = {} must be > 0", self.homotopy.omega));
        }
        if self.homotopy.hull_samples < 64 {
            return invalid(format!("homotopy.hull_samples = {} must be >= 64", self.homotopy.hull_samples));
        }
        self.solver.validate().map_err(ScenarioError::Invalid)?;
        self.trace.validate().map_err(ScenarioError::Invalid)?;
        if self.trace.time_step_index >= self.time.n_steps {
            return invalid(format!(
                "trace.time_step_index = {} must be below time.n_steps = {}",
                self.trace.time_step_index, self.time.n_steps
            ));
        }
        self.metrics.validate().map_err(ScenarioError::Invalid)?;
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.n_cells, self.grid.length).expect("validated grid")
    }

    pub fn initial_profile(&self) -> Vec<f64> {
        match &self.initial.s0 {
            InitialProfile::Uniform(v) => vec![*v; self.grid.n_cells],
            InitialProfile::Cells(cells) => cells.clone(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        Scheme { flux_sign: self.homotopy.flux_sign, diffusion_scaling: self.homotopy.diffusion_scaling }
    }

    /// Auxiliary settings; the resident state is the initial value in the
    /// outflow cell.
    pub fn auxiliary(&self) -> AuxiliarySettings {
        let s_resident = *self.initial_profile().last().expect("n_cells >= 1");
        AuxiliarySettings { omega: self.homotopy.omega, s_resident, hull_samples: self.homotopy.hull_samples }
    }

    /// Homotopy of kind `kind` for the step leaving `s_prev`.
    pub fn problem(&self, kind: HomotopyKind, s_prev: Vec<f64>) -> Result<HomotopyProblem, DiscretizationError> {
        let step = TimeStep::new(self.time.tau, s_prev, self.boundary.s_inflow)?;
        HomotopyProblem::new(kind, self.flux, self.grid(), step, self.scheme(), &self.auxiliary())
    }

    /// CFL number `tau max|f'| / dx` of every step.
    pub fn cfl(&self) -> f64 {
        self.time.tau * max_abs_slope(&self.flux) / self.grid().dx
    }

    /// Trace settings with the scenario's Newton configuration.
    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig { newton: self.solver, ..self.trace }
    }
}
