//! Scenario files: one JSON document per run.
//!
//! Every block is optional except `beam`; missing blocks and missing
//! fields take the frozen defaults. Unknown fields are rejected with the
//! path of the offending key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam::{BeamParams, ModalOverride, PlantDefinition};
use crate::controller::{settling_bound_controller, ControllerBounds, ControllerGains, PdGains};
use crate::error::{Error, Result};
use crate::metrics::MetricsOptions;
use crate::observer::{settling_bound_observer, validate_gains, ObserverBound, ObserverDesign, QReport};
use crate::parallel::Execution;
use crate::sim::{
    cascade_bounds, run_scenario, sweep_initial_conditions, CascadeBounds, ControllerSelect, LoopGains, SimConfig,
    SimTrace, SweepReport, Systems,
};

/// The bundled reference scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub beam: BeamParams,
    #[serde(default)]
    pub modal_overrides: Vec<ModalOverride>,
    #[serde(default)]
    pub controller: ControllerGains,
    #[serde(default)]
    pub observer: ObserverDesign,
    #[serde(default)]
    pub pd: PdGains,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub metrics: MetricsOptions,
    #[serde(default)]
    pub output: OutputFiles,
}

/// Artifact file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputFiles {
    pub dir: String,
    pub trace: String,
    pub summary: String,
    /// Gnuplot script; empty disables it.
    pub plot: String,
    pub compare: String,
    pub sweep: String,
}

impl Default for OutputFiles {
    fn default() -> Self {
        OutputFiles {
            dir: "out".into(),
            trace: "trace.csv".into(),
            summary: "summary.json".into(),
            plot: "plot.gp".into(),
            compare: "compare.csv".into(),
            sweep: "sweep.json".into(),
        }
    }
}

/// Command-line adjustments applied after parsing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub theory_mode: bool,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.dt.is_none() && !self.theory_mode
    }
}

/// Prefixes parameter errors with the block they came from.
fn scoped(block: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => {
            let path = if field == block || field.starts_with(&format!("{block}.")) {
                field
            } else {
                format!("{block}.{field}")
            };
            Error::Config { path, reason }
        }
        other => other,
    }
}

impl ScenarioFile {
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn reference() -> Self {
        ScenarioFile {
            beam: BeamParams::reference(),
            modal_overrides: ModalOverride::reference(),
            controller: ControllerGains::default(),
            observer: ObserverDesign::default(),
            pd: PdGains::default(),
            sim: SimConfig::default(),
            metrics: MetricsOptions::default(),
            output: OutputFiles::default(),
        }
    }

    pub fn plant(&self) -> PlantDefinition {
        PlantDefinition {
            beam: self.beam,
            modal_overrides: self.modal_overrides.clone(),
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(dt) = overrides.dt {
            self.sim.dt = dt;
        }
        if overrides.theory_mode {
            self.sim.theory_mode = true;
        }
    }

    /// Block-level checks that need no model construction.
    pub fn validate(&self) -> Result<()> {
        self.beam.validate().map_err(|e| scoped("beam", e))?;
        self.plant().modal_model().map_err(|e| scoped("modal_overrides", e))?;
        self.controller.validate().map_err(|e| scoped("controller", e))?;
        self.observer.validate().map_err(|e| scoped("observer", e))?;
        self.pd.validate().map_err(|e| scoped("pd", e))?;
        self.sim.validate().map_err(|e| scoped("sim", e))?;
        if !(self.metrics.band_pct > 0.0 && self.metrics.window > 0.0) {
            return Err(Error::config("metrics", "band_pct and window must be > 0"));
        }
        let xi_bar = self.sim.disturbance.bound();
        if xi_bar > self.controller.disturbance_bound {
            return Err(Error::config(
                "sim.disturbance.amplitude",
                format!(
                    "disturbance bound {xi_bar} exceeds the assumed bound controller.disturbance_bound = {}",
                    self.controller.disturbance_bound
                ),
            ));
        }
        if self.controller.eta <= xi_bar {
            return Err(Error::config(
                "controller.eta",
                format!("switching gain {} must exceed the disturbance bound {xi_bar}", self.controller.eta),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioBounds {
    pub controller: ControllerBounds,
    pub observer: ObserverBound,
    pub cascade: CascadeBounds,
}

/// A validated scenario with its models and gains built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// SHA-256 of the file bytes as read.
    pub sha256: String,
    pub overrides: Overrides,
    pub systems: Systems,
    pub gains: LoopGains,
    pub bounds: ScenarioBounds,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, overrides)
    }

    pub fn from_bytes(bytes: &[u8], overrides: &Overrides) -> Result<Self> {
        let file = ScenarioFile::from_slice(bytes)?;
        Self::from_file(file, sha256_hex(bytes), overrides)
    }

    pub fn reference() -> Result<Self> {
        Self::from_bytes(DEFAULT_SCENARIO.as_bytes(), &Overrides::default())
    }

    /// Validates, builds the models and enforces `T_FTSMO < T_ctrl`.
    pub fn from_file(file: ScenarioFile, sha256: String, overrides: &Overrides) -> Result<Self> {
        let sc = Self::from_file_unchecked(file, sha256, overrides)?;
        let cascade = sc.bounds.cascade;
        if !cascade.separated {
            return Err(Error::TimeHierarchy {
                observer: cascade.t_ftsmo,
                controller: cascade.t_ctrl,
            });
        }
        Ok(sc)
    }

    /// As [`Scenario::from_file`] without the time-hierarchy gate, so the
    /// bounds of a rejected scenario can still be reported.
    pub fn from_file_unchecked(mut file: ScenarioFile, sha256: String, overrides: &Overrides) -> Result<Self> {
        file.apply(overrides);
        file.validate()?;
        let systems = Systems::build(&file.plant(), file.sim.truth_modes)?;
        let observer = file.observer.gains(&systems.canonical).map_err(|e| scoped("observer", e))?;
        let gains = LoopGains {
            controller: file.controller,
            observer,
            pd: file.pd,
        };
        let cascade = cascade_bounds(&systems, &gains);
        let bounds = ScenarioBounds {
            controller: settling_bound_controller(&gains.controller),
            observer: settling_bound_observer(&systems.canonical, &gains.observer),
            cascade,
        };
        Ok(Scenario {
            file,
            sha256,
            overrides: *overrides,
            systems,
            gains,
            bounds,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.file.sim
    }

    pub fn run(&self) -> Result<SimTrace> {
        run_scenario(&self.file.sim, &self.systems, &self.gains)
    }

    pub fn run_with(&self, controller: ControllerSelect) -> Result<SimTrace> {
        let cfg = SimConfig {
            controller,
            ..self.file.sim.clone()
        };
        run_scenario(&cfg, &self.systems, &self.gains)
    }

    pub fn sweep(&self, scales: &[f64], execution: Execution) -> Result<SweepReport> {
        sweep_initial_conditions(
            &self.file.sim,
            &self.systems,
            &self.gains,
            scales,
            self.file.metrics.band_pct,
            execution,
        )
    }

    pub fn q_report(&self) -> QReport {
        validate_gains(&self.systems.canonical, &self.gains.observer)
    }
}
