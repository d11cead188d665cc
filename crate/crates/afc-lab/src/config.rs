//! Experiment configuration: one TOML file whose sections mirror the model
//! types. Unknown keys anywhere are rejected.

use std::path::Path;

use afc_core::analyzer::{CoincidenceConfig, DetectorConfig, UmziConfig};
use afc_core::memory::MemoryBank;
use afc_core::pipeline::{DeskScale, OpticalPaths, PipelineConfig};
use afc_core::source::SourceModel;
use afc_core::tomography::ExposureModel;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// The paper-calibrated configuration shipped with the crate.
pub const PAPER_CONFIG: &str = include_str!("../configs/paper.toml");
/// A near-ideal configuration: clean source, negligible multi-pair rate.
pub const IDEAL_CONFIG: &str = include_str!("../configs/ideal.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyzers {
    pub idler: UmziConfig,
    pub signal: UmziConfig,
}

/// Memory preparation cycle. Photons are only sent during the measure
/// window, so simulated time is measure-window time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutyCycle {
    pub prepare_ms: f64,
    pub wait_ms: f64,
    pub measure_ms: f64,
    pub period_ms: f64,
}

impl Default for DutyCycle {
    fn default() -> Self {
        DutyCycle {
            prepare_ms: 200.0,
            wait_ms: 20.0,
            measure_ms: 280.0,
            period_ms: 500.0,
        }
    }
}

impl DutyCycle {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.prepare_ms, self.wait_ms, self.measure_ms, self.period_ms];
        if parts.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || self.measure_ms <= 0.0 {
            return Err(LabError::Config(
                "duty_cycle: durations must be finite and nonnegative, measure_ms positive".into(),
            ));
        }
        let sum = self.prepare_ms + self.wait_ms + self.measure_ms;
        if (sum - self.period_ms).abs() > 1e-9 * self.period_ms.max(1.0) {
            return Err(LabError::Config(format!(
                "duty_cycle: prepare_ms + wait_ms + measure_ms = {sum} but period_ms = {}",
                self.period_ms
            )));
        }
        Ok(())
    }

    pub fn measure_fraction(&self) -> f64 {
        self.measure_ms / self.period_ms
    }

    /// Wall-clock time needed to accumulate `measure_s` of measure-window time.
    pub fn wall_time_s(&self, measure_s: f64) -> f64 {
        measure_s / self.measure_fraction()
    }
}

/// Acquisition plan. Durations are measure-window seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    /// Per analyzer setting, for the CHSH and tomography runs.
    pub setting_duration_s: f64,
    /// Per phase point of the fringe scans.
    pub fringe_point_duration_s: f64,
    pub fringe_points: usize,
    pub monte_carlo_trials: usize,
    #[serde(default)]
    pub exposure_model: ExposureModel,
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.setting_duration_s > 0.0 && self.fringe_point_duration_s > 0.0) {
            return Err(LabError::Config("run: durations must be positive".into()));
        }
        if self.fringe_points < 5 {
            return Err(LabError::Config("run.fringe_points: need at least 5".into()));
        }
        if self.monte_carlo_trials < 2 {
            return Err(LabError::Config("run.monte_carlo_trials: need at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: SourceModel,
    pub bank: MemoryBank,
    pub analyzers: Analyzers,
    pub detectors: DetectorConfig,
    pub coincidence: CoincidenceConfig,
    pub optics: OpticalPaths,
    #[serde(default)]
    pub desk_scale: DeskScale,
    #[serde(default)]
    pub duty_cycle: DutyCycle,
    pub run: RunPlan,
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_CONFIG).expect("shipped paper config is valid")
    }

    pub fn ideal() -> Self {
        Self::from_toml_str(IDEAL_CONFIG).expect("shipped ideal config is valid")
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline()
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))?;
        self.duty_cycle.validate()?;
        self.run.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            source: self.source.clone(),
            bank: self.bank.clone(),
            idler_umzi: self.analyzers.idler.clone(),
            signal_umzi: self.analyzers.signal.clone(),
            detector: self.detectors.clone(),
            coincidence: self.coincidence.clone(),
            optics: self.optics.clone(),
            desk: self.desk_scale.clone(),
        }
    }

    /// Pump cycles in `seconds` of measure-window time.
    pub fn cycles_for(&self, seconds: f64) -> u64 {
        (seconds / (self.source.pump.period_ns * 1e-9)).round() as u64
    }
}
