//! Experiment configuration document.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerState, GainError, PiGains};
use crate::plant::{AxisName, AxisParams, PlantError};
use crate::sensing::{CameraError, CameraModel};
use crate::simkit::{AxisRig, EncoderConfig, GateConfig, LatencyConfig, Signal, SimConfig, SimError};

/// Configuration with the published constants, used when no file is given.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{0}")]
    Plant(#[from] PlantError),
    #[error("gains: {0}")]
    Gains(#[from] GainError),
    #[error("sim: {0}")]
    Sim(#[from] SimError),
    #[error("{camera}: {source}")]
    Camera {
        camera: &'static str,
        #[source]
        source: CameraError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("axis {0} is not configured")]
    MissingAxis(AxisName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorUnit {
    #[default]
    M,
    Cm,
    Mm,
}

impl ErrorUnit {
    /// Multiplier converting a gain per this unit to a gain per metre.
    pub fn per_metre(self) -> f64 {
        match self {
            ErrorUnit::M => 1.0,
            ErrorUnit::Cm => 100.0,
            ErrorUnit::Mm => 1000.0,
        }
    }
}

/// PI gains as written in the file. `kp` and `ki` act on the position error
/// expressed in `error_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub kp: f64,
    pub ki: f64,
    #[serde(default)]
    pub error_unit: ErrorUnit,
    pub i_clamp: f64,
    pub v_sat: f64,
}

impl GainsConfig {
    /// Gains in V/m and V/(m·s).
    pub fn resolve(&self) -> PiGains {
        let k = self.error_unit.per_metre();
        PiGains {
            kp: self.kp * k,
            ki: self.ki * k,
            i_clamp: self.i_clamp,
            v_sat: self.v_sat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsConfig {
    /// Distance between the two hand LEDs (mm).
    pub led_baseline_mm: f64,
    pub encoder: EncoderConfig,
    pub camera_top: CameraModel,
    pub camera_side: CameraModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub step_deg: f64,
    pub step_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub gains: GainsConfig,
    pub gate: GateConfig,
    pub sensors: SensorsConfig,
    pub stepper: StepperConfig,
    pub latency: LatencyConfig,
    pub experiment: Signal,
    pub axes: Vec<AxisParams>,
}

fn finite_non_negative(what: &str, v: f64) -> Result<(), ConfigError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(ConfigError::Invalid(format!("{what} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("bundled default config is valid")
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        self.gains.resolve().validate()?;
        ControllerState::new(self.gate.band_m, self.gate.delay_s).validate()?;
        if self.sensors.encoder.segments == 0 {
            return Err(ConfigError::Invalid("sensors.encoder.segments must be >= 1".into()));
        }
        finite_non_negative("sensors.encoder.kappa", self.sensors.encoder.kappa)?;
        if self.sensors.led_baseline_mm.is_nan() || self.sensors.led_baseline_mm <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "sensors.led_baseline_mm must be > 0, got {}",
                self.sensors.led_baseline_mm
            )));
        }
        self.sensors
            .camera_top
            .validate()
            .map_err(|source| ConfigError::Camera {
                camera: "sensors.camera_top",
                source,
            })?;
        self.sensors
            .camera_side
            .validate()
            .map_err(|source| ConfigError::Camera {
                camera: "sensors.camera_side",
                source,
            })?;
        if !(self.stepper.step_deg > 0.0 && self.stepper.step_hz > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "stepper step_deg and step_hz must be > 0, got {} and {}",
                self.stepper.step_deg, self.stepper.step_hz
            )));
        }
        finite_non_negative("latency.base_ms", self.latency.base_ms)?;
        finite_non_negative("latency.jitter_ms", self.latency.jitter_ms)?;
        let e = &self.experiment;
        for (what, v) in [
            ("experiment.amplitude", e.amplitude),
            ("experiment.slope", e.slope),
            ("experiment.offset", e.offset),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{what} must be finite, got {v}")));
            }
        }
        finite_non_negative("experiment.freq", e.freq)?;
        finite_non_negative("experiment.onset", e.onset)?;
        if let Some(stop) = e.stop {
            finite_non_negative("experiment.stop", stop)?;
        }
        if self.axes.is_empty() {
            return Err(ConfigError::Invalid("at least one [[axes]] entry is required".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.axes {
            if !seen.insert(a.name) {
                return Err(ConfigError::Invalid(format!("axis {} is configured twice", a.name)));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn axis(&self, name: AxisName) -> Result<&AxisParams, ConfigError> {
        self.axes
            .iter()
            .find(|a| a.name == name)
            .ok_or(ConfigError::MissingAxis(name))
    }

    pub fn pi_gains(&self) -> PiGains {
        self.gains.resolve()
    }

    /// Closed-loop rig for one axis with its carrier placed at `start_pos`.
    pub fn build_rig(&self, name: AxisName, start_pos: f64) -> Result<AxisRig, ConfigError> {
        Ok(AxisRig::new(
            self.axis(name)?.clone(),
            self.pi_gains(),
            self.gate,
            self.sensors.encoder,
            &self.sim,
            start_pos,
        )?)
    }

    /// Flattens the document into sorted `dotted.key = value` lines.
    pub fn flatten(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let value = toml::Value::try_from(self)?;
        let mut out = Vec::new();
        flatten_into("config", &value, &mut out);
        Ok(out)
    }
}

fn flatten_into(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten_into(&format!("{prefix}.{k}"), v, out);
            }
        }
        toml::Value::Array(items) if items.iter().any(|i| i.is_table()) => {
            for (i, v) in items.iter().enumerate() {
                let label = v
                    .get("name")
                    .and_then(toml::Value::as_str)
                    .map_or_else(|| i.to_string(), str::to_string);
                flatten_into(&format!("{prefix}.{label}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parses_and_carries_published_constants() {
        let c = ExperimentConfig::default_config();
        assert_eq!(c.axes.len(), 3);
        assert_eq!(c.sensors.camera_top.mm_per_px_u, 0.586);
        assert_eq!(c.sensors.camera_top.mm_per_px_v, 0.576);
        assert_eq!(c.axis(AxisName::Z).unwrap().pitch, 1.25e-3);
        assert_eq!(c.axis(AxisName::X).unwrap().pitch, 1.5e-3);
        let g = c.pi_gains();
        assert_eq!((g.kp, g.ki), (5500.0, 15000.0));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let a = ExperimentConfig::default_config();
        let text = a.to_toml_string().unwrap();
        let b = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(text, b.to_toml_string().unwrap());
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = DEFAULT_CONFIG_TOML.replace("delay_s = 5.0", "delay_s = 5.0\nbogus = 1");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn non_positive_kp_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("kp = 55.0", "kp = 0.0");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Gains(GainError::Kp(_)))
        ));
    }

    #[test]
    fn unknown_signal_kind_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("kind = \"step\"", "kind = \"square\"");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn duplicate_axis_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("name = \"y\"", "name = \"x\"");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn flatten_names_axes() {
        let flat = ExperimentConfig::default_config().flatten().unwrap();
        assert!(flat.iter().any(|(k, v)| k == "config.axes.z.g_input" && v == "9.8"));
        assert!(flat
            .iter()
            .any(|(k, v)| k == "config.gains.error_unit" && v == "\"cm\""));
    }
}
