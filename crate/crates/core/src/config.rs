//! Pipeline configuration file.
//!
//! Every section is optional and falls back to its default; unknown keys
//! are rejected. In missions the detector's confidence noise and seed come
//! from `simulator.noise` and the top-level `seed`.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::dedup::DbscanParams;
use crate::fusion::DetectorConfig;
use crate::reacquisition::{GimbalLimits, ReacqPolicy};
use crate::simulator::SimulatorConfig;
use crate::telemetry::{FileSink, HttpSink, NullSink, Sink};
use crate::thermal::{Calibration, ClaheParams, Palette};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSettings {
    pub calibration: Calibration,
    pub palettes: Vec<Palette>,
    /// Applied to each palette rendering before embedding.
    pub clahe: Option<ClaheParams>,
}

impl Default for ThermalSettings {
    fn default() -> Self {
        Self {
            calibration: Calibration::default(),
            palettes: Palette::ALL.to_vec(),
            clahe: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacqSettings {
    pub enabled: bool,
    pub policy: ReacqPolicy,
    pub limits: GimbalLimits,
}

impl Default for ReacqSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            policy: ReacqPolicy::default(),
            limits: GimbalLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SinkConfig {
    #[default]
    Null,
    File {
        path: PathBuf,
    },
    Http {
        url: String,
    },
}

impl SinkConfig {
    pub fn build(&self) -> Box<dyn Sink> {
        match self {
            SinkConfig::Null => Box::new(NullSink),
            SinkConfig::File { path } => Box::new(FileSink::new(path)),
            SinkConfig::Http { url } => Box::new(HttpSink::new(url)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelemetrySettings {
    pub site_id: String,
    pub uav: String,
    /// Prefix of the media URIs attached to each report record.
    pub media_prefix: String,
    pub sink: SinkConfig,
}

impl Default for TelemetrySettings {
    fn default() -> Self {
        Self {
            site_id: "PV-SIM-01".into(),
            uav: "SIM-UAV".into(),
            media_prefix: "sim://PV-SIM-01".into(),
            sink: SinkConfig::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub thermal: ThermalSettings,
    pub detector: DetectorConfig,
    pub reacquisition: ReacqSettings,
    pub dedup: DbscanParams,
    pub telemetry: TelemetrySettings,
    pub simulator: SimulatorConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let cal = &self.thermal.calibration;
        if !(cal.scale > 0.0 && cal.scale.is_finite() && cal.offset.is_finite()) {
            return Err(ConfigError::Invalid("calibration scale must be positive".into()));
        }
        if self.thermal.palettes.len() < 2 {
            return Err(ConfigError::Invalid("at least two palettes are required".into()));
        }
        let mut seen = self.thermal.palettes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.thermal.palettes.len() {
            return Err(ConfigError::Invalid("palettes must be distinct".into()));
        }
        if let Some(c) = &self.thermal.clahe {
            let cam = &self.simulator.camera;
            if c.tile_rows == 0 || c.tile_cols == 0 || c.tile_rows > cam.height || c.tile_cols > cam.width || !(c.clip_limit >= 1.0) {
                return Err(ConfigError::Invalid("clahe tile grid or clip limit out of range".into()));
            }
        }
        let d = &self.detector;
        if !(d.delta_c > 0.0) || d.min_blob_pixels == 0 || d.default_class.is_empty() {
            return Err(ConfigError::Invalid("detector threshold, blob size and class must be positive".into()));
        }
        self.reacquisition.policy.validate().map_err(|e| invalid(&e))?;
        let l = &self.reacquisition.limits;
        if !(l.min_pitch < l.max_pitch && l.max_yaw_step > 0.0) {
            return Err(ConfigError::Invalid("gimbal limits are empty".into()));
        }
        self.dedup.validate().map_err(|e| invalid(&e))?;
        let t = &self.telemetry;
        if t.site_id.is_empty() || t.uav.is_empty() {
            return Err(ConfigError::Invalid("site_id and uav must be non-empty".into()));
        }
        self.simulator.validate().map_err(|e| invalid(&e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.thermal.palettes.len(), 4);
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::default();
        c.seed = 42;
        c.telemetry.sink = SinkConfig::Http {
            url: "http://127.0.0.1:9/ingest".into(),
        };
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            r#"{"sed": 1}"#,
            r#"{"dedup": {"epsilon": 1.0, "minpts": 2}}"#,
            r#"{"telemetry": {"sink": {"kind": "file", "path": "a", "x": 1}}}"#,
            r#"{"simulator": {"flight": {"altitud": 5}}}"#,
        ] {
            assert!(matches!(PipelineConfig::from_json(bad), Err(ConfigError::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            r#"{"dedup": {"epsilon": 0.0}}"#,
            r#"{"thermal": {"palettes": ["ironbow"]}}"#,
            r#"{"thermal": {"palettes": ["ironbow", "ironbow"]}}"#,
            r#"{"reacquisition": {"policy": {"tau_ra": 1.5}}}"#,
            r#"{"simulator": {"flight": {"along_overlap": 1.0}}}"#,
            r#"{"simulator": {"noise": {"miss_probability": -0.1}}}"#,
        ] {
            assert!(matches!(PipelineConfig::from_json(bad), Err(ConfigError::Invalid(_))), "{bad}");
        }
    }
}
