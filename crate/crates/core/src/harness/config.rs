use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NoiseModel;
use crate::geometry::CameraIntrinsics;
use crate::pnp::{LmConfig, RansacConfig};
use crate::roi::RoiConfig;
use crate::sampler::{PanelConfig, PoseSamplerConfig, SceneGeometry};
use crate::{Error, Result};

/// Every tunable in one JSON document; missing sections take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub camera: CameraIntrinsics,
    pub sampler: PoseSamplerConfig,
    pub scene: SceneGeometry,
    pub panel: PanelConfig,
    pub roi: RoiConfig,
    pub ransac: RansacConfig,
    pub lm: LmConfig,
    pub noise: NoiseModel,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::schema(None, "config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.panel.validate()?;
        self.roi.validate()?;
        self.ransac.validate()?;
        self.lm.validate()?;
        self.noise.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = Config::from_json(r#"{"ransac": {"inlier_threshold": 2.0}, "noise": {"sigma_px": 1.5}}"#).unwrap();
        assert_eq!(cfg.ransac.inlier_threshold, 2.0);
        assert_eq!(cfg.ransac.max_iterations, RansacConfig::default().max_iterations);
        assert_eq!(cfg.noise.sigma_px, 1.5);
        assert_eq!(cfg.camera, CameraIntrinsics::default());
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(matches!(Config::from_json(r#"{"cam": {}}"#), Err(Error::Schema { .. })));
    }

    #[test]
    fn json_round_trip() {
        let cfg = Config::default();
        let back = Config::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
