//! TOML run configuration. Every section and field is optional and falls
//! back to its default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentor::{AugmentConfig, SensorModel};
use crate::baselines::IcpConfig;
use crate::error::{Error, Result};
use crate::eval::{PipelineConfig, Thresholds};
use crate::losses::LossWeights;
use crate::voxelgrid::GridSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridSpec,
    pub sensor: SensorModel,
    pub losses: LossWeights,
    pub thresholds: Thresholds,
    pub augment: AugmentConfig,
    pub icp: IcpConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sensor.validate()?;
        self.losses.validate()?;
        self.thresholds.validate()?;
        self.augment.validate()?;
        if self.icp.max_iter == 0 || !(self.icp.tol >= 0.0) {
            return Err(Error::Config("icp: max_iter must be positive and tol >= 0".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            grid: self.grid,
            thresholds: self.thresholds,
            icp: self.icp,
            ..PipelineConfig::default()
        }
    }
}
