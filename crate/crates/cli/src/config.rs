use std::path::Path;

use motok::heatmap::RenderConfig;
use motok::model::ModelConfig;
use motok::trainer::TrainConfig;
use motok::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

/// Everything a training run needs, as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub render: RenderConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!(
                "unsupported config schema {}, expected {SCHEMA}",
                self.schema
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        let r = &self.render;
        if r.window_length == 0 || r.window_stride == 0 || r.height == 0 || r.width == 0 {
            return Err(Error::Config("render extents and window settings must be positive".into()));
        }
        let rendered = [r.window_length, r.height, r.width];
        for ((axis, want), got) in ["T", "H", "W"].iter().zip(self.model.input_extents).zip(rendered) {
            if want != got {
                return Err(Error::Config(format!(
                    "axis {axis}: model expects extent {want}, render settings produce {got}"
                )));
            }
        }
        Ok(())
    }

    /// Checks that `joints`-joint keypoints render into the model's channels.
    pub fn check_joints(&self, joints: usize) -> Result<()> {
        let got = self.render.channels(joints);
        if got != self.model.in_channels {
            return Err(Error::Config(format!(
                "axis C: model expects {} channels, {joints} joints render {got}",
                self.model.in_channels
            )));
        }
        Ok(())
    }
}
