use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis downsampling of the heatmap volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compression {
    F8,
    F16,
    F32,
}

impl Compression {
    /// Downsampling applied to each of `T`, `H` and `W`.
    pub fn factor(self) -> usize {
        match self {
            Compression::F8 => 8,
            Compression::F16 => 16,
            Compression::F32 => 32,
        }
    }

    /// Number of stride-2 stages, `log2(factor)`.
    pub fn stages(self) -> usize {
        self.factor().trailing_zeros() as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            Compression::F8 => "F8",
            Compression::F16 => "F16",
            Compression::F32 => "F32",
        }
    }
}

impl std::fmt::Display for Compression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F8" => Ok(Compression::F8),
            "F16" => Ok(Compression::F16),
            "F32" => Ok(Compression::F32),
            _ => Err(Error::Config(format!(
                "unknown compression {s:?}, expected F8, F16 or F32"
            ))),
        }
    }
}

fn default_embed_dim() -> usize {
    256
}
fn default_base_channels() -> usize {
    32
}
fn default_max_channels() -> usize {
    256
}
fn default_res_blocks() -> usize {
    2
}
fn default_lambda_adv() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Architecture and objective weights of one tokenizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub compression: Compression,
    pub vocab: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_base_channels")]
    pub base_channels: usize,
    /// Joints for planar heatmaps, three per joint for tri-planes.
    pub in_channels: usize,
    /// `(T, H, W)` of one input window.
    pub input_extents: [usize; 3],
    /// Weight of the generator's adversarial term.
    #[serde(default = "default_lambda_adv")]
    pub lambda_adv: f64,
    #[serde(default = "one")]
    pub alpha_perceptual: f64,
    #[serde(default = "one")]
    pub beta_l1: f64,
    /// Multiplier on the commitment half of the VQ loss.
    #[serde(default = "one")]
    pub commitment: f64,
    #[serde(default = "default_res_blocks")]
    pub res_blocks: usize,
    /// Channel cap for the doubling-per-stage width schedule.
    #[serde(default = "default_max_channels")]
    pub max_channels: usize,
    /// Build the discriminator at all; `false` gives the purely
    /// reconstructive baseline.
    #[serde(default = "yes")]
    pub discriminator: bool,
}

pub(crate) const AXES: [&str; 3] = ["T", "H", "W"];

impl ModelConfig {
    /// Desk-scale defaults for the given geometry.
    pub fn new(
        compression: Compression,
        vocab: usize,
        in_channels: usize,
        input_extents: [usize; 3],
    ) -> Self {
        Self {
            compression,
            vocab,
            embed_dim: default_embed_dim(),
            base_channels: default_base_channels(),
            in_channels,
            input_extents,
            lambda_adv: default_lambda_adv(),
            alpha_perceptual: 1.0,
            beta_l1: 1.0,
            commitment: 1.0,
            res_blocks: default_res_blocks(),
            max_channels: default_max_channels(),
            discriminator: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=1 << 16).contains(&self.vocab) {
            return Err(Error::Config(format!(
                "vocab must lie in 2..=65536, got {}",
                self.vocab
            )));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("base_channels", self.base_channels),
            ("in_channels", self.in_channels),
            ("max_channels", self.max_channels),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let f = self.compression.factor();
        for (axis, &e) in AXES.iter().zip(&self.input_extents) {
            if e == 0 || e % f != 0 {
                return Err(Error::Config(format!(
                    "axis {axis}: extent {e} is not a positive multiple of the {} factor {f}",
                    self.compression
                )));
            }
        }
        for (name, v) in [
            ("lambda_adv", self.lambda_adv),
            ("alpha_perceptual", self.alpha_perceptual),
            ("beta_l1", self.beta_l1),
            ("commitment", self.commitment),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `(t, h, w)` of the token lattice.
    pub fn latent_extents(&self) -> [usize; 3] {
        self.input_extents.map(|e| e / self.compression.factor())
    }

    /// Input voxels per token: `T·H·W / (t·h·w)`.
    pub fn compression_ratio(&self) -> u64 {
        let input: usize = self.input_extents.iter().product();
        let latent: usize = self.latent_extents().iter().product();
        (input / latent) as u64
    }

    /// Channel width after `stage` downsamplings.
    pub fn width(&self, stage: usize) -> usize {
        (self.base_channels << stage).min(self.max_channels)
    }

    /// Whether the generator sees an adversarial term at all.
    pub fn adversarial(&self) -> bool {
        self.discriminator && self.lambda_adv != 0.0
    }
}
