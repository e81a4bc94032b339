//! Gaussian heatmap rendering of keypoint sequences.
//!
//! Each joint gets its own channel. A pixel at row `h`, column `w` of joint
//! `k`'s map holds `exp(-((w - x)^2 + (h - y)^2) / (2 sigma^2))` where `(x, y)`
//! is the joint position; 3D volumes add the depth term `(d - z)^2`. The x
//! coordinate runs along the width axis, y along height and z along depth.

mod keypoints;
mod render;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub use keypoints::{window, KeypointSequence};
pub use render::{default_sigma, project_triplane, render2d, render2d_limbs, render3d};

/// Memory layout of a [`HeatmapVolume`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// `F × K × H × W`
    Planar {
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    /// `F × K × D × H × W`
    Volume {
        frames: usize,
        channels: usize,
        depth: usize,
        height: usize,
        width: usize,
    },
    /// `F × 3K × H × W`: XY planes of every joint, then YZ, then XZ.
    Triplane {
        frames: usize,
        joints: usize,
        height: usize,
        width: usize,
    },
}

impl Layout {
    pub fn frames(&self) -> usize {
        match *self {
            Layout::Planar { frames, .. }
            | Layout::Volume { frames, .. }
            | Layout::Triplane { frames, .. } => frames,
        }
    }

    pub fn channels(&self) -> usize {
        match *self {
            Layout::Planar { channels, .. } | Layout::Volume { channels, .. } => channels,
            Layout::Triplane { joints, .. } => 3 * joints,
        }
    }

    /// Extents of one channel of one frame.
    pub fn spatial(&self) -> Vec<usize> {
        match *self {
            Layout::Planar { height, width, .. } | Layout::Triplane { height, width, .. } => {
                vec![height, width]
            }
            Layout::Volume {
                depth,
                height,
                width,
                ..
            } => vec![depth, height, width],
        }
    }

    pub fn spatial_volume(&self) -> usize {
        self.spatial().iter().product()
    }

    pub fn numel(&self) -> usize {
        self.frames() * self.channels() * self.spatial_volume()
    }

    /// Same layout with a different frame count.
    pub fn with_frames(self, f: usize) -> Self {
        match self {
            Layout::Planar {
                channels,
                height,
                width,
                ..
            } => Layout::Planar {
                frames: f,
                channels,
                height,
                width,
            },
            Layout::Volume {
                channels,
                depth,
                height,
                width,
                ..
            } => Layout::Volume {
                frames: f,
                channels,
                depth,
                height,
                width,
            },
            Layout::Triplane {
                joints,
                height,
                width,
                ..
            } => Layout::Triplane {
                frames: f,
                joints,
                height,
                width,
            },
        }
    }
}

/// Dense heatmap values in `[0, 1]`, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapVolume {
    layout: Layout,
    values: Vec<f64>,
    sigma: f64,
}

impl HeatmapVolume {
    pub fn new(layout: Layout, values: Vec<f64>, sigma: f64) -> Result<Self> {
        if layout.numel() != values.len() {
            return Err(Error::dim("heatmap values", layout.numel(), values.len()));
        }
        if layout.numel() == 0 {
            return Err(Error::arg("heatmap with a zero extent"));
        }
        Ok(Self {
            layout,
            values,
            sigma,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn frames(&self) -> usize {
        self.layout.frames()
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    /// Values of channel `c` in frame `f`.
    pub fn image(&self, f: usize, c: usize) -> &[f64] {
        let s = self.layout.spatial_volume();
        let start = (f * self.channels() + c) * s;
        &self.values[start..start + s]
    }

    /// Model input tensor `[N, C, T, H, W]` from planar or tri-plane heatmaps;
    /// frames become the temporal axis. Every volume must share one layout.
    pub fn stack<T: Real>(batch: &[HeatmapVolume]) -> Result<Tensor<T>> {
        let first = batch
            .first()
            .ok_or_else(|| Error::arg("cannot stack an empty batch"))?;
        let layout = first.layout;
        if matches!(layout, Layout::Volume { .. }) {
            return Err(Error::arg(
                "3D volumes must be projected to tri-planes before entering the model",
            ));
        }
        let (f, c) = (layout.frames(), layout.channels());
        let spatial = layout.spatial();
        let mut data = Vec::with_capacity(batch.len() * layout.numel());
        for hm in batch {
            if hm.layout != layout {
                return Err(Error::arg("heatmaps in one batch must share a layout"));
            }
            for ch in 0..c {
                for fr in 0..f {
                    data.extend(hm.image(fr, ch).iter().map(|&v| T::from_f64_lossy(v)));
                }
            }
        }
        Tensor::new([batch.len(), c, f, spatial[0], spatial[1]], data)
    }

    /// Inverse of [`Self::stack`] for sample `n`, clamping into `[0, 1]`.
    pub fn unstack<T: Real>(tensor: &Tensor<T>, n: usize, layout: Layout, sigma: f64) -> Result<Self> {
        let [nb, c, f, h, w] = tensor.dims5("heatmap tensor")?;
        if n >= nb {
            return Err(Error::arg(format!("sample {n} outside batch of {nb}")));
        }
        if layout.channels() != c || layout.frames() != f || layout.spatial() != [h, w] {
            return Err(Error::arg(format!(
                "tensor extents {:?} do not match layout {layout:?}",
                tensor.shape()
            )));
        }
        let s = h * w;
        let sample = &tensor.data()[n * c * f * s..(n + 1) * c * f * s];
        let mut values = vec![0.0; layout.numel()];
        for ch in 0..c {
            for fr in 0..f {
                let src = &sample[(ch * f + fr) * s..][..s];
                let dst = &mut values[(fr * c + ch) * s..][..s];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v.as_f64().clamp(0.0, 1.0);
                }
            }
        }
        Self::new(layout, values, sigma)
    }
}

/// How keypoints become model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapMode {
    /// One `H × W` Gaussian map per joint.
    #[serde(rename = "2d")]
    Planar,
    /// `D × H × W` volumes projected to three planes per joint.
    Triplane,
}

/// Rendering and windowing settings shared by training, tokenizing and
/// evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub mode: HeatmapMode,
    pub height: usize,
    pub width: usize,
    /// Depth extent of 3D volumes; ignored in planar mode.
    #[serde(default)]
    pub depth: usize,
    /// Gaussian spread in pixels; `None` uses [`default_sigma`].
    #[serde(default)]
    pub sigma: Option<f64>,
    pub window_length: usize,
    pub window_stride: usize,
}

impl RenderConfig {
    pub fn sigma(&self) -> f64 {
        self.sigma
            .unwrap_or_else(|| default_sigma(self.height, self.width))
    }

    /// Renders one window into model-ready heatmaps.
    pub fn render(&self, kp: &KeypointSequence) -> Result<HeatmapVolume> {
        match self.mode {
            HeatmapMode::Planar => render2d(kp, self.height, self.width, self.sigma()),
            HeatmapMode::Triplane => {
                let vol = render3d(kp, self.depth, self.height, self.width, self.sigma())?;
                project_triplane(&vol)
            }
        }
    }

    /// Windows `kp` and renders every window.
    pub fn render_windows(&self, kp: &KeypointSequence) -> Result<Vec<HeatmapVolume>> {
        window(kp, self.window_length, self.window_stride)
            .iter()
            .map(|w| self.render(w))
            .collect()
    }

    /// Model input channels for `joints` joints.
    pub fn channels(&self, joints: usize) -> usize {
        match self.mode {
            HeatmapMode::Planar => joints,
            HeatmapMode::Triplane => 3 * joints,
        }
    }

    pub fn layout(&self, joints: usize) -> Layout {
        match self.mode {
            HeatmapMode::Planar => Layout::Planar {
                frames: self.window_length,
                channels: joints,
                height: self.height,
                width: self.width,
            },
            HeatmapMode::Triplane => Layout::Triplane {
                frames: self.window_length,
                joints,
                height: self.height,
                width: self.width,
            },
        }
    }
}
