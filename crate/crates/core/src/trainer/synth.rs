//! Synthetic keypoint trajectories standing in for captured motion.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::KeypointSequence;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionFamily {
    /// Joints strung along one swinging rod.
    Pendulum,
    /// A body drifting back and forth with alternating limb swings.
    WalkCycle,
    /// Independent sums of slow sinusoids per joint and axis.
    RandomSmooth,
}

impl std::str::FromStr for MotionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(MotionFamily::Pendulum),
            "walk-cycle" => Ok(MotionFamily::WalkCycle),
            "random-smooth" => Ok(MotionFamily::RandomSmooth),
            _ => Err(Error::arg(format!(
                "unknown motion family {s:?}, expected pendulum, walk-cycle or random-smooth"
            ))),
        }
    }
}

fn default_max_speed() -> f64 {
    2.0
}

/// What to generate. Coordinates stay inside `[0, width) × [0, height)`
/// (and `[0, depth)` for 3D).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMotionSpec {
    pub joints: usize,
    pub frames: usize,
    pub family: MotionFamily,
    /// Standard deviation of Gaussian jitter added to every coordinate.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// `Some` for 3D keypoints.
    #[serde(default)]
    pub depth: Option<usize>,
    /// Bound on any joint's per-frame displacement before noise.
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
}

impl SyntheticMotionSpec {
    pub fn new(
        joints: usize,
        frames: usize,
        family: MotionFamily,
        seed: u64,
        width: usize,
        height: usize,
    ) -> Self {
        Self {
            joints,
            frames,
            family,
            noise: 0.0,
            seed,
            width,
            height,
            depth: None,
            max_speed: default_max_speed(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.frames < 2 {
            return Err(Error::arg("synthetic motion needs at least one joint and two frames"));
        }
        if self.width < 2 || self.height < 2 || self.depth.is_some_and(|d| d < 2) {
            return Err(Error::arg("synthetic motion needs extents of at least 2"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::arg(format!("noise must be non-negative, got {}", self.noise)));
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(Error::arg(format!("max_speed must be positive, got {}", self.max_speed)));
        }
        Ok(())
    }
}

/// `center + Σ amp·sin(ω·t + φ)` along one axis.
#[derive(Clone, Debug)]
struct Wave {
    center: f64,
    parts: Vec<(f64, f64, f64)>,
}

impl Wave {
    fn at(&self, t: f64, time_scale: f64) -> f64 {
        self.center
            + self
                .parts
                .iter()
                .map(|&(a, w, p)| a * (w * time_scale * t + p).sin())
                .sum::<f64>()
    }

    /// Bound on `|d/dt|`.
    fn speed(&self) -> f64 {
        self.parts.iter().map(|&(a, w, _)| a.abs() * w).sum()
    }
}

/// Time scale keeping `sqrt(Σ_axis speed²) ≤ max_speed` for every joint.
fn time_scale(joints: &[Vec<Wave>], max_speed: f64) -> f64 {
    let worst = joints
        .iter()
        .map(|axes| axes.iter().map(|w| w.speed().powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if worst > max_speed {
        max_speed / worst
    } else {
        1.0
    }
}

fn walk_cycle(spec: &SyntheticMotionSpec, ext: &[f64], r: &mut impl Rng) -> Vec<Vec<Wave>> {
    let omega = TAU / r.random_range(16.0..32.0);
    let drift = omega / 4.0;
    let phase = r.random_range(0.0..TAU);
    let k = spec.joints;
    (0..k)
        .map(|j| {
            let along = if k == 1 { 0.0 } else { j as f64 / (k - 1) as f64 - 0.5 };
            let side = if j % 2 == 0 { 1.0 } else { -1.0 };
            let swing_phase = phase + if j % 2 == 0 { 0.0 } else { TAU / 2.0 };
            let mut axes = vec![
                Wave {
                    center: 0.5 * ext[0] + 0.05 * side * ext[0],
                    parts: vec![(0.2 * ext[0], drift, phase), (0.08 * ext[0], omega, swing_phase)],
                },
                Wave {
                    center: 0.45 * ext[1] + 0.6 * along * ext[1],
                    parts: vec![(0.02 * ext[1], 2.0 * omega, phase)],
                },
            ];
            if ext.len() == 3 {
                axes.push(Wave {
                    center: 0.5 * ext[2],
                    parts: vec![(0.1 * ext[2], omega, swing_phase + j as f64)],
                });
            }
            axes
        })
        .collect()
}

fn random_smooth(spec: &SyntheticMotionSpec, ext: &[f64], r: &mut impl Rng) -> Vec<Vec<Wave>> {
    (0..spec.joints)
        .map(|_| {
            ext.iter()
                .map(|&e| {
                    let center = r.random_range(0.3..0.7) * e;
                    let mut parts: Vec<(f64, f64, f64)> = (0..3)
                        .map(|_| {
                            (
                                r.random_range(0.2..1.0),
                                r.random_range(0.05..0.3),
                                r.random_range(0.0..TAU),
                            )
                        })
                        .collect();
                    let total: f64 = parts.iter().map(|p| p.0).sum();
                    let scale = 0.25 * e / total;
                    parts.iter_mut().for_each(|p| p.0 *= scale);
                    Wave { center, parts }
                })
                .collect()
        })
        .collect()
}

/// Pendulum positions: joint `j` sits at radius `(j+1)/K · L` on a rod
/// hanging from a pivot near the top, swinging by `A·sin(ω t + φ)`; in 3D the
/// swing plane is tilted by `β` around the vertical.
fn pendulum(spec: &SyntheticMotionSpec, ext: &[f64], r: &mut impl Rng) -> Vec<f64> {
    let amp: f64 = r.random_range(0.3..0.8);
    let phase = r.random_range(0.0..TAU);
    let tilt: f64 = if ext.len() == 3 { r.random_range(0.2..1.2) } else { 0.0 };
    let (px, py) = (0.5 * ext[0], 0.1 * ext[1]);
    let mut len = (0.9 * ext[1]).min(0.5 * ext[0] / (amp.sin() * tilt.cos()));
    if ext.len() == 3 {
        len = len.min(0.5 * ext[2] / (amp.sin() * tilt.sin()));
    }
    len *= 0.95;
    // the tip moves fastest: len · amp · ω
    let omega = (TAU / r.random_range(20.0..60.0)).min(spec.max_speed / (len * amp));
    let k = spec.joints;
    let dims = ext.len();
    let mut coords = Vec::with_capacity(spec.frames * k * dims);
    for f in 0..spec.frames {
        let theta = amp * (omega * f as f64 + phase).sin();
        for j in 0..k {
            let rad = len * (j + 1) as f64 / k as f64;
            coords.push(px + rad * theta.sin() * tilt.cos());
            coords.push(py + rad * theta.cos());
            if dims == 3 {
                coords.push(0.5 * ext[2] + rad * theta.sin() * tilt.sin());
            }
        }
    }
    coords
}

/// Smooth trajectories, reproducible per seed, clamped into the frame.
pub fn synth_motion(spec: &SyntheticMotionSpec) -> Result<KeypointSequence> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, "synth");
    // usable range per axis is [0, extent - 1]
    let mut ext = vec![(spec.width - 1) as f64, (spec.height - 1) as f64];
    if let Some(d) = spec.depth {
        ext.push((d - 1) as f64);
    }
    let dims = ext.len();
    let mut coords = match spec.family {
        MotionFamily::Pendulum => pendulum(spec, &ext, &mut r),
        family => {
            let waves = if family == MotionFamily::WalkCycle {
                walk_cycle(spec, &ext, &mut r)
            } else {
                random_smooth(spec, &ext, &mut r)
            };
            let ts = time_scale(&waves, spec.max_speed);
            let mut coords = Vec::with_capacity(spec.frames * spec.joints * dims);
            for f in 0..spec.frames {
                for axes in &waves {
                    coords.extend(axes.iter().map(|w| w.at(f as f64, ts)));
                }
            }
            coords
        }
    };
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).expect("finite noise");
        let mut nr = rng::stream(spec.seed, "synth/noise");
        coords.iter_mut().for_each(|c| *c += normal.sample(&mut nr));
    }
    for (i, c) in coords.iter_mut().enumerate() {
        *c = c.clamp(0.0, ext[i % dims]);
    }
    KeypointSequence::all_valid(spec.frames, spec.joints, dims, coords)
}
