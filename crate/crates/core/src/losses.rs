//! Reconstruction, perceptual and adversarial objectives.
//!
//! The generator minimises `α·perceptual + β·L1 + VQ + λ·(−mean D(x̂))`; the
//! discriminator minimises the hinge loss
//! `mean(relu(1 − D(x))) + mean(relu(1 + D(x̂)))`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Conv3dSpec, Real, Tensor, Var};

fn same_shape<T: Real>(what: &str, a: Var<'_, T>, b: Var<'_, T>) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::arg(format!("{what}: shapes differ, {sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss<'t, T: Real>(x: Var<'t, T>, y: Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("l1_loss", x, y)?;
    x.sub(y)?.abs()?.mean()
}

/// Frozen random conv net standing in for a pretrained feature network.
///
/// Four stride-2 `3×3×3` convolutions with ReLU, every stage tapped. Weights
/// are drawn once per seed from `N(0, 2/fan_in)` and never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor<T> {
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

/// Output widths of the four stages.
pub const FEATURE_WIDTHS: [usize; 4] = [16, 32, 64, 64];

impl<T: Real> FeatureExtractor<T> {
    pub fn new(in_channels: usize, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(FEATURE_WIDTHS.len());
        let mut ci = in_channels;
        for (i, &co) in FEATURE_WIDTHS.iter().enumerate() {
            let fan_in = ci * 27;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let mut r = rng::stream(seed, &format!("perceptual/{i}"));
            let w = Tensor::from_fn([co, ci, 3, 3, 3], |_| T::from_f64_lossy(normal.sample(&mut r)));
            layers.push((w, Tensor::zeros([co])));
            ci = co;
        }
        Self { layers }
    }

    /// Externally supplied `(weight [Co, Ci, 3, 3, 3], bias [Co])` stages,
    /// e.g. weights exported from a pretrained network.
    pub fn from_layers(layers: Vec<(Tensor<T>, Tensor<T>)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("a feature extractor needs at least one stage"));
        }
        let mut prev: Option<usize> = None;
        for (i, (w, b)) in layers.iter().enumerate() {
            let [co, ci, _, _, _] = w.dims5(&format!("feature stage {i} weight"))?;
            if b.shape() != [co] {
                return Err(Error::dim(format!("feature stage {i} bias"), co, b.numel()));
            }
            if let Some(p) = prev {
                if p != ci {
                    return Err(Error::dim(format!("feature stage {i} input"), p, ci));
                }
            }
            prev = Some(co);
        }
        Ok(Self { layers })
    }

    pub fn stages(&self) -> usize {
        self.layers.len()
    }

    /// Activations after every stage.
    pub fn features<'t>(&self, x: Var<'t, T>) -> Result<Vec<Var<'t, T>>> {
        let tape = x.tape();
        let mut h = x;
        let mut taps = Vec::with_capacity(self.layers.len());
        for (w, b) in &self.layers {
            let (w, b) = (tape.constant(w.clone()), tape.constant(b.clone()));
            h = h.conv3d(w, Some(b), Conv3dSpec::uniform(2, 1))?.relu()?;
            taps.push(h);
        }
        Ok(taps)
    }
}

/// `Σ_l ‖ψ_l(x) − ψ_l(y)‖₂ / sqrt(n_l)` over the tapped stages, where `n_l`
/// counts the features of stage `l`: the root-mean-square feature difference
/// per stage, summed.
pub fn perceptual_loss<'t, T: Real>(
    x: Var<'t, T>,
    y: Var<'t, T>,
    psi: &FeatureExtractor<T>,
) -> Result<Var<'t, T>> {
    same_shape("perceptual_loss", x, y)?;
    let fx = psi.features(x)?;
    let fy = psi.features(y)?;
    let mut total: Option<Var<'t, T>> = None;
    for (a, b) in fx.into_iter().zip(fy) {
        let n = a.value().numel();
        let d = a.sub(b)?;
        let term = d.mul(d)?.sum()?.sqrt()?.mul_scalar(1.0 / (n as f64).sqrt())?;
        total = Some(match total {
            Some(t) => t.add(term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::arg("feature extractor has no stages"))
}

fn non_empty<T: Real>(what: &str, v: Var<'_, T>) -> Result<()> {
    if v.value().numel() == 0 {
        return Err(Error::arg(format!("{what}: empty batch")));
    }
    Ok(())
}

/// `mean(relu(1 − d_real)) + mean(relu(1 + d_fake))`.
pub fn hinge_d_loss<'t, T: Real>(d_real: Var<'t, T>, d_fake: Var<'t, T>) -> Result<Var<'t, T>> {
    non_empty("hinge_d_loss", d_real)?;
    non_empty("hinge_d_loss", d_fake)?;
    let real = d_real.neg()?.add_scalar(1.0)?.relu()?.mean()?;
    let fake = d_fake.add_scalar(1.0)?.relu()?.mean()?;
    real.add(fake)
}

/// `−mean(d_fake)`.
pub fn g_loss<'t, T: Real>(d_fake: Var<'t, T>) -> Result<Var<'t, T>> {
    non_empty("g_loss", d_fake)?;
    d_fake.mean()?.neg()
}

/// `(α, β, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.1,
        }
    }
}

/// Recorded generator loss terms.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorParts<'t, T> {
    pub perceptual: Var<'t, T>,
    pub l1: Var<'t, T>,
    pub vq: Var<'t, T>,
    /// `None` while the adversarial path is inactive.
    pub adv: Option<Var<'t, T>>,
}

/// `α·perceptual + β·l1 + vq + λ·adv`. With `λ = 0` or no adversarial term
/// the result is exactly the reconstruction-plus-VQ objective.
pub fn total_generator_loss<'t, T: Real>(
    parts: GeneratorParts<'t, T>,
    w: LossWeights,
) -> Result<Var<'t, T>> {
    let total = parts
        .perceptual
        .mul_scalar(w.alpha)?
        .add(parts.l1.mul_scalar(w.beta)?)?
        .add(parts.vq)?;
    match parts.adv {
        Some(adv) if w.lambda != 0.0 => total.add(adv.mul_scalar(w.lambda)?),
        _ => Ok(total),
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: u64,
    #[serde(rename = "l1")]
    pub rec_l1: f64,
    #[serde(rename = "perc")]
    pub rec_perceptual: f64,
    pub vq: f64,
    /// Generator adversarial term; absent while the discriminator is inactive.
    #[serde(rename = "g", default, skip_serializing_if = "Option::is_none")]
    pub adv_g: Option<f64>,
    /// Discriminator hinge loss; absent while the discriminator is inactive.
    #[serde(rename = "d", default, skip_serializing_if = "Option::is_none")]
    pub adv_d: Option<f64>,
    #[serde(rename = "total")]
    pub total_g: f64,
    #[serde(skip)]
    pub weights: LossWeights,
}

impl LossBreakdown {
    /// The record as one JSON line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("loss record serializes")
    }

    pub fn is_finite(&self) -> bool {
        [self.rec_l1, self.rec_perceptual, self.vq, self.total_g]
            .into_iter()
            .chain(self.adv_g)
            .chain(self.adv_d)
            .all(f64::is_finite)
    }
}
