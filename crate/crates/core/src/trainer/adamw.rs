use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn default_lr() -> f64 {
    2.25e-5
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    1e-4
}

/// AdamW hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Decoupled: applied as `θ ← θ·(1 − lr·wd)` before the Adam update.
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: default_weight_decay(),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Moments and step count of one AdamW instance.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub config: AdamConfig,
    t: u64,
    m: IndexMap<String, Vec<T>>,
    v: IndexMap<String, Vec<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    /// Updates taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One AdamW update of every parameter that has a gradient in `grads`.
    ///
    /// Gradients are checked before anything changes: a non-finite or
    /// misshapen gradient leaves parameters and moments untouched.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
        grads: &IndexMap<String, Tensor<T>>,
    ) -> Result<()> {
        let params: Vec<(&str, &mut Tensor<T>)> = params
            .into_iter()
            .filter(|(name, _)| grads.contains_key(*name))
            .collect();
        for (name, p) in &params {
            let g = &grads[*name];
            if g.shape() != p.shape() {
                return Err(Error::dim(format!("gradient of {name}"), p.numel(), g.numel()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (name, p) in params {
            let g = grads[name].data();
            let n = p.numel();
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); n]);
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| vec![T::zero(); n]);
            for i in 0..n {
                let gi = g[i].as_f64();
                let mi = c.beta1 * m[i].as_f64() + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i].as_f64() + (1.0 - c.beta2) * gi * gi;
                m[i] = T::from_f64_lossy(mi);
                v[i] = T::from_f64_lossy(vi);
                let theta = p.data()[i].as_f64() * decay;
                let update = c.lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p.data_mut()[i] = T::from_f64_lossy(theta - update);
            }
        }
        Ok(())
    }

    /// Moments as named tensors `{prefix}.m.{param}` / `{prefix}.v.{param}`,
    /// shaped like the parameters in `shapes`.
    pub fn export<'a>(
        &self,
        prefix: &str,
        shapes: impl IntoIterator<Item = (&'a str, &'a [usize])>,
    ) -> Result<IndexMap<String, Tensor<T>>> {
        let mut out = IndexMap::new();
        for (name, shape) in shapes {
            if let (Some(m), Some(v)) = (self.m.get(name), self.v.get(name)) {
                out.insert(format!("{prefix}.m.{name}"), Tensor::new(shape.to_vec(), m.clone())?);
                out.insert(format!("{prefix}.v.{name}"), Tensor::new(shape.to_vec(), v.clone())?);
            }
        }
        Ok(out)
    }

    /// Inverse of [`Self::export`].
    pub fn import(
        config: AdamConfig,
        t: u64,
        prefix: &str,
        tensors: &IndexMap<String, Tensor<T>>,
    ) -> Self {
        let mut s = Self::new(config);
        s.t = t;
        let (pm, pv) = (format!("{prefix}.m."), format!("{prefix}.v."));
        for (k, tensor) in tensors {
            if let Some(name) = k.strip_prefix(&pm) {
                s.m.insert(name.to_string(), tensor.data().to_vec());
            } else if let Some(name) = k.strip_prefix(&pv) {
                s.v.insert(name.to_string(), tensor.data().to_vec());
            }
        }
        s
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut IndexMap<String, Tensor<T>>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data())
        .map(|&x| {
            let x = x.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        let c = T::from_f64_lossy(coef);
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x = *x * c);
        }
    }
    norm
}
