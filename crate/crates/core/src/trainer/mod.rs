//! Alternating generator / discriminator optimization with AdamW.
//!
//! Each step draws a batch from a seed-derived stream, updates the encoder,
//! decoder and codebook on `α·perceptual + β·L1 + VQ (+ λ·adversarial)`, then
//! (once past the warm-up) updates the discriminator on the hinge loss using
//! the same reconstructions. Both updates are computed from the pre-step
//! parameters and applied together, so a failed step leaves the state as it
//! was.

mod adamw;
mod synth;

use std::io::{Read, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::HeatmapVolume;
use crate::losses::{
    g_loss, hinge_d_loss, l1_loss, perceptual_loss, total_generator_loss, FeatureExtractor,
    GeneratorParts, LossBreakdown, LossWeights,
};
use crate::model::{
    decoder, discriminator, encoder, load_checkpoint, save_checkpoint, Checkpoint, ModelState, CODEBOOK_PARAM,
};
use crate::quantizer::{quantize, vq_loss};
use crate::rng;
use crate::tensor::{Real, Tape, Tensor};

pub use adamw::{clip_global_norm, AdamConfig, OptimState};
pub use synth::{synth_motion, MotionFamily, SyntheticMotionSpec};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "MOTOK_SEED";

/// `MOTOK_SEED` when set, otherwise `configured`.
pub fn seed_from_env(configured: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(configured),
    }
}

fn default_batch_size() -> usize {
    2
}
fn default_disc_start() -> u64 {
    500
}
fn default_grad_clip() -> Option<f64> {
    Some(1.0)
}

/// Optimization schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Shared by the generator and discriminator optimizers.
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// First step at which the discriminator trains and the generator sees
    /// the adversarial term.
    #[serde(default = "default_disc_start")]
    pub disc_start: u64,
    /// Global gradient-norm bound per optimizer; `None` disables clipping.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
    /// Write a checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    /// Re-seed codebook entries unused for this many steps.
    #[serde(default)]
    pub dead_code_patience: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: default_batch_size(),
            disc_start: default_disc_start(),
            grad_clip: default_grad_clip(),
            checkpoint_every: None,
            dead_code_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if self.checkpoint_every == Some(0) || self.dead_code_patience == Some(0) {
            return Err(Error::Config(
                "checkpoint_every and dead_code_patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Training windows stacked as `[M, C, T, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    windows: Tensor<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(windows: Tensor<T>) -> Result<Self> {
        windows.dims5("dataset")?;
        Ok(Self { windows })
    }

    pub fn from_heatmaps(windows: &[HeatmapVolume]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Data("the dataset holds no windows".into()));
        }
        Self::new(HeatmapVolume::stack(windows)?)
    }

    pub fn len(&self) -> usize {
        self.windows.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.windows
    }

    /// Windows `indices`, stacked.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let shape = self.windows.shape();
        let per: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::arg(format!("window {i} outside a dataset of {}", self.len())));
            }
            data.extend_from_slice(&self.windows.data()[i * per..(i + 1) * per]);
        }
        let mut s = shape.to_vec();
        s[0] = indices.len();
        Tensor::new(s, data)
    }
}

/// Batch indices for 0-based step `step`: distinct windows drawn from the
/// stream `batch/{step}`, so any step's batch is known without replaying the
/// steps before it.
pub fn batch_indices(seed: u64, step: u64, dataset_len: usize, batch_size: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, &format!("batch/{step}"));
    index::sample(&mut r, dataset_len, batch_size.min(dataset_len)).into_vec()
}

/// Caller metadata stored by [`Trainer::save_with`]; `Null` if absent.
pub fn run_metadata<T>(ckpt: &Checkpoint<T>) -> &serde_json::Value {
    ckpt.extra.get("run").unwrap_or(&serde_json::Value::Null)
}

/// Model, optimizers and frozen feature network.
#[derive(Debug)]
pub struct Trainer<T> {
    pub state: ModelState<T>,
    pub config: TrainConfig,
    gen_opt: OptimState<T>,
    disc_opt: OptimState<T>,
    psi: FeatureExtractor<T>,
}

impl<T: Real> Clone for Trainer<T> {
    fn clone(&self) -> Self {
        Self {
            state: self.state.clone(),
            config: self.config.clone(),
            gen_opt: self.gen_opt.clone(),
            disc_opt: self.disc_opt.clone(),
            psi: self.psi.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    train: TrainConfig,
    gen_t: u64,
    disc_t: u64,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    run: serde_json::Value,
}

const GEN_PREFIX: &str = "adamw.gen";
const DISC_PREFIX: &str = "adamw.disc";

impl<T: Real> Trainer<T> {
    pub fn new(state: ModelState<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let psi = FeatureExtractor::new(state.config.in_channels, state.seed);
        Ok(Self {
            gen_opt: OptimState::new(config.adam),
            disc_opt: OptimState::new(config.adam),
            psi,
            state,
            config,
        })
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.state.config.alpha_perceptual,
            beta: self.state.config.beta_l1,
            lambda: self.state.config.lambda_adv,
        }
    }

    pub fn generator_optimizer(&self) -> &OptimState<T> {
        &self.gen_opt
    }

    pub fn discriminator_optimizer(&self) -> &OptimState<T> {
        &self.disc_opt
    }

    /// Whether the adversarial pair trains at 0-based step `step`.
    pub fn adversarial_at(&self, step: u64) -> bool {
        self.state.config.adversarial()
            && self.state.discriminator.is_some()
            && step >= self.config.disc_start
    }

    /// One optimization step on a batch drawn from `data`.
    pub fn step(&mut self, data: &Dataset<T>) -> Result<LossBreakdown> {
        if data.is_empty() {
            return Err(Error::Data("the dataset holds no windows".into()));
        }
        let step = self.state.step;
        let indices = batch_indices(self.state.seed, step, data.len(), self.config.batch_size);
        let x = data.batch(&indices)?;
        self.state.check_input(&x)?;
        let backup = self.clone();
        let result = self.step_on(&x);
        if result.is_err() {
            *self = backup;
        }
        result
    }

    fn step_on(&mut self, x: &Tensor<T>) -> Result<LossBreakdown> {
        let step = self.state.step;
        let adversarial = self.adversarial_at(step);
        let weights = self.weights();
        let cfg = &self.state.config;

        // generator
        let tape = Tape::with_finite_checks(true);
        let xv = tape.constant(x.clone());
        let enc = self.state.encoder.bind(&tape, true);
        let dec = self.state.decoder.bind(&tape, true);
        let table = tape.leaf(self.state.codebook.entries().clone());
        let z_e = encoder(cfg, &enc, xv)?;
        let q = quantize(z_e, table, &self.state.codebook, step)?;
        let vq = vq_loss(z_e, q.selected, cfg.commitment)?;
        let x_hat = decoder(cfg, &dec, q.z_q)?;
        let l1 = l1_loss(xv, x_hat)?;
        let perceptual = perceptual_loss(xv, x_hat, &self.psi)?;
        let adv = match (&self.state.discriminator, adversarial) {
            (Some(d), true) => {
                let dp = d.bind(&tape, false);
                Some(g_loss(discriminator(&dp, x_hat)?)?)
            }
            _ => None,
        };
        let total = total_generator_loss(
            GeneratorParts {
                perceptual,
                l1,
                vq: vq.total,
                adv,
            },
            weights,
        )?;
        tape.backward(total)?;
        let mut gen_grads = enc.grads()?;
        gen_grads.extend(dec.grads()?);
        gen_grads.insert(
            CODEBOOK_PARAM.to_string(),
            table.grad().ok_or_else(|| Error::State("codebook gradient missing".into()))?,
        );
        let item = |v: crate::tensor::Var<'_, T>| -> Result<f64> { Ok(v.value().item()?.as_f64()) };
        let mut record = LossBreakdown {
            step: step + 1,
            rec_l1: item(l1)?,
            rec_perceptual: item(perceptual)?,
            vq: item(vq.total)?,
            adv_g: adv.map(item).transpose()?,
            adv_d: None,
            total_g: item(total)?,
            weights,
        };
        let x_hat_value = (*x_hat.value()).clone();
        let z_e_value = (*z_e.value()).clone();

        // discriminator, on the same reconstructions
        let mut disc_grads = None;
        if let (Some(d), true) = (&self.state.discriminator, adversarial) {
            let dtape = Tape::with_finite_checks(true);
            let dp = d.bind(&dtape, true);
            let real = discriminator(&dp, dtape.constant(x.clone()))?;
            let fake = discriminator(&dp, dtape.constant(x_hat_value))?;
            let loss = hinge_d_loss(real, fake)?;
            dtape.backward(loss)?;
            record.adv_d = Some(item(loss)?);
            disc_grads = Some(dp.grads()?);
        }
        if !record.is_finite() {
            return Err(Error::NonFinite(format!("losses at step {}", step + 1)));
        }

        if let Some(c) = self.config.grad_clip {
            clip_global_norm(&mut gen_grads, c);
            if let Some(g) = disc_grads.as_mut() {
                clip_global_norm(g, c);
            }
        }
        let ModelState {
            encoder: enc_p,
            decoder: dec_p,
            discriminator: disc_p,
            codebook,
            ..
        } = &mut self.state;
        let gen_params = enc_p
            .iter_mut()
            .chain(dec_p.iter_mut())
            .chain(std::iter::once((CODEBOOK_PARAM, codebook.entries_mut())));
        self.gen_opt.step(gen_params, &gen_grads)?;
        if let (Some(grads), Some(d)) = (disc_grads, disc_p.as_mut()) {
            self.disc_opt.step(d.iter_mut(), &grads)?;
        }
        if let Some(name) = self.state.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter {name} after step {}", step + 1)));
        }
        self.state.step += 1;

        if let Some(patience) = self.config.dead_code_patience {
            let mut r = rng::stream(self.state.seed, &format!("reinit/{}", self.state.step));
            self.state
                .codebook
                .reinit_dead(self.state.step, patience, &z_e_value, &mut r)?;
        }
        Ok(record)
    }

    /// `steps` further steps; `on_step` sees every record and the trainer
    /// after the step, e.g. to log or checkpoint. Stops at the first error,
    /// leaving the trainer at its last good state.
    pub fn train(
        &mut self,
        data: &Dataset<T>,
        steps: u64,
        mut on_step: impl FnMut(&LossBreakdown, &Self) -> Result<()>,
    ) -> Result<Vec<LossBreakdown>> {
        let mut log = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let rec = self.step(data)?;
            on_step(&rec, self)?;
            log.push(rec);
        }
        Ok(log)
    }

    /// Whether a periodic checkpoint is due after the last step.
    pub fn checkpoint_due(&self) -> bool {
        self.config
            .checkpoint_every
            .is_some_and(|n| self.state.step > 0 && self.state.step % n == 0)
    }

    /// Model, optimizer moments and schedule as one `MCK1` checkpoint.
    pub fn save(&self, w: impl Write) -> Result<()> {
        self.save_with(w, &serde_json::Value::Null)
    }

    /// [`Self::save`] plus caller metadata, returned by [`run_metadata`].
    pub fn save_with(&self, w: impl Write, run: &serde_json::Value) -> Result<()> {
        let shapes: Vec<(&str, &[usize])> = self
            .state
            .named_tensors()
            .map(|(n, t)| (n, t.shape()))
            .collect();
        let mut aux = self.gen_opt.export(GEN_PREFIX, shapes.iter().copied())?;
        aux.extend(self.disc_opt.export(DISC_PREFIX, shapes.iter().copied())?);
        let meta = TrainerMeta {
            train: self.config.clone(),
            gen_t: self.gen_opt.t(),
            disc_t: self.disc_opt.t(),
            run: run.clone(),
        };
        save_checkpoint(w, &self.state, &aux, &serde_json::to_value(meta)?)
    }

    /// Restores a trainer written by [`Self::save`]. A plain model checkpoint
    /// (no trainer metadata) resumes with fresh optimizers and `fallback`.
    pub fn load(r: impl Read, fallback: TrainConfig) -> Result<Self> {
        Self::from_checkpoint(load_checkpoint::<T>(r)?, fallback)
    }

    pub fn from_checkpoint(ckpt: Checkpoint<T>, fallback: TrainConfig) -> Result<Self> {
        let meta: Option<TrainerMeta> = if ckpt.extra.is_null() {
            None
        } else {
            Some(
                serde_json::from_value(ckpt.extra.clone())
                    .map_err(|e| Error::Format(format!("trainer metadata: {e}")))?,
            )
        };
        let config = meta.as_ref().map_or(fallback, |m| m.train.clone());
        let mut trainer = Self::new(ckpt.state, config)?;
        if let Some(m) = meta {
            let adam = trainer.config.adam;
            trainer.gen_opt = OptimState::import(adam, m.gen_t, GEN_PREFIX, &ckpt.aux);
            trainer.disc_opt = OptimState::import(adam, m.disc_t, DISC_PREFIX, &ckpt.aux);
        }
        Ok(trainer)
    }
}
