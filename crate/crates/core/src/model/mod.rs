//! Encoder, codebook, decoder and discriminator at F8/F16/F32 compression.
//!
//! The encoder is a 3D ResNet: a stem convolution, then `log2(factor)` stages
//! of residual blocks each closed by a stride-2 convolution over `(T, H, W)`,
//! then a pointwise projection to the embedding width. The decoder mirrors it
//! with nearest-neighbour upsampling and ends in a sigmoid. The discriminator
//! is three strided convolutions with leaky ReLU and a pointwise head,
//! averaged into one logit per sample.

mod checkpoint;
mod config;
mod net;
mod params;

use crate::error::{Error, Result};
use crate::heatmap::HeatmapVolume;
use crate::quantizer::{init_codebook, Codebook, TokenGrid};
use crate::tensor::{Real, Tape, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{Compression, ModelConfig};
pub use net::{decoder, discriminator, encoder};
pub use params::{Bound, ParamSet};

pub(crate) use config::AXES;

/// Everything learned: the three networks, the codebook, and where training
/// stands.
#[derive(Debug)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub seed: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub encoder: ParamSet<T>,
    pub decoder: ParamSet<T>,
    /// `None` when the configuration leaves the discriminator out.
    pub discriminator: Option<ParamSet<T>>,
    pub codebook: Codebook<T>,
}

impl<T: Real> Clone for ModelState<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            seed: self.seed,
            step: self.step,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            discriminator: self.discriminator.clone(),
            codebook: self.codebook.clone(),
        }
    }
}

impl<T: Real> PartialEq for ModelState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.seed == other.seed
            && self.step == other.step
            && self.encoder == other.encoder
            && self.decoder == other.decoder
            && self.discriminator == other.discriminator
            && self.codebook == other.codebook
    }
}

/// Output of [`ModelState::encode`].
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    /// Continuous latents `[N, embed_dim, t, h, w]`.
    pub z_e: Tensor<T>,
    pub grids: Vec<TokenGrid>,
    /// Selected codebook entries, same shape as `z_e`.
    pub z_q: Tensor<T>,
}

impl<T: Real> ModelState<T> {
    /// Fresh parameters, reproducible per seed.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder = ParamSet::init(&net::encoder_specs(&config), seed);
        let decoder = ParamSet::init(&net::decoder_specs(&config), seed);
        let discriminator = config
            .discriminator
            .then(|| ParamSet::init(&net::discriminator_specs(&config), seed));
        let codebook = init_codebook(config.vocab, config.embed_dim, seed)?;
        Ok(Self {
            config,
            seed,
            step: 0,
            encoder,
            decoder,
            discriminator,
            codebook,
        })
    }

    /// Checks a `[N, C, T, H, W]` batch against the configured geometry.
    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, t, h, w] = x.dims5("model input")?;
        if c != self.config.in_channels {
            return Err(Error::arg(format!(
                "axis C: model expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        for ((axis, &want), got) in AXES.iter().zip(&self.config.input_extents).zip([t, h, w]) {
            if want != got {
                return Err(Error::arg(format!(
                    "axis {axis}: model expects extent {want}, got {got}"
                )));
            }
        }
        Ok(())
    }

    /// Latents, token grids and quantized latents of a batch. Read-only: the
    /// codebook usage counters are left alone.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Encoded<T>> {
        self.check_input(x)?;
        let tape = Tape::new();
        let p = self.encoder.bind(&tape, false);
        let z = encoder(&self.config, &p, tape.constant(x.clone()))?;
        let z_e = (*z.value()).clone();
        let grids = self.codebook.assign(&z_e)?;
        let z_q = self.codebook.lookup(&grids)?;
        Ok(Encoded { z_e, grids, z_q })
    }

    pub fn encode_heatmaps(&self, batch: &[HeatmapVolume]) -> Result<Encoded<T>> {
        self.encode(&HeatmapVolume::stack(batch)?)
    }

    /// Heatmaps `[N, C, T, H, W]` for one token grid per sample.
    pub fn decode(&self, grids: &[TokenGrid]) -> Result<Tensor<T>> {
        let lattice = self.config.latent_extents();
        for g in grids {
            if g.extents() != lattice {
                return Err(Error::arg(format!(
                    "token grid extents {:?} do not match the model lattice {lattice:?}",
                    g.extents()
                )));
            }
        }
        let z_q = self.codebook.lookup(grids)?;
        self.decode_latents(&z_q)
    }

    /// Decoder applied to already looked-up latents.
    pub fn decode_latents(&self, z_q: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = self.decoder.bind(&tape, false);
        let y = decoder(&self.config, &p, tape.constant(z_q.clone()))?;
        Ok((*y.value()).clone())
    }

    /// Encode, quantize, decode.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let enc = self.encode(x)?;
        self.decode_latents(&enc.z_q)
    }

    /// One logit per sample.
    pub fn discriminate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let params = self
            .discriminator
            .as_ref()
            .ok_or_else(|| Error::State("this model has no discriminator".into()))?;
        let tape = Tape::new();
        let p = params.bind(&tape, false);
        let d = discriminator(&p, tape.constant(x.clone()))?;
        Ok((*d.value()).clone())
    }

    /// Every parameter under one namespace, in a stable order.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.encoder
            .iter()
            .chain(self.decoder.iter())
            .chain(self.discriminator.iter().flat_map(|d| d.iter()))
            .chain(std::iter::once((CODEBOOK_PARAM, self.codebook.entries())))
    }

    /// Name of the first parameter holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.named_tensors()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }
}

/// Parameter name of the codebook entries.
pub const CODEBOOK_PARAM: &str = "codebook.entries";
