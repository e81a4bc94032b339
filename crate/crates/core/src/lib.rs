//! Vector-quantized motion tokenizer for spatio-temporal keypoint heatmaps.
//!
//! Keypoint sequences are rendered into Gaussian heatmap volumes
//! ([`heatmap`]), compressed by a 3D convolutional encoder into a lattice of
//! codebook indices ([`quantizer`], [`model`]), reconstructed by a decoder that
//! doubles as the generator of an adversarial pair ([`losses`], [`trainer`]),
//! and scored with SSIM, PSNR, L1, temporal deviation and quantization error
//! ([`metrics`]).
//!
//! Everything runs on the small reverse-mode autodiff engine in [`tensor`].

pub mod error;
pub mod heatmap;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Real, Tape, Tensor, Var};
