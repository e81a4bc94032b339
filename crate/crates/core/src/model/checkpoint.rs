//! The `MCK1` checkpoint format.
//!
//! Layout: `b"MCK1"`, a little-endian `u64` header length, a JSON header, then
//! every tensor's raw little-endian values back to back. The header carries
//! the model configuration, step, seed, codebook counters, free-form trainer
//! metadata and a manifest mapping each tensor name to its dtype, extents and
//! byte offset into the data section.

use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::net::{decoder_specs, discriminator_specs, encoder_specs};
use super::params::{ParamSet, ParamSpec};
use super::{ModelConfig, ModelState, CODEBOOK_PARAM};
use crate::error::{Error, Result};
use crate::quantizer::Codebook;
use crate::tensor::{DType, Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MCK1";

const AUX_PREFIX: &str = "aux/";
const MAX_HEADER: u64 = 1 << 30;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    dtype: DType,
    extents: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    seed: u64,
    manifest: IndexMap<String, ManifestEntry>,
    codebook_usage: Vec<u64>,
    codebook_last_used: Vec<u64>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// A loaded checkpoint.
#[derive(Debug)]
pub struct Checkpoint<T> {
    pub state: ModelState<T>,
    /// Tensors stored alongside the model, such as optimizer moments.
    pub aux: IndexMap<String, Tensor<T>>,
    /// Free-form metadata stored alongside the model.
    pub extra: serde_json::Value,
}

/// Writes `state` plus auxiliary tensors and metadata.
pub fn save_checkpoint<T: Real>(
    mut w: impl Write,
    state: &ModelState<T>,
    aux: &IndexMap<String, Tensor<T>>,
    extra: &serde_json::Value,
) -> Result<()> {
    let mut manifest = IndexMap::new();
    let mut data = Vec::new();
    let aux_names: Vec<String> = aux.keys().map(|k| format!("{AUX_PREFIX}{k}")).collect();
    let tensors = state
        .named_tensors()
        .chain(aux_names.iter().map(String::as_str).zip(aux.values()));
    for (name, t) in tensors {
        let entry = ManifestEntry {
            dtype: T::DTYPE,
            extents: t.shape().to_vec(),
            offset: data.len() as u64,
        };
        if manifest.insert(name.to_string(), entry).is_some() {
            return Err(Error::arg(format!("duplicate checkpoint tensor {name}")));
        }
        for &v in t.data() {
            v.write_le(&mut data);
        }
    }
    let header = Header {
        config: state.config.clone(),
        step: state.step,
        seed: state.seed,
        manifest,
        codebook_usage: state.codebook.usage_counts(),
        codebook_last_used: state.codebook.last_used(),
        extra: extra.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&data)?;
    w.flush()?;
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Reads a checkpoint whose tensors are all of dtype `T`.
pub fn load_checkpoint<T: Real>(mut r: impl Read) -> Result<Checkpoint<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("truncated checkpoint magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format_err(format!("bad checkpoint magic {magic:?}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| format_err("truncated checkpoint header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(format_err(format!("checkpoint header of {len} bytes")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| format_err("truncated checkpoint header"))?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| format_err(format!("checkpoint header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| format_err(format!("checkpoint config: {e}")))?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    let mut tensors: IndexMap<String, Tensor<T>> = IndexMap::new();
    let mut expected_end = 0u64;
    for (name, entry) in &header.manifest {
        if entry.dtype != T::DTYPE {
            return Err(format_err(format!(
                "tensor {name} is {:?}, expected {:?}",
                entry.dtype,
                T::DTYPE
            )));
        }
        let numel = entry
            .extents
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .ok_or_else(|| format_err(format!("tensor {name} extents overflow")))?;
        let size = T::DTYPE.size_of() as u64;
        let start = entry.offset;
        let end = start + numel as u64 * size;
        if end > data.len() as u64 {
            return Err(format_err(format!("truncated checkpoint data at tensor {name}")));
        }
        let values = data[start as usize..end as usize]
            .chunks_exact(size as usize)
            .map(T::read_le)
            .collect();
        let t = Tensor::new(entry.extents.clone(), values)
            .map_err(|e| format_err(format!("tensor {name}: {e}")))?;
        tensors.insert(name.clone(), t);
        expected_end = expected_end.max(end);
    }
    if expected_end != data.len() as u64 {
        return Err(format_err(format!(
            "{} trailing bytes after the last checkpoint tensor",
            data.len() as u64 - expected_end
        )));
    }

    let cfg = header.config;
    let mut take_set = |specs: Vec<ParamSpec>| -> Result<ParamSet<T>> {
        let mut set = ParamSet::new();
        for spec in specs {
            let t = tensors
                .shift_remove(&spec.name)
                .ok_or_else(|| format_err(format!("checkpoint lacks parameter {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(format_err(format!(
                    "parameter {} has extents {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            set.insert(spec.name, t);
        }
        Ok(set)
    };
    let encoder = take_set(encoder_specs(&cfg))?;
    let decoder = take_set(decoder_specs(&cfg))?;
    let discriminator = if cfg.discriminator {
        Some(take_set(discriminator_specs(&cfg))?)
    } else {
        None
    };
    let entries = tensors
        .shift_remove(CODEBOOK_PARAM)
        .ok_or_else(|| format_err("checkpoint lacks codebook entries"))?;
    if entries.shape() != [cfg.vocab, cfg.embed_dim] {
        return Err(format_err(format!(
            "codebook has extents {:?}, expected [{}, {}]",
            entries.shape(),
            cfg.vocab,
            cfg.embed_dim
        )));
    }
    let mut codebook =
        Codebook::from_entries(entries).map_err(|e| format_err(format!("codebook: {e}")))?;
    codebook
        .set_counters(&header.codebook_usage, &header.codebook_last_used)
        .map_err(|e| format_err(format!("codebook counters: {e}")))?;

    let mut aux = IndexMap::new();
    for (name, t) in tensors {
        match name.strip_prefix(AUX_PREFIX) {
            Some(short) => {
                aux.insert(short.to_string(), t);
            }
            None => return Err(format_err(format!("unexpected checkpoint tensor {name}"))),
        }
    }
    Ok(Checkpoint {
        state: ModelState {
            config: cfg,
            seed: header.seed,
            step: header.step,
            encoder,
            decoder,
            discriminator,
            codebook,
        },
        aux,
        extra: header.extra,
    })
}
