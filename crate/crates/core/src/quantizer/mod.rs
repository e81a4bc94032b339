//! The discrete bottleneck: codebook, nearest-entry lookup, straight-through
//! gradients, the two-term VQ loss and usage statistics.

mod tokens;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor, Var};

pub use tokens::{read_tokens, read_tokens_all, write_tokens, TokenGrid, TOKEN_MAGIC};

/// Learnable vocabulary of `vocab` embedding vectors of width `dim`.
///
/// Usage counters count single-vector lookups since the last reset and are
/// atomic, so lookups through a shared reference stay consistent.
#[derive(Debug)]
pub struct Codebook<T> {
    entries: Tensor<T>,
    usage: Vec<AtomicU64>,
    last_used: Vec<AtomicU64>,
}

impl<T: Real> Clone for Codebook<T> {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            usage: self.usage_counts().into_iter().map(AtomicU64::new).collect(),
            last_used: self.last_used().into_iter().map(AtomicU64::new).collect(),
        }
    }
}

impl<T: Real> PartialEq for Codebook<T> {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.usage_counts() == other.usage_counts()
            && self.last_used() == other.last_used()
    }
}

/// Entries drawn uniformly from `[-1/vocab, 1/vocab]`, reproducible per seed.
pub fn init_codebook<T: Real>(vocab: usize, dim: usize, seed: u64) -> Result<Codebook<T>> {
    if vocab < 2 || dim == 0 {
        return Err(Error::arg(format!(
            "codebook needs vocab >= 2 and dim >= 1, got {vocab}×{dim}"
        )));
    }
    let mut rng = rng::stream(seed, "codebook");
    let bound = 1.0 / vocab as f64;
    let entries = Tensor::from_fn([vocab, dim], |_| {
        T::from_f64_lossy(rng.random_range(-bound..=bound))
    });
    Codebook::from_entries(entries)
}

impl<T: Real> Codebook<T> {
    pub fn from_entries(entries: Tensor<T>) -> Result<Self> {
        if entries.rank() != 2 || entries.shape()[0] < 2 {
            return Err(Error::arg(format!(
                "codebook entries must be [vocab >= 2, dim], got {:?}",
                entries.shape()
            )));
        }
        if !entries.is_finite() {
            return Err(Error::NonFinite("codebook entries".into()));
        }
        let vocab = entries.shape()[0];
        Ok(Self {
            entries,
            usage: (0..vocab).map(|_| AtomicU64::new(0)).collect(),
            last_used: (0..vocab).map(|_| AtomicU64::new(0)).collect(),
        })
    }

    pub fn vocab(&self) -> usize {
        self.entries.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.entries.shape()[1]
    }

    pub fn entries(&self) -> &Tensor<T> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Tensor<T> {
        &mut self.entries
    }

    pub fn entry(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.entries.data()[i * d..(i + 1) * d]
    }

    pub fn usage_counts(&self) -> Vec<u64> {
        self.usage.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    /// Step at which each entry was last selected.
    pub fn last_used(&self) -> Vec<u64> {
        self.last_used.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    /// Restores counters saved alongside the entries.
    pub fn set_counters(&mut self, usage: &[u64], last_used: &[u64]) -> Result<()> {
        if usage.len() != self.vocab() || last_used.len() != self.vocab() {
            return Err(Error::dim("codebook counters", self.vocab(), usage.len()));
        }
        self.usage = usage.iter().map(|&u| AtomicU64::new(u)).collect();
        self.last_used = last_used.iter().map(|&u| AtomicU64::new(u)).collect();
        Ok(())
    }

    pub fn reset_usage(&self) {
        self.usage.iter().for_each(|c| c.store(0, Ordering::Relaxed));
    }

    /// Index of the entry nearest to `v` in squared Euclidean distance; the
    /// lowest index wins ties.
    pub fn nearest(&self, v: &[T]) -> usize {
        let d = self.dim();
        let mut best = 0;
        let mut best_dist = T::infinity();
        for (i, e) in self.entries.data().chunks_exact(d).enumerate() {
            let mut dist = T::zero();
            for (&a, &b) in v.iter().zip(e) {
                let diff = a - b;
                dist = dist + diff * diff;
            }
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }

    /// Nearest entry for every lattice position of `[N, dim, t, h, w]`
    /// latents, one [`TokenGrid`] per sample. Does not touch the counters.
    pub fn assign(&self, z_e: &Tensor<T>) -> Result<Vec<TokenGrid>> {
        let [n, d, t, h, w] = z_e.dims5("latents")?;
        if d != self.dim() {
            return Err(Error::arg(format!(
                "latent width {d} does not match codebook dim {}",
                self.dim()
            )));
        }
        let positions = t * h * w;
        let mut v = vec![T::zero(); d];
        let mut grids = Vec::with_capacity(n);
        for b in 0..n {
            let sample = &z_e.data()[b * d * positions..(b + 1) * d * positions];
            let indices = (0..positions)
                .map(|p| {
                    for (ch, x) in v.iter_mut().enumerate() {
                        *x = sample[ch * positions + p];
                    }
                    self.nearest(&v) as u32
                })
                .collect();
            grids.push(TokenGrid::new([t, h, w], self.vocab(), indices)?);
        }
        Ok(grids)
    }

    /// Counts every index of `grids` as one lookup made at `step`.
    pub fn record_usage(&self, grids: &[TokenGrid], step: u64) {
        for grid in grids {
            for &i in grid.indices() {
                self.usage[i as usize].fetch_add(1, Ordering::Relaxed);
                self.last_used[i as usize].fetch_max(step, Ordering::Relaxed);
            }
        }
    }

    /// Lays out the entries named by `grids` as `[N, dim, t, h, w]`.
    pub fn lookup(&self, grids: &[TokenGrid]) -> Result<Tensor<T>> {
        let first = grids
            .first()
            .ok_or_else(|| Error::arg("lookup needs at least one token grid"))?;
        let [t, h, w] = first.extents();
        let positions = t * h * w;
        let d = self.dim();
        let mut out = vec![T::zero(); grids.len() * d * positions];
        for (b, grid) in grids.iter().enumerate() {
            if grid.extents() != first.extents() {
                return Err(Error::arg("token grids in one batch must share extents"));
            }
            if grid.vocab() != self.vocab() {
                return Err(Error::Data(format!(
                    "token grid vocabulary {} does not match codebook {}",
                    grid.vocab(),
                    self.vocab()
                )));
            }
            for (p, &i) in grid.indices().iter().enumerate() {
                for (ch, &v) in self.entry(i as usize).iter().enumerate() {
                    out[(b * d + ch) * positions + p] = v;
                }
            }
        }
        Tensor::new([grids.len(), d, t, h, w], out)
    }

    /// Exponential of the entropy of the usage histogram, in `[1, vocab]`.
    pub fn perplexity(&self) -> Result<f64> {
        perplexity_of(&self.usage_counts())
    }

    /// Re-seeds entries unused for at least `patience` steps with latent
    /// vectors drawn from `z_e`. Returns the re-seeded indices.
    pub fn reinit_dead(
        &mut self,
        step: u64,
        patience: u64,
        z_e: &Tensor<T>,
        rng: &mut impl Rng,
    ) -> Result<Vec<usize>> {
        let [n, d, t, h, w] = z_e.dims5("latents")?;
        if d != self.dim() {
            return Err(Error::dim("latent width", self.dim(), d));
        }
        let positions = t * h * w;
        let last = self.last_used();
        let dead: Vec<usize> = (0..self.vocab())
            .filter(|&i| step.saturating_sub(last[i]) >= patience)
            .collect();
        for &i in &dead {
            let pick = rng.random_range(0..n * positions);
            let (b, p) = (pick / positions, pick % positions);
            for ch in 0..d {
                self.entries.data_mut()[i * d + ch] = z_e.data()[(b * d + ch) * positions + p];
            }
            self.last_used[i].store(step, Ordering::Relaxed);
        }
        Ok(dead)
    }
}

/// `exp(-Σ p log p)` of a usage histogram.
pub fn perplexity_of(usage: &[u64]) -> Result<f64> {
    let total: u64 = usage.iter().sum();
    if total == 0 {
        return Err(Error::State(
            "perplexity is undefined before any quantization".into(),
        ));
    }
    let total = total as f64;
    let entropy: f64 = usage
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Output of [`quantize`].
pub struct Quantized<'t, T> {
    /// Selected entries forward, identity gradient to the latents backward.
    pub z_q: Var<'t, T>,
    /// Selected entries, differentiable with respect to the codebook.
    pub selected: Var<'t, T>,
    pub grids: Vec<TokenGrid>,
}

/// Snaps every latent vector of `z_e` (`[N, dim, t, h, w]`) to its nearest
/// entry of `table` (the codebook entries recorded on the same tape) and
/// counts the lookups at `step`.
pub fn quantize<'t, T: Real>(
    z_e: Var<'t, T>,
    table: Var<'t, T>,
    book: &Codebook<T>,
    step: u64,
) -> Result<Quantized<'t, T>> {
    let grids = book.assign(&z_e.value())?;
    let [n, _, t, h, w] = z_e.value().dims5("latents")?;
    let indices: Vec<usize> = grids
        .iter()
        .flat_map(|g| g.indices().iter().map(|&i| i as usize))
        .collect();
    let selected = table.lattice_lookup(&indices, [n, t, h, w])?;
    let z_q = z_e.straight_through(selected)?;
    book.record_usage(&grids, step);
    Ok(Quantized {
        z_q,
        selected,
        grids,
    })
}

/// The two halves of the vector-quantization objective, each averaged over
/// lattice positions.
pub struct VqLoss<'t, T> {
    /// `‖sg(z_e) − e‖²`: moves codebook entries only.
    pub codebook: Var<'t, T>,
    /// `‖z_e − sg(e)‖²`: moves the encoder only.
    pub commitment: Var<'t, T>,
    /// `codebook + commitment_weight · commitment`.
    pub total: Var<'t, T>,
}

/// VQ loss between latents `z_e` and their selected entries `e`, both
/// `[N, dim, ...]`.
pub fn vq_loss<'t, T: Real>(
    z_e: Var<'t, T>,
    e: Var<'t, T>,
    commitment_weight: f64,
) -> Result<VqLoss<'t, T>> {
    let (zs, es) = (z_e.shape(), e.shape());
    if zs != es {
        return Err(Error::arg(format!(
            "vq_loss shapes differ: {zs:?} vs {es:?}"
        )));
    }
    if zs.len() < 2 {
        return Err(Error::arg("vq_loss needs [N, dim, ...] latents"));
    }
    let positions = zs.iter().product::<usize>() / zs[1];
    let scale = 1.0 / positions as f64;
    let d_book = z_e.stop_gradient().sub(e)?;
    let codebook = d_book.mul(d_book)?.sum()?.mul_scalar(scale)?;
    let d_commit = z_e.sub(e.stop_gradient())?;
    let commitment = d_commit.mul(d_commit)?.sum()?.mul_scalar(scale)?;
    let total = if commitment_weight == 1.0 {
        codebook.add(commitment)?
    } else {
        codebook.add(commitment.mul_scalar(commitment_weight)?)?
    };
    Ok(VqLoss {
        codebook,
        commitment,
        total,
    })
}
