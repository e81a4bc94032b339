//! Token grids and the `MTK1` token file format.
//!
//! Layout: `b"MTK1"`, `u32` vocabulary size, three `u32` extents `(t, h, w)`,
//! then `t·h·w` little-endian `u16` indices. A file may hold several grids
//! back to back, one per motion window.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const TOKEN_MAGIC: &[u8; 4] = b"MTK1";

const MAX_VOCAB: usize = 1 << 16;

/// A `t × h × w` lattice of codebook indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    extents: [usize; 3],
    vocab: usize,
    indices: Vec<u32>,
}

impl TokenGrid {
    pub fn new(extents: [usize; 3], vocab: usize, indices: Vec<u32>) -> Result<Self> {
        let count: usize = extents.iter().product();
        if count == 0 {
            return Err(Error::arg("token grid with a zero extent"));
        }
        if indices.len() != count {
            return Err(Error::dim("token count", count, indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::Data(format!("token {bad} outside vocabulary {vocab}")));
        }
        Ok(Self {
            extents,
            vocab,
            indices,
        })
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::arg(format!("{what} {v} does not fit in a u32")))
}

pub fn write_tokens(mut w: impl Write, grid: &TokenGrid) -> Result<()> {
    if grid.vocab > MAX_VOCAB {
        return Err(Error::arg(format!(
            "vocabulary {} exceeds the u16 token range",
            grid.vocab
        )));
    }
    let mut out = Vec::with_capacity(20 + 2 * grid.len());
    out.extend_from_slice(TOKEN_MAGIC);
    out.extend_from_slice(&to_u32(grid.vocab, "vocab")?.to_le_bytes());
    for &e in &grid.extents {
        out.extend_from_slice(&to_u32(e, "extent")?.to_le_bytes());
    }
    for &i in &grid.indices {
        out.extend_from_slice(&(i as u16).to_le_bytes());
    }
    w.write_all(&out)?;
    Ok(())
}

/// Reads one grid; `Ok(None)` at a clean end of stream.
pub fn read_tokens(mut r: impl Read) -> Result<Option<TokenGrid>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let k = r.read(&mut magic[got..])?;
        if k == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Format("truncated token magic".into()));
        }
        got += k;
    }
    if &magic != TOKEN_MAGIC {
        return Err(Error::Format(format!("bad token magic {magic:?}")));
    }
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated token header".into()))?;
    let word = |i: usize| u32::from_le_bytes(head[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let vocab = word(0);
    let extents = [word(1), word(2), word(3)];
    if vocab > MAX_VOCAB || vocab < 2 {
        return Err(Error::Format(format!("token vocabulary {vocab} out of range")));
    }
    let count = extents
        .iter()
        .try_fold(1usize, |a, &e| a.checked_mul(e))
        .ok_or_else(|| Error::Format("token extents overflow".into()))?;
    let mut payload = Vec::new();
    r.take(2 * count as u64).read_to_end(&mut payload)?;
    if payload.len() != 2 * count {
        return Err(Error::Format(format!(
            "truncated token payload: {} of {} bytes",
            payload.len(),
            2 * count
        )));
    }
    let indices = payload
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as u32)
        .collect();
    TokenGrid::new(extents, vocab, indices)
        .map(Some)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Every grid in a token stream.
pub fn read_tokens_all(mut r: impl Read) -> Result<Vec<TokenGrid>> {
    let mut grids = Vec::new();
    while let Some(g) = read_tokens(&mut r)? {
        grids.push(g);
    }
    Ok(grids)
}
