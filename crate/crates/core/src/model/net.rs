//! Layer recipes and forward passes of the three networks.
//!
//! Parameter names follow `net.block.layer.{w,b,g}`; for instance
//! `enc.s1.r0.c2.w` is the second convolution of the first residual block in
//! encoder stage 1.

use super::config::ModelConfig;
use super::params::{Bound, Init, ParamSpec};
use crate::error::Result;
use crate::tensor::{Conv3dSpec, Real, Var, LEAKY_SLOPE};

pub(crate) const NORM_EPS: f64 = 1e-6;
const MAX_GROUPS: usize = 8;

/// Largest divisor of `channels` not above eight.
pub(crate) fn groups_for(channels: usize) -> usize {
    (1..=MAX_GROUPS.min(channels))
        .rev()
        .find(|g| channels % g == 0)
        .unwrap_or(1)
}

fn conv_spec(out: &mut Vec<ParamSpec>, name: &str, co: usize, ci: usize, k: usize) {
    let fan_in = ci * k * k * k;
    out.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![co, ci, k, k, k],
        init: Init::Uniform { fan_in },
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![co],
        init: Init::Uniform { fan_in },
    });
}

fn norm_spec(out: &mut Vec<ParamSpec>, name: &str, c: usize) {
    out.push(ParamSpec {
        name: format!("{name}.g"),
        shape: vec![c],
        init: Init::Ones,
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![c],
        init: Init::Zeros,
    });
}

fn res_spec(out: &mut Vec<ParamSpec>, name: &str, c: usize) {
    norm_spec(out, &format!("{name}.n1"), c);
    conv_spec(out, &format!("{name}.c1"), c, c, 3);
    norm_spec(out, &format!("{name}.n2"), c);
    conv_spec(out, &format!("{name}.c2"), c, c, 3);
}

pub(crate) fn encoder_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let stages = cfg.compression.stages();
    conv_spec(&mut out, "enc.stem", cfg.width(0), cfg.in_channels, 3);
    for s in 0..stages {
        for r in 0..cfg.res_blocks {
            res_spec(&mut out, &format!("enc.s{s}.r{r}"), cfg.width(s));
        }
        conv_spec(&mut out, &format!("enc.s{s}.down"), cfg.width(s + 1), cfg.width(s), 3);
    }
    norm_spec(&mut out, "enc.out.n", cfg.width(stages));
    conv_spec(&mut out, "enc.out", cfg.embed_dim, cfg.width(stages), 1);
    out
}

pub(crate) fn decoder_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let stages = cfg.compression.stages();
    conv_spec(&mut out, "dec.in", cfg.width(stages), cfg.embed_dim, 1);
    for s in (0..stages).rev() {
        conv_spec(&mut out, &format!("dec.s{s}.up"), cfg.width(s), cfg.width(s + 1), 3);
        for r in 0..cfg.res_blocks {
            res_spec(&mut out, &format!("dec.s{s}.r{r}"), cfg.width(s));
        }
    }
    norm_spec(&mut out, "dec.out.n", cfg.width(0));
    conv_spec(&mut out, "dec.out", cfg.in_channels, cfg.width(0), 3);
    out
}

pub(crate) const DISC_STAGES: usize = 3;

pub(crate) fn discriminator_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let mut ci = cfg.in_channels;
    for s in 0..DISC_STAGES {
        conv_spec(&mut out, &format!("disc.c{s}"), cfg.width(s), ci, 3);
        ci = cfg.width(s);
    }
    conv_spec(&mut out, "disc.out", 1, ci, 1);
    out
}

fn conv<'t, T: Real>(
    p: &Bound<'t, T>,
    name: &str,
    x: Var<'t, T>,
    spec: Conv3dSpec,
) -> Result<Var<'t, T>> {
    x.conv3d(
        p.get(&format!("{name}.w"))?,
        Some(p.get(&format!("{name}.b"))?),
        spec,
    )
}

fn norm<'t, T: Real>(p: &Bound<'t, T>, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let c = x.shape()[1];
    x.group_norm(
        groups_for(c),
        NORM_EPS,
        p.get(&format!("{name}.g"))?,
        p.get(&format!("{name}.b"))?,
    )
}

/// `x + conv(swish(norm(conv(swish(norm(x))))))`
fn res_block<'t, T: Real>(p: &Bound<'t, T>, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let same = Conv3dSpec::uniform(1, 1);
    let h = norm(p, &format!("{name}.n1"), x)?.swish()?;
    let h = conv(p, &format!("{name}.c1"), h, same)?;
    let h = norm(p, &format!("{name}.n2"), h)?.swish()?;
    let h = conv(p, &format!("{name}.c2"), h, same)?;
    x.add(h)
}

/// Heatmaps `[N, C, T, H, W]` to continuous latents `[N, embed, t, h, w]`.
pub fn encoder<'t, T: Real>(cfg: &ModelConfig, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let stages = cfg.compression.stages();
    let mut h = conv(p, "enc.stem", x, Conv3dSpec::uniform(1, 1))?;
    for s in 0..stages {
        for r in 0..cfg.res_blocks {
            h = res_block(p, &format!("enc.s{s}.r{r}"), h)?;
        }
        h = conv(p, &format!("enc.s{s}.down"), h, Conv3dSpec::uniform(2, 1))?;
    }
    let h = norm(p, "enc.out.n", h)?.swish()?;
    conv(p, "enc.out", h, Conv3dSpec::unit())
}

/// Quantized latents back to heatmaps in `(0, 1)`.
pub fn decoder<'t, T: Real>(cfg: &ModelConfig, p: &Bound<'t, T>, z: Var<'t, T>) -> Result<Var<'t, T>> {
    let stages = cfg.compression.stages();
    let mut h = conv(p, "dec.in", z, Conv3dSpec::unit())?;
    for s in (0..stages).rev() {
        h = h.upsample_nearest3d([2, 2, 2])?;
        h = conv(p, &format!("dec.s{s}.up"), h, Conv3dSpec::uniform(1, 1))?;
        for r in 0..cfg.res_blocks {
            h = res_block(p, &format!("dec.s{s}.r{r}"), h)?;
        }
    }
    let h = norm(p, "dec.out.n", h)?.swish()?;
    conv(p, "dec.out", h, Conv3dSpec::uniform(1, 1))?.sigmoid()
}

/// One unbounded logit per sample, `[N]`.
pub fn discriminator<'t, T: Real>(p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let mut h = x;
    for s in 0..DISC_STAGES {
        h = conv(p, &format!("disc.c{s}"), h, Conv3dSpec::uniform(2, 1))?.leaky_relu(LEAKY_SLOPE)?;
    }
    conv(p, "disc.out", h, Conv3dSpec::unit())?.mean_per_sample()
}
