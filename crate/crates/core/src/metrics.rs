//! Reconstruction quality: SSIM, PSNR, L1, temporal deviation (T-Std) and
//! quantization error, plus the per-model report row.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{HeatmapVolume, Layout};
use crate::model::ModelState;
use crate::tensor::Real;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Dynamic range of heatmap values.
const RANGE: f64 = 1.0;

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;

fn same_layout(what: &str, x: &HeatmapVolume, y: &HeatmapVolume) -> Result<()> {
    if x.layout() != y.layout() {
        return Err(Error::arg(format!(
            "{what}: layouts differ, {:?} vs {:?}",
            x.layout(),
            y.layout()
        )));
    }
    Ok(())
}

/// Normalized `7×7` Gaussian window, row-major.
fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            w[i * SSIM_WINDOW + j] = g[i] * g[j];
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// `(rows, cols)` of the 2D images a layout is scored as.
fn image_extents(layout: Layout) -> (usize, usize) {
    let s = layout.spatial();
    (s[s.len() - 2], s[s.len() - 1])
}

/// Mean SSIM over every fully contained `7×7` window of one image.
fn ssim_image(x: &[f64], y: &[f64], rows: usize, cols: usize, w: &[f64]) -> f64 {
    let c1 = (K1 * RANGE).powi(2);
    let c2 = (K2 * RANGE).powi(2);
    let k = SSIM_WINDOW;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - k {
        for c in 0..=cols - k {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let wt = w[i * k + j];
                    let a = x[(r + i) * cols + c + j];
                    let b = y[(r + i) * cols + c + j];
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}

/// Windowed SSIM (Gaussian `7×7`, σ = 1.5, `L = 1`) averaged over windows,
/// then over every frame, channel and depth slice.
pub fn ssim(x: &HeatmapVolume, y: &HeatmapVolume) -> Result<f64> {
    same_layout("ssim", x, y)?;
    let (rows, cols) = image_extents(x.layout());
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::arg(format!(
            "ssim needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {rows}×{cols}"
        )));
    }
    let w = gaussian_window();
    let plane = rows * cols;
    let images = x.values().len() / plane;
    let mut total = 0.0;
    for i in 0..images {
        let s = i * plane..(i + 1) * plane;
        total += ssim_image(&x.values()[s.clone()], &y.values()[s], rows, cols, &w);
    }
    Ok(total / images as f64)
}

fn mse(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// `10·log10(max_val² / MSE)`; [`PSNR_CAP`] when the inputs are identical.
pub fn psnr(x: &HeatmapVolume, y: &HeatmapVolume, max_val: f64) -> Result<f64> {
    same_layout("psnr", x, y)?;
    if !(max_val > 0.0 && max_val.is_finite()) {
        return Err(Error::arg(format!("psnr max value must be positive, got {max_val}")));
    }
    Ok(psnr_from_mse(mse(x.values(), y.values()), max_val))
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP;
    }
    10.0 * (max_val * max_val / mse).log10()
}

/// Mean absolute difference.
pub fn l1(x: &HeatmapVolume, y: &HeatmapVolume) -> Result<f64> {
    same_layout("l1", x, y)?;
    let n = x.values().len() as f64;
    Ok(x.values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Temporal deviation, per channel
/// `(1/(F·S)) · Σ_f sqrt((1/S) · Σ_s (I_f(s) − μ(s))²)` with `μ(s)` the
/// temporal mean at spatial position `s` and `S` the spatial size, then
/// averaged over channels. The outer `1/S` is part of the definition.
pub fn tstd(v: &HeatmapVolume) -> f64 {
    let (f, c) = (v.frames(), v.channels());
    let s = v.layout().spatial_volume();
    let mut total = 0.0;
    let mut mean = vec![0.0; s];
    for ch in 0..c {
        // shifted by the first frame so identical frames give an exact mean
        let first = v.image(0, ch);
        mean.iter_mut().for_each(|m| *m = 0.0);
        for fr in 1..f {
            for ((m, &x), &x0) in mean.iter_mut().zip(v.image(fr, ch)).zip(first) {
                *m += x - x0;
            }
        }
        for (m, &x0) in mean.iter_mut().zip(first) {
            *m = x0 + *m / f as f64;
        }
        let mut acc = 0.0;
        for fr in 0..f {
            let sq: f64 = v
                .image(fr, ch)
                .iter()
                .zip(&mean)
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum();
            acc += (sq / s as f64).sqrt();
        }
        total += acc / (f * s) as f64;
    }
    total / c as f64
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "model")]
    pub model_tag: String,
    pub compression: String,
    pub vocab: usize,
    pub ssim: f64,
    pub psnr: f64,
    pub l1: f64,
    pub tstd: f64,
    pub qloss: Option<f64>,
}

pub const CSV_HEADER: &str = "model,compression,vocab,ssim,psnr,l1,tstd,qloss";

impl MetricsReport {
    fn csv_row(&self) -> Result<String> {
        if self.model_tag.contains([',', '"', '\n']) {
            return Err(Error::arg(format!(
                "model tag {:?} cannot contain commas, quotes or newlines",
                self.model_tag
            )));
        }
        let qloss = self.qloss.map(|q| q.to_string()).unwrap_or_default();
        Ok(format!(
            "{},{},{},{},{},{},{},{}",
            self.model_tag, self.compression, self.vocab, self.ssim, self.psnr, self.l1, self.tstd, qloss
        ))
    }
}

/// Header plus one line per report. Numbers use the shortest representation
/// that parses back to the same value.
pub fn write_csv(mut w: impl Write, reports: &[MetricsReport]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row()?)?;
    }
    Ok(())
}

/// The same reports as a JSON array.
pub fn write_json(mut w: impl Write, reports: &[MetricsReport]) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, reports)?;
    writeln!(w)?;
    Ok(())
}

/// Per-window metrics, before averaging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowMetrics {
    pub ssim: f64,
    pub psnr: f64,
    pub l1: f64,
    pub tstd: f64,
    pub qloss: f64,
}

/// Scores one window: reconstruct through the tokenizer and compare.
pub fn evaluate_window<T: Real>(state: &ModelState<T>, window: &HeatmapVolume) -> Result<WindowMetrics> {
    let x = HeatmapVolume::stack::<T>(std::slice::from_ref(window))?;
    let enc = state.encode(&x)?;
    let y = state.decode_latents(&enc.z_q)?;
    let recon = HeatmapVolume::unstack(&y, 0, window.layout(), window.sigma())?;
    let d = state.config.embed_dim;
    let positions = enc.z_e.numel() / d;
    let qloss = enc
        .z_e
        .data()
        .iter()
        .zip(enc.z_q.data())
        .map(|(&a, &b)| {
            let r = a.as_f64() - b.as_f64();
            r * r
        })
        .sum::<f64>()
        / positions as f64;
    Ok(WindowMetrics {
        ssim: ssim(window, &recon)?,
        psnr: psnr(window, &recon, RANGE)?,
        l1: l1(window, &recon)?,
        tstd: tstd(&recon),
        qloss,
    })
}

/// Every metric averaged over windows. T-Std is that of the reconstruction;
/// Q-loss is the mean squared latent-to-entry distance per lattice position.
pub fn evaluate<T: Real>(
    state: &ModelState<T>,
    windows: &[HeatmapVolume],
    model_tag: &str,
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(Error::arg("evaluation needs at least one window"));
    }
    let mut sum = [0.0f64; 5];
    for w in windows {
        let m = evaluate_window(state, w)?;
        for (s, v) in sum.iter_mut().zip([m.ssim, m.psnr, m.l1, m.tstd, m.qloss]) {
            *s += v;
        }
    }
    let n = windows.len() as f64;
    let [ssim, psnr, l1, tstd, qloss] = sum.map(|s| s / n);
    Ok(MetricsReport {
        model_tag: model_tag.to_string(),
        compression: state.config.compression.tag().to_string(),
        vocab: state.config.vocab,
        ssim,
        psnr,
        l1,
        tstd,
        qloss: Some(qloss),
    })
}
