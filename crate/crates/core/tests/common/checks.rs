//! Oracle comparisons shared by the module tests and the acceptance run.
//! Each returns a short summary on success and the first mismatch otherwise.

use motok::heatmap::{project_triplane, render2d, render3d, Layout};
use motok::metrics::{l1, psnr, ssim, tstd};
use motok::quantizer::{quantize, vq_loss, Codebook};
use motok::{Tape, Tensor};
use rand::Rng;

use super::*;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn brute_force_nearest(table: &Tensor<f64>, v: &[f64]) -> usize {
    let dists: Vec<f64> = table
        .data()
        .chunks(v.len())
        .map(|e| e.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    dists.iter().position(|&x| x == min).unwrap()
}

/// `pairs` random (latents, codebook) pairs spread over the vocabularies.
pub fn quantizer_nearest(pairs: usize, vocabs: &[usize]) -> Check {
    let mut positions = 0;
    for pair in 0..pairs {
        let vocab = vocabs[pair % vocabs.len()];
        let seed = pair as u64;
        let dim = 4 + pair % 13;
        let table = uniform(&[vocab, dim], -1.0, 1.0, seed, "table");
        let z = uniform(&[2, dim, 1, 2, 3], -1.2, 1.2, seed, "z");
        let book = Codebook::from_entries(table.clone()).map_err(|e| e.to_string())?;
        let grids = book.assign(&z).map_err(|e| e.to_string())?;
        for (n, g) in grids.iter().enumerate() {
            for p in 0..6 {
                let v: Vec<f64> = (0..dim).map(|c| z.data()[(n * dim + c) * 6 + p]).collect();
                let want = brute_force_nearest(&table, &v);
                ensure!(g.indices()[p] as usize == want, "pair {pair} (V={vocab}) position {p}: {} vs {want}", g.indices()[p]);
                positions += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs, {positions} positions identical to exhaustive search"))
}

/// Codebook term moves only entries, commitment term only latents, and the
/// straight-through output passes gradients to latents unchanged.
pub fn quantizer_routing(seed: u64) -> Check {
    let (dim, vocab, pos) = (3, 6, 4);
    let table = uniform(&[vocab, dim], -1.0, 1.0, seed, "table");
    let z = uniform(&[1, dim, 1, 2, 2], -1.0, 1.0, seed, "z");
    let book = Codebook::from_entries(table.clone()).unwrap();
    let p_f = pos as f64;

    let tape = Tape::new();
    let (zv, tv) = (tape.leaf(z.clone()), tape.leaf(table.clone()));
    let q = quantize(zv, tv, &book, 0).unwrap();
    let idx: Vec<usize> = q.grids[0].indices().iter().map(|&i| i as usize).collect();
    tape.backward(vq_loss(zv, q.selected, 0.25).unwrap().codebook).unwrap();
    ensure!(zv.grad().unwrap().data().iter().all(|&g| g == 0.0), "codebook term reached the latents");
    let mut want = vec![0.0; vocab * dim];
    for (p, &k) in idx.iter().enumerate() {
        for c in 0..dim {
            want[k * dim + c] += 2.0 * (table.data()[k * dim + c] - z.data()[c * pos + p]) / p_f;
        }
    }
    for (g, w) in tv.grad().unwrap().data().iter().zip(&want) {
        ensure!((g - w).abs() < 1e-12, "codebook gradient {g} vs {w}");
    }

    let tape = Tape::new();
    let (zv, tv) = (tape.leaf(z.clone()), tape.leaf(table.clone()));
    let q = quantize(zv, tv, &book, 0).unwrap();
    tape.backward(vq_loss(zv, q.selected, 0.25).unwrap().commitment).unwrap();
    ensure!(tv.grad().unwrap().data().iter().all(|&g| g == 0.0), "commitment term reached the codebook");
    let gz = zv.grad().unwrap();
    for p in 0..pos {
        for c in 0..dim {
            let want = 2.0 * (z.data()[c * pos + p] - table.data()[idx[p] * dim + c]) / p_f;
            ensure!((gz.data()[c * pos + p] - want).abs() < 1e-12, "commitment gradient mismatch");
        }
    }

    let tape = Tape::new();
    let (zv, tv) = (tape.leaf(z.clone()), tape.leaf(table.clone()));
    let q = quantize(zv, tv, &book, 0).unwrap();
    let r = uniform(&[1, dim, 1, 2, 2], 0.5, 1.5, seed, "r");
    tape.backward(q.z_q.mul(tape.constant(r.clone())).unwrap().sum().unwrap()).unwrap();
    ensure!(zv.grad().unwrap() == r, "straight-through gradient is not the identity");
    ensure!(tv.grad().unwrap().data().iter().all(|&g| g == 0.0), "straight-through reached the codebook");
    ensure!(*q.z_q.value() == *q.selected.value(), "quantized value differs from the selected entries");
    Ok("stop-gradient routing exact".into())
}

fn random_layout(r: &mut impl Rng) -> Layout {
    let (frames, channels) = (r.random_range(1..5), r.random_range(1..4));
    let (height, width) = (r.random_range(7..13), r.random_range(7..13));
    match r.random_range(0..3) {
        0 => Layout::Planar { frames, channels, height, width },
        1 => Layout::Volume { frames, channels, depth: r.random_range(1..4), height, width },
        _ => Layout::Triplane { frames, joints: channels, height, width },
    }
}

/// Library metrics against the scalar-loop references on random pairs.
pub fn metrics_vs_references(pairs: u64) -> Check {
    let mut r = rng(0, "layouts");
    let mut worst: f64 = 0.0;
    for i in 0..pairs {
        let layout = random_layout(&mut r);
        let x = random_volume(layout, i, "x");
        let y = random_volume(layout, i, "y");
        let diffs = [
            ("ssim", ssim(&x, &y).unwrap(), ssim_reference(&x, &y)),
            ("psnr", psnr(&x, &y, 1.0).unwrap(), psnr_reference(&x, &y, 1.0)),
            ("l1", l1(&x, &y).unwrap(), l1_reference(&x, &y)),
            ("tstd", tstd(&x), tstd_reference(&x)),
        ];
        for (what, a, b) in diffs {
            ensure!((a - b).abs() < 1e-9, "{what} pair {i}: {a} vs {b}");
            worst = worst.max((a - b).abs());
        }
        ensure!(ssim(&x, &x).unwrap() == 1.0, "ssim(x, x) != 1 for pair {i}");
    }
    Ok(format!("{pairs} pairs, max |Δ| {worst:.1e}"))
}

/// Rendered maps against a per-voxel evaluation of the Gaussian.
pub fn heatmap_pointwise(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let (h, w) = (13, 17);
        let kp = random_keypoints(3, 4, 2, 16.0, seed);
        let vol = render2d(&kp, h, w, 1.7).unwrap();
        for f in 0..3 {
            for k in 0..4 {
                let img = vol.image(f, k);
                for j in 0..h {
                    for i in 0..w {
                        let want = if kp.is_valid(f, k) { gaussian_at(kp.point(f, k), i, j, None, 1.7) } else { 0.0 };
                        worst = worst.max((img[j * w + i] - want).abs());
                    }
                }
            }
        }
        let kp = random_keypoints(2, 3, 3, 9.0, seed);
        let vol = render3d(&kp, 8, 9, 10, 1.3).unwrap();
        for f in 0..2 {
            for k in 0..3 {
                let img = vol.image(f, k);
                for d in 0..8 {
                    for j in 0..9 {
                        for i in 0..10 {
                            let want = if kp.is_valid(f, k) { gaussian_at(kp.point(f, k), i, j, Some(d), 1.3) } else { 0.0 };
                            worst = worst.max((img[(d * 9 + j) * 10 + i] - want).abs());
                        }
                    }
                }
            }
        }
    }
    ensure!(worst < 1e-12, "max per-voxel error {worst:e}");
    Ok(format!("max per-voxel error {worst:.1e}"))
}

/// Tri-plane maps against an exhaustive max along each axis.
pub fn triplane_exhaustive(seeds: u64) -> Check {
    for seed in 0..seeds {
        let (n, frames, joints) = (9, 2, 3);
        let kp = random_keypoints(frames, joints, 3, n as f64, seed);
        let vol = render3d(&kp, n, n, n, 1.5).unwrap();
        let tri = project_triplane(&vol).unwrap();
        for f in 0..frames {
            for k in 0..joints {
                let src = vol.image(f, k);
                let at = |d: usize, h: usize, w: usize| src[(d * n + h) * n + w];
                let (xy, yz, xz) = (tri.image(f, k), tri.image(f, joints + k), tri.image(f, 2 * joints + k));
                let m = |g: &dyn Fn(usize) -> f64| (0..n).map(g).fold(f64::NEG_INFINITY, f64::max);
                for a in 0..n {
                    for b in 0..n {
                        ensure!(xy[a * n + b] == m(&|d| at(d, a, b)), "XY mismatch seed {seed}");
                        ensure!(yz[a * n + b] == m(&|w| at(a, b, w)), "YZ mismatch seed {seed}");
                        ensure!(xz[a * n + b] == m(&|h| at(a, h, b)), "XZ mismatch seed {seed}");
                    }
                }
            }
        }
    }
    Ok(format!("{seeds} volumes, all three planes exact"))
}
