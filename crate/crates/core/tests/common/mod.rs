//! Shared oracles and fixtures for the integration tests. Every reference
//! here is written as plain scalar loops, independent of the library code it
//! checks.
#![allow(dead_code)]

pub mod checks;
pub mod grad;

use motok::heatmap::{HeatmapMode, HeatmapVolume, KeypointSequence, Layout, RenderConfig};
use motok::model::{Compression, ModelConfig};
use motok::trainer::{synth_motion, Dataset, MotionFamily, SyntheticMotionSpec, TrainConfig};
use motok::{Tape, Tensor, Var};
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const FD_FLOOR: f64 = 1e-3;
pub const FD_COORDS: usize = 48;

pub fn rng(seed: u64, role: &str) -> rand_chacha::ChaCha8Rng {
    motok::rng::stream(seed, role)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64, role: &str) -> Tensor<f64> {
    let mut r = rng(seed, role);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// Uniform values kept at least `gap` away from every point in `kinks`, so
/// finite differences never straddle a non-differentiable point.
pub fn uniform_avoiding(
    shape: &[usize],
    lo: f64,
    hi: f64,
    kinks: &[f64],
    gap: f64,
    seed: u64,
    role: &str,
) -> Tensor<f64> {
    let mut r = rng(seed, role);
    Tensor::from_fn(shape.to_vec(), |_| loop {
        let v: f64 = r.random_range(lo..hi);
        if kinks.iter().all(|k| (v - k).abs() > gap) {
            break v;
        }
    })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

fn projected<'t>(tape: &'t Tape<f64>, out: Var<'t, f64>, proj: &Tensor<f64>) -> Var<'t, f64> {
    out.mul(tape.constant(proj.clone())).unwrap().sum().unwrap()
}

/// Largest relative error between the tape gradient of
/// `Σ r ⊙ f(inputs)` (fixed random `r`) and its central finite difference,
/// over up to [`FD_COORDS`] coordinates of every input.
pub fn grad_error<F>(inputs: &[Tensor<f64>], seed: u64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars);
    let proj = uniform(&out.shape(), 0.5, 1.5, seed, "fd/projection");
    let loss = projected(&tape, out, &proj);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| v.grad().unwrap()).collect();

    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars);
        projected(&tape, out, &proj).value().item().unwrap()
    };

    let mut r = rng(seed, "fd/coords");
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = if n <= FD_COORDS {
            (0..n).collect()
        } else {
            (0..FD_COORDS).map(|_| r.random_range(0..n)).collect()
        };
        for i in coords {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] = input.data()[i] + FD_STEP;
            let up = eval(&xs);
            xs[k].data_mut()[i] = input.data()[i] - FD_STEP;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k].data()[i], numeric));
        }
    }
    worst
}

/// Direct cross-correlation: one loop per output and kernel axis.
pub fn conv3d_reference(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: Option<&Tensor<f64>>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Tensor<f64> {
    let [n, c, t, h, wd] = <[usize; 5]>::try_from(x.shape()).unwrap();
    let [co, _, kt, kh, kw] = <[usize; 5]>::try_from(w.shape()).unwrap();
    let out = |i: usize, k: usize, s: usize, p: usize| (i + 2 * p - k) / s + 1;
    let (ot, oh, ow) = (out(t, kt, stride[0], pad[0]), out(h, kh, stride[1], pad[1]), out(wd, kw, stride[2], pad[2]));
    let xi = |ni: usize, ci: usize, ti: usize, hi: usize, wi: usize| x.data()[(((ni * c + ci) * t + ti) * h + hi) * wd + wi];
    let wi = |o: usize, ci: usize, a: usize, bb: usize, cc: usize| w.data()[(((o * c + ci) * kt + a) * kh + bb) * kw + cc];
    let mut y = vec![0.0; n * co * ot * oh * ow];
    for ni in 0..n {
        for o in 0..co {
            for zt in 0..ot {
                for zh in 0..oh {
                    for zw in 0..ow {
                        let mut acc = b.map_or(0.0, |b| b.data()[o]);
                        for ci in 0..c {
                            for a in 0..kt {
                                for bb in 0..kh {
                                    for cc in 0..kw {
                                        let it = (zt * stride[0] + a) as isize - pad[0] as isize;
                                        let ih = (zh * stride[1] + bb) as isize - pad[1] as isize;
                                        let iw = (zw * stride[2] + cc) as isize - pad[2] as isize;
                                        if it < 0 || ih < 0 || iw < 0 || it >= t as isize || ih >= h as isize || iw >= wd as isize {
                                            continue;
                                        }
                                        acc += xi(ni, ci, it as usize, ih as usize, iw as usize) * wi(o, ci, a, bb, cc);
                                    }
                                }
                            }
                        }
                        y[(((ni * co + o) * ot + zt) * oh + zh) * ow + zw] = acc;
                    }
                }
            }
        }
    }
    Tensor::new([n, co, ot, oh, ow], y).unwrap()
}

/// Images of a volume as (height, width, pixels): every frame, channel and
/// (for 3D layouts) depth slice.
fn images(v: &HeatmapVolume) -> (usize, usize, Vec<&[f64]>) {
    let sp = v.layout().spatial();
    let (h, w) = (sp[sp.len() - 2], sp[sp.len() - 1]);
    (h, w, v.values().chunks(h * w).collect())
}

/// SSIM with a 7×7 Gaussian window (σ 1.5), two-pass windowed moments.
pub fn ssim_reference(x: &HeatmapVolume, y: &HeatmapVolume) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut g = [[0.0; 7]; 7];
    let mut total = 0.0;
    for (u, row) in g.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let (du, dv) = (u as f64 - 3.0, v as f64 - 3.0);
            *cell = (-(du * du + dv * dv) / (2.0 * 1.5 * 1.5)).exp();
            total += *cell;
        }
    }
    let (h, w, xs) = images(x);
    let (_, _, ys) = images(y);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in xs.iter().zip(&ys) {
        for i in 0..=h - 7 {
            for j in 0..=w - 7 {
                let (mut mx, mut my) = (0.0, 0.0);
                for u in 0..7 {
                    for v in 0..7 {
                        let k = g[u][v] / total;
                        mx += k * a[(i + u) * w + j + v];
                        my += k * b[(i + u) * w + j + v];
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for u in 0..7 {
                    for v in 0..7 {
                        let k = g[u][v] / total;
                        let dx = a[(i + u) * w + j + v] - mx;
                        let dy = b[(i + u) * w + j + v] - my;
                        vx += k * dx * dx;
                        vy += k * dy * dy;
                        cxy += k * dx * dy;
                    }
                }
                sum += (2.0 * mx * my + c1) * (2.0 * cxy + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

pub fn psnr_reference(x: &HeatmapVolume, y: &HeatmapVolume, max: f64) -> f64 {
    let n = x.values().len() as f64;
    let mse = x.values().iter().zip(y.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        100.0
    } else {
        10.0 * (max * max / mse).log10()
    }
}

pub fn l1_reference(x: &HeatmapVolume, y: &HeatmapVolume) -> f64 {
    let n = x.values().len() as f64;
    x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
}

/// `1/(F·S) Σ_f sqrt(1/S Σ_p (I_f(p) − μ(p))²)` per channel, channels averaged.
pub fn tstd_reference(v: &HeatmapVolume) -> f64 {
    let l = v.layout();
    let (f, c, s) = (l.frames(), l.channels(), l.spatial_volume());
    let at = |fr: usize, ch: usize, p: usize| v.values()[(fr * c + ch) * s + p];
    let mut out = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        for fr in 0..f {
            let mut sq = 0.0;
            for p in 0..s {
                let mu = (0..f).map(|g| at(g, ch, p)).sum::<f64>() / f as f64;
                sq += (at(fr, ch, p) - mu).powi(2);
            }
            acc += (sq / s as f64).sqrt();
        }
        out += acc / (f * s) as f64;
    }
    out / c as f64
}

pub fn random_volume(layout: Layout, seed: u64, role: &str) -> HeatmapVolume {
    let mut r = rng(seed, role);
    let values = (0..layout.numel()).map(|_| r.random_range(0.0..1.0)).collect();
    HeatmapVolume::new(layout, values, 1.0).unwrap()
}

/// `exp(−((i − x)² + (j − y)² [+ (k − z)²]) / 2σ²)` for one voxel; `i` runs
/// along width, `j` along height, `k` along depth.
pub fn gaussian_at(p: &[f64], i: usize, j: usize, k: Option<usize>, sigma: f64) -> f64 {
    let mut d2 = (i as f64 - p[0]).powi(2) + (j as f64 - p[1]).powi(2);
    if let Some(k) = k {
        d2 += (k as f64 - p[2]).powi(2);
    }
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn random_keypoints(frames: usize, joints: usize, dims: usize, extent: f64, seed: u64) -> KeypointSequence {
    let mut r = rng(seed, "keypoints");
    let coords = (0..frames * joints * dims)
        .map(|_| r.random_range(-2.0..extent + 2.0))
        .collect();
    let valid = (0..frames * joints).map(|_| r.random_range(0.0..1.0) > 0.1).collect();
    KeypointSequence::new(frames, joints, dims, coords, valid).unwrap()
}

pub const SMOKE_JOINTS: usize = 8;
pub const SMOKE_STEPS: u64 = 200;

/// Eight 16×32×32 windows: two from each of four synthetic sequences.
pub fn smoke_windows() -> Vec<HeatmapVolume> {
    let render = RenderConfig {
        mode: HeatmapMode::Planar,
        height: 32,
        width: 32,
        depth: 0,
        sigma: None,
        window_length: 16,
        window_stride: 16,
    };
    let families = [
        MotionFamily::Pendulum,
        MotionFamily::WalkCycle,
        MotionFamily::RandomSmooth,
        MotionFamily::WalkCycle,
    ];
    families
        .iter()
        .enumerate()
        .flat_map(|(i, &family)| {
            let spec = SyntheticMotionSpec::new(SMOKE_JOINTS, 32, family, i as u64, 32, 32);
            render.render_windows(&synth_motion(&spec).unwrap()).unwrap()
        })
        .collect()
}

pub fn smoke_model() -> ModelConfig {
    let mut cfg = ModelConfig::new(Compression::F8, 128, SMOKE_JOINTS, [16, 32, 32]);
    cfg.base_channels = 8;
    cfg.res_blocks = 1;
    cfg
}

pub fn smoke_train() -> TrainConfig {
    let mut tc = TrainConfig::default();
    tc.adam.lr = 2e-3;
    tc.disc_start = 50;
    tc
}

/// A model small enough to train many times per test: F8 on 8×16×16 with
/// three joints.
pub fn tiny_model() -> ModelConfig {
    let mut cfg = ModelConfig::new(Compression::F8, 16, 3, [8, 16, 16]);
    cfg.base_channels = 4;
    cfg.res_blocks = 1;
    cfg.embed_dim = 8;
    cfg
}

pub fn tiny_data(n: usize) -> Dataset<f32> {
    let render = RenderConfig {
        mode: HeatmapMode::Planar,
        height: 16,
        width: 16,
        depth: 0,
        sigma: None,
        window_length: 8,
        window_stride: 8,
    };
    let windows: Vec<_> = (0..n)
        .map(|i| {
            let spec = SyntheticMotionSpec::new(3, 8, MotionFamily::RandomSmooth, i as u64, 16, 16);
            render.render(&synth_motion(&spec).unwrap()).unwrap()
        })
        .collect();
    Dataset::from_heatmaps(&windows).unwrap()
}

pub fn tiny_train() -> TrainConfig {
    let mut tc = TrainConfig::default();
    tc.adam.lr = 1e-3;
    tc.disc_start = 2;
    tc
}
