//! End-to-end acceptance run: one line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::checks::{self, Check};
use common::*;
use indexmap::IndexMap;
use motok::heatmap::{HeatmapVolume, KeypointSequence, Layout};
use motok::losses::LossBreakdown;
use motok::metrics::{psnr_from_mse, tstd};
use motok::model::{load_checkpoint, save_checkpoint, Compression, ModelConfig, ModelState};
use motok::quantizer::{read_tokens_all, write_tokens, TokenGrid};
use motok::tensor::io::{read_tensor, write_tensor, AnyTensor};
use motok::trainer::{Dataset, Trainer};
use motok::Tensor;

const GRAD_BUDGET: Duration = Duration::from_secs(120);
const SMOKE_BUDGET: Duration = Duration::from_secs(600);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct SmokeRun {
    log: Vec<LossBreakdown>,
    trainer: Trainer<f32>,
    elapsed: Duration,
}

fn smoke_run(data: &Dataset<f32>) -> SmokeRun {
    let state = ModelState::build(smoke_model(), 0).unwrap();
    let mut trainer = Trainer::new(state, smoke_train()).unwrap();
    let start = Instant::now();
    let log = trainer.train(data, SMOKE_STEPS, |_, _| Ok(())).unwrap();
    SmokeRun { log, trainer, elapsed: start.elapsed() }
}

fn lines(log: &[LossBreakdown]) -> Vec<String> {
    log.iter().map(|r| r.to_json_line()).collect()
}

fn gradients() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let cases = common::grad::cases();
    for case in &cases {
        let err = common::grad::worst(case);
        ensure!(err < case.tol, "{}: relative error {err:e} >= {:e}", case.name, case.tol);
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < GRAD_BUDGET, "took {elapsed:?}");
    Ok(format!(
        "{} ops × {} seeds, max relative error {worst:.1e}, {:.1}s",
        cases.len(),
        common::grad::SEEDS,
        elapsed.as_secs_f64()
    ))
}

fn quantizer() -> Check {
    let nearest = checks::quantizer_nearest(1000, &[128, 256, 512, 1024])?;
    for seed in 0..20 {
        checks::quantizer_routing(seed)?;
    }
    Ok(format!("{nearest}; stop-gradient routing exact on 20 seeds"))
}

fn compression() -> Check {
    let expected = [
        (Compression::F8, [8, 16, 16], 512),
        (Compression::F16, [4, 8, 8], 4096),
        (Compression::F32, [2, 4, 4], 32768),
    ];
    for (c, lattice, factor) in expected {
        let cfg = ModelConfig::new(c, 512, 19, [64, 128, 128]);
        cfg.validate().map_err(|e| e.to_string())?;
        ensure!(cfg.latent_extents() == lattice, "{c}: lattice {:?}", cfg.latent_extents());
        ensure!(cfg.compression_ratio() == factor, "{c}: factor {}", cfg.compression_ratio());
    }
    Ok("8×16×16 / 4×8×8 / 2×4×4 at 512× / 4096× / 32768×".into())
}

fn metrics() -> Check {
    let oracle = checks::metrics_vs_references(100)?;
    let layout = Layout::Planar { frames: 4, channels: 3, height: 10, width: 12 };
    let frame = random_volume(layout.with_frames(1), 0, "frame");
    let values = frame.values().iter().cycle().take(layout.numel()).cloned().collect();
    let stat = HeatmapVolume::new(layout, values, 1.0).unwrap();
    ensure!(tstd(&stat) == 0.0, "tstd(static) = {}", tstd(&stat));
    let sweep: Vec<f64> = (1..=200).map(|k| psnr_from_mse(k as f64 * 5e-3, 1.0)).collect();
    ensure!(sweep.windows(2).all(|w| w[1] < w[0]), "psnr not strictly decreasing in MSE");
    Ok(format!("{oracle}; ssim(x,x)=1, tstd(static)=0, psnr monotone"))
}

fn training(first: &SmokeRun, second: &SmokeRun) -> Check {
    let (l0, ln) = (first.log[0].rec_l1, first.log.last().unwrap().rec_l1);
    ensure!(first.log.iter().all(|r| r.is_finite()), "non-finite loss");
    ensure!(first.trainer.state.first_non_finite().is_none(), "non-finite parameter");
    ensure!(ln <= 0.5 * l0, "rec L1 {l0:.4} -> {ln:.4}");
    ensure!(first.elapsed < SMOKE_BUDGET, "took {:?}", first.elapsed);
    ensure!(lines(&first.log) == lines(&second.log), "loss logs differ between identical runs");
    Ok(format!(
        "rec L1 {l0:.4} -> {ln:.4} ({:.1}% drop), {:.0}s per run, logs bit-identical",
        100.0 * (1.0 - ln / l0),
        first.elapsed.as_secs_f64()
    ))
}

fn ablation(data: &Dataset<f32>, smoke: &SmokeRun) -> Check {
    let run = |discriminator: bool| {
        let mut cfg = smoke_model();
        cfg.lambda_adv = 0.0;
        cfg.discriminator = discriminator;
        let mut tc = smoke_train();
        tc.disc_start = 0;
        let mut t = Trainer::new(ModelState::build(cfg, 0).unwrap(), tc).unwrap();
        let log = t.train(data, 20, |_, _| Ok(())).unwrap();
        (lines(&log), t.state)
    };
    let (log_a, a) = run(true);
    let (log_b, b) = run(false);
    ensure!(log_a == log_b, "λ=0 loss log differs from the discriminator-free run");
    ensure!(
        a.encoder == b.encoder && a.decoder == b.decoder && a.codebook == b.codebook,
        "λ=0 parameters differ from the discriminator-free run"
    );

    let state = &smoke.trainer.state;
    let x = data.tensor();
    let x_hat = state.reconstruct(x).map_err(|e| e.to_string())?;
    let mean = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).sum::<f64>() / t.numel() as f64;
    let real = mean(&state.discriminate(x).map_err(|e| e.to_string())?);
    let fake = mean(&state.discriminate(&x_hat).map_err(|e| e.to_string())?);
    ensure!(real - fake > 0.0, "margin {:.4}", real - fake);
    Ok(format!(
        "λ=0 bit-identical to no discriminator over 20 steps; λ=0.1 margin {:.4}",
        real - fake
    ))
}

fn round_trips(data: &Dataset<f32>, smoke: &SmokeRun) -> Check {
    // resume across the adversarial warm-up boundary
    let tiny = tiny_data(5);
    let mut straight = Trainer::<f32>::new(ModelState::build(tiny_model(), 1).unwrap(), tiny_train()).unwrap();
    let mut split = straight.clone();
    let full = straight.train(&tiny, 6, |_, _| Ok(())).unwrap();
    let mut log = split.train(&tiny, 3, |_, _| Ok(())).unwrap();
    let mut buf = Vec::new();
    split.save(&mut buf).map_err(|e| e.to_string())?;
    let mut split = Trainer::<f32>::load(&buf[..], Default::default()).map_err(|e| e.to_string())?;
    log.extend(split.train(&tiny, 3, |_, _| Ok(())).unwrap());
    ensure!(lines(&full) == lines(&log), "resumed loss log differs");
    ensure!(split.state == straight.state, "resumed parameters differ");

    // binary formats
    let t64 = uniform(&[2, 3, 4], -1e3, 1e3, 0, "t");
    let t32: Tensor<f32> = t64.cast();
    let mut buf = Vec::new();
    write_tensor(&mut buf, &t64).unwrap();
    write_tensor(&mut buf, &t32).unwrap();
    let mut cur = &buf[..];
    ensure!(read_tensor(&mut cur).unwrap() == AnyTensor::F64(t64), "f64 tensor changed");
    ensure!(read_tensor(&mut cur).unwrap() == AnyTensor::F32(t32), "f32 tensor changed");
    let grids = vec![
        TokenGrid::new([1, 2, 2], 128, vec![0, 5, 127, 9]).unwrap(),
        TokenGrid::new([2, 1, 1], 1024, vec![1023, 3]).unwrap(),
    ];
    let mut buf = Vec::new();
    grids.iter().for_each(|g| write_tokens(&mut buf, g).unwrap());
    ensure!(read_tokens_all(&buf[..]).unwrap() == grids, "token stream changed");
    let state = &smoke.trainer.state;
    let mut buf = Vec::new();
    save_checkpoint(&mut buf, state, &IndexMap::new(), &serde_json::Value::Null).unwrap();
    ensure!(load_checkpoint::<f32>(&buf[..]).unwrap().state == *state, "checkpoint changed");
    let kp = random_keypoints(5, 4, 3, 10.0, 0);
    let mut buf = Vec::new();
    kp.write_jsonl(&mut buf).unwrap();
    ensure!(KeypointSequence::read_jsonl(&buf[..]).unwrap() == kp, "keypoints changed");

    // tokenize → detokenize → tokenize on the smoke-trained model
    let tok = state.encode(data.tensor()).map_err(|e| e.to_string())?.grids;
    let again = state
        .encode(&state.decode(&tok).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        .grids;
    let total: usize = tok.iter().map(|g| g.len()).sum();
    let same: usize = tok
        .iter()
        .zip(&again)
        .map(|(a, b)| a.indices().iter().zip(b.indices()).filter(|(x, y)| x == y).count())
        .sum();
    ensure!(
        same == total,
        "resume and formats exact, but tokenize∘detokenize∘tokenize kept only {same}/{total} tokens"
    );
    Ok("resume bit-exact; MHT1/MTK1/MCK1/JSONL exact; token fixed point".into())
}

fn heatmaps() -> Check {
    let pointwise = checks::heatmap_pointwise(20)?;
    let tri = checks::triplane_exhaustive(10)?;
    Ok(format!("{pointwise}; {tri}"))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let data = Dataset::<f32>::from_heatmaps(&smoke_windows()).unwrap();
    let first = smoke_run(&data);
    let second = smoke_run(&data);

    let results: Vec<(&str, Check)> = vec![
        ("gradient correctness", guarded(gradients)),
        ("quantizer oracle", guarded(quantizer)),
        ("compression arithmetic", guarded(compression)),
        ("metric oracles", guarded(metrics)),
        ("training smoke", guarded(|| training(&first, &second))),
        ("adversarial ablation", guarded(|| ablation(&data, &first))),
        ("round trips", guarded(|| round_trips(&data, &first))),
        ("heatmap fidelity", guarded(heatmaps)),
    ];
    let mut failed = 0;
    for (i, (name, result)) in results.iter().enumerate() {
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
