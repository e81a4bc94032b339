use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use motok::heatmap::{HeatmapVolume, KeypointSequence};
use motok::metrics::{evaluate, write_csv, write_json};
use motok::model::{load_checkpoint, Checkpoint, ModelState};
use motok::quantizer::{read_tokens_all, write_tokens, TokenGrid};
use motok::tensor::io::{read_tensor, write_tensor, TENSOR_MAGIC};
use motok::trainer::{run_metadata, seed_from_env, synth_motion, Dataset, SyntheticMotionSpec, Trainer};
use motok::{Error, Result, Tensor};

use crate::config::RunConfig;
use crate::manifest::{beside, RunManifest};
use crate::{io_err, EvalArgs, PathArgs, RenderArgs, SynthArgs, TokenizeArgs, TrainArgs};

const FINAL_CHECKPOINT: &str = "checkpoint.mck";
const LOSS_LOG: &str = "loss.jsonl";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| io_err(path, e))
}

/// One sequence per `.jsonl` file; a directory contributes every such file
/// in name order.
fn load_keypoints(path: &Path) -> Result<Vec<KeypointSequence>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| {
            KeypointSequence::read_jsonl(open(f)?).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{}: {msg}", f.display())),
                other => other,
            })
        })
        .collect()
}

fn render_all(run: &RunConfig, seqs: &[KeypointSequence]) -> Result<Vec<HeatmapVolume>> {
    let mut windows = Vec::new();
    for kp in seqs {
        run.check_joints(kp.joints())?;
        windows.extend(run.render.render_windows(kp)?);
    }
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "no complete {}-frame window in the data",
            run.render.window_length
        )));
    }
    Ok(windows)
}

fn read_checkpoint(path: &Path) -> Result<(Checkpoint<f32>, RunConfig)> {
    let ckpt = load_checkpoint::<f32>(open(path)?)?;
    let meta = run_metadata(&ckpt);
    if meta.is_null() {
        return Err(Error::Format(format!(
            "{} carries no run settings; it was not written by `motok train`",
            path.display()
        )));
    }
    let run: RunConfig = serde_json::from_value(meta.clone())
        .map_err(|e| Error::Format(format!("{}: run settings: {e}", path.display())))?;
    Ok((ckpt, run))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("synth");
    let seed = match args.seed {
        Some(s) => s,
        None => seed_from_env(0)?,
    };
    let mut spec = SyntheticMotionSpec::new(
        args.joints,
        args.frames,
        args.family,
        seed,
        args.width,
        args.height,
    );
    spec.noise = args.noise;
    spec.depth = args.depth;
    let kp = synth_motion(&spec)?;
    let mut w = create(&args.out)?;
    kp.write_jsonl(&mut w)?;
    flush(w, &args.out)?;
    manifest.config = serde_json::to_value(&spec)?;
    manifest.seed = Some(seed);
    manifest.outputs.push(args.out.clone());
    manifest.write(started, &beside(&args.out))
}

pub fn render(args: RenderArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("render");
    let run = RunConfig::load(&args.config)?;
    let windows = render_all(&run, &load_keypoints(&args.input)?)?;
    let tensor = HeatmapVolume::stack::<f32>(&windows)?;
    let mut w = create(&args.out)?;
    write_tensor(&mut w, &tensor)?;
    flush(w, &args.out)?;
    println!("{} windows, shape {:?}", windows.len(), tensor.shape());
    manifest.config = serde_json::to_value(&run.render)?;
    manifest.inputs = vec![args.config, args.input];
    manifest.outputs.push(args.out.clone());
    manifest.write(started, &beside(&args.out))
}

pub fn train(args: TrainArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("train");
    let mut run = RunConfig::load(&args.config)?;
    let windows = render_all(&run, &load_keypoints(&args.data)?)?;
    let data = Dataset::<f32>::from_heatmaps(&windows)?;

    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint::<f32>(open(path)?)?;
            if ckpt.state.config != run.model {
                return Err(Error::Config(format!(
                    "model settings in {} differ from the checkpoint {}",
                    args.config.display(),
                    path.display()
                )));
            }
            run.seed = ckpt.state.seed;
            Trainer::from_checkpoint(ckpt, run.train.clone())?
        }
        None => {
            run.seed = seed_from_env(run.seed)?;
            Trainer::new(ModelState::build(run.model.clone(), run.seed)?, run.train.clone())?
        }
    };
    let run_value = serde_json::to_value(&run)?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let log_path = args.out.join(LOSS_LOG);
    let log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume.is_some())
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| io_err(&log_path, e))?;
    let mut log = BufWriter::new(log);

    let mut outputs = vec![log_path.clone()];
    let out_dir = args.out.clone();
    let result = trainer.train(&data, args.steps, |rec, t| {
        writeln!(log, "{}", rec.to_json_line())?;
        if t.checkpoint_due() {
            let path = out_dir.join(format!("checkpoint-{:06}.mck", t.state.step));
            let mut w = create(&path)?;
            t.save_with(&mut w, &run_value)?;
            flush(w, &path)?;
            outputs.push(path);
        }
        Ok(())
    });
    flush(log, &log_path)?;

    // the trainer is at its last good state even when a step failed
    let last = args.out.join(FINAL_CHECKPOINT);
    let mut w = create(&last)?;
    trainer.save_with(&mut w, &run_value)?;
    flush(w, &last)?;
    outputs.push(last);

    manifest.config = run_value;
    manifest.seed = Some(run.seed);
    manifest.inputs = vec![args.config, args.data];
    manifest.inputs.extend(args.resume);
    manifest.outputs = outputs;
    manifest.write(started, &args.out.join("manifest.json"))?;
    let log = result?;
    if let Some(r) = log.last() {
        println!("{}", r.to_json_line());
    }
    Ok(())
}

/// Model-ready windows from either keypoints or an `MHT1` heatmap tensor.
fn input_windows(run: &RunConfig, path: &Path) -> Result<Tensor<f32>> {
    let mut head = [0u8; 4];
    let n = open(path)?.read(&mut head).map_err(|e| io_err(path, e))?;
    if n == 4 && &head == TENSOR_MAGIC {
        Ok(read_tensor(open(path)?)?.into_real())
    } else {
        HeatmapVolume::stack(&render_all(run, &load_keypoints(path)?)?)
    }
}

fn sample(x: &Tensor<f32>, i: usize) -> Result<Tensor<f32>> {
    let shape = x.shape();
    let per: usize = shape[1..].iter().product();
    let mut one = shape.to_vec();
    one[0] = 1;
    Tensor::new(one, x.data()[i * per..(i + 1) * per].to_vec())
}

pub fn tokenize(args: TokenizeArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("tokenize");
    let (ckpt, run) = read_checkpoint(&args.ckpt)?;
    let state = ckpt.state;
    let x = input_windows(&run, &args.input)?;
    state.check_input(&x)?;
    let mut grids: Vec<TokenGrid> = Vec::with_capacity(x.shape()[0]);
    for i in 0..x.shape()[0] {
        grids.extend(state.encode(&sample(&x, i)?)?.grids);
    }
    let mut w = create(&args.out)?;
    for g in &grids {
        write_tokens(&mut w, g)?;
    }
    flush(w, &args.out)?;

    let voxels: usize = grids.len() * state.config.input_extents.iter().product::<usize>();
    let tokens: usize = grids.iter().map(|g| g.len()).sum();
    println!("{} windows, {tokens} tokens", grids.len());
    println!("compression factor: {}×", voxels / tokens);
    manifest.config = serde_json::to_value(&run)?;
    manifest.seed = Some(state.seed);
    manifest.inputs = vec![args.ckpt, args.input];
    manifest.outputs.push(args.out.clone());
    manifest.write(started, &beside(&args.out))
}

pub fn detokenize(args: PathArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("detokenize");
    let (ckpt, run) = read_checkpoint(&args.ckpt)?;
    let state = ckpt.state;
    let grids = read_tokens_all(open(&args.input)?)?;
    if grids.is_empty() {
        return Err(Error::Data(format!("{} holds no token grids", args.input.display())));
    }
    let mut shape = Vec::new();
    let mut data = Vec::new();
    for g in &grids {
        let x = state.decode(std::slice::from_ref(g))?;
        shape = x.shape().to_vec();
        data.extend_from_slice(x.data());
    }
    shape[0] = grids.len();
    let mut w = create(&args.out)?;
    write_tensor(&mut w, &Tensor::new(shape, data)?)?;
    flush(w, &args.out)?;
    manifest.config = serde_json::to_value(&run)?;
    manifest.seed = Some(state.seed);
    manifest.inputs = vec![args.ckpt, args.input];
    manifest.outputs.push(args.out.clone());
    manifest.write(started, &beside(&args.out))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (mut manifest, started) = RunManifest::new("eval");
    let (ckpt, run) = read_checkpoint(&args.ckpt)?;
    let windows = render_all(&run, &load_keypoints(&args.data)?)?;
    let report = evaluate(&ckpt.state, &windows, &args.tag)?;
    let mut w = create(&args.out)?;
    write_csv(&mut w, std::slice::from_ref(&report))?;
    flush(w, &args.out)?;
    let json = args.out.with_extension("json");
    let mut w = create(&json)?;
    write_json(&mut w, std::slice::from_ref(&report))?;
    flush(w, &json)?;
    println!(
        "ssim {:.4}  psnr {:.2}  l1 {:.5}  tstd {:.3e}  qloss {:.5}",
        report.ssim,
        report.psnr,
        report.l1,
        report.tstd,
        report.qloss.unwrap_or(f64::NAN)
    );
    manifest.config = serde_json::to_value(&run)?;
    manifest.seed = Some(ckpt.state.seed);
    manifest.inputs = vec![args.ckpt, args.data];
    manifest.outputs = vec![args.out.clone(), json];
    manifest.write(started, &beside(&args.out))
}
