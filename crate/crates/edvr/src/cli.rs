//! The `edvr` command line: train, infer, eval, gradcheck, synth.
//!
//! Exit codes: 0 success, 1 runtime/I-O failure (single-line diagnostic on
//! stderr), 2 usage errors (clap). Training progress goes to stderr because
//! it carries wall-clock times; everything written to stdout or disk is
//! byte-reproducible for a fixed seed and fixed inputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{EdvrError, Result};
use crate::eval::{
    gather_window, infer_sequence, restore_window_with_diagnostics, two_stage_infer,
    window_indices, EvalMode, MetricReport,
};
use crate::gradcheck;
use crate::io::{
    list_frames, load_checkpoint, parse_run_config, parse_synth_spec, read_frame, read_frames_dir,
    save_checkpoint, write_frames_dir, write_gray,
};
use crate::model::{verify_params_match, EdvrConfig, EdvrNet};
use crate::tensor::{Elem, ParamStore, Tensor};
use crate::train::{generate_synth_clip, generate_synth_targets, train};

#[derive(Parser)]
#[command(name = "edvr", about = "Multi-frame video restoration", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a key=value config file and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a directory of frame_%08d.png files.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Average the four flip/rotation self-ensemble passes.
        #[arg(long)]
        ensemble: bool,
        /// Refine with a second-stage checkpoint (scale 1, hr_input).
        #[arg(long = "two-stage", value_name = "CKPT2")]
        two_stage: Option<PathBuf>,
        /// Write temporal-attention and offset-magnitude maps here.
        #[arg(long = "dump-diagnostics", value_name = "DIR")]
        dump_diagnostics: Option<PathBuf>,
    },
    /// Score restored frames against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_parser = ["y", "rgb"], default_value = "y")]
        mode: String,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a synthetic clip (inputs plus ground truth) from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { config, out } => cmd_train(&config, &out),
        Command::Infer { ckpt, frames, out, ensemble, two_stage, dump_diagnostics } => {
            cmd_infer(&ckpt, &frames, &out, ensemble, two_stage.as_deref(), dump_diagnostics.as_deref())
        }
        Command::Eval { pred, gt, mode } => cmd_eval(&pred, &gt, &mode),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
    }
}

fn cmd_train(config_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let cfg = parse_run_config(&text)?;
    let (mut store, net) = EdvrNet::build::<f32>(&cfg.model, cfg.train.seed)?;
    let losses = train(&net, &mut store, &cfg.train, |log| {
        eprintln!("{} {:.6} {} {}", log.iter, log.loss, log.lr, log.elapsed_ms);
    })?;
    save_checkpoint(out, &store)?;
    println!(
        "saved {} ({} tensors, {} values, final loss {:.6})",
        out.display(),
        store.len(),
        store.numel(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(EdvrNet, ParamStore<f32>)> {
    let loaded = load_checkpoint(path)?;
    let config = EdvrConfig::infer_from_params(&loaded)?;
    let (built, net) = EdvrNet::build::<f32>(&config, 0)?;
    verify_params_match(&built, &loaded)?;
    Ok((net, loaded))
}

fn cmd_infer(
    ckpt: &Path,
    frames_dir: &Path,
    out: &Path,
    ensemble: bool,
    two_stage: Option<&Path>,
    dump: Option<&Path>,
) -> Result<()> {
    let (net, store) = load_model(ckpt)?;
    let frames = read_frames_dir::<f32>(frames_dir)?;
    let outputs = match two_stage {
        Some(second) => {
            let (net2, store2) = load_model(second)?;
            two_stage_infer((&net, &store), (&net2, &store2), &frames, ensemble)?
        }
        None => infer_sequence(&net, &store, &frames, ensemble)?,
    };
    write_frames_dir(out, &outputs)?;
    if let Some(dir) = dump {
        dump_diagnostics(&net, &store, &frames, dir)?;
    }
    println!("wrote {} frame(s) to {}", outputs.len(), out.display());
    Ok(())
}

/// Lay F single-channel maps side by side as one (1, 1, h, F*w) strip.
fn tile_maps<T: Elem>(maps: &Tensor<T>) -> Tensor<T> {
    let [f, _, h, w] = maps.dims();
    Tensor::from_fn([1, 1, h, f * w], |_, _, y, x| maps.at(x / w, 0, y, x % w))
}

/// Second pass over the sequence that extracts, per output frame, the
/// temporal-attention maps and the mean level-1 offset magnitude of every
/// window frame, tiled into one grayscale strip each. Offset magnitudes are
/// shown on a fixed 0..8 px scale.
fn dump_diagnostics(
    net: &EdvrNet,
    store: &ParamStore<f32>,
    frames: &[Tensor<f32>],
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for i in 0..frames.len() {
        let window = gather_window(frames, &window_indices(i, frames.len(), net.config.n_frames))?;
        let (_, diag) = restore_window_with_diagnostics(net, store, &window)?;
        if let Some(att) = diag.attention {
            write_gray(&dir.join(format!("attn_{i:08}.png")), &tile_maps(&att))?;
        }
        let off = diag.l1_offsets;
        let [f, c2, h, w] = off.dims();
        let pairs = c2 / 2;
        let mag = Tensor::from_fn([f, 1, h, w], |b, _, y, x| {
            let mut acc = 0.0f64;
            for j in 0..pairs {
                let dy = off.at(b, 2 * j, y, x).to_f64();
                let dx = off.at(b, 2 * j + 1, y, x).to_f64();
                acc += (dy * dy + dx * dx).sqrt();
            }
            (acc / pairs as f64 / 8.0) as f32
        });
        write_gray(&dir.join(format!("offmag_{i:08}.png")), &tile_maps(&mag))?;
    }
    Ok(())
}

fn cmd_eval(pred_dir: &Path, gt_dir: &Path, mode: &str) -> Result<()> {
    let mode: EvalMode = mode.parse()?;
    let pred_paths = list_frames(pred_dir)?;
    let gt_paths = list_frames(gt_dir)?;
    if pred_paths.len() != gt_paths.len() {
        return Err(EdvrError::Frames(format!(
            "{} prediction frame(s) vs {} ground-truth frame(s)",
            pred_paths.len(),
            gt_paths.len()
        )));
    }
    let mut pairs = Vec::with_capacity(pred_paths.len());
    for (p, g) in pred_paths.iter().zip(&gt_paths) {
        let name = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("frame")
            .to_string();
        pairs.push((name, read_frame::<f64>(p)?, read_frame::<f64>(g)?));
    }
    let report = MetricReport::from_pairs(&pairs, mode)?;
    println!("{report}");
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let results = gradcheck::run_all(seed)?;
    println!("{}", gradcheck::format_report(&results));
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(EdvrError::Numeric(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}

fn cmd_synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec = parse_synth_spec(&text)?;
    let (clip, _, _) = generate_synth_clip::<f32>(&spec.clip, spec.seed)?;
    let targets = generate_synth_targets::<f32>(&spec.clip, spec.seed)?;
    let split = |t: &Tensor<f32>| -> Result<Vec<Tensor<f32>>> {
        let [f, c, h, w] = t.dims();
        let row = c * h * w;
        (0..f)
            .map(|i| Tensor::new([1, c, h, w], t.data()[i * row..(i + 1) * row].to_vec()))
            .collect()
    };
    write_frames_dir(&out.join("input"), &split(&clip)?)?;
    write_frames_dir(&out.join("gt"), &split(&targets)?)?;
    let [f, _, h, w] = clip.dims();
    let [_, _, th, tw] = targets.dims();
    println!(
        "wrote {f} input frame(s) ({w}x{h}) and {f} target(s) ({tw}x{th}) to {}",
        out.display()
    );
    Ok(())
}
