//! Training on synthetic clips: Charbonnier loss, bias-corrected Adam,
//! dihedral augmentation. Every randomness source is a seeded ChaCha8 stream,
//! so a (config, seed) pair reproduces the loss curve bit for bit. The data
//! stream depends only on the config, never on the model, which keeps A/B
//! comparisons between architectures on identical batches.

pub mod adam;
pub mod augment;
pub mod loss;
pub mod synth;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use augment::{apply_dihedral, augment_clip_pair, hflip, rot180, rot90, vflip};
pub use loss::{charbonnier, LossMode};
pub use synth::{
    bicubic_downsample, bicubic_upsample, estimate_displacement, gaussian_blur,
    generate_synth_clip, generate_synth_targets,
    sample_clip_spec, sample_texture_kind, stack_clips, stack_targets, SynthClipSpec, Texture,
    TextureKind, Track,
};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_bail, ensure_config, Result};
use crate::model::{accumulate_grads, EdvrNet, Forward};
use crate::tensor::{Elem, ParamStore, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Clips per optimizer step.
    pub batch: usize,
    /// Square input-frame patch size; must be divisible by the model's
    /// spatial multiple.
    pub patch: usize,
    pub iters: usize,
    pub charbonnier_eps: f64,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub track: Track,
    /// Max per-axis frame displacement in input pixels.
    pub motion: f64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 4e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch: 4,
            patch: 64,
            iters: 1000,
            charbonnier_eps: 1e-3,
            loss_mode: LossMode::PerElementMean,
            seed: 0,
            track: Track::CleanSr,
            motion: 3.0,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_config!(self.lr > 0.0, "lr must be positive");
        ensure_config!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "betas must lie in [0, 1)"
        );
        ensure_config!(self.adam_eps > 0.0, "adam_eps must be positive");
        ensure_config!(self.batch >= 1, "batch must be at least 1");
        ensure_config!(self.patch > 0 && self.patch % 4 == 0, "patch must be a positive multiple of 4");
        ensure_config!(self.iters >= 1, "iters must be at least 1");
        ensure_config!(self.charbonnier_eps > 0.0, "charbonnier_eps must be positive");
        ensure_config!(self.motion >= 0.0, "motion must be non-negative");
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

/// One progress record; rendered by the CLI as `iter loss lr elapsed_ms`.
#[derive(Clone, Copy, Debug)]
pub struct TrainLog {
    pub iter: usize,
    pub loss: f64,
    pub lr: f64,
    pub elapsed_ms: u128,
}

/// One optimizer step on an already-assembled batch. Returns the loss.
pub fn train_step<T: Elem>(
    net: &EdvrNet,
    store: &mut ParamStore<T>,
    state: &mut AdamState,
    hyper: &AdamHyper,
    clip: &Tensor<T>,
    target: &Tensor<T>,
    charbonnier_eps: f64,
    mode: LossMode,
) -> Result<f64> {
    store.zero_grads();
    let tape: Tape<T> = Tape::new();
    let x = tape.leaf(clip.clone());
    let (loss_val, used, grads) = {
        let fx = Forward::new(&tape, store);
        let (pred, _) = net.forward(&fx, x)?;
        let t = tape.leaf(target.clone());
        let loss = charbonnier(&tape, pred, t, charbonnier_eps, mode)?;
        let loss_val = tape.value(loss).data()[0].to_f64();
        let grads = tape.backward(loss)?;
        (loss_val, fx.used_params(), grads)
    };
    accumulate_grads(store, &used, &grads)?;
    adam_step(store, state, hyper)?;
    Ok(loss_val)
}

/// Draw one batch for this config: clips in frame-major layout plus the
/// stacked clean targets.
pub fn sample_batch<T: Elem>(
    net: &EdvrNet,
    cfg: &TrainConfig,
    data_rng: &mut ChaCha8Rng,
    aug_rng: &mut ChaCha8Rng,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut clips = Vec::with_capacity(cfg.batch);
    let mut targets = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let texture = sample_texture_kind(data_rng);
        let spec = sample_clip_spec(
            cfg.track,
            texture,
            net.config.n_frames,
            cfg.patch,
            cfg.motion,
            data_rng,
        );
        let clip_seed: u64 = data_rng.random();
        let (clip, target, _) = generate_synth_clip::<T>(&spec, clip_seed)?;
        let (clip, target) = if cfg.augment {
            augment_clip_pair(&clip, &target, aug_rng)?
        } else {
            (clip, target)
        };
        clips.push(clip);
        targets.push(target);
    }
    Ok((stack_clips(&clips)?, stack_targets(&targets)?))
}

/// Run the full loop. Returns the per-iteration losses; `on_log` sees every
/// iteration as it completes.
pub fn train<T: Elem>(
    net: &EdvrNet,
    store: &mut ParamStore<T>,
    cfg: &TrainConfig,
    mut on_log: impl FnMut(&TrainLog),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.track.downsample() != net.config.scale {
        config_bail!(
            "track {} produces x{} data but the model has scale {}",
            cfg.track,
            cfg.track.downsample(),
            net.config.scale
        );
    }
    let multiple = net.config.spatial_multiple();
    ensure_config!(
        cfg.patch % multiple == 0,
        "patch {} not divisible by the model's spatial multiple {multiple}",
        cfg.patch
    );
    let hyper = cfg.hyper();
    let mut state = AdamState::default();
    // Distinct streams so augmentation draws never perturb the data stream.
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a09_e667_f3bc_c908);
    let start = Instant::now();
    let mut losses = Vec::with_capacity(cfg.iters);
    for iter in 0..cfg.iters {
        let (clip, target) = sample_batch::<T>(net, cfg, &mut data_rng, &mut aug_rng)?;
        let loss = train_step(
            net,
            store,
            &mut state,
            &hyper,
            &clip,
            &target,
            cfg.charbonnier_eps,
            cfg.loss_mode,
        )?;
        losses.push(loss);
        on_log(&TrainLog { iter, loss, lr: cfg.lr, elapsed_ms: start.elapsed().as_millis() });
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlignKind, EdvrConfig, EdvrNet};

    fn tiny_config(scale: usize) -> EdvrConfig {
        EdvrConfig {
            n_frames: 3,
            channels: 4,
            extract_blocks: 1,
            recon_blocks: 1,
            scale,
            predeblur: false,
            hr_input: false,
            deform_groups: 1,
            align: AlignKind::Pcd,
            tsa: true,
            ..EdvrConfig::default()
        }
    }

    fn tiny_train(scale: usize, iters: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            batch: 1,
            patch: 8,
            iters,
            seed,
            track: if scale == 4 { Track::CleanSr } else { Track::CleanDeblur },
            motion: 1.0,
            lr: 2e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_curve_is_reproducible() {
        let mconf = tiny_config(4);
        let tconf = tiny_train(4, 3, 9);
        let run = || {
            let (mut store, net) = EdvrNet::build::<f32>(&mconf, 77).unwrap();
            train(&net, &mut store, &tconf, |_| {}).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn loss_decreases_on_a_short_deblur_run() {
        let mconf = tiny_config(1);
        let tconf = TrainConfig { iters: 30, motion: 0.5, ..tiny_train(1, 30, 4) };
        let (mut store, net) = EdvrNet::build::<f32>(&mconf, 5).unwrap();
        let losses = train(&net, &mut store, &tconf, |_| {}).unwrap();
        let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = losses[25..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "loss did not decrease: first {head:.5}, last {tail:.5}");
    }

    #[test]
    fn track_and_scale_must_agree() {
        let mconf = tiny_config(1);
        let (mut store, net) = EdvrNet::build::<f32>(&mconf, 1).unwrap();
        let tconf = TrainConfig { track: Track::CleanSr, ..tiny_train(1, 1, 0) };
        let err = train(&net, &mut store, &tconf, |_| {}).unwrap_err();
        assert!(err.to_string().contains("scale"), "{err}");
    }

    #[test]
    fn log_stream_matches_returned_losses() {
        let mconf = tiny_config(4);
        let tconf = tiny_train(4, 2, 3);
        let (mut store, net) = EdvrNet::build::<f32>(&mconf, 2).unwrap();
        let mut seen = Vec::new();
        let losses = train(&net, &mut store, &tconf, |l| seen.push((l.iter, l.loss))).unwrap();
        assert_eq!(seen.len(), losses.len());
        for (i, (it, loss)) in seen.iter().enumerate() {
            assert_eq!(*it, i);
            assert_eq!(*loss, losses[i]);
        }
    }
}
