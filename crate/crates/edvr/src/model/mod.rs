//! The EDVR network: shared feature extraction, optional PreDeblur, pyramid
//! alignment, attention fusion, reconstruction, and the residual upsampling
//! head.
//!
//! Clips are frame-major throughout: a batch of B clips with F frames each is
//! one (F*B, C, H, W) tensor whose row f*B + b is frame f of clip b. The
//! reference frame sits at f = F/2.

pub mod layers;
pub mod pcd;
pub mod tsa;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use layers::{accumulate_grads, Conv2dLayer, Forward, Init, ResidualBlock, LEAKY_SLOPE};
pub use pcd::{DconvStack, OffsetHead, PcdBlock};
pub use tsa::{PlainFusion, TsaBlock};

use layers::{apply_residual_chain, register_residual_chain};

use crate::error::{config_bail, ensure_config, ensure_shape, shape_bail, Result};
use crate::tensor::{fmt_dims, ops, ConvSpec, Elem, ParamStore, Var};

/// Which alignment module the network uses. `Dconv` is the ablation baseline:
/// a single deformable conv at full resolution, no pyramid, no cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignKind {
    Pcd,
    Dconv,
}

impl std::fmt::Display for AlignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlignKind::Pcd => "pcd",
            AlignKind::Dconv => "dconv",
        })
    }
}

impl std::str::FromStr for AlignKind {
    type Err = crate::EdvrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcd" => Ok(AlignKind::Pcd),
            "dconv" => Ok(AlignKind::Dconv),
            other => Err(crate::EdvrError::Config(format!(
                "unknown align kind `{other}` (expected pcd or dconv)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdvrConfig {
    /// Window size 2N+1; the center frame is restored.
    pub n_frames: usize,
    /// Feature channels C everywhere in the trunk.
    pub channels: usize,
    /// Pyramid depth; the alignment design is committed to 3.
    pub pyramid_levels: usize,
    /// Residual blocks in the shared per-frame extractor.
    pub extract_blocks: usize,
    /// Residual blocks in the reconstruction trunk.
    pub recon_blocks: usize,
    /// Output scale: 4 for SR, 1 for restoration at input size.
    pub scale: usize,
    /// Insert the PreDeblur feature-cleaning block before alignment.
    pub predeblur: bool,
    /// Inputs are already high-resolution (deblur-style tasks): downsample
    /// 2x2 internally and pixel-shuffle back up at the end.
    pub hr_input: bool,
    /// Deformable groups G.
    pub deform_groups: usize,
    pub align: AlignKind,
    /// Temporal-spatial attention fusion; plain 1x1 fusion when false.
    pub tsa: bool,
}

impl Default for EdvrConfig {
    fn default() -> Self {
        Self {
            n_frames: 5,
            channels: 32,
            pyramid_levels: 3,
            extract_blocks: 5,
            recon_blocks: 10,
            scale: 4,
            predeblur: false,
            hr_input: false,
            deform_groups: 1,
            align: AlignKind::Pcd,
            tsa: true,
        }
    }
}

impl EdvrConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_config!(
            self.n_frames >= 3 && self.n_frames % 2 == 1,
            "n_frames must be odd and >= 3, got {}",
            self.n_frames
        );
        ensure_config!(self.pyramid_levels == 3, "pyramid_levels is fixed at 3");
        ensure_config!(self.channels > 0, "channels must be positive");
        ensure_config!(self.extract_blocks > 0, "extract_blocks must be positive");
        ensure_config!(self.recon_blocks > 0, "recon_blocks must be positive");
        ensure_config!(
            self.scale == 1 || self.scale == 4,
            "scale must be 1 or 4, got {}",
            self.scale
        );
        if self.hr_input && self.scale != 1 {
            config_bail!("hr_input implies scale 1 (output size equals input size)");
        }
        ensure_config!(self.deform_groups > 0, "deform_groups must be positive");
        ensure_config!(
            self.channels % self.deform_groups == 0,
            "channels {} not divisible by deform_groups {}",
            self.channels,
            self.deform_groups
        );
        Ok(())
    }

    /// Input H and W must be multiples of this (pyramid divisibility; the
    /// hr_input path downsamples 2x2 before the pyramid).
    pub fn spatial_multiple(&self) -> usize {
        if self.hr_input {
            16
        } else {
            4
        }
    }

    /// Whether the tail upsamples by 4 with pixel-shuffle stages (SR, or
    /// recovering the internal 2x2 downsampling of hr_input).
    fn upsample_tail(&self) -> bool {
        self.scale == 4 || self.hr_input
    }

    /// Recover the architecture from a parameter set (checkpoints store no
    /// explicit config). Shapes and name presence pin every field.
    pub fn infer_from_params<T: Elem>(store: &ParamStore<T>) -> Result<Self> {
        let channels = store.get("conv_first.weight")?.value.dims()[0];
        let (tsa, fuse_name) = if store.contains("tsa.fuse.weight") {
            (true, "tsa.fuse.weight")
        } else {
            (false, "fusion.fuse.weight")
        };
        let fuse_in = store.get(fuse_name)?.value.dims()[1];
        ensure_config!(
            channels > 0 && fuse_in % channels == 0,
            "fusion width {fuse_in} is not a multiple of channels {channels}"
        );
        let n_frames = fuse_in / channels;
        let (align, head_name) = if store.contains("pcd.l1.off.head.weight") {
            (AlignKind::Pcd, "pcd.l1.off.head.weight")
        } else {
            (AlignKind::Dconv, "dconv.s0.off.head.weight")
        };
        let head_out = store.get(head_name)?.value.dims()[0];
        ensure_config!(
            head_out % 27 == 0,
            "offset head emits {head_out} channels, not a multiple of 27"
        );
        let deform_groups = head_out / 27;
        let count_blocks = |prefix: &str| {
            let mut n = 0;
            while store.contains(&format!("{prefix}.rb{n}.conv1.weight")) {
                n += 1;
            }
            n
        };
        let hr_input = store.contains("hr_down.0.weight");
        let scale = if store.contains("up1.weight") && !hr_input { 4 } else { 1 };
        let config = Self {
            n_frames,
            channels,
            pyramid_levels: 3,
            extract_blocks: count_blocks("extract"),
            recon_blocks: count_blocks("recon"),
            scale,
            predeblur: store.contains("predeblur.down.weight"),
            hr_input,
            deform_groups,
            align,
            tsa,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Per-frame features at three resolutions, level l downsampled 2^(l-1)x.
/// Channel count is constant across levels.
pub struct FeaturePyramid {
    pub levels: Vec<Var>,
}

/// Stride-2 + refine conv pairs producing pyramid levels 2 and 3.
pub struct PyramidConvs {
    l2_down: Conv2dLayer,
    l2_refine: Conv2dLayer,
    l3_down: Conv2dLayer,
    l3_refine: Conv2dLayer,
}

impl PyramidConvs {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
    ) -> Result<Self> {
        let c = channels;
        let k = Init::Kaiming { scale: 1.0 };
        let conv = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, spec| {
            Conv2dLayer::register(store, rng, name, spec, k)
        };
        Ok(Self {
            l2_down: conv(store, rng, "pyr.l2.down", ConvSpec::new(c, c, 3).with_stride(2))?,
            l2_refine: conv(store, rng, "pyr.l2.refine", ConvSpec::new(c, c, 3))?,
            l3_down: conv(store, rng, "pyr.l3.down", ConvSpec::new(c, c, 3).with_stride(2))?,
            l3_refine: conv(store, rng, "pyr.l3.refine", ConvSpec::new(c, c, 3))?,
        })
    }

    /// Build the 3-level pyramid from level-1 features.
    pub fn apply<T: Elem>(&self, fx: &Forward<T>, feats: Var) -> Result<FeaturePyramid> {
        let [_, _, h, w] = fx.tape.value(feats).dims();
        if h % 4 != 0 || w % 4 != 0 {
            shape_bail!("pyramid input {h}x{w} not divisible by 4; pad upstream");
        }
        let l2 = self.l2_refine.apply_lrelu(fx, self.l2_down.apply_lrelu(fx, feats)?)?;
        let l3 = self.l3_refine.apply_lrelu(fx, self.l3_down.apply_lrelu(fx, l2)?)?;
        Ok(FeaturePyramid { levels: vec![feats, l2, l3] })
    }
}

/// Feature-cleaning block for blurry inputs: a 2-level pyramid with residual
/// blocks, C channels in and out at unchanged resolution.
pub struct PredeblurBlock {
    down: Conv2dLayer,
    rb_l2: ResidualBlock,
    rb_l1a: ResidualBlock,
    rb_l1b: ResidualBlock,
}

impl PredeblurBlock {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
    ) -> Result<Self> {
        let c = channels;
        Ok(Self {
            down: Conv2dLayer::register(
                store,
                rng,
                "predeblur.down",
                ConvSpec::new(c, c, 3).with_stride(2),
                Init::Kaiming { scale: 1.0 },
            )?,
            rb_l2: ResidualBlock::register(store, rng, "predeblur.rb_l2", c)?,
            rb_l1a: ResidualBlock::register(store, rng, "predeblur.rb_l1a", c)?,
            rb_l1b: ResidualBlock::register(store, rng, "predeblur.rb_l1b", c)?,
        })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, feats: Var) -> Result<Var> {
        let tape = fx.tape;
        let l2 = self.rb_l2.apply(fx, self.down.apply_lrelu(fx, feats)?)?;
        let merged = ops::add(tape, self.rb_l1a.apply(fx, feats)?, ops::bilinear_resize(tape, l2, 2)?)?;
        self.rb_l1b.apply(fx, merged)
    }
}

enum AlignModule {
    Pcd(PcdBlock),
    Dconv(DconvStack),
}

enum FusionModule {
    Tsa(TsaBlock),
    Plain(PlainFusion),
}

/// Extra tensors surfaced by a forward pass for diagnostics and tests.
pub struct Diagnostics {
    pub frames: usize,
    pub batch: usize,
    /// Aligned level-1 features, frame-major (F*B, C, h, w).
    pub aligned: Var,
    /// Temporal-attention maps (F*B, 1, h, w); None for plain fusion.
    pub attention: Option<Var>,
    /// Level-1 offsets from the alignment module (F*B, 2*K*G, h, w).
    pub l1_offsets: Var,
}

/// The assembled network. Holds layer wiring and parameter names; values live
/// in the [`ParamStore`].
pub struct EdvrNet {
    pub config: EdvrConfig,
    conv_first: Conv2dLayer,
    hr_down: Option<(Conv2dLayer, Conv2dLayer)>,
    extract: Vec<ResidualBlock>,
    predeblur: Option<PredeblurBlock>,
    pyramid: PyramidConvs,
    align: AlignModule,
    fusion: FusionModule,
    recon: Vec<ResidualBlock>,
    up: Option<(Conv2dLayer, Conv2dLayer)>,
    conv_hr: Conv2dLayer,
    conv_last: Conv2dLayer,
}

impl EdvrNet {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        config: &EdvrConfig,
    ) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let k = Init::Kaiming { scale: 1.0 };
        let conv_first =
            Conv2dLayer::register(store, rng, "conv_first", ConvSpec::new(3, c, 3), k)?;
        let hr_down = if config.hr_input {
            let d0 = Conv2dLayer::register(
                store,
                rng,
                "hr_down.0",
                ConvSpec::new(c, c, 3).with_stride(2),
                k,
            )?;
            let d1 = Conv2dLayer::register(
                store,
                rng,
                "hr_down.1",
                ConvSpec::new(c, c, 3).with_stride(2),
                k,
            )?;
            Some((d0, d1))
        } else {
            None
        };
        let extract = register_residual_chain(store, rng, "extract", c, config.extract_blocks)?;
        let predeblur = if config.predeblur {
            Some(PredeblurBlock::register(store, rng, c)?)
        } else {
            None
        };
        let pyramid = PyramidConvs::register(store, rng, c)?;
        let align = match config.align {
            AlignKind::Pcd => AlignModule::Pcd(PcdBlock::register(store, rng, c, config.deform_groups)?),
            AlignKind::Dconv => {
                AlignModule::Dconv(DconvStack::register(store, rng, c, config.deform_groups, 1)?)
            }
        };
        let fusion = if config.tsa {
            FusionModule::Tsa(TsaBlock::register(store, rng, c, config.n_frames)?)
        } else {
            FusionModule::Plain(PlainFusion::register(store, rng, c, config.n_frames)?)
        };
        let recon = register_residual_chain(store, rng, "recon", c, config.recon_blocks)?;
        let up = if config.upsample_tail() {
            let u1 = Conv2dLayer::register(store, rng, "up1", ConvSpec::new(c, 4 * c, 3), k)?;
            let u2 = Conv2dLayer::register(store, rng, "up2", ConvSpec::new(c, 4 * c, 3), k)?;
            Some((u1, u2))
        } else {
            None
        };
        let conv_hr = Conv2dLayer::register(store, rng, "conv_hr", ConvSpec::new(c, c, 3), k)?;
        let conv_last = Conv2dLayer::register(
            store,
            rng,
            "conv_last",
            ConvSpec::new(c, 3, 3),
            Init::Kaiming { scale: 0.1 },
        )?;
        Ok(Self {
            config: config.clone(),
            conv_first,
            hr_down,
            extract,
            predeblur,
            pyramid,
            align,
            fusion,
            recon,
            up,
            conv_hr,
            conv_last,
        })
    }

    /// Fresh store + net with seed-deterministic initialization.
    pub fn build<T: Elem>(config: &EdvrConfig, seed: u64) -> Result<(ParamStore<T>, Self)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Self::register(&mut store, &mut rng, config)?;
        Ok((store, net))
    }

    /// Restore the center frame of each clip. `clip` is frame-major
    /// (F*B, 3, H, W); returns (B, 3, scale*H, scale*W) plus diagnostics.
    pub fn forward<T: Elem>(&self, fx: &Forward<T>, clip: Var) -> Result<(Var, Diagnostics)> {
        let tape = fx.tape;
        let dims = tape.value(clip).dims();
        let f = self.config.n_frames;
        ensure_shape!(
            dims[0] % f == 0 && dims[0] > 0,
            "clip stack {} rows not a multiple of n_frames {f}",
            dims[0]
        );
        let batch = dims[0] / f;
        ensure_shape!(dims[1] == 3, "clip must be RGB, got {} channels", dims[1]);
        let m = self.config.spatial_multiple();
        if dims[2] % m != 0 || dims[3] % m != 0 {
            shape_bail!(
                "clip {} needs spatial dims divisible by {m}; pad upstream",
                fmt_dims(&dims)
            );
        }
        let center = f / 2;

        // Shared per-frame extraction.
        let mut feat = self.conv_first.apply_lrelu(fx, clip)?;
        if let Some((d0, d1)) = &self.hr_down {
            feat = d1.apply_lrelu(fx, d0.apply_lrelu(fx, feat)?)?;
        }
        feat = apply_residual_chain(&self.extract, fx, feat)?;
        if let Some(pd) = &self.predeblur {
            feat = pd.apply(fx, feat)?;
        }

        // Align every frame (reference included) onto the reference.
        let pyr = self.pyramid.apply(fx, feat)?;
        let tile_ref = |v: Var| -> Result<Var> {
            let r = ops::slice_batch(tape, v, center * batch, (center + 1) * batch)?;
            ops::concat_batch(tape, &vec![r; f])
        };
        let (aligned, l1_offsets) = match &self.align {
            AlignModule::Pcd(block) => {
                let ref_pyr = FeaturePyramid {
                    levels: pyr.levels.iter().map(|&v| tile_ref(v)).collect::<Result<_>>()?,
                };
                block.align(fx, &pyr, &ref_pyr)?
            }
            AlignModule::Dconv(stack) => {
                stack.align(fx, pyr.levels[0], tile_ref(pyr.levels[0])?)?
            }
        };

        // Fuse across frames, reconstruct, upsample.
        let (mut trunk, attention) = match &self.fusion {
            FusionModule::Tsa(block) => {
                let (fused, maps) = block.apply(fx, aligned, batch)?;
                (fused, Some(maps))
            }
            FusionModule::Plain(plain) => (plain.apply(fx, aligned, batch)?, None),
        };
        trunk = apply_residual_chain(&self.recon, fx, trunk)?;
        if let Some((u1, u2)) = &self.up {
            trunk = ops::leaky_relu(tape, ops::pixel_shuffle(tape, u1.apply(fx, trunk)?, 2)?, LEAKY_SLOPE);
            trunk = ops::leaky_relu(tape, ops::pixel_shuffle(tape, u2.apply(fx, trunk)?, 2)?, LEAKY_SLOPE);
        }
        trunk = self.conv_last.apply(fx, self.conv_hr.apply_lrelu(fx, trunk)?)?;

        // Residual base: the (possibly upsampled) reference frame.
        let reference = ops::slice_batch(tape, clip, center * batch, (center + 1) * batch)?;
        let base = if self.config.scale == 4 {
            let b2 = ops::bilinear_resize(tape, reference, 2)?;
            ops::bilinear_resize(tape, b2, 2)?
        } else {
            reference
        };
        let out = ops::add(tape, trunk, base)?;
        Ok((
            out,
            Diagnostics { frames: f, batch, aligned, attention, l1_offsets },
        ))
    }
}

/// Check a loaded parameter set against the set a config registers: the name
/// sets must match exactly and every tensor's dims must agree.
pub fn verify_params_match<T: Elem>(
    expected: &ParamStore<T>,
    loaded: &ParamStore<T>,
) -> Result<()> {
    let want: Vec<String> = expected.names();
    let have: Vec<String> = loaded.names();
    let missing: Vec<&String> =
        want.iter().filter(|n| !loaded.contains(n)).collect();
    let extra: Vec<&String> = have.iter().filter(|n| !expected.contains(n)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        config_bail!(
            "parameter names do not match the model config: missing {missing:?}, unexpected {extra:?}"
        );
    }
    for name in &want {
        let e = expected.get(name)?.value.dims();
        let l = loaded.get(name)?.value.dims();
        if e != l {
            config_bail!(
                "parameter `{name}` has dims {}, config wants {}",
                fmt_dims(&l),
                fmt_dims(&e)
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    fn tiny_config() -> EdvrConfig {
        EdvrConfig {
            n_frames: 3,
            channels: 4,
            extract_blocks: 1,
            recon_blocks: 1,
            scale: 4,
            ..EdvrConfig::default()
        }
    }

    #[test]
    fn sr_output_dims_are_4x() {
        let config = EdvrConfig { n_frames: 5, channels: 8, extract_blocks: 2, recon_blocks: 2, ..EdvrConfig::default() };
        let (store, net) = EdvrNet::build::<f32>(&config, 7).unwrap();
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let clip = tape.leaf(Tensor::from_fn([5, 3, 8, 8], |b, c, y, x| {
            ((b + c + y + x) % 5) as f32 * 0.2
        }));
        let (out, diag) = net.forward(&fx, clip).unwrap();
        assert_eq!(tape.value(out).dims(), [1, 3, 32, 32]);
        assert_eq!(diag.batch, 1);
        assert_eq!(tape.value(diag.aligned).dims(), [5, 8, 8, 8]);
        assert_eq!(tape.value(diag.attention.unwrap()).dims(), [5, 1, 8, 8]);
    }

    #[test]
    fn hr_input_keeps_dims() {
        let config = EdvrConfig {
            n_frames: 3,
            channels: 4,
            extract_blocks: 1,
            recon_blocks: 1,
            scale: 1,
            hr_input: true,
            predeblur: true,
            ..EdvrConfig::default()
        };
        let (store, net) = EdvrNet::build::<f32>(&config, 3).unwrap();
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let clip = tape.leaf(Tensor::from_fn([3, 3, 16, 16], |b, c, y, x| {
            (b as f32 * 0.1 + c as f32 * 0.03 + (y * x) as f32 * 0.01).sin() * 0.5 + 0.5
        }));
        let (out, _) = net.forward(&fx, clip).unwrap();
        assert_eq!(tape.value(out).dims(), [1, 3, 16, 16]);
    }

    #[test]
    fn zero_params_reduce_to_upsampled_reference() {
        let config = tiny_config();
        let (mut store, net) = EdvrNet::build::<f32>(&config, 1).unwrap();
        for p in store.iter_mut() {
            p.value = Tensor::zeros(p.value.dims());
        }
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let clip_t = Tensor::from_fn([3, 3, 4, 4], |b, c, y, x| {
            (b * 31 + c * 17 + y * 5 + x) as f32 / 40.0
        });
        let clip = tape.leaf(clip_t.clone());
        let (out, _) = net.forward(&fx, clip).unwrap();
        // The residual base is the bilinear x4 upsample of the center frame.
        let ref_leaf = tape.leaf(Tensor::new([1, 3, 4, 4], {
            let d = clip_t.data();
            d[1 * 3 * 16..2 * 3 * 16].to_vec()
        }).unwrap());
        let b2 = ops::bilinear_resize(&tape, ref_leaf, 2).unwrap();
        let base = ops::bilinear_resize(&tape, b2, 2).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(base).data());
    }

    #[test]
    fn config_roundtrips_through_params() {
        for config in [
            tiny_config(),
            EdvrConfig {
                n_frames: 5,
                channels: 6,
                deform_groups: 2,
                align: AlignKind::Dconv,
                tsa: false,
                extract_blocks: 2,
                recon_blocks: 3,
                ..EdvrConfig::default()
            },
            EdvrConfig {
                n_frames: 3,
                channels: 4,
                scale: 1,
                hr_input: true,
                predeblur: true,
                extract_blocks: 1,
                recon_blocks: 2,
                ..EdvrConfig::default()
            },
        ] {
            let (store, _) = EdvrNet::build::<f32>(&config, 5).unwrap();
            assert_eq!(EdvrConfig::infer_from_params(&store).unwrap(), config);
        }
    }

    #[test]
    fn frame_order_affects_only_fusion() {
        // Swapping the two non-reference frames must keep per-frame extraction
        // identical (shared weights); outputs differ only via fusion.
        let config = tiny_config();
        let (store, net) = EdvrNet::build::<f32>(&config, 11).unwrap();
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let frame = |s: usize| {
            Tensor::from_fn([1, 3, 4, 4], move |_, c, y, x| ((s * 13 + c * 7 + y * 3 + x) % 9) as f32 / 9.0)
        };
        let mk = |order: [usize; 3]| {
            let mut data = Vec::new();
            for s in order {
                data.extend_from_slice(frame(s).data());
            }
            Tensor::new([3, 3, 4, 4], data).unwrap()
        };
        let a = tape.leaf(mk([0, 1, 2]));
        let b = tape.leaf(mk([2, 1, 0]));
        let (_, diag_a) = net.forward(&fx, a).unwrap();
        let (_, diag_b) = net.forward(&fx, b).unwrap();
        // Row f of the aligned stack for clip a equals row (2-f) for clip b.
        let va = tape.value(diag_a.aligned);
        let vb = tape.value(diag_b.aligned);
        let plane = 4 * 4 * 4; // C*h*w per row
        for f in 0..3 {
            assert_eq!(
                &va.data()[f * plane..(f + 1) * plane],
                &vb.data()[(2 - f) * plane..(3 - f) * plane]
            );
        }
    }

    #[test]
    fn mismatched_params_are_named() {
        let (a, _) = EdvrNet::build::<f32>(&tiny_config(), 1).unwrap();
        let bigger = EdvrConfig { channels: 8, ..tiny_config() };
        let (b, _) = EdvrNet::build::<f32>(&bigger, 1).unwrap();
        let err = verify_params_match(&a, &b).unwrap_err().to_string();
        assert!(err.contains("conv_first.weight"), "got: {err}");
    }
}
