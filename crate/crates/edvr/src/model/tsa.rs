//! Temporal-spatial-attention fusion, plus the attention-free baseline.
//!
//! Clip features are kept frame-major: a (F*B, C, H, W) tensor whose row
//! f*B + b holds frame f of batch item b, reference frame at f = F/2.

use rand_chacha::ChaCha8Rng;

use super::layers::{Conv2dLayer, Forward, Init};
use crate::error::{ensure_shape, shape_bail, Result};
use crate::tensor::{ops, ops::EwiseOp, ConvSpec, Elem, ParamStore, Var};

pub struct TsaBlock {
    theta: Conv2dLayer,
    phi: Conv2dLayer,
    fuse: Conv2dLayer,
    sp_l1: Conv2dLayer,
    sp_down: Conv2dLayer,
    sp_l2: Conv2dLayer,
    mask: Conv2dLayer,
    add1: Conv2dLayer,
    add2: Conv2dLayer,
    frames: usize,
}

impl TsaBlock {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
        frames: usize,
    ) -> Result<Self> {
        let c = channels;
        let k = Init::Kaiming { scale: 1.0 };
        let conv = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, spec, init| {
            Conv2dLayer::register(store, rng, &format!("tsa.{name}"), spec, init)
        };
        Ok(Self {
            theta: conv(store, rng, "theta", ConvSpec::new(c, c, 3), k)?,
            phi: conv(store, rng, "phi", ConvSpec::new(c, c, 3), k)?,
            fuse: conv(store, rng, "fuse", ConvSpec::new(frames * c, c, 1), k)?,
            sp_l1: conv(store, rng, "sp_l1", ConvSpec::new(c, c, 3), k)?,
            sp_down: conv(store, rng, "sp_down", ConvSpec::new(c, c, 3).with_stride(2), k)?,
            sp_l2: conv(store, rng, "sp_l2", ConvSpec::new(c, c, 3), k)?,
            // Zero-init heads: masks start at sigmoid(0) = 0.5 (neutral under
            // the x2 convention) and the additive path starts at zero.
            mask: conv(store, rng, "mask", ConvSpec::new(c, c, 3), Init::Zero)?,
            add1: conv(store, rng, "add1", ConvSpec::new(c, c, 1), k)?,
            add2: conv(store, rng, "add2", ConvSpec::new(c, c, 1), Init::Zero)?,
            frames,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn check_rows<T: Elem>(&self, fx: &Forward<T>, aligned: Var, batch: usize) -> Result<()> {
        let rows = fx.tape.value(aligned).dims()[0];
        ensure_shape!(
            rows == self.frames * batch,
            "aligned stack has {rows} rows, want {} frames x {batch}",
            self.frames
        );
        Ok(())
    }

    /// Per-frame, per-position similarity to the reference: one single-channel
    /// map per frame row, sigmoid(sum_c theta(neighbor) * phi(reference)).
    pub fn temporal_attention<T: Elem>(
        &self,
        fx: &Forward<T>,
        aligned: Var,
        batch: usize,
    ) -> Result<Var> {
        self.check_rows(fx, aligned, batch)?;
        let tape = fx.tape;
        let center = self.frames / 2;
        let emb_n = self.theta.apply(fx, aligned)?;
        let reference = ops::slice_batch(tape, aligned, center * batch, (center + 1) * batch)?;
        let emb_r = ops::concat_batch(tape, &vec![self.phi.apply(fx, reference)?; self.frames])?;
        let corr = ops::sum_channels(tape, ops::ewise(tape, emb_n, emb_r, EwiseOp::Mul)?);
        Ok(ops::sigmoid(tape, corr))
    }

    /// Weight each frame by its attention map (broadcast over channels) and
    /// reduce F*C channels to C with the fusion convolution.
    pub fn tsa_fuse<T: Elem>(
        &self,
        fx: &Forward<T>,
        aligned: Var,
        maps: Var,
        batch: usize,
    ) -> Result<Var> {
        self.check_rows(fx, aligned, batch)?;
        let map_dims = fx.tape.value(maps).dims();
        if map_dims[0] != self.frames * batch || map_dims[1] != 1 {
            shape_bail!(
                "attention maps {} do not match {} frames x {batch}",
                crate::tensor::fmt_dims(&map_dims),
                self.frames
            );
        }
        let tape = fx.tape;
        let weighted = ops::ewise(tape, aligned, maps, EwiseOp::Mul)?;
        let per_frame: Vec<Var> = (0..self.frames)
            .map(|f| ops::slice_batch(tape, weighted, f * batch, (f + 1) * batch))
            .collect::<Result<_>>()?;
        let cat = ops::concat_channels(tape, &per_frame)?;
        self.fuse.apply(fx, cat)
    }

    /// Two-level mask pyramid over the fused features; the multiplicative
    /// mask is doubled so a 0.5 mask is the identity.
    pub fn spatial_attention<T: Elem>(&self, fx: &Forward<T>, fused: Var) -> Result<Var> {
        let tape = fx.tape;
        let l1 = self.sp_l1.apply_lrelu(fx, fused)?;
        let l2 = self.sp_l2.apply_lrelu(fx, self.sp_down.apply_lrelu(fx, fused)?)?;
        let merged = ops::add(tape, l1, ops::bilinear_resize(tape, l2, 2)?)?;
        let mask = ops::sigmoid(tape, self.mask.apply(fx, merged)?);
        let additive = self.add2.apply(fx, self.add1.apply_lrelu(fx, merged)?)?;
        let modulated = ops::ewise(tape, fused, ops::scale(tape, mask, 2.0), EwiseOp::Mul)?;
        ops::add(tape, modulated, additive)
    }

    /// Full fusion path. Also returns the attention maps for diagnostics.
    pub fn apply<T: Elem>(&self, fx: &Forward<T>, aligned: Var, batch: usize) -> Result<(Var, Var)> {
        let maps = self.temporal_attention(fx, aligned, batch)?;
        let fused = self.tsa_fuse(fx, aligned, maps, batch)?;
        Ok((self.spatial_attention(fx, fused)?, maps))
    }
}

/// Attention-free fusion: concatenate the aligned frames and reduce with one
/// 1x1 convolution.
pub struct PlainFusion {
    fuse: Conv2dLayer,
    frames: usize,
}

impl PlainFusion {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
        frames: usize,
    ) -> Result<Self> {
        let fuse = Conv2dLayer::register(
            store,
            rng,
            "fusion.fuse",
            ConvSpec::new(frames * channels, channels, 1),
            Init::Kaiming { scale: 1.0 },
        )?;
        Ok(Self { fuse, frames })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, aligned: Var, batch: usize) -> Result<Var> {
        let rows = fx.tape.value(aligned).dims()[0];
        ensure_shape!(
            rows == self.frames * batch,
            "aligned stack has {rows} rows, want {} frames x {batch}",
            self.frames
        );
        let per_frame: Vec<Var> = (0..self.frames)
            .map(|f| ops::slice_batch(fx.tape, aligned, f * batch, (f + 1) * batch))
            .collect::<Result<_>>()?;
        let cat = ops::concat_channels(fx.tape, &per_frame)?;
        self.fuse.apply(fx, cat)
    }
}
