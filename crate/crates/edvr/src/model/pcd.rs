//! Alignment blocks: pyramid-cascading-deformable alignment and the
//! single-level stacked-deformable baseline.

use rand_chacha::ChaCha8Rng;

use super::layers::{Conv2dLayer, Forward, Init};
use super::FeaturePyramid;
use crate::deform::deform_conv2d;
use crate::error::Result;
use crate::tensor::{ops, ConvSpec, Elem, Var};

const TAPS: usize = 9; // 3x3 deformable kernel, p_k in {(-1,-1)..(1,1)}

/// Predicts offsets and modulation for one deformable conv. The head conv is
/// zero-initialized so alignment starts from standard-convolution behavior;
/// its output stacks 2*K*G offset channels then K*G modulation logits.
pub struct OffsetHead {
    conv1: Conv2dLayer,
    head: Conv2dLayer,
    taps: usize,
    groups: usize,
}

impl OffsetHead {
    pub fn register<T: Elem>(
        store: &mut crate::tensor::ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        channels: usize,
        groups: usize,
    ) -> Result<Self> {
        let conv1 = Conv2dLayer::register(
            store,
            rng,
            &format!("{name}.conv1"),
            ConvSpec::new(in_channels, channels, 3),
            Init::Kaiming { scale: 1.0 },
        )?;
        let head = Conv2dLayer::register(
            store,
            rng,
            &format!("{name}.head"),
            ConvSpec::new(channels, 3 * TAPS * groups, 3),
            Init::Zero,
        )?;
        Ok(Self { conv1, head, taps: TAPS, groups })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, x: Var) -> Result<(Var, Var)> {
        let t = self.conv1.apply_lrelu(fx, x)?;
        let raw = self.head.apply(fx, t)?;
        let off_ch = 2 * self.taps * self.groups;
        let offsets = ops::slice_channels(fx.tape, raw, 0, off_ch)?;
        let logits = ops::slice_channels(fx.tape, raw, off_ch, off_ch + self.taps * self.groups)?;
        let modulation = ops::sigmoid(fx.tape, logits);
        Ok((offsets, modulation))
    }
}

/// A deformable conv layer (weights only; offsets come from an [`OffsetHead`]).
pub struct DcnLayer {
    weight: String,
    spec: ConvSpec,
    groups: usize,
}

impl DcnLayer {
    pub fn register<T: Elem>(
        store: &mut crate::tensor::ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        groups: usize,
    ) -> Result<Self> {
        let spec = ConvSpec::new(channels, channels, 3).no_bias();
        let layer = Conv2dLayer::register(store, rng, name, spec, Init::Kaiming { scale: 1.0 })?;
        Ok(Self { weight: layer.weight, spec, groups })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, x: Var, offsets: Var, modulation: Var) -> Result<Var> {
        let w = fx.param(&self.weight)?;
        deform_conv2d(fx.tape, x, offsets, modulation, w, &self.spec, self.groups)
    }
}

struct PcdLevel {
    head: OffsetHead,
    dcn: DcnLayer,
    /// Levels 1 and 2 merge the deformable output with the upsampled coarser
    /// aligned features; level 3 has nothing coarser.
    merge: Option<(Conv2dLayer, Conv2dLayer)>,
}

/// Pyramid-cascading-deformable alignment over a 3-level pyramid.
pub struct PcdBlock {
    levels: Vec<PcdLevel>, // index 0 = finest
    cas_head: OffsetHead,
    cas_dcn: DcnLayer,
    groups: usize,
}

impl PcdBlock {
    pub fn register<T: Elem>(
        store: &mut crate::tensor::ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
        groups: usize,
    ) -> Result<Self> {
        let off_ch = 2 * TAPS * groups;
        let mut levels = Vec::new();
        for l in 1..=3usize {
            let name = format!("pcd.l{l}");
            // Finer levels also see the x2-upsampled coarser offsets.
            let head_in = if l == 3 { 2 * channels } else { 2 * channels + off_ch };
            let head = OffsetHead::register(store, rng, &format!("{name}.off"), head_in, channels, groups)?;
            let dcn = DcnLayer::register(store, rng, &format!("{name}.dcn"), channels, groups)?;
            let merge = if l == 3 {
                None
            } else {
                let a = Conv2dLayer::register(
                    store,
                    rng,
                    &format!("{name}.merge1"),
                    ConvSpec::new(2 * channels, channels, 3),
                    Init::Kaiming { scale: 1.0 },
                )?;
                let b = Conv2dLayer::register(
                    store,
                    rng,
                    &format!("{name}.merge2"),
                    ConvSpec::new(channels, channels, 3),
                    Init::Kaiming { scale: 1.0 },
                )?;
                Some((a, b))
            };
            levels.push(PcdLevel { head, dcn, merge });
        }
        let cas_head =
            OffsetHead::register(store, rng, "pcd.cas.off", 2 * channels, channels, groups)?;
        let cas_dcn = DcnLayer::register(store, rng, "pcd.cas.dcn", channels, groups)?;
        Ok(Self { levels, cas_head, cas_dcn, groups })
    }

    /// Align `neighbor` onto `reference`, coarse to fine, then refine once
    /// more with a cascaded deformable conv. Returns the aligned level-1
    /// features and the level-1 pre-cascade offsets (for diagnostics).
    pub fn align<T: Elem>(
        &self,
        fx: &Forward<T>,
        neighbor: &FeaturePyramid,
        reference: &FeaturePyramid,
    ) -> Result<(Var, Var)> {
        let tape = fx.tape;
        // Level 3 (coarsest): offsets from the two feature maps alone.
        let cat3 = ops::concat_channels(tape, &[neighbor.levels[2], reference.levels[2]])?;
        let (off3, md3) = self.levels[2].head.apply(fx, cat3)?;
        let a3 = ops::leaky_relu(
            tape,
            self.levels[2].dcn.apply(fx, neighbor.levels[2], off3, md3)?,
            super::layers::LEAKY_SLOPE,
        );
        let mut coarser_off = off3;
        let mut coarser_aligned = a3;
        let mut l1_offsets = None;
        for l in (0..2).rev() {
            // One coarse pixel spans two fine pixels: offsets are upsampled
            // and their values doubled.
            let off_up = ops::scale(tape, ops::bilinear_resize(tape, coarser_off, 2)?, 2.0);
            let cat = ops::concat_channels(
                tape,
                &[neighbor.levels[l], reference.levels[l], off_up],
            )?;
            let (off, md) = self.levels[l].head.apply(fx, cat)?;
            let d = self.levels[l].dcn.apply(fx, neighbor.levels[l], off, md)?;
            let up = ops::bilinear_resize(tape, coarser_aligned, 2)?;
            let (m1, m2) = self.levels[l].merge.as_ref().expect("levels 1/2 merge");
            let cat_feat = ops::concat_channels(tape, &[d, up])?;
            let merged = m2.apply(fx, m1.apply_lrelu(fx, cat_feat)?)?;
            coarser_aligned = if l == 0 {
                merged
            } else {
                ops::leaky_relu(tape, merged, super::layers::LEAKY_SLOPE)
            };
            coarser_off = off;
            if l == 0 {
                l1_offsets = Some(off);
            }
        }
        let cat_cas = ops::concat_channels(tape, &[coarser_aligned, reference.levels[0]])?;
        let (off_c, md_c) = self.cas_head.apply(fx, cat_cas)?;
        let aligned = ops::leaky_relu(
            tape,
            self.cas_dcn.apply(fx, coarser_aligned, off_c, md_c)?,
            super::layers::LEAKY_SLOPE,
        );
        Ok((aligned, l1_offsets.expect("level 1 visited")))
    }

    pub fn groups(&self) -> usize {
        self.groups
    }
}

/// Baseline alignment: one or more deformable convs at level 1 only, each
/// with its own offset head, no pyramid and no cascade.
pub struct DconvStack {
    stages: Vec<(OffsetHead, DcnLayer)>,
    groups: usize,
}

impl DconvStack {
    pub fn register<T: Elem>(
        store: &mut crate::tensor::ParamStore<T>,
        rng: &mut ChaCha8Rng,
        channels: usize,
        groups: usize,
        n_stages: usize,
    ) -> Result<Self> {
        let mut stages = Vec::new();
        for i in 0..n_stages {
            let name = format!("dconv.s{i}");
            let head =
                OffsetHead::register(store, rng, &format!("{name}.off"), 2 * channels, channels, groups)?;
            let dcn = DcnLayer::register(store, rng, &format!("{name}.dcn"), channels, groups)?;
            stages.push((head, dcn));
        }
        Ok(Self { stages, groups })
    }

    pub fn align<T: Elem>(&self, fx: &Forward<T>, neighbor: Var, reference: Var) -> Result<(Var, Var)> {
        let mut feat = neighbor;
        let mut first_off = None;
        for (head, dcn) in &self.stages {
            let cat = ops::concat_channels(fx.tape, &[feat, reference])?;
            let (off, md) = head.apply(fx, cat)?;
            feat = ops::leaky_relu(fx.tape, dcn.apply(fx, feat, off, md)?, super::layers::LEAKY_SLOPE);
            if first_off.is_none() {
                first_off = Some(off);
            }
        }
        Ok((feat, first_off.expect("at least one stage")))
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }
}
