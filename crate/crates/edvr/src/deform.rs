//! Modulated deformable convolution.
//!
//! Each output position samples the input at `p0 + p_k + dp_k` for every
//! kernel tap, fetches values by bilinear interpolation (zero outside the
//! borders) and weighs them by a per-tap modulation scalar in [0, 1]:
//!
//! `out(p0) = sum_k w_k * input(p0 + p_k + dp_k) * dm_k`
//!
//! Offset channels are laid out group-major, then tap-major, as (dy, dx)
//! pairs: channel `g*2K + 2k` is the y offset of tap `k` in group `g`.
//! Modulation channel is `g*K + k`. This layout defines checkpoint
//! compatibility and must not change.

use crate::error::{ensure_shape, EdvrError, Result};
use crate::tensor::{fmt_dims, gemm_strided, ConvSpec, Elem, Tape, Tensor, Var};

/// Validated per-position sampling offsets: (N, 2*K*G, H, W).
pub struct OffsetField<T: Elem> {
    tensor: Tensor<T>,
    taps: usize,
    groups: usize,
}

impl<T: Elem> OffsetField<T> {
    pub fn new(tensor: Tensor<T>, taps: usize, groups: usize) -> Result<Self> {
        ensure_shape!(
            tensor.dims()[1] == 2 * taps * groups,
            "offset field {} must have 2*{taps}*{groups} channels",
            fmt_dims(&tensor.dims())
        );
        Ok(Self { tensor, taps, groups })
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn channel_dy(&self, group: usize, tap: usize) -> usize {
        group * 2 * self.taps + 2 * tap
    }

    pub fn channel_dx(&self, group: usize, tap: usize) -> usize {
        self.channel_dy(group, tap) + 1
    }

    /// Per-position mean offset magnitude over all taps and groups,
    /// shape (N, 1, H, W). Used for diagnostic dumps.
    pub fn magnitude_map(&self) -> Tensor<T> {
        let [n, _, h, w] = self.tensor.dims();
        let plane = h * w;
        let mut out = vec![T::zero(); n * plane];
        let data = self.tensor.data();
        let pairs = self.taps * self.groups;
        for b in 0..n {
            for g in 0..self.groups {
                for k in 0..self.taps {
                    let dy_base = (b * 2 * pairs + self.channel_dy(g, k)) * plane;
                    let dx_base = (b * 2 * pairs + self.channel_dx(g, k)) * plane;
                    for i in 0..plane {
                        let dy = data[dy_base + i].to_f64();
                        let dx = data[dx_base + i].to_f64();
                        let m = (dy * dy + dx * dx).sqrt();
                        out[b * plane + i] = out[b * plane + i] + T::from_f64(m);
                    }
                }
            }
        }
        let inv = T::from_f64(1.0 / pairs as f64);
        for v in &mut out {
            *v = *v * inv;
        }
        Tensor::new([n, 1, h, w], out).expect("dims")
    }
}

/// Validated per-tap modulation scalars: (N, K*G, H, W), all values in [0, 1].
pub struct ModulationField<T: Elem> {
    tensor: Tensor<T>,
}

impl<T: Elem> ModulationField<T> {
    pub fn new(tensor: Tensor<T>, taps: usize, groups: usize) -> Result<Self> {
        ensure_shape!(
            tensor.dims()[1] == taps * groups,
            "modulation field {} must have {taps}*{groups} channels",
            fmt_dims(&tensor.dims())
        );
        if !tensor.data().iter().all(|&v| v >= T::zero() && v <= T::one()) {
            return Err(EdvrError::Numeric(
                "modulation values must lie in [0, 1] (apply sigmoid upstream)".into(),
            ));
        }
        Ok(Self { tensor })
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }
}

/// Bilinear lookup of `feature[batch, channel]` at real coordinates (y, x).
/// Neighbors outside the map contribute zero; integer coordinates return the
/// stored value exactly.
pub fn bilinear_sample<T: Elem>(
    feature: &Tensor<T>,
    y: f64,
    x: f64,
    batch: usize,
    channel: usize,
) -> T {
    let [_, c, h, w] = feature.dims();
    let plane_base = (batch * c + channel) * h * w;
    let plane = &feature.data()[plane_base..plane_base + h * w];
    SamplePlan::new(h, w, T::from_f64(y), T::from_f64(x)).eval(plane)
}

const OUTSIDE: usize = usize::MAX;

/// Precomputed corner indices and weights for one fractional sample.
/// Corner order: (y0,x0), (y0,x1), (y1,x0), (y1,x1).
struct SamplePlan<T: Elem> {
    idx: [usize; 4],
    w: [T; 4],
    fy: T,
    fx: T,
    exact: bool,
}

impl<T: Elem> SamplePlan<T> {
    fn new(h: usize, w: usize, y: T, x: T) -> Self {
        let yf = y.floor();
        let xf = x.floor();
        let fy = y - yf;
        let fx = x - xf;
        let y0 = yf.to_f64() as isize;
        let x0 = xf.to_f64() as isize;
        let corner = |cy: isize, cx: isize| -> usize {
            if cy >= 0 && cy < h as isize && cx >= 0 && cx < w as isize {
                cy as usize * w + cx as usize
            } else {
                OUTSIDE
            }
        };
        let one = T::one();
        Self {
            idx: [corner(y0, x0), corner(y0, x0 + 1), corner(y0 + 1, x0), corner(y0 + 1, x0 + 1)],
            w: [(one - fy) * (one - fx), (one - fy) * fx, fy * (one - fx), fy * fx],
            fy,
            fx,
            exact: fy == T::zero() && fx == T::zero(),
        }
    }

    #[inline]
    fn corner(&self, i: usize, plane: &[T]) -> T {
        if self.idx[i] == OUTSIDE {
            T::zero()
        } else {
            plane[self.idx[i]]
        }
    }

    #[inline]
    fn eval(&self, plane: &[T]) -> T {
        if self.exact {
            // Bit-exact path: integer coordinates reduce to a plain lookup,
            // which keeps the zero-offset case identical to conv2d.
            return self.corner(0, plane);
        }
        let mut acc = T::zero();
        for i in 0..4 {
            if self.idx[i] != OUTSIDE {
                acc = acc + self.w[i] * plane[self.idx[i]];
            }
        }
        acc
    }

    /// d(sample)/dy and d(sample)/dx of the zero-extended bilinear surface.
    #[inline]
    fn partials(&self, plane: &[T]) -> (T, T) {
        let one = T::one();
        let v00 = self.corner(0, plane);
        let v01 = self.corner(1, plane);
        let v10 = self.corner(2, plane);
        let v11 = self.corner(3, plane);
        let dy = (v10 - v00) * (one - self.fx) + (v11 - v01) * self.fx;
        let dx = (v01 - v00) * (one - self.fy) + (v11 - v10) * self.fy;
        (dy, dx)
    }

    #[inline]
    fn scatter(&self, g: T, plane: &mut [T]) {
        for i in 0..4 {
            if self.idx[i] != OUTSIDE {
                plane[self.idx[i]] = plane[self.idx[i]] + g * self.w[i];
            }
        }
    }
}

struct DeformGeom {
    n: usize,
    ic: usize,
    h: usize,
    w: usize,
    oc: usize,
    k: usize,
    pad: usize,
    taps: usize,
    groups: usize,
}

impl DeformGeom {
    fn rows(&self) -> usize {
        self.ic * self.taps
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Fill the deformable column matrix (ic*K) x (h*w) for batch item `b`.
/// Entry ((ic*K + k), pos) = modulated bilinear sample of channel ic at
/// tap k's displaced position.
fn build_cols<T: Elem>(
    x: &Tensor<T>,
    off: &Tensor<T>,
    md: &Tensor<T>,
    b: usize,
    g: &DeformGeom,
    cols: &mut [T],
) {
    let plane = g.plane();
    let xd = x.data();
    let od = off.data();
    let mdd = md.data();
    let icg = g.ic / g.groups;
    let off_chans = 2 * g.taps * g.groups;
    let md_chans = g.taps * g.groups;
    for gi in 0..g.groups {
        for k in 0..g.taps {
            let ky = (k / g.k) as isize - g.pad as isize;
            let kx = (k % g.k) as isize - g.pad as isize;
            let dy_base = (b * off_chans + gi * 2 * g.taps + 2 * k) * plane;
            let dx_base = dy_base + plane;
            let m_base = (b * md_chans + gi * g.taps + k) * plane;
            for oy in 0..g.h {
                for ox in 0..g.w {
                    let pos = oy * g.w + ox;
                    let sy = T::from_f64((oy as isize + ky) as f64) + od[dy_base + pos];
                    let sx = T::from_f64((ox as isize + kx) as f64) + od[dx_base + pos];
                    let plan = SamplePlan::new(g.h, g.w, sy, sx);
                    let m = mdd[m_base + pos];
                    for ici in 0..icg {
                        let ic = gi * icg + ici;
                        let ch_plane = &xd[(b * g.ic + ic) * plane..(b * g.ic + ic + 1) * plane];
                        cols[(ic * g.taps + k) * plane + pos] = plan.eval(ch_plane) * m;
                    }
                }
            }
        }
    }
}

/// Modulated deformable convolution as a tape op. Stride 1, "same" padding,
/// square kernel, no bias; `groups` partitions the input channels, each group
/// with its own offsets/modulation.
pub fn deform_conv2d<T: Elem>(
    tape: &Tape<T>,
    input: Var,
    offsets: Var,
    modulation: Var,
    weights: Var,
    spec: &ConvSpec,
    groups: usize,
) -> Result<Var> {
    spec.validate()?;
    ensure_shape!(spec.stride == 1, "deform_conv2d supports stride 1 only");
    ensure_shape!(
        spec.kernel_h == spec.kernel_w && spec.pad == spec.kernel_h / 2,
        "deform_conv2d needs a square same-padded kernel, got {}x{} pad {}",
        spec.kernel_h,
        spec.kernel_w,
        spec.pad
    );
    ensure_shape!(!spec.bias, "deform_conv2d is bias-free");
    let x = tape.value(input);
    let w = tape.value(weights);
    let [n, ic, h, wd] = x.dims();
    ensure_shape!(
        ic == spec.in_channels,
        "deform_conv2d: input has {ic} channels, spec expects {}",
        spec.in_channels
    );
    ensure_shape!(groups >= 1 && ic % groups == 0, "deform groups {groups} must divide {ic} channels");
    ensure_shape!(
        w.dims() == spec.weight_dims(),
        "deform_conv2d: weight {} does not match spec {}",
        fmt_dims(&w.dims()),
        fmt_dims(&spec.weight_dims())
    );
    let taps = spec.kernel_h * spec.kernel_w;
    let off_t = tape.value(offsets);
    let md_t = tape.value(modulation);
    let off = OffsetField::new(off_t, taps, groups)?;
    let md = ModulationField::new(md_t, taps, groups)?;
    ensure_shape!(
        off.tensor().dims() == [n, 2 * taps * groups, h, wd],
        "offsets {} must be ({n}, {}, {h}, {wd})",
        fmt_dims(&off.tensor().dims()),
        2 * taps * groups
    );
    ensure_shape!(
        md.tensor().dims() == [n, taps * groups, h, wd],
        "modulation {} must be ({n}, {}, {h}, {wd})",
        fmt_dims(&md.tensor().dims()),
        taps * groups
    );
    let geom = DeformGeom {
        n,
        ic,
        h,
        w: wd,
        oc: spec.out_channels,
        k: spec.kernel_h,
        pad: spec.pad,
        taps,
        groups,
    };
    let off_t = off.tensor().clone();
    let md_t = md.tensor().clone();
    let rows = geom.rows();
    let plane = geom.plane();
    let mut out = vec![T::zero(); n * geom.oc * plane];
    let mut cols = vec![T::zero(); rows * plane];
    for b in 0..n {
        build_cols(&x, &off_t, &md_t, b, &geom, &mut cols);
        gemm_strided(
            geom.oc,
            rows,
            plane,
            T::one(),
            w.data(),
            rows as isize,
            1,
            &cols,
            plane as isize,
            1,
            T::zero(),
            &mut out[b * geom.oc * plane..(b + 1) * geom.oc * plane],
            plane as isize,
            1,
        );
    }
    let out = Tensor::new([n, geom.oc, h, wd], out)?;
    Ok(tape.push_op(
        out,
        Box::new(move |gout: &Tensor<T>| {
            let gd = gout.data();
            let icg = geom.ic / geom.groups;
            let off_chans = 2 * geom.taps * geom.groups;
            let md_chans = geom.taps * geom.groups;
            let mut cols = vec![T::zero(); rows * plane];
            let mut gcols = vec![T::zero(); rows * plane];
            let mut gx = vec![T::zero(); x.numel()];
            let mut gw = vec![T::zero(); w.numel()];
            let mut goff = vec![T::zero(); off_t.numel()];
            let mut gmd = vec![T::zero(); md_t.numel()];
            let xd = x.data();
            let od = off_t.data();
            let mdd = md_t.data();
            for b in 0..geom.n {
                let gout_b = &gd[b * geom.oc * plane..(b + 1) * geom.oc * plane];
                build_cols(&x, &off_t, &md_t, b, &geom, &mut cols);
                // gw += gout_b @ cols^T
                gemm_strided(
                    geom.oc,
                    plane,
                    rows,
                    T::one(),
                    gout_b,
                    plane as isize,
                    1,
                    &cols,
                    1,
                    plane as isize,
                    T::one(),
                    &mut gw,
                    rows as isize,
                    1,
                );
                // gcols = W^T @ gout_b
                gemm_strided(
                    rows,
                    geom.oc,
                    plane,
                    T::one(),
                    w.data(),
                    1,
                    rows as isize,
                    gout_b,
                    plane as isize,
                    1,
                    T::zero(),
                    &mut gcols,
                    plane as isize,
                    1,
                );
                for gi in 0..geom.groups {
                    for k in 0..geom.taps {
                        let ky = (k / geom.k) as isize - geom.pad as isize;
                        let kx = (k % geom.k) as isize - geom.pad as isize;
                        let dy_base = (b * off_chans + gi * 2 * geom.taps + 2 * k) * plane;
                        let dx_base = dy_base + plane;
                        let m_base = (b * md_chans + gi * geom.taps + k) * plane;
                        for oy in 0..geom.h {
                            for ox in 0..geom.w {
                                let pos = oy * geom.w + ox;
                                let sy = T::from_f64((oy as isize + ky) as f64) + od[dy_base + pos];
                                let sx = T::from_f64((ox as isize + kx) as f64) + od[dx_base + pos];
                                let plan = SamplePlan::new(geom.h, geom.w, sy, sx);
                                let m = mdd[m_base + pos];
                                let mut acc_dy = T::zero();
                                let mut acc_dx = T::zero();
                                let mut acc_m = T::zero();
                                for ici in 0..icg {
                                    let ic = gi * icg + ici;
                                    let base = (b * geom.ic + ic) * plane;
                                    let gc = gcols[(ic * geom.taps + k) * plane + pos];
                                    let ch_plane = &xd[base..base + plane];
                                    let s = plan.eval(ch_plane);
                                    let (ds_dy, ds_dx) = plan.partials(ch_plane);
                                    acc_dy = acc_dy + gc * m * ds_dy;
                                    acc_dx = acc_dx + gc * m * ds_dx;
                                    acc_m = acc_m + gc * s;
                                    plan.scatter(gc * m, &mut gx[base..base + plane]);
                                }
                                goff[dy_base + pos] = goff[dy_base + pos] + acc_dy;
                                goff[dx_base + pos] = goff[dx_base + pos] + acc_dx;
                                gmd[m_base + pos] = gmd[m_base + pos] + acc_m;
                            }
                        }
                    }
                }
            }
            vec![
                (input, Tensor::new(x.dims(), gx).expect("dims")),
                (offsets, Tensor::new(off_t.dims(), goff).expect("dims")),
                (modulation, Tensor::new(md_t.dims(), gmd).expect("dims")),
                (weights, Tensor::new(w.dims(), gw).expect("dims")),
            ]
        }),
    ))
}

/// Finite-difference validation of all four deform_conv2d gradient paths on
/// small random f64 cases. Offsets are drawn in [-2, 2] with fractional parts
/// kept away from 0 and 1, where the interpolation derivative is kinked and
/// central differences straddle the crease.
pub fn deform_gradcheck(seed: u64) -> Result<Vec<crate::gradcheck::CheckResult>> {
    crate::gradcheck::deform_checks(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    fn grid_3x3() -> Tensor<f64> {
        Tensor::new([1, 1, 3, 3], (1..=9).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn bilinear_sample_at_nodes_and_midpoint() {
        let f = Tensor::new([1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&f, 0.0, 1.0, 0, 0), 1.0);
        assert_eq!(bilinear_sample(&f, 1.0, 0.0, 0, 0), 2.0);
        assert_eq!(bilinear_sample(&f, 0.5, 0.5, 0, 0), 1.5);
    }

    #[test]
    fn bilinear_sample_outside_is_zero() {
        let f = Tensor::new([1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&f, -1.0, -1.0, 0, 0), 0.0);
        assert_eq!(bilinear_sample(&f, 5.0, 0.0, 0, 0), 0.0);
        // Half outside: only the inside corner contributes.
        assert_eq!(bilinear_sample(&f, -0.5, 0.0, 0, 0), 0.5);
    }

    #[test]
    fn zero_offset_unit_modulation_matches_conv2d_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::from_fn([2, 4, 6, 5], |_, _, _, _| rng.random_range(-1.0..1.0)));
        let w = tape.leaf(Tensor::from_fn([3, 4, 3, 3], |_, _, _, _| rng.random_range(-1.0..1.0)));
        let spec = ConvSpec::new(4, 3, 3).no_bias();
        let off = tape.leaf(Tensor::zeros([2, 18, 6, 5]));
        let md = tape.leaf(Tensor::full([2, 9, 6, 5], 1.0));
        let yd = deform_conv2d(&tape, x, off, md, w, &spec, 1).unwrap();
        let yc = ops::conv2d(&tape, x, w, None, &spec).unwrap();
        let (vd, vc) = (tape.value(yd), tape.value(yc));
        assert_eq!(vd.dims(), vc.dims());
        for (a, b) in vd.data().iter().zip(vc.data()) {
            assert!(a.to_bits() == b.to_bits(), "{a} != {b}");
        }
    }

    #[test]
    fn half_pixel_x_offset_blends_neighbors() {
        // 1x1 kernel, weight 1: center output samples (1, 1.5) -> (5+6)/2.
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(grid_3x3());
        let w = tape.leaf(Tensor::full([1, 1, 1, 1], 1.0));
        let spec = ConvSpec::new(1, 1, 1).with_pad(0).no_bias();
        let mut dx = Tensor::zeros([1, 2, 3, 3]);
        dx.set(dx.offset(0, 1, 1, 1), 0.5);
        let off = tape.leaf(dx);
        let md = tape.leaf(Tensor::full([1, 1, 3, 3], 1.0));
        let y = deform_conv2d(&tape, x, off, md, w, &spec, 1).unwrap();
        assert_eq!(tape.value(y).at(0, 0, 1, 1), 5.5);
        assert_eq!(tape.value(y).at(0, 0, 0, 0), 1.0);
    }

    #[test]
    fn output_linear_in_modulation() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(grid_3x3());
        let w = tape.leaf(Tensor::full([1, 1, 3, 3], 0.5));
        let spec = ConvSpec::new(1, 1, 3).no_bias();
        let off = tape.leaf(Tensor::full([1, 18, 3, 3], 0.25));
        let md_lo = tape.leaf(Tensor::full([1, 9, 3, 3], 0.4));
        let md_hi = tape.leaf(Tensor::full([1, 9, 3, 3], 0.8));
        let y_lo = deform_conv2d(&tape, x, off, md_lo, w, &spec, 1).unwrap();
        let y_hi = deform_conv2d(&tape, x, off, md_hi, w, &spec, 1).unwrap();
        for (lo, hi) in tape.value(y_lo).data().iter().zip(tape.value(y_hi).data()) {
            assert!((2.0 * lo - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn modulation_gradient_is_weighted_sample() {
        // Single tap (1x1 kernel): d out / d m = w * sampled value.
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(grid_3x3());
        let w = tape.leaf(Tensor::full([1, 1, 1, 1], 2.0));
        let spec = ConvSpec::new(1, 1, 1).with_pad(0).no_bias();
        let off = tape.leaf(Tensor::full([1, 2, 3, 3], 0.25));
        let md = tape.leaf(Tensor::full([1, 1, 3, 3], 0.7));
        let y = deform_conv2d(&tape, x, off, md, w, &spec, 1).unwrap();
        let s = ops::reduce_sum_all(&tape, y);
        let grads = tape.backward(s).unwrap();
        let gm = grads.get(md).unwrap();
        let xv = tape.value(x);
        for oy in 0..3 {
            for ox in 0..3 {
                let sample = bilinear_sample(&xv, oy as f64 + 0.25, ox as f64 + 0.25, 0, 0);
                assert!((gm.at(0, 0, oy, ox) - 2.0 * sample).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_consistency_in_interior() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base = Tensor::from_fn([1, 1, 8, 8], |_, _, _, _| rng.random_range(-1.0..1.0f64));
        // x2(y, x) = x(y+1, x): content shifted up by one row.
        let shifted = Tensor::from_fn([1, 1, 8, 8], |b, c, y, x| {
            if y + 1 < 8 {
                base.at(b, c, y + 1, x)
            } else {
                0.0
            }
        });
        let tape: Tape<f64> = Tape::new();
        let w = tape.leaf(Tensor::from_fn([1, 1, 3, 3], |_, _, _, _| rng.random_range(-1.0..1.0)));
        let spec = ConvSpec::new(1, 1, 3).no_bias();
        let md = tape.leaf(Tensor::full([1, 9, 8, 8], 1.0));
        let off1 = tape.leaf(Tensor::full([1, 18, 8, 8], 0.3));
        // dy shifted by -1: sampling one row higher in the up-shifted image
        // reads the original content.
        let off2 = tape.leaf(Tensor::from_fn([1, 18, 8, 8], |_, c, _, _| {
            if c % 2 == 0 {
                -0.7
            } else {
                0.3
            }
        }));
        let x1 = tape.leaf(base);
        let x2 = tape.leaf(shifted);
        let y1 = deform_conv2d(&tape, x1, off1, md, w, &spec, 1).unwrap();
        let y2 = deform_conv2d(&tape, x2, off2, md, w, &spec, 1).unwrap();
        let (v1, v2) = (tape.value(y1), tape.value(y2));
        for y in 2..5 {
            for x in 2..6 {
                assert!(
                    (v1.at(0, 0, y, x) - v2.at(0, 0, y, x)).abs() < 1e-12,
                    "interior mismatch at ({y}, {x})"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_channel_counts_and_range() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 2, 4, 4]));
        let w = tape.leaf(Tensor::zeros([2, 2, 3, 3]));
        let spec = ConvSpec::new(2, 2, 3).no_bias();
        let bad_off = tape.leaf(Tensor::zeros([1, 17, 4, 4]));
        let md = tape.leaf(Tensor::full([1, 9, 4, 4], 0.5));
        assert!(deform_conv2d(&tape, x, bad_off, md, w, &spec, 1).is_err());
        let off = tape.leaf(Tensor::zeros([1, 18, 4, 4]));
        let bad_md = tape.leaf(Tensor::full([1, 9, 4, 4], 1.5));
        assert!(deform_conv2d(&tape, x, off, bad_md, w, &spec, 1).is_err());
    }
}
