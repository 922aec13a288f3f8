//! Tape ops: each records its output and a closure producing input gradients.

use super::conv::{col2im_add, conv_out_len, gemm_strided, im2col, ConvGeom};
use super::{fmt_dims, ConvSpec, Elem, Tape, Tensor, Var};
use crate::error::{ensure_shape, shape_bail, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Act {
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwiseOp {
    Add,
    Mul,
}

/// Element-wise activation.
pub fn activation<T: Elem>(tape: &Tape<T>, x: Var, act: Act) -> Var {
    let input = tape.value(x);
    match act {
        Act::LeakyRelu(slope) => {
            let s = T::from_f64(slope);
            let out = input.map(|v| if v > T::zero() { v } else { s * v });
            tape.push_op(
                out,
                Box::new(move |g: &Tensor<T>| {
                    let data: Vec<T> = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gv, &xv)| if xv > T::zero() { gv } else { s * gv })
                        .collect();
                    vec![(x, Tensor::new(g.dims(), data).expect("same dims"))]
                }),
            )
        }
        Act::Sigmoid => {
            let out = input.map(|v| T::one() / (T::one() + (-v).exp()));
            let saved = out.clone();
            tape.push_op(
                out,
                Box::new(move |g: &Tensor<T>| {
                    let data: Vec<T> = g
                        .data()
                        .iter()
                        .zip(saved.data())
                        .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                        .collect();
                    vec![(x, Tensor::new(g.dims(), data).expect("same dims"))]
                }),
            )
        }
    }
}

pub fn leaky_relu<T: Elem>(tape: &Tape<T>, x: Var, slope: f64) -> Var {
    activation(tape, x, Act::LeakyRelu(slope))
}

pub fn sigmoid<T: Elem>(tape: &Tape<T>, x: Var) -> Var {
    activation(tape, x, Act::Sigmoid)
}

/// Multiply by a compile-time-known constant.
pub fn scale<T: Elem>(tape: &Tape<T>, x: Var, c: f64) -> Var {
    let cv = T::from_f64(c);
    let out = tape.value(x).map(|v| cv * v);
    tape.push_op(out, Box::new(move |g: &Tensor<T>| vec![(x, g.map(|v| cv * v))]))
}

fn broadcast_kind(a: [usize; 4], b: [usize; 4]) -> Result<bool> {
    if a == b {
        return Ok(false);
    }
    if b == [a[0], 1, a[2], a[3]] {
        return Ok(true);
    }
    shape_bail!(
        "ewise operands {} and {} neither match nor channel-broadcast",
        fmt_dims(&a),
        fmt_dims(&b)
    )
}

/// Element-wise add/mul. `b` may be (N, 1, H, W) against `a` = (N, C, H, W);
/// the single channel is broadcast across C.
pub fn ewise<T: Elem>(tape: &Tape<T>, a: Var, b: Var, op: EwiseOp) -> Result<Var> {
    let av = tape.value(a);
    let bv = tape.value(b);
    let broadcast = broadcast_kind(av.dims(), bv.dims())?;
    let [n, c, h, w] = av.dims();
    let plane = h * w;
    let mut out = Vec::with_capacity(av.numel());
    {
        let ad = av.data();
        let bd = bv.data();
        for bi in 0..n {
            for ci in 0..c {
                let abase = (bi * c + ci) * plane;
                let bbase = if broadcast { bi * plane } else { abase };
                for i in 0..plane {
                    let (x, y) = (ad[abase + i], bd[bbase + i]);
                    out.push(match op {
                        EwiseOp::Add => x + y,
                        EwiseOp::Mul => x * y,
                    });
                }
            }
        }
    }
    let out = Tensor::new(av.dims(), out)?;
    let bdims = bv.dims();
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let mut ga = vec![T::zero(); av.numel()];
            let mut gb = vec![T::zero(); bv.numel()];
            let ad = av.data();
            let bd = bv.data();
            for bi in 0..n {
                for ci in 0..c {
                    let abase = (bi * c + ci) * plane;
                    let bbase = if broadcast { bi * plane } else { abase };
                    for i in 0..plane {
                        let gv = gd[abase + i];
                        match op {
                            EwiseOp::Add => {
                                ga[abase + i] = ga[abase + i] + gv;
                                gb[bbase + i] = gb[bbase + i] + gv;
                            }
                            EwiseOp::Mul => {
                                ga[abase + i] = ga[abase + i] + gv * bd[bbase + i];
                                gb[bbase + i] = gb[bbase + i] + gv * ad[abase + i];
                            }
                        }
                    }
                }
            }
            vec![
                (a, Tensor::new([n, c, h, w], ga).expect("dims")),
                (b, Tensor::new(bdims, gb).expect("dims")),
            ]
        }),
    ))
}

pub fn add<T: Elem>(tape: &Tape<T>, a: Var, b: Var) -> Result<Var> {
    ewise(tape, a, b, EwiseOp::Add)
}

pub fn sub<T: Elem>(tape: &Tape<T>, a: Var, b: Var) -> Result<Var> {
    let nb = scale(tape, b, -1.0);
    ewise(tape, a, nb, EwiseOp::Add)
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Elem>(tape: &Tape<T>, inputs: &[Var]) -> Result<Var> {
    ensure_shape!(!inputs.is_empty(), "concat_channels needs at least one input");
    let vals: Vec<Tensor<T>> = inputs.iter().map(|&v| tape.value(v)).collect();
    let [n, _, h, w] = vals[0].dims();
    let mut c_total = 0;
    for v in &vals {
        let [vn, vc, vh, vw] = v.dims();
        ensure_shape!(
            vn == n && vh == h && vw == w,
            "concat_channels: {} incompatible with {}",
            fmt_dims(&v.dims()),
            fmt_dims(&vals[0].dims())
        );
        c_total += vc;
    }
    let plane = h * w;
    let mut out = vec![T::zero(); n * c_total * plane];
    for bi in 0..n {
        let mut off = 0;
        for v in &vals {
            let vc = v.dims()[1];
            let src = &v.data()[bi * vc * plane..(bi + 1) * vc * plane];
            out[(bi * c_total + off) * plane..(bi * c_total + off + vc) * plane]
                .copy_from_slice(src);
            off += vc;
        }
    }
    let out = Tensor::new([n, c_total, h, w], out)?;
    let vars = inputs.to_vec();
    let cs: Vec<usize> = vals.iter().map(|v| v.dims()[1]).collect();
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let mut grads = Vec::with_capacity(vars.len());
            let mut off = 0;
            for (&var, &vc) in vars.iter().zip(&cs) {
                let mut part = vec![T::zero(); n * vc * plane];
                for bi in 0..n {
                    part[bi * vc * plane..(bi + 1) * vc * plane].copy_from_slice(
                        &gd[(bi * c_total + off) * plane..(bi * c_total + off + vc) * plane],
                    );
                }
                grads.push((var, Tensor::new([n, vc, h, w], part).expect("dims")));
                off += vc;
            }
            grads
        }),
    ))
}

/// Copy channels `from..to`.
pub fn slice_channels<T: Elem>(tape: &Tape<T>, x: Var, from: usize, to: usize) -> Result<Var> {
    let v = tape.value(x);
    let [n, c, h, w] = v.dims();
    ensure_shape!(from < to && to <= c, "slice_channels {from}..{to} out of {c} channels");
    let plane = h * w;
    let sc = to - from;
    let mut out = vec![T::zero(); n * sc * plane];
    for bi in 0..n {
        out[bi * sc * plane..(bi + 1) * sc * plane]
            .copy_from_slice(&v.data()[(bi * c + from) * plane..(bi * c + to) * plane]);
    }
    let out = Tensor::new([n, sc, h, w], out)?;
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let mut full = vec![T::zero(); n * c * plane];
            for bi in 0..n {
                full[(bi * c + from) * plane..(bi * c + to) * plane]
                    .copy_from_slice(&g.data()[bi * sc * plane..(bi + 1) * sc * plane]);
            }
            vec![(x, Tensor::new([n, c, h, w], full).expect("dims"))]
        }),
    ))
}

/// Stack along the batch axis.
pub fn concat_batch<T: Elem>(tape: &Tape<T>, inputs: &[Var]) -> Result<Var> {
    ensure_shape!(!inputs.is_empty(), "concat_batch needs at least one input");
    let vals: Vec<Tensor<T>> = inputs.iter().map(|&v| tape.value(v)).collect();
    let [_, c, h, w] = vals[0].dims();
    let mut n_total = 0;
    for v in &vals {
        let [vn, vc, vh, vw] = v.dims();
        ensure_shape!(
            vc == c && vh == h && vw == w,
            "concat_batch: {} incompatible with {}",
            fmt_dims(&v.dims()),
            fmt_dims(&vals[0].dims())
        );
        n_total += vn;
    }
    let mut out = Vec::with_capacity(n_total * c * h * w);
    for v in &vals {
        out.extend_from_slice(v.data());
    }
    let out = Tensor::new([n_total, c, h, w], out)?;
    let vars = inputs.to_vec();
    let ns: Vec<usize> = vals.iter().map(|v| v.dims()[0]).collect();
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let item = c * h * w;
            let mut grads = Vec::with_capacity(vars.len());
            let mut off = 0;
            for (&var, &vn) in vars.iter().zip(&ns) {
                let part = gd[off * item..(off + vn) * item].to_vec();
                grads.push((var, Tensor::new([vn, c, h, w], part).expect("dims")));
                off += vn;
            }
            grads
        }),
    ))
}

/// Copy batch items `from..to`.
pub fn slice_batch<T: Elem>(tape: &Tape<T>, x: Var, from: usize, to: usize) -> Result<Var> {
    let v = tape.value(x);
    let [n, c, h, w] = v.dims();
    ensure_shape!(from < to && to <= n, "slice_batch {from}..{to} out of {n} items");
    let item = c * h * w;
    let data = v.data()[from * item..to * item].to_vec();
    let out = Tensor::new([to - from, c, h, w], data)?;
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let mut full = vec![T::zero(); n * item];
            full[from * item..to * item].copy_from_slice(g.data());
            vec![(x, Tensor::new([n, c, h, w], full).expect("dims"))]
        }),
    ))
}

/// Rearrange (N, C*r*r, H, W) -> (N, C, H*r, W*r).
/// Input channel c*r*r + dy*r + dx lands at output pixel (y*r+dy, x*r+dx).
pub fn pixel_shuffle<T: Elem>(tape: &Tape<T>, x: Var, r: usize) -> Result<Var> {
    let v = tape.value(x);
    let [n, c, h, w] = v.dims();
    ensure_shape!(r >= 1, "pixel_shuffle factor must be >= 1");
    ensure_shape!(
        c % (r * r) == 0,
        "pixel_shuffle: channels {} not divisible by {}",
        c,
        r * r
    );
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); n * oc * oh * ow];
    let vd = v.data();
    for bi in 0..n {
        for co in 0..oc {
            for dy in 0..r {
                for dx in 0..r {
                    let ci = co * r * r + dy * r + dx;
                    for y in 0..h {
                        for xx in 0..w {
                            let src = ((bi * c + ci) * h + y) * w + xx;
                            let dst = ((bi * oc + co) * oh + y * r + dy) * ow + xx * r + dx;
                            out[dst] = vd[src];
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::new([n, oc, oh, ow], out)?;
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let mut gx = vec![T::zero(); n * c * h * w];
            for bi in 0..n {
                for co in 0..oc {
                    for dy in 0..r {
                        for dx in 0..r {
                            let ci = co * r * r + dy * r + dx;
                            for y in 0..h {
                                for xx in 0..w {
                                    let src = ((bi * c + ci) * h + y) * w + xx;
                                    let dst =
                                        ((bi * oc + co) * oh + y * r + dy) * ow + xx * r + dx;
                                    gx[src] = gd[dst];
                                }
                            }
                        }
                    }
                }
            }
            vec![(x, Tensor::new([n, c, h, w], gx).expect("dims"))]
        }),
    ))
}

/// One axis of the bilinear resize: output index -> (lo, hi, weight of hi).
/// Sample positions follow `in = (out + 0.5) / factor - 0.5`, clamped to the
/// edges.
fn resize_axis(out_len: usize, in_len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|o| {
            let pos = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = pos.floor();
            let whi = pos - base;
            let lo = (base as isize).clamp(0, in_len as isize - 1) as usize;
            let hi = (base as isize + 1).clamp(0, in_len as isize - 1) as usize;
            (lo, hi, whi)
        })
        .collect()
}

/// Upsample by an integer factor (2 or 4) with bilinear weights.
pub fn bilinear_resize<T: Elem>(tape: &Tape<T>, x: Var, factor: usize) -> Result<Var> {
    let v = tape.value(x);
    ensure_shape!(factor == 2, "bilinear_resize factor must be 2, got {factor}");
    let [n, c, h, w] = v.dims();
    let (oh, ow) = (h * factor, w * factor);
    let ys = resize_axis(oh, h, factor);
    let xs = resize_axis(ow, w, factor);
    let mut out = vec![T::zero(); n * c * oh * ow];
    let vd = v.data();
    for bc in 0..n * c {
        let src = &vd[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * oh * ow..(bc + 1) * oh * ow];
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                let v00 = src[y0 * w + x0].to_f64();
                let v01 = src[y0 * w + x1].to_f64();
                let v10 = src[y1 * w + x0].to_f64();
                let v11 = src[y1 * w + x1].to_f64();
                let top = v00 * (1.0 - wx) + v01 * wx;
                let bot = v10 * (1.0 - wx) + v11 * wx;
                dst[oy * ow + ox] = T::from_f64(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    let out = Tensor::new([n, c, oh, ow], out)?;
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let mut gx = vec![T::zero(); n * c * h * w];
            for bc in 0..n * c {
                let src = &gd[bc * oh * ow..(bc + 1) * oh * ow];
                let dst = &mut gx[bc * h * w..(bc + 1) * h * w];
                for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                        let gv = src[oy * ow + ox].to_f64();
                        let w00 = T::from_f64(gv * (1.0 - wy) * (1.0 - wx));
                        let w01 = T::from_f64(gv * (1.0 - wy) * wx);
                        let w10 = T::from_f64(gv * wy * (1.0 - wx));
                        let w11 = T::from_f64(gv * wy * wx);
                        dst[y0 * w + x0] = dst[y0 * w + x0] + w00;
                        dst[y0 * w + x1] = dst[y0 * w + x1] + w01;
                        dst[y1 * w + x0] = dst[y1 * w + x0] + w10;
                        dst[y1 * w + x1] = dst[y1 * w + x1] + w11;
                    }
                }
            }
            vec![(x, Tensor::new([n, c, h, w], gx).expect("dims"))]
        }),
    ))
}

/// Sum across channels, keeping a singleton channel axis.
pub fn sum_channels<T: Elem>(tape: &Tape<T>, x: Var) -> Var {
    let v = tape.value(x);
    let [n, c, h, w] = v.dims();
    let plane = h * w;
    let mut out = vec![T::zero(); n * plane];
    let vd = v.data();
    for bi in 0..n {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                out[bi * plane + i] = out[bi * plane + i] + vd[base + i];
            }
        }
    }
    let out = Tensor::new([n, 1, h, w], out).expect("dims");
    tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gd = g.data();
            let mut gx = vec![T::zero(); n * c * plane];
            for bi in 0..n {
                for ci in 0..c {
                    let base = (bi * c + ci) * plane;
                    gx[base..base + plane].copy_from_slice(&gd[bi * plane..(bi + 1) * plane]);
                }
            }
            vec![(x, Tensor::new([n, c, h, w], gx).expect("dims"))]
        }),
    )
}

/// Sum every element into a (1, 1, 1, 1) scalar.
pub fn reduce_sum_all<T: Elem>(tape: &Tape<T>, x: Var) -> Var {
    let v = tape.value(x);
    let total: T = v.data().iter().copied().sum();
    let dims = v.dims();
    tape.push_op(
        Tensor::scalar(total),
        Box::new(move |g: &Tensor<T>| {
            let gv = g.data()[0];
            vec![(x, Tensor::full(dims, gv))]
        }),
    )
}

/// 2d convolution via im2col + GEMM. `weight` is (OC, IC, K, K); `bias`, if
/// given, is (1, OC, 1, 1).
pub fn conv2d<T: Elem>(
    tape: &Tape<T>,
    input: Var,
    weight: Var,
    bias: Option<Var>,
    spec: &ConvSpec,
) -> Result<Var> {
    spec.validate()?;
    let x = tape.value(input);
    let w = tape.value(weight);
    let [n, ic, h, wd] = x.dims();
    ensure_shape!(
        ic == spec.in_channels,
        "conv2d: input has {} channels, spec expects {}",
        ic,
        spec.in_channels
    );
    ensure_shape!(
        w.dims() == spec.weight_dims(),
        "conv2d: weight {} does not match spec {}",
        fmt_dims(&w.dims()),
        fmt_dims(&spec.weight_dims())
    );
    let bias_val = bias.map(|b| tape.value(b));
    if let Some(bv) = &bias_val {
        ensure_shape!(
            bv.dims() == [1, spec.out_channels, 1, 1],
            "conv2d: bias {} must be (1, {}, 1, 1)",
            fmt_dims(&bv.dims()),
            spec.out_channels
        );
    }
    ensure_shape!(
        bias.is_some() == spec.bias,
        "conv2d: spec bias flag is {} but bias parameter was {}",
        spec.bias,
        if bias.is_some() { "given" } else { "omitted" }
    );
    let oh = conv_out_len(h, spec.kernel_h, spec.stride, spec.pad)?;
    let ow = conv_out_len(wd, spec.kernel_w, spec.stride, spec.pad)?;
    let g = ConvGeom {
        ic,
        h,
        w: wd,
        oc: spec.out_channels,
        kh: spec.kernel_h,
        kw: spec.kernel_w,
        stride: spec.stride,
        pad: spec.pad,
        oh,
        ow,
    };
    let rows = g.rows();
    let ncols = g.cols();
    let mut out = vec![T::zero(); n * g.oc * ncols];
    let mut cols = vec![T::zero(); rows * ncols];
    for b in 0..n {
        im2col(&x, b, &g, &mut cols);
        gemm_strided(
            g.oc,
            rows,
            ncols,
            T::one(),
            w.data(),
            rows as isize,
            1,
            &cols,
            ncols as isize,
            1,
            T::zero(),
            &mut out[b * g.oc * ncols..(b + 1) * g.oc * ncols],
            ncols as isize,
            1,
        );
        if let Some(bv) = &bias_val {
            let ob = &mut out[b * g.oc * ncols..(b + 1) * g.oc * ncols];
            for oc in 0..g.oc {
                let bval = bv.data()[oc];
                for v in &mut ob[oc * ncols..(oc + 1) * ncols] {
                    *v = *v + bval;
                }
            }
        }
    }
    let out = Tensor::new([n, g.oc, oh, ow], out)?;
    let has_bias = bias;
    Ok(tape.push_op(
        out,
        Box::new(move |gout: &Tensor<T>| {
            let gd = gout.data();
            let mut cols = vec![T::zero(); rows * ncols];
            let mut gcols = vec![T::zero(); rows * ncols];
            let mut gw = vec![T::zero(); w.numel()];
            let mut gx = vec![T::zero(); x.numel()];
            let mut gb = vec![T::zero(); g.oc];
            for b in 0..n {
                let gout_b = &gd[b * g.oc * ncols..(b + 1) * g.oc * ncols];
                im2col(&x, b, &g, &mut cols);
                // gw += gout_b @ cols^T
                gemm_strided(
                    g.oc,
                    ncols,
                    rows,
                    T::one(),
                    gout_b,
                    ncols as isize,
                    1,
                    &cols,
                    1,
                    ncols as isize,
                    T::one(),
                    &mut gw,
                    rows as isize,
                    1,
                );
                // gcols = W^T @ gout_b
                gemm_strided(
                    rows,
                    g.oc,
                    ncols,
                    T::one(),
                    w.data(),
                    1,
                    rows as isize,
                    gout_b,
                    ncols as isize,
                    1,
                    T::zero(),
                    &mut gcols,
                    ncols as isize,
                    1,
                );
                col2im_add(&gcols, b, &g, &mut gx);
                if has_bias.is_some() {
                    for oc in 0..g.oc {
                        for j in 0..ncols {
                            gb[oc] = gb[oc] + gout_b[oc * ncols + j];
                        }
                    }
                }
            }
            let mut grads = vec![
                (input, Tensor::new(x.dims(), gx).expect("dims")),
                (weight, Tensor::new(w.dims(), gw).expect("dims")),
            ];
            if let Some(bvar) = has_bias {
                grads.push((bvar, Tensor::new([1, g.oc, 1, 1], gb).expect("dims")));
            }
            grads
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(dims, data).unwrap()
    }

    #[test]
    fn leaky_relu_values_and_grad() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 1, 3], vec![-2.0, 0.0, 3.0]));
        let y = leaky_relu(&tape, x, 0.1);
        assert_eq!(tape.value(y).data(), &[-0.2, 0.0, 3.0]);
        let s = reduce_sum_all(&tape, y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.1, 0.1, 1.0]);
    }

    #[test]
    fn sigmoid_values() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 1, 3], vec![0.0, 100.0, -100.0]));
        let y = sigmoid(&tape, x);
        let v = tape.value(y);
        assert_eq!(v.data()[0], 0.5);
        assert!((v.data()[1] - 1.0).abs() < 1e-12);
        assert!(v.data()[2].abs() < 1e-12);
        assert!(v.all_finite());
    }

    #[test]
    fn ewise_broadcast_mul_and_grads() {
        let tape = Tape::new();
        let a = tape.leaf(t([1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let m = tape.leaf(t([1, 1, 1, 2], vec![10.0, 0.5]));
        let y = ewise(&tape, a, m, EwiseOp::Mul).unwrap();
        assert_eq!(tape.value(y).data(), &[10.0, 1.0, 30.0, 2.0]);
        let s = reduce_sum_all(&tape, y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[10.0, 0.5, 10.0, 0.5]);
        // dL/dm sums over the broadcast channel axis: [1+3, 2+4]
        assert_eq!(grads.get(m).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn ewise_rejects_mismatched_dims() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::zeros([1, 2, 2, 2]));
        let b = tape.leaf(Tensor::zeros([1, 2, 2, 3]));
        assert!(ewise(&tape, a, b, EwiseOp::Add).is_err());
    }

    #[test]
    fn concat_slice_channels_roundtrip() {
        let tape = Tape::new();
        let a = tape.leaf(t([2, 1, 1, 2], vec![1.0, 2.0, 5.0, 6.0]));
        let b = tape.leaf(t([2, 2, 1, 2], vec![3.0, 4.0, 30.0, 40.0, 7.0, 8.0, 70.0, 80.0]));
        let cat = concat_channels(&tape, &[a, b]).unwrap();
        assert_eq!(tape.dims(cat), [2, 3, 1, 2]);
        let back_a = slice_channels(&tape, cat, 0, 1).unwrap();
        let back_b = slice_channels(&tape, cat, 1, 3).unwrap();
        assert_eq!(tape.value(back_a).data(), tape.value(a).data());
        assert_eq!(tape.value(back_b).data(), tape.value(b).data());
    }

    #[test]
    fn concat_batch_roundtrip_and_grad_split() {
        let tape = Tape::new();
        let a = tape.leaf(t([1, 1, 1, 2], vec![1.0, 2.0]));
        let b = tape.leaf(t([2, 1, 1, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let cat = concat_batch(&tape, &[a, b]).unwrap();
        assert_eq!(tape.dims(cat), [3, 1, 1, 2]);
        let sl = slice_batch(&tape, cat, 1, 3).unwrap();
        assert_eq!(tape.value(sl).data(), &[3.0, 4.0, 5.0, 6.0]);
        let s = reduce_sum_all(&tape, sl);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn pixel_shuffle_2x_hand_example() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]));
        let y = pixel_shuffle(&tape, x, 2).unwrap();
        assert_eq!(tape.dims(y), [1, 1, 2, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 6, 2, 2]));
        assert!(pixel_shuffle(&tape, x, 2).is_err());
    }

    #[test]
    fn pixel_shuffle_grad_is_inverse_permutation() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]));
        let y = pixel_shuffle(&tape, x, 2).unwrap();
        let seed = t([1, 1, 2, 2], vec![10.0, 20.0, 30.0, 40.0]);
        let grads = tape.backward_seeded(y, &seed).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn bilinear_resize_2x_known_row() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 1, 2], vec![0.0, 2.0]));
        let y = bilinear_resize(&tape, x, 2).unwrap();
        assert_eq!(tape.dims(y), [1, 1, 2, 4]);
        let v = tape.value(y);
        for row in 0..2 {
            let r = &v.data()[row * 4..(row + 1) * 4];
            assert_eq!(r, &[0.0, 0.5, 1.5, 2.0]);
        }
    }

    #[test]
    fn bilinear_resize_preserves_constants() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full([2, 3, 3, 5], 0.7));
        let y2 = bilinear_resize(&tape, x, 2).unwrap();
        let y = bilinear_resize(&tape, y2, 2).unwrap();
        let v = tape.value(y);
        assert!(v.data().iter().all(|&d| (d - 0.7f64).abs() < 1e-12));
    }

    #[test]
    fn sum_channels_values() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 3, 1, 2], vec![1.0, 2.0, 10.0, 20.0, 100.0, 200.0]));
        let y = sum_channels(&tape, x);
        assert_eq!(tape.dims(y), [1, 1, 1, 2]);
        assert_eq!(tape.value(y).data(), &[111.0, 222.0]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let mut wdata = vec![0.0; 9];
        wdata[4] = 1.0;
        let w = tape.leaf(t([1, 1, 3, 3], wdata));
        let spec = ConvSpec::new(1, 1, 3).no_bias();
        let y = conv2d(&tape, x, w, None, &spec).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv2d_sum_kernel_with_zero_padding() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 3, 3], (1..=9).map(|v| v as f64).collect()));
        let w = tape.leaf(Tensor::full([1, 1, 3, 3], 1.0));
        let spec = ConvSpec::new(1, 1, 3).no_bias();
        let y = conv2d(&tape, x, w, None, &spec).unwrap();
        // Center output sums the whole input; corners only see 4 taps.
        let v = tape.value(y);
        assert_eq!(v.at(0, 0, 1, 1), 45.0);
        assert_eq!(v.at(0, 0, 0, 0), 1.0 + 2.0 + 4.0 + 5.0);
        assert_eq!(v.at(0, 0, 2, 2), 5.0 + 6.0 + 8.0 + 9.0);
    }

    #[test]
    fn conv2d_bias_and_multichannel() {
        let tape = Tape::new();
        let x = tape.leaf(t([1, 2, 1, 1], vec![3.0, 5.0]));
        // 1x1 conv: out = 2*c0 + 10*c1 + bias
        let w = tape.leaf(t([1, 2, 1, 1], vec![2.0, 10.0]));
        let b = tape.leaf(t([1, 1, 1, 1], vec![0.5]));
        let spec = ConvSpec::new(2, 1, 1);
        let y = conv2d(&tape, x, w, Some(b), &spec).unwrap();
        assert_eq!(tape.value(y).data(), &[56.5]);
    }

    #[test]
    fn conv2d_stride_two_downsamples() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::full([1, 1, 4, 4], 1.0));
        let w = tape.leaf(Tensor::full([1, 1, 3, 3], 1.0));
        let spec = ConvSpec::new(1, 1, 3).with_stride(2).with_pad(1).no_bias();
        let y = conv2d(&tape, x, w, None, &spec).unwrap();
        assert_eq!(tape.dims(y), [1, 1, 2, 2]);
        let v = tape.value(y);
        // (0,0) window covers rows/cols -1..1 -> 4 valid taps
        assert_eq!(v.at(0, 0, 0, 0), 4.0);
        // (1,1) window covers rows/cols 1..3 -> all 9 valid
        assert_eq!(v.at(0, 0, 1, 1), 9.0);
    }

    #[test]
    fn conv2d_rejects_illegal_geometry() {
        // Kernel larger than the padded input has no valid output position.
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 1, 2, 2]));
        let w = tape.leaf(Tensor::zeros([1, 1, 5, 5]));
        let spec = ConvSpec::new(1, 1, 5).with_pad(1).no_bias();
        assert!(conv2d(&tape, x, w, None, &spec).is_err());

        // Odd sizes under stride two are fine: floor arithmetic, 5x5 -> 3x3.
        let x = tape.leaf(Tensor::zeros([1, 1, 5, 5]));
        let w = tape.leaf(Tensor::zeros([1, 1, 3, 3]));
        let spec = ConvSpec::new(1, 1, 3).with_stride(2).with_pad(1).no_bias();
        let y = conv2d(&tape, x, w, None, &spec).unwrap();
        assert_eq!(tape.dims(y), [1, 1, 3, 3]);
    }

    #[test]
    fn conv2d_grad_matches_hand_result() {
        // y = sum(conv(x, w)) with full-ones 1x1 weight: dy/dx = w, dy/dw = sum x.
        let tape = Tape::new();
        let x = tape.leaf(t([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let w = tape.leaf(t([1, 1, 1, 1], vec![3.0]));
        let spec = ConvSpec::new(1, 1, 1).with_pad(0).no_bias();
        let y = conv2d(&tape, x, w, None, &spec).unwrap();
        let s = reduce_sum_all(&tape, y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(grads.get(w).unwrap().data(), &[10.0]);
    }
}
