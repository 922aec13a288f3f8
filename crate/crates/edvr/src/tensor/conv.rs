use super::{Elem, Tensor};
use crate::error::{shape_bail, Result};

/// Output length of one spatial axis: floor((input + 2*pad - kernel)/stride) + 1,
/// the usual convolution arithmetic (3x3 stride-2 pad-1 halves even sizes).
pub(crate) fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        shape_bail!(
            "conv kernel does not fit: input {input}, kernel {kernel}, stride {stride}, pad {pad}"
        );
    }
    Ok((padded - kernel) / stride + 1)
}

/// Fully resolved conv geometry for one call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub ic: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.ic * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfold one batch item into a (ic*k*k) x (oh*ow) column matrix.
/// Row index is (ic*k + ky)*k + kx; out-of-border taps are zero.
pub(crate) fn im2col<T: Elem>(input: &Tensor<T>, b: usize, g: &ConvGeom, cols: &mut [T]) {
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let data = input.data();
    let plane = g.h * g.w;
    let base_b = b * g.ic * plane;
    let ohw = g.cols();
    for ic in 0..g.ic {
        let base_c = base_b + ic * plane;
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ic * g.kh + ky) * g.kw + kx;
                let out_row = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut out_row[oy * g.ow..(oy + 1) * g.ow];
                    if y < 0 || y >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = base_c + y as usize * g.w;
                    if g.stride == 1 {
                        // x = ox + kx - pad; copy the in-range span, zero the rest.
                        let shift = kx as isize - g.pad as isize;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((g.w as isize - shift).min(g.ow as isize)).max(0) as usize;
                        dst[..lo.min(g.ow)].fill(T::zero());
                        if lo < hi {
                            let src_lo = (lo as isize + shift) as usize;
                            dst[lo..hi]
                                .copy_from_slice(&data[src_row + src_lo..src_row + src_lo + (hi - lo)]);
                        }
                        dst[hi.max(lo)..].fill(T::zero());
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = (ox * g.stride + kx) as isize - g.pad as isize;
                            *d = if x < 0 || x >= g.w as isize {
                                T::zero()
                            } else {
                                data[src_row + x as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-add a column matrix back onto the input
/// gradient for batch item `b`. Iteration order is fixed, so results are
/// deterministic.
pub(crate) fn col2im_add<T: Elem>(cols: &[T], b: usize, g: &ConvGeom, grad_input: &mut [T]) {
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let plane = g.h * g.w;
    let base_b = b * g.ic * plane;
    let ohw = g.cols();
    for ic in 0..g.ic {
        let base_c = base_b + ic * plane;
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ic * g.kh + ky) * g.kw + kx;
                let src_row = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let dst_row = base_c + y as usize * g.w;
                    for ox in 0..g.ow {
                        let x = (ox * g.stride + kx) as isize - g.pad as isize;
                        if x < 0 || x >= g.w as isize {
                            continue;
                        }
                        grad_input[dst_row + x as usize] =
                            grad_input[dst_row + x as usize] + src_row[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

/// Row/col-strided GEMM over slices with bounds assertions. All call sites
/// use non-negative strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided<T: Elem>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    rsa: isize,
    csa: isize,
    b: &[T],
    rsb: isize,
    csb: isize,
    beta: T,
    c: &mut [T],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize
    };
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
    assert!(span(m, k, rsa, csa) < a.len());
    assert!(span(k, n, rsb, csb) < b.len());
    assert!(span(m, n, rsc, csc) < c.len());
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_len_matches_hand_count() {
        assert_eq!(conv_out_len(5, 3, 1, 1).unwrap(), 5);
        assert_eq!(conv_out_len(8, 3, 2, 1).unwrap(), 4);
        assert_eq!(conv_out_len(32, 3, 2, 1).unwrap(), 16);
        assert_eq!(conv_out_len(5, 3, 2, 1).unwrap(), 3);
        assert_eq!(conv_out_len(4, 1, 1, 0).unwrap(), 4);
        assert!(conv_out_len(1, 3, 1, 0).is_err());
    }

    #[test]
    fn im2col_3x3_same_pad_center_tap() {
        let g = ConvGeom { ic: 1, h: 3, w: 3, oc: 1, kh: 3, kw: 3, stride: 1, pad: 1, oh: 3, ow: 3 };
        let input = Tensor::new([1, 1, 3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let mut cols = vec![0.0; g.rows() * g.cols()];
        im2col(&input, 0, &g, &mut cols);
        // Center tap (ky=1, kx=1) reproduces the input itself.
        let center = 1 * 3 + 1;
        assert_eq!(&cols[center * 9..center * 9 + 9], input.data());
        // Top-left tap at output (0,0) reads input(-1,-1) -> 0.
        assert_eq!(cols[0], 0.0);
        // Top-left tap at output (2,2) reads input(1,1) = 4.
        assert_eq!(cols[8], 4.0);
    }

    #[test]
    fn col2im_is_transpose_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = ConvGeom { ic: 2, h: 5, w: 4, oc: 1, kh: 3, kw: 3, stride: 2, pad: 1, oh: 3, ow: 2 };
        let x = Tensor::new(
            [1, 2, 5, 4],
            (0..40).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let c: Vec<f64> = (0..g.rows() * g.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, 0, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; 40];
        col2im_add(&c, 0, &g, &mut back);
        let rhs: f64 = back.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
