//! Rank-4 tensors (NCHW, row-major) and the autograd tape.

mod conv;
pub mod ops;
mod param;
mod tape;

pub use ops::{Act, EwiseOp};
pub use param::{Parameter, ParamStore};
pub use tape::{Gradients, Tape, Var};

pub(crate) use conv::gemm_strided;

use std::sync::Arc;

use crate::error::{ensure_shape, Result};

/// Scalar element type. The model trains in `f32`; gradient checks run the
/// same code in `f64`.
pub trait Elem:
    num_traits::Float
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C := alpha * A @ B + beta * C` over raw row/col strides.
    ///
    /// # Safety
    /// Pointers must cover `m x k`, `k x n` and `m x n` elements under the
    /// given strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Elem for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Elem for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense rank-4 tensor in NCHW layout. Cloning is cheap (shared storage).
#[derive(Clone)]
pub struct Tensor<T: Elem> {
    dims: [usize; 4],
    data: Arc<Vec<T>>,
}

pub(crate) fn fmt_dims(dims: &[usize]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("({})", parts.join(", "))
}

impl<T: Elem> Tensor<T> {
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let numel: usize = dims.iter().product();
        ensure_shape!(
            dims.iter().all(|&d| d > 0),
            "tensor dims must be positive, got {}",
            fmt_dims(&dims)
        );
        ensure_shape!(
            data.len() == numel,
            "tensor data length {} does not match dims {}",
            data.len(),
            fmt_dims(&dims)
        );
        Ok(Self { dims, data: Arc::new(data) })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let numel = dims.iter().product();
        Self { dims, data: Arc::new(vec![T::zero(); numel]) }
    }

    pub fn full(dims: [usize; 4], v: T) -> Self {
        let numel = dims.iter().product();
        Self { dims, data: Arc::new(vec![v; numel]) }
    }

    /// Single-element tensor of shape (1, 1, 1, 1).
    pub fn scalar(v: T) -> Self {
        Self { dims: [1, 1, 1, 1], data: Arc::new(vec![v]) }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        Self { dims, data: Arc::new(data) }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.as_ref().clone()
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(b < self.dims[0] && c < self.dims[1] && y < self.dims[2] && x < self.dims[3]);
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(b, c, y, x)]
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        Self { dims: self.dims, data: Arc::new(data) }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise sum; shapes must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_shape!(
            self.dims == other.dims,
            "add: {} vs {}",
            fmt_dims(&self.dims),
            fmt_dims(&other.dims)
        );
        let data: Vec<T> =
            self.data.iter().zip(other.data.iter()).map(|(&a, &b)| a + b).collect();
        Ok(Self { dims: self.dims, data: Arc::new(data) })
    }

    pub fn convert<U: Elem>(&self) -> Tensor<U> {
        let data: Vec<U> = self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect();
        Tensor { dims: self.dims, data: Arc::new(data) }
    }

    /// Replace one element, copying storage if shared.
    pub fn set(&mut self, idx: usize, v: T) {
        Arc::make_mut(&mut self.data)[idx] = v;
    }
}

impl<T: Elem> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{} x{}", fmt_dims(&self.dims), std::any::type_name::<T>())
    }
}

/// Static geometry of a 2d convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" padding, with bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            pad: kernel / 2,
            bias: true,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn validate(&self) -> Result<()> {
        ensure_shape!(
            self.in_channels > 0 && self.out_channels > 0 && self.kernel_h > 0 && self.kernel_w > 0,
            "conv spec fields must be positive: {self:?}"
        );
        ensure_shape!(
            self.stride == 1 || self.stride == 2,
            "conv stride must be 1 or 2, got {}",
            self.stride
        );
        ensure_shape!(
            self.kernel_h % 2 == 1 && self.kernel_w % 2 == 1,
            "conv kernels must be odd for same-padding paths, got {}x{}",
            self.kernel_h,
            self.kernel_w
        );
        Ok(())
    }
}
