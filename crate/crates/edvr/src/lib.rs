//! Multi-frame video restoration on the CPU.
//!
//! The crate is built in layers:
//!
//! * [`tensor`] - rank-4 tensors, a reverse-mode autograd tape and the dense
//!   ops (convolution, resampling, attention plumbing) everything else uses.
//! * [`deform`] - modulated deformable convolution with full gradients.
//! * [`model`] - the restoration network: feature pyramid, pyramid-cascading
//!   deformable alignment, temporal/spatial attention fusion, reconstruction.
//! * [`train`] - Charbonnier loss, Adam, augmentation and a synthetic clip
//!   generator with known ground-truth motion.
//! * [`eval`] - PSNR/SSIM, self-ensemble and two-stage inference.
//! * [`io`] / [`cli`] - PNG frame folders, binary checkpoints, run configs
//!   and the `edvr` binary.

pub mod cli;
pub mod deform;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{EdvrError, Result};
