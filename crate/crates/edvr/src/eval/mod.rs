//! Quality metrics and inference-time plumbing.

pub mod infer;
pub mod metrics;

pub use infer::{
    crop_top_left, gather_window, infer_sequence, reflect_pad_to_multiple, restore_window,
    restore_window_with_diagnostics, self_ensemble_infer, two_stage_infer, window_indices,
    DiagnosticsDump,
};
pub use metrics::{psnr, rgb_to_y, ssim, ssim_mode, EvalMode, MetricReport};
