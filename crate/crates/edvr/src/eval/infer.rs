//! Inference plumbing: reflective padding, per-frame windowed restoration
//! over a sequence, four-way self-ensemble, and the two-stage cascade.

use crate::error::{config_bail, ensure_shape, shape_bail, Result};
use crate::model::{EdvrNet, Forward};
use crate::tensor::{Elem, ParamStore, Tape, Tensor};
use crate::train::apply_dihedral;

/// Pad H and W up to the next multiple by mirroring rows/columns into the
/// bottom/right band (edge pixel included, so any pad up to the image size
/// works). Outputs are cropped back after restoration.
pub fn reflect_pad_to_multiple<T: Elem>(t: &Tensor<T>, multiple: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = t.dims();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if ph == h && pw == w {
        return Ok(t.clone());
    }
    ensure_shape!(
        ph - h <= h && pw - w <= w,
        "frame {h}x{w} too small to mirror-pad to a multiple of {multiple}"
    );
    Ok(Tensor::from_fn([n, c, ph, pw], |b, ch, y, x| {
        let sy = if y < h { y } else { 2 * h - 1 - y };
        let sx = if x < w { x } else { 2 * w - 1 - x };
        t.at(b, ch, sy, sx)
    }))
}

pub fn crop_top_left<T: Elem>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let [n, c, _, _] = t.dims();
    Tensor::from_fn([n, c, h, w], |b, ch, y, x| t.at(b, ch, y, x))
}

/// Extracted diagnostics from one restoration pass, at padded resolution:
/// per-frame temporal attention maps (when the model fuses with attention)
/// and first-level alignment offset fields.
pub struct DiagnosticsDump<T: Elem> {
    pub attention: Option<Tensor<T>>,
    pub l1_offsets: Tensor<T>,
}

fn forward_window<T: Elem>(
    net: &EdvrNet,
    store: &ParamStore<T>,
    window: &Tensor<T>,
    want_diagnostics: bool,
) -> Result<(Tensor<T>, Option<DiagnosticsDump<T>>)> {
    let [rows, c, h, w] = window.dims();
    ensure_shape!(
        rows == net.config.n_frames,
        "window has {rows} frame(s), model wants {}",
        net.config.n_frames
    );
    ensure_shape!(c == 3, "window must be RGB, got {c} channel(s)");
    let padded = reflect_pad_to_multiple(window, net.config.spatial_multiple())?;
    let tape: Tape<T> = Tape::new();
    let fx = Forward::new(&tape, store);
    let x = tape.leaf(padded);
    let (out, diag) = net.forward(&fx, x)?;
    let out = tape.value(out);
    let dump = want_diagnostics.then(|| DiagnosticsDump {
        attention: diag.attention.map(|a| tape.value(a)),
        l1_offsets: tape.value(diag.l1_offsets),
    });
    let s = net.config.scale;
    Ok((crop_top_left(&out, h * s, w * s), dump))
}

/// Restore the reference frame of one (F, 3, h, w) window.
pub fn restore_window<T: Elem>(
    net: &EdvrNet,
    store: &ParamStore<T>,
    window: &Tensor<T>,
) -> Result<Tensor<T>> {
    forward_window(net, store, window, false).map(|(out, _)| out)
}

/// As [`restore_window`], also returning attention/offset diagnostics.
pub fn restore_window_with_diagnostics<T: Elem>(
    net: &EdvrNet,
    store: &ParamStore<T>,
    window: &Tensor<T>,
) -> Result<(Tensor<T>, DiagnosticsDump<T>)> {
    let (out, dump) = forward_window(net, store, window, true)?;
    Ok((out, dump.expect("diagnostics requested")))
}

/// Restore under the four self-inverse transforms {identity, horizontal
/// flip, 180 degree rotation, flip + rotation}, undo each, and average. The
/// average is the exact elementwise mean, paired so that four bitwise-equal
/// outputs reproduce themselves.
pub fn self_ensemble_infer<T: Elem>(
    net: &EdvrNet,
    store: &ParamStore<T>,
    window: &Tensor<T>,
) -> Result<Tensor<T>> {
    let variants = [(false, 0usize), (true, 0), (false, 2), (true, 2)];
    let mut outs = Vec::with_capacity(variants.len());
    for (flip, quarter_turns) in variants {
        let tin = apply_dihedral(window, flip, quarter_turns);
        let out = restore_window(net, store, &tin)?;
        // These four transforms are involutions, so applying the same one
        // again restores the original orientation.
        outs.push(apply_dihedral(&out, flip, quarter_turns));
    }
    let quarter = T::from_f64(0.25);
    let sum = outs[0].add(&outs[1])?.add(&outs[2].add(&outs[3])?)?;
    Ok(sum.map(|v| v * quarter))
}

/// Clamped window indices around frame `i`: replicate-boundary, so every
/// frame gets a full window.
pub fn window_indices(i: usize, len: usize, window: usize) -> Vec<usize> {
    let half = window as isize / 2;
    (0..window as isize)
        .map(|j| (i as isize + j - half).clamp(0, len as isize - 1) as usize)
        .collect()
}

/// Stack the selected frames into one frame-major (F, C, h, w) window.
pub fn gather_window<T: Elem>(frames: &[Tensor<T>], indices: &[usize]) -> Result<Tensor<T>> {
    let [_, c, h, w] = frames[0].dims();
    let mut data = Vec::with_capacity(indices.len() * c * h * w);
    for &i in indices {
        data.extend_from_slice(frames[i].data());
    }
    Tensor::new([indices.len(), c, h, w], data)
}

/// Restore every frame of a sequence of (1, 3, h, w) frames; edge frames use
/// replicated-boundary windows.
pub fn infer_sequence<T: Elem>(
    net: &EdvrNet,
    store: &ParamStore<T>,
    frames: &[Tensor<T>],
    ensemble: bool,
) -> Result<Vec<Tensor<T>>> {
    ensure_shape!(!frames.is_empty(), "no frames to restore");
    let dims = frames[0].dims();
    ensure_shape!(dims[0] == 1 && dims[1] == 3, "frames must be (1, 3, h, w), got {dims:?}");
    for f in frames {
        if f.dims() != dims {
            shape_bail!("frame size changed mid-sequence: {:?} vs {dims:?}", f.dims());
        }
    }
    let mut outs = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let window = gather_window(frames, &window_indices(i, frames.len(), net.config.n_frames))?;
        outs.push(if ensemble {
            self_ensemble_infer(net, store, &window)?
        } else {
            restore_window(net, store, &window)?
        });
    }
    Ok(outs)
}

/// Restore with a cascade: stage 1 over the raw frames, then a stage-2 model
/// (scale 1, high-resolution input) refining windows of stage-1 outputs.
pub fn two_stage_infer<T: Elem>(
    stage1: (&EdvrNet, &ParamStore<T>),
    stage2: (&EdvrNet, &ParamStore<T>),
    frames: &[Tensor<T>],
    ensemble: bool,
) -> Result<Vec<Tensor<T>>> {
    if stage2.0.config.scale != 1 || !stage2.0.config.hr_input {
        config_bail!(
            "stage-2 model must have scale 1 and hr_input (got scale {}, hr_input {})",
            stage2.0.config.scale,
            stage2.0.config.hr_input
        );
    }
    let mid = infer_sequence(stage1.0, stage1.1, frames, ensemble)?;
    infer_sequence(stage2.0, stage2.1, &mid, ensemble)
}
