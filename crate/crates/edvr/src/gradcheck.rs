//! Central finite-difference verification for every gradient path.
//!
//! Each check builds a scalar-valued graph twice: once on the tape for
//! analytic gradients, then repeatedly with single-coordinate perturbations
//! for the numerical estimate. Checks run in f64; step size and tolerances
//! assume that. Activation kinks (leaky ReLU at 0, bilinear sampling at
//! integer coordinates) are kept away from the probe points by construction:
//! offset heads stay zero-weight with fractional biases, so deformable
//! sampling positions sit mid-cell where the sampler is smooth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deform::deform_conv2d;
use crate::error::Result;
use crate::model::{
    EdvrConfig, EdvrNet, Forward, PcdBlock, PredeblurBlock, PyramidConvs, TsaBlock,
};
use crate::tensor::{ops, ConvSpec, ParamStore, Parameter, Tape, Tensor, Var};
use crate::train::loss::{charbonnier, LossMode};

/// Central-difference steps, one per graph depth. Single-op graphs have no
/// internal kinks (activation probes park their inputs, deformable offsets
/// sit mid-cell), so only truncation (~h^2) and roundoff (~eps/h) matter and
/// 1e-5 balances them near 1e-9. Deeper graphs add a hazard the step must
/// dodge: a bias probe shifts whole feature maps, and with thousands of
/// leaky-ReLU pre-activations the odds that one sits inside the probe
/// interval grow with both the step and the map sizes. Blocks (8x8 maps) are
/// safe at 1e-6; the full model (32x32 output tail) needs 1e-7, which its
/// looser 1e-4 tolerance absorbs since the roundoff floor sits near 1e-6.
const FD_STEP_OP: f64 = 1e-5;
const FD_STEP_BLOCK: f64 = 1e-6;
const FD_STEP_MODEL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tolerance
    }
}

/// One line per check: name, worst relative error, tolerance, verdict.
pub fn format_report(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<24} max_rel_err {:.3e}  tol {:.0e}  {}\n",
            r.name,
            r.max_rel_err,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed == 0 {
        out.push_str("all checks passed\n");
    } else {
        out.push_str(&format!("{failed} check(s) FAILED\n"));
    }
    out
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// A differentiable graph from (parameters, one input leaf) to a scalar.
type Graph<'g> = dyn Fn(&Forward<f64>, Var) -> Result<Var> + 'g;

struct Sweep {
    per_param: Vec<(String, f64, usize)>,
    input: (f64, usize),
}

/// Analytic gradients once, then central differences on sampled coordinates
/// of every parameter and of the input leaf.
fn fd_sweep(
    store: &ParamStore<f64>,
    input: &Tensor<f64>,
    graph: &Graph,
    samples: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Sweep> {
    let tape = Tape::new();
    let fx = Forward::new(&tape, store);
    let x = tape.leaf(input.clone());
    let loss = graph(&fx, x)?;
    let grads = tape.backward(loss)?;
    let input_grad = grads.get(x).cloned();
    let param_grads: Vec<(String, Option<Tensor<f64>>)> = fx
        .used_params()
        .into_iter()
        .map(|(name, var)| (name, grads.get(var).cloned()))
        .collect();

    let eval = |store: &ParamStore<f64>, input: &Tensor<f64>| -> Result<f64> {
        let tape = Tape::new();
        let fx = Forward::new(&tape, store);
        let x = tape.leaf(input.clone());
        let loss = graph(&fx, x)?;
        Ok(loss_value(&tape, loss))
    };

    let mut per_param = Vec::new();
    let mut work = store.clone();
    for (name, grad) in &param_grads {
        let numel = store.get(name)?.value.numel();
        let idx = rand::seq::index::sample(rng, numel, samples.min(numel));
        let mut worst = 0.0f64;
        for i in idx {
            let x0 = store.get(name)?.value.data()[i];
            let h = step * x0.abs().max(1.0);
            work.get_mut(name)?.value.set(i, x0 + h);
            let fp = eval(&work, input)?;
            work.get_mut(name)?.value.set(i, x0 - h);
            let fm = eval(&work, input)?;
            work.get_mut(name)?.value.set(i, x0);
            let fd = (fp - fm) / (2.0 * h);
            let an = grad.as_ref().map_or(0.0, |g| g.data()[i]);
            worst = worst.max(rel_err(an, fd));
        }
        per_param.push((name.clone(), worst, samples.min(numel)));
    }

    let numel = input.numel();
    let idx = rand::seq::index::sample(rng, numel, samples.min(numel));
    let mut worst = 0.0f64;
    let mut probe = input.clone();
    for i in idx {
        let x0 = input.data()[i];
        let h = step * x0.abs().max(1.0);
        probe.set(i, x0 + h);
        let fp = eval(store, &probe)?;
        probe.set(i, x0 - h);
        let fm = eval(store, &probe)?;
        probe.set(i, x0);
        let fd = (fp - fm) / (2.0 * h);
        let an = input_grad.as_ref().map_or(0.0, |g| g.data()[i]);
        worst = worst.max(rel_err(an, fd));
    }
    Ok(Sweep { per_param, input: (worst, samples.min(numel)) })
}

fn summarize(name: &str, sweep: &Sweep, tolerance: f64) -> CheckResult {
    let mut max_rel_err = sweep.input.0;
    let mut checked = sweep.input.1;
    for (_, err, n) in &sweep.per_param {
        max_rel_err = max_rel_err.max(*err);
        checked += n;
    }
    CheckResult { name: name.to_string(), max_rel_err, tolerance, checked }
}

fn loss_value(tape: &Tape<f64>, loss: Var) -> f64 {
    tape.value(loss).data()[0]
}

/// Project a tensor to a scalar with a fixed random weighting so every output
/// element influences the loss.
fn project(tape: &Tape<f64>, v: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let dims = tape.dims(v);
    let p = Tensor::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let pl = tape.leaf(p);
    Ok(ops::reduce_sum_all(
        tape,
        ops::ewise(tape, v, pl, crate::tensor::EwiseOp::Mul)?,
    ))
}

fn rand_tensor(dims: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_, _, _, _| rng.random_range(lo..hi))
}

/// Uniform values whose magnitude stays in [floor, hi]: keeps leaky-ReLU and
/// Charbonnier probes away from their high-curvature neighborhoods.
fn rand_tensor_away_from_zero(
    dims: [usize; 4],
    floor: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor<f64> {
    Tensor::from_fn(dims, |_, _, _, _| {
        let sign = if rng.random_range(0..2) == 0 { -1.0 } else { 1.0 };
        sign * rng.random_range(floor..hi)
    })
}

fn store_of(entries: Vec<(&str, Tensor<f64>)>) -> Result<ParamStore<f64>> {
    let mut store = ParamStore::new();
    for (name, value) in entries {
        store.insert(Parameter::new(name, value))?;
    }
    Ok(store)
}

/// Offsets with fractional parts in [0.2, 0.8]; FD probes cannot cross an
/// integer sampling coordinate.
fn safe_offsets(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(dims, |_, _, _, _| {
        let int: i32 = rng.random_range(-2..2);
        int as f64 + rng.random_range(0.2..0.8)
    })
}

/// Park zero-initialized offset-head biases at fixed fractional values so
/// block-level checks probe the offset path away from sampling kinks. Head
/// weights stay zero, so offsets equal the bias exactly.
pub fn park_offset_biases(store: &mut ParamStore<f64>) -> Result<usize> {
    let names: Vec<String> = store
        .names()
        .into_iter()
        .filter(|n| n.ends_with(".off.head.bias"))
        .collect();
    for name in &names {
        let p = store.get_mut(name)?;
        let dims = p.value.dims();
        let taps_groups = dims[1] / 3; // 2*K*G offset channels + K*G logits
        let mut t = Tensor::zeros(dims);
        for i in 0..2 * taps_groups {
            t.set(i, 0.2 + 0.017 * (i % 14) as f64); // in [0.2, 0.421]
        }
        p.value = t;
    }
    Ok(names.len())
}

fn check_conv2d(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let spec = ConvSpec::new(3, 4, 3);
    let store = store_of(vec![
        ("weight", rand_tensor(spec.weight_dims(), -0.5, 0.5, rng)),
        ("bias", rand_tensor([1, 4, 1, 1], -0.2, 0.2, rng)),
    ])?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let out = ops::conv2d(
            fx.tape,
            x,
            fx.param("weight")?,
            Some(fx.param("bias")?),
            &spec,
        )?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(11))
    };
    let input = rand_tensor([2, 3, 6, 6], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 24, FD_STEP_OP, rng)?;
    Ok(summarize("conv2d", &sweep, 1e-6))
}

fn check_conv2d_stride2(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let spec = ConvSpec::new(2, 3, 3).with_stride(2).no_bias();
    let store = store_of(vec![("weight", rand_tensor(spec.weight_dims(), -0.5, 0.5, rng))])?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let out = ops::conv2d(fx.tape, x, fx.param("weight")?, None, &spec)?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(12))
    };
    let input = rand_tensor([1, 2, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 24, FD_STEP_OP, rng)?;
    Ok(summarize("conv2d_stride2", &sweep, 1e-6))
}

fn check_activations(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let input = rand_tensor_away_from_zero([1, 2, 5, 5], 0.1, 1.0, rng);
    let graph = |fx: &Forward<f64>, x: Var| {
        let y = ops::leaky_relu(fx.tape, x, crate::model::LEAKY_SLOPE);
        project(fx.tape, y, &mut ChaCha8Rng::seed_from_u64(13))
    };
    let sweep = fd_sweep(&ParamStore::new(), &input, &graph, 30, FD_STEP_OP, rng)?;
    out.push(summarize("leaky_relu", &sweep, 1e-6));

    let input = rand_tensor([1, 2, 5, 5], -2.0, 2.0, rng);
    let graph = |fx: &Forward<f64>, x: Var| {
        let y = ops::sigmoid(fx.tape, x);
        project(fx.tape, y, &mut ChaCha8Rng::seed_from_u64(14))
    };
    let sweep = fd_sweep(&ParamStore::new(), &input, &graph, 30, FD_STEP_OP, rng)?;
    out.push(summarize("sigmoid", &sweep, 1e-6));
    Ok(out)
}

fn check_bilinear_resize(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let input = rand_tensor([2, 3, 4, 5], -1.0, 1.0, rng);
    let graph = |fx: &Forward<f64>, x: Var| {
        let y = ops::bilinear_resize(fx.tape, x, 2)?;
        project(fx.tape, y, &mut ChaCha8Rng::seed_from_u64(15))
    };
    let sweep = fd_sweep(&ParamStore::new(), &input, &graph, 40, FD_STEP_OP, rng)?;
    Ok(summarize("bilinear_resize", &sweep, 1e-6))
}

fn check_pixel_shuffle(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let input = rand_tensor([2, 8, 3, 3], -1.0, 1.0, rng);
    let graph = |fx: &Forward<f64>, x: Var| {
        let y = ops::pixel_shuffle(fx.tape, x, 2)?;
        project(fx.tape, y, &mut ChaCha8Rng::seed_from_u64(16))
    };
    let sweep = fd_sweep(&ParamStore::new(), &input, &graph, 40, FD_STEP_OP, rng)?;
    Ok(summarize("pixel_shuffle", &sweep, 1e-6))
}

fn check_ewise_and_reshapes(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    // One graph through broadcast multiply, channel/batch concat and slice,
    // and channel summation, so their backward paths compose.
    let store = store_of(vec![
        ("map", rand_tensor([2, 1, 4, 4], 0.2, 1.0, rng)),
        ("other", rand_tensor([2, 3, 4, 4], -1.0, 1.0, rng)),
    ])?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let tape = fx.tape;
        let weighted = ops::ewise(tape, x, fx.param("map")?, crate::tensor::EwiseOp::Mul)?;
        let cat = ops::concat_channels(tape, &[weighted, fx.param("other")?])?;
        let lo = ops::slice_channels(tape, cat, 1, 5)?;
        let b0 = ops::slice_batch(tape, lo, 0, 1)?;
        let b1 = ops::slice_batch(tape, lo, 1, 2)?;
        let again = ops::concat_batch(tape, &[b1, b0])?;
        let summed = ops::sum_channels(tape, again);
        project(tape, summed, &mut ChaCha8Rng::seed_from_u64(17))
    };
    let input = rand_tensor([2, 3, 4, 4], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 30, FD_STEP_OP, rng)?;
    Ok(summarize("ewise_reshapes", &sweep, 1e-6))
}

/// The four deformable-conv gradient paths, each reported separately.
pub fn deform_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = 2;
    let spec = ConvSpec::new(4, 4, 3).no_bias();
    let store = store_of(vec![
        ("x", rand_tensor([1, 4, 6, 6], -1.0, 1.0, &mut rng)),
        ("offsets", safe_offsets([1, 2 * 9 * groups, 6, 6], &mut rng)),
        ("modulation", rand_tensor([1, 9 * groups, 6, 6], 0.1, 0.9, &mut rng)),
        ("weights", rand_tensor(spec.weight_dims(), -0.5, 0.5, &mut rng)),
    ])?;
    let graph = move |fx: &Forward<f64>, _dummy: Var| {
        let out = deform_conv2d(
            fx.tape,
            fx.param("x")?,
            fx.param("offsets")?,
            fx.param("modulation")?,
            fx.param("weights")?,
            &spec,
            groups,
        )?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(18))
    };
    let dummy = Tensor::scalar(0.0);
    let sweep = fd_sweep(&store, &dummy, &graph, 20, FD_STEP_OP, &mut rng)?;
    Ok(sweep
        .per_param
        .iter()
        .map(|(name, err, n)| CheckResult {
            name: format!("deform.{name}"),
            max_rel_err: *err,
            tolerance: 1e-5,
            checked: *n,
        })
        .collect())
}

fn check_charbonnier(rng: &mut ChaCha8Rng, mode: LossMode) -> Result<CheckResult> {
    let dims = [1, 3, 4, 4];
    let pred = rand_tensor(dims, -1.0, 1.0, rng);
    // Differences parked away from 0, where Charbonnier curvature peaks.
    let diff = rand_tensor_away_from_zero(dims, 0.05, 0.5, rng);
    let target = pred.add(&diff)?;
    let store = store_of(vec![("pred", pred)])?;
    let graph = move |fx: &Forward<f64>, t: Var| {
        charbonnier(fx.tape, fx.param("pred")?, t, 1e-3, mode)
    };
    let sweep = fd_sweep(&store, &target, &graph, 30, FD_STEP_OP, rng)?;
    let name = match mode {
        LossMode::PerElementMean => "charbonnier_mean",
        LossMode::GlobalNorm => "charbonnier_norm",
    };
    Ok(summarize(name, &sweep, 1e-6))
}

fn check_pyramid(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(21);
    let pyr = PyramidConvs::register(&mut store, &mut init, 4)?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let p = pyr.apply(fx, x)?;
        let mut prj = ChaCha8Rng::seed_from_u64(22);
        let mut total = project(fx.tape, p.levels[0], &mut prj)?;
        for &l in &p.levels[1..] {
            total = ops::add(fx.tape, total, project(fx.tape, l, &mut prj)?)?;
        }
        Ok(total)
    };
    let input = rand_tensor([2, 4, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 6, FD_STEP_BLOCK, rng)?;
    Ok(summarize("pyramid_block", &sweep, 1e-5))
}

fn check_pcd(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(23);
    let pyr = PyramidConvs::register(&mut store, &mut init, 4)?;
    let block = PcdBlock::register(&mut store, &mut init, 4, 2)?;
    park_offset_biases(&mut store)?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let tape = fx.tape;
        let p = pyr.apply(fx, x)?;
        let split = |v: Var| -> Result<(Var, Var)> {
            Ok((ops::slice_batch(tape, v, 0, 1)?, ops::slice_batch(tape, v, 1, 2)?))
        };
        let mut nb = Vec::new();
        let mut rf = Vec::new();
        for &l in &p.levels {
            let (n, r) = split(l)?;
            nb.push(n);
            rf.push(r);
        }
        let (aligned, _) = block.align(
            fx,
            &crate::model::FeaturePyramid { levels: nb },
            &crate::model::FeaturePyramid { levels: rf },
        )?;
        project(tape, aligned, &mut ChaCha8Rng::seed_from_u64(24))
    };
    let input = rand_tensor([2, 4, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 4, FD_STEP_BLOCK, rng)?;
    Ok(summarize("pcd_block", &sweep, 1e-5))
}

fn check_tsa(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(25);
    let block = TsaBlock::register(&mut store, &mut init, 4, 3)?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let (out, _) = block.apply(fx, x, 1)?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(26))
    };
    let input = rand_tensor([3, 4, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 5, FD_STEP_BLOCK, rng)?;
    Ok(summarize("tsa_block", &sweep, 1e-5))
}

fn check_spatial_attention(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(27);
    let block = TsaBlock::register(&mut store, &mut init, 4, 3)?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let out = block.spatial_attention(fx, x)?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(28))
    };
    let input = rand_tensor([1, 4, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 6, FD_STEP_BLOCK, rng)?;
    Ok(summarize("spatial_attention", &sweep, 1e-5))
}

fn check_predeblur(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(29);
    let block = PredeblurBlock::register(&mut store, &mut init, 4)?;
    let graph = move |fx: &Forward<f64>, x: Var| {
        let out = block.apply(fx, x)?;
        project(fx.tape, out, &mut ChaCha8Rng::seed_from_u64(30))
    };
    let input = rand_tensor([2, 4, 8, 8], -1.0, 1.0, rng);
    let sweep = fd_sweep(&store, &input, &graph, 6, FD_STEP_BLOCK, rng)?;
    Ok(summarize("predeblur_block", &sweep, 1e-5))
}

/// End-to-end: tiny SR model, Charbonnier loss, every parameter and the clip.
pub fn check_full_model(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = EdvrConfig {
        n_frames: 3,
        channels: 4,
        extract_blocks: 1,
        recon_blocks: 1,
        scale: 4,
        deform_groups: 2,
        ..EdvrConfig::default()
    };
    let (mut store, net) = EdvrNet::build::<f64>(&config, seed)?;
    park_offset_biases(&mut store)?;
    let target = rand_tensor([1, 3, 32, 32], 0.0, 1.0, &mut rng);
    let graph = move |fx: &Forward<f64>, clip: Var| {
        let (out, _) = net.forward(fx, clip)?;
        let t = fx.tape.leaf(target.clone());
        charbonnier(fx.tape, out, t, 1e-3, LossMode::PerElementMean)
    };
    let input = rand_tensor([3, 3, 8, 8], 0.0, 1.0, &mut rng);
    let sweep = fd_sweep(&store, &input, &graph, 3, FD_STEP_MODEL, &mut rng)?;
    Ok(summarize("full_model", &sweep, 1e-4))
}

/// The whole suite, deterministic under `seed`.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    results.push(check_conv2d(&mut rng)?);
    results.push(check_conv2d_stride2(&mut rng)?);
    results.extend(check_activations(&mut rng)?);
    results.push(check_bilinear_resize(&mut rng)?);
    results.push(check_pixel_shuffle(&mut rng)?);
    results.push(check_ewise_and_reshapes(&mut rng)?);
    results.extend(deform_checks(seed ^ 0x5eed)?);
    results.push(check_charbonnier(&mut rng, LossMode::PerElementMean)?);
    results.push(check_charbonnier(&mut rng, LossMode::GlobalNorm)?);
    results.push(check_pyramid(&mut rng)?);
    results.push(check_pcd(&mut rng)?);
    results.push(check_tsa(&mut rng)?);
    results.push(check_spatial_attention(&mut rng)?);
    results.push(check_predeblur(&mut rng)?);
    results.push(check_full_model(seed ^ 0xf00d)?);
    Ok(results)
}
