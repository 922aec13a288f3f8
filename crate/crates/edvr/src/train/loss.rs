//! Charbonnier penalty, the training loss.

use crate::error::{shape_bail, Result};
use crate::tensor::{fmt_dims, Elem, Tape, Tensor, Var};

/// How per-element penalties reduce to a scalar. `PerElementMean` keeps the
/// gradient scale independent of patch size and is the training default;
/// `GlobalNorm` is the literal sqrt(sum d^2 + eps^2) form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    PerElementMean,
    GlobalNorm,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::PerElementMean => "per_element_mean",
            LossMode::GlobalNorm => "global_norm",
        })
    }
}

impl std::str::FromStr for LossMode {
    type Err = crate::EdvrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_element_mean" => Ok(LossMode::PerElementMean),
            "global_norm" => Ok(LossMode::GlobalNorm),
            other => Err(crate::EdvrError::Config(format!(
                "unknown loss mode `{other}` (expected per_element_mean or global_norm)"
            ))),
        }
    }
}

/// Smooth L1-like penalty sqrt(d^2 + eps^2). The scalar accumulates in f64 so
/// the zero-difference value is eps to rounding error in either precision.
/// Gradients flow to both pred (d/|..|) and target (negated).
pub fn charbonnier<T: Elem>(
    tape: &Tape<T>,
    pred: Var,
    target: Var,
    eps: f64,
    mode: LossMode,
) -> Result<Var> {
    let p = tape.value(pred);
    let t = tape.value(target);
    if p.dims() != t.dims() {
        shape_bail!(
            "charbonnier: pred {} vs target {}",
            fmt_dims(&p.dims()),
            fmt_dims(&t.dims())
        );
    }
    let n = p.numel();
    let eps2 = eps * eps;
    let value = {
        let pd = p.data();
        let td = t.data();
        match mode {
            LossMode::PerElementMean => {
                let mut acc = 0.0f64;
                for i in 0..n {
                    let d = (pd[i] - td[i]).to_f64();
                    acc += (d * d + eps2).sqrt();
                }
                acc / n as f64
            }
            LossMode::GlobalNorm => {
                let mut acc = 0.0f64;
                for i in 0..n {
                    let d = (pd[i] - td[i]).to_f64();
                    acc += d * d;
                }
                (acc + eps2).sqrt()
            }
        }
    };
    let out = Tensor::scalar(T::from_f64(value));
    Ok(tape.push_op(
        out,
        Box::new(move |g: &Tensor<T>| {
            let gv = g.data()[0].to_f64();
            let pd = p.data();
            let td = t.data();
            let mut gp = Vec::with_capacity(n);
            match mode {
                LossMode::PerElementMean => {
                    let scale = gv / n as f64;
                    for i in 0..n {
                        let d = (pd[i] - td[i]).to_f64();
                        gp.push(T::from_f64(scale * d / (d * d + eps2).sqrt()));
                    }
                }
                LossMode::GlobalNorm => {
                    // d loss / d pred_i = d_i / loss
                    let scale = gv / value;
                    for i in 0..n {
                        let d = (pd[i] - td[i]).to_f64();
                        gp.push(T::from_f64(scale * d));
                    }
                }
            }
            let gt: Vec<T> = gp.iter().map(|&v| T::zero() - v).collect();
            vec![
                (pred, Tensor::new(p.dims(), gp).expect("dims")),
                (target, Tensor::new(t.dims(), gt).expect("dims")),
            ]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_value_is_eps_in_both_modes() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::from_fn([1, 3, 4, 4], |_, c, y, x| {
            (c + y + x) as f64 * 0.01
        }));
        for mode in [LossMode::PerElementMean, LossMode::GlobalNorm] {
            let l = charbonnier(&tape, a, a, 1e-3, mode).unwrap();
            assert!((tape.value(l).data()[0] - 1e-3).abs() < 1e-12, "{mode}");
        }
    }

    #[test]
    fn single_element_value_matches_hand_calc() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::scalar(0.5));
        let b = tape.leaf(Tensor::scalar(0.5 - 3e-3));
        let l = charbonnier(&tape, a, b, 1e-3, LossMode::PerElementMean).unwrap();
        // sqrt(9e-6 + 1e-6) = 3.1623e-3
        assert!((tape.value(l).data()[0] - 3.1623e-3).abs() < 1e-7);
    }

    #[test]
    fn gradient_is_zero_at_zero_difference() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::scalar(0.25));
        let b = tape.leaf(Tensor::scalar(0.25));
        let l = charbonnier(&tape, a, b, 1e-3, LossMode::PerElementMean).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(a).unwrap().data()[0], 0.0);
    }

    #[test]
    fn target_gradient_mirrors_pred() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::scalar(0.9));
        let b = tape.leaf(Tensor::scalar(0.4));
        let l = charbonnier(&tape, a, b, 1e-3, LossMode::GlobalNorm).unwrap();
        let g = tape.backward(l).unwrap();
        let ga = g.get(a).unwrap().data()[0];
        let gb = g.get(b).unwrap().data()[0];
        assert_eq!(ga, -gb);
        assert!(ga > 0.0);
    }
}
