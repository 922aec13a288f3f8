//! Parameter registration, the forward context, and small shared layers.

use std::cell::RefCell;
use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::{ops, ConvSpec, Elem, Gradients, ParamStore, Parameter, Tape, Tensor, Var};

/// Slope of every hidden leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Fan-in Kaiming normal scaled by `scale`:
    /// std = scale * sqrt(2 / ((1 + slope^2) * fan_in)).
    Kaiming { scale: f64 },
    /// All-zero weights (offset/modulation and attention-mask heads).
    Zero,
}

/// Ties a tape to a parameter store for one forward pass. Parameters become
/// tape leaves on first use; repeated use of the same parameter shares the
/// leaf so gradients accumulate correctly.
pub struct Forward<'a, T: Elem> {
    pub tape: &'a Tape<T>,
    store: &'a ParamStore<T>,
    used: RefCell<Vec<(String, Var)>>,
    index: RefCell<HashMap<String, usize>>,
}

impl<'a, T: Elem> Forward<'a, T> {
    pub fn new(tape: &'a Tape<T>, store: &'a ParamStore<T>) -> Self {
        Self {
            tape,
            store,
            used: RefCell::new(Vec::new()),
            index: RefCell::new(HashMap::new()),
        }
    }

    pub fn param(&self, name: &str) -> Result<Var> {
        if let Some(&i) = self.index.borrow().get(name) {
            return Ok(self.used.borrow()[i].1);
        }
        let p = self.store.get(name)?;
        let var = self.tape.leaf(p.value.clone());
        let mut used = self.used.borrow_mut();
        self.index.borrow_mut().insert(name.to_string(), used.len());
        used.push((name.to_string(), var));
        Ok(var)
    }

    /// Every parameter touched so far, with its leaf.
    pub fn used_params(&self) -> Vec<(String, Var)> {
        self.used.borrow().clone()
    }
}

/// Add backward results onto the stored parameter gradients.
pub fn accumulate_grads<T: Elem>(
    store: &mut ParamStore<T>,
    used: &[(String, Var)],
    grads: &Gradients<T>,
) -> Result<()> {
    for (name, var) in used {
        if let Some(g) = grads.get(*var) {
            let p = store.get_mut(name)?;
            p.grad = p.grad.add(g)?;
        }
    }
    Ok(())
}

fn init_weight<T: Elem>(rng: &mut ChaCha8Rng, spec: &ConvSpec, init: Init) -> Tensor<T> {
    let dims = spec.weight_dims();
    match init {
        Init::Zero => Tensor::zeros(dims),
        Init::Kaiming { scale } => {
            let fan_in = (spec.in_channels * spec.kernel_h * spec.kernel_w) as f64;
            let std = scale * (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in)).sqrt();
            let normal = Normal::new(0.0, std).expect("std finite");
            let data: Vec<T> = (0..dims.iter().product())
                .map(|_| T::from_f64(normal.sample(rng)))
                .collect();
            Tensor::new(dims, data).expect("dims")
        }
    }
}

/// A conv layer: owns parameter names, not values.
#[derive(Clone)]
pub struct Conv2dLayer {
    pub weight: String,
    pub bias: Option<String>,
    pub spec: ConvSpec,
}

impl Conv2dLayer {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: ConvSpec,
        init: Init,
    ) -> Result<Self> {
        spec.validate()?;
        let weight = format!("{name}.weight");
        store.insert(Parameter::new(weight.clone(), init_weight(rng, &spec, init)))?;
        let bias = if spec.bias {
            let bias = format!("{name}.bias");
            store.insert(Parameter::new(bias.clone(), Tensor::zeros([1, spec.out_channels, 1, 1])))?;
            Some(bias)
        } else {
            None
        };
        Ok(Self { weight, bias, spec })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, x: Var) -> Result<Var> {
        let w = fx.param(&self.weight)?;
        let b = match &self.bias {
            Some(name) => Some(fx.param(name)?),
            None => None,
        };
        ops::conv2d(fx.tape, x, w, b, &self.spec)
    }

    /// Conv followed by the standard hidden activation.
    pub fn apply_lrelu<T: Elem>(&self, fx: &Forward<T>, x: Var) -> Result<Var> {
        Ok(ops::leaky_relu(fx.tape, self.apply(fx, x)?, LEAKY_SLOPE))
    }
}

/// conv 3x3 -> leaky ReLU -> conv 3x3 with identity skip, no normalization.
#[derive(Clone)]
pub struct ResidualBlock {
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
}

impl ResidualBlock {
    pub fn register<T: Elem>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
    ) -> Result<Self> {
        // Residual branches start small so deep stacks begin near identity.
        let init = Init::Kaiming { scale: 0.1 };
        let spec = ConvSpec::new(channels, channels, 3);
        Ok(Self {
            conv1: Conv2dLayer::register(store, rng, &format!("{name}.conv1"), spec, init)?,
            conv2: Conv2dLayer::register(store, rng, &format!("{name}.conv2"), spec, init)?,
        })
    }

    pub fn apply<T: Elem>(&self, fx: &Forward<T>, x: Var) -> Result<Var> {
        let h = self.conv1.apply_lrelu(fx, x)?;
        let h = self.conv2.apply(fx, h)?;
        ops::add(fx.tape, x, h)
    }
}

pub fn register_residual_chain<T: Elem>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    channels: usize,
    count: usize,
) -> Result<Vec<ResidualBlock>> {
    (0..count)
        .map(|i| ResidualBlock::register(store, rng, &format!("{prefix}.rb{i}"), channels))
        .collect()
}

pub fn apply_residual_chain<T: Elem>(
    blocks: &[ResidualBlock],
    fx: &Forward<T>,
    mut x: Var,
) -> Result<Var> {
    for b in blocks {
        x = b.apply(fx, x)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn same_seed_same_precision_independent_init() {
        let mut rng1 = ChaCha8Rng::seed_from_u64(5);
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let mut s32: ParamStore<f32> = ParamStore::new();
        let mut s64: ParamStore<f64> = ParamStore::new();
        let spec = ConvSpec::new(4, 4, 3);
        Conv2dLayer::register(&mut s32, &mut rng1, "c", spec, Init::Kaiming { scale: 1.0 }).unwrap();
        Conv2dLayer::register(&mut s64, &mut rng2, "c", spec, Init::Kaiming { scale: 1.0 }).unwrap();
        let w32 = s32.get("c.weight").unwrap().value.data().to_vec();
        let w64 = s64.get("c.weight").unwrap().value.data().to_vec();
        for (a, b) in w32.iter().zip(&w64) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
    }

    #[test]
    fn residual_block_is_identity_plus_small_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store: ParamStore<f64> = ParamStore::new();
        let rb = ResidualBlock::register(&mut store, &mut rng, "rb", 3).unwrap();
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let x = tape.leaf(Tensor::full([1, 3, 6, 6], 0.5));
        let y = rb.apply(&fx, x).unwrap();
        let (xv, yv) = (tape.value(x), tape.value(y));
        let max_dev = xv
            .data()
            .iter()
            .zip(yv.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev > 0.0 && max_dev < 0.5, "branch should be small, got {max_dev}");
    }

    #[test]
    fn forward_reuses_parameter_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store: ParamStore<f64> = ParamStore::new();
        let conv =
            Conv2dLayer::register(&mut store, &mut rng, "c", ConvSpec::new(2, 2, 1), Init::Kaiming { scale: 1.0 })
                .unwrap();
        let tape = Tape::new();
        let fx = Forward::new(&tape, &store);
        let x = tape.leaf(Tensor::zeros([1, 2, 2, 2]));
        conv.apply(&fx, x).unwrap();
        conv.apply(&fx, x).unwrap();
        // weight + bias once each, not twice
        assert_eq!(fx.used_params().len(), 2);
    }
}
