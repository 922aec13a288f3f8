//! Bias-corrected Adam over a parameter store.

use crate::error::{EdvrError, Result};
use crate::tensor::{Elem, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, Default)]
pub struct AdamState {
    pub t: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 4e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One update over every parameter; gradients are validated finite, consumed,
/// and zeroed. Moments live on the parameters themselves.
pub fn adam_step<T: Elem>(
    store: &mut ParamStore<T>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    for p in store.iter() {
        if !p.grad.all_finite() {
            return Err(EdvrError::Numeric(format!(
                "non-finite gradient in parameter `{}`",
                p.name
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::from_f64(hyper.beta1), T::from_f64(hyper.beta2));
    let (ib1, ib2) = (T::from_f64(1.0 - hyper.beta1), T::from_f64(1.0 - hyper.beta2));
    let c1 = T::from_f64(1.0 - hyper.beta1.powi(t));
    let c2 = T::from_f64(1.0 - hyper.beta2.powi(t));
    let lr = T::from_f64(hyper.lr);
    let eps = T::from_f64(hyper.eps);
    for p in store.iter_mut() {
        let dims = p.value.dims();
        let n = p.value.numel();
        let mut value = p.value.to_vec();
        let mut m = p.m.to_vec();
        let mut v = p.v.to_vec();
        let g = p.grad.data();
        for i in 0..n {
            m[i] = b1 * m[i] + ib1 * g[i];
            v[i] = b2 * v[i] + ib2 * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            value[i] = value[i] - lr * mhat / (vhat.sqrt() + eps);
        }
        p.value = Tensor::new(dims, value)?;
        p.m = Tensor::new(dims, m)?;
        p.v = Tensor::new(dims, v)?;
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Parameter;

    fn store_with_grad(g: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut p = Parameter::new("w", Tensor::full([1, 2, 1, 1], 0.5));
        p.grad = Tensor::full([1, 2, 1, 1], g);
        store.insert(p).unwrap();
        store
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1, g=1: mhat = vhat = 1, so the update is lr/(1 + eps) ~ lr.
        let mut store = store_with_grad(1.0);
        let mut state = AdamState::default();
        adam_step(&mut store, &mut state, &AdamHyper::default()).unwrap();
        let w = store.get("w").unwrap().value.data()[0];
        let expected = 0.5 - 4e-4 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut store = store_with_grad(0.0);
        let mut state = AdamState::default();
        adam_step(&mut store, &mut state, &AdamHyper::default()).unwrap();
        assert_eq!(store.get("w").unwrap().value.data()[0], 0.5);
    }

    #[test]
    fn identical_grads_update_identically() {
        let mut store = ParamStore::new();
        for name in ["a", "b"] {
            let mut p = Parameter::new(name, Tensor::full([1, 1, 1, 1], 0.3));
            p.grad = Tensor::full([1, 1, 1, 1], -0.7);
            store.insert(p).unwrap();
        }
        let mut state = AdamState::default();
        adam_step(&mut store, &mut state, &AdamHyper::default()).unwrap();
        assert_eq!(
            store.get("a").unwrap().value.data()[0],
            store.get("b").unwrap().value.data()[0]
        );
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut store = ParamStore::new();
        let mut p = Parameter::new("recon.rb3.conv1.weight", Tensor::scalar(1.0));
        p.grad = Tensor::scalar(f64::NAN);
        store.insert(p).unwrap();
        let err = adam_step(&mut store, &mut AdamState::default(), &AdamHyper::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("recon.rb3.conv1.weight"), "{err}");
    }

    #[test]
    fn grads_are_zeroed_after_step() {
        let mut store = store_with_grad(2.0);
        adam_step(&mut store, &mut AdamState::default(), &AdamHyper::default()).unwrap();
        assert!(store.get("w").unwrap().grad.data().iter().all(|&v| v == 0.0));
    }
}
