use indexmap::IndexMap;

use super::{Elem, Tensor};
use crate::error::{EdvrError, Result};

/// Trainable tensor plus its gradient accumulator and Adam moments.
#[derive(Clone)]
pub struct Parameter<T: Elem> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Elem> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let dims = value.dims();
        Self {
            name: name.into(),
            value,
            grad: Tensor::zeros(dims),
            m: Tensor::zeros(dims),
            v: Tensor::zeros(dims),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = Tensor::zeros(self.value.dims());
    }
}

/// All parameters of a model, in deterministic insertion order. The order is
/// what checkpoints and the optimizer iterate in, so identical builds produce
/// identical bytes.
#[derive(Clone)]
pub struct ParamStore<T: Elem> {
    params: IndexMap<String, Parameter<T>>,
}

impl<T: Elem> std::fmt::Debug for ParamStore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut map = f.debug_map();
        for p in self.params.values() {
            map.entry(&p.name, &p.value.dims());
        }
        map.finish()
    }
}

impl<T: Elem> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Elem> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: IndexMap::new() }
    }

    pub fn insert(&mut self, param: Parameter<T>) -> Result<()> {
        if self.params.contains_key(&param.name) {
            return Err(EdvrError::Config(format!("duplicate parameter name `{}`", param.name)));
        }
        self.params.insert(param.name.clone(), param);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.params
            .get(name)
            .ok_or_else(|| EdvrError::Config(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| EdvrError::Config(format!("unknown parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.values_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.zero_grad();
        }
    }

    /// Convert every parameter value to another precision (grads and moments
    /// reset). Used to run f32 models under the f64 gradient checker.
    pub fn convert<U: Elem>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in self.iter() {
            out.insert(Parameter::new(p.name.clone(), p.value.convert::<U>()))
                .expect("names unique by construction");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_preserved() {
        let mut store: ParamStore<f32> = ParamStore::new();
        for name in ["zeta", "alpha", "mid"] {
            store.insert(Parameter::new(name, Tensor::scalar(1.0))).unwrap();
        }
        assert_eq!(store.names(), vec!["zeta", "alpha", "mid"]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store: ParamStore<f32> = ParamStore::new();
        store.insert(Parameter::new("w", Tensor::scalar(1.0))).unwrap();
        assert!(store.insert(Parameter::new("w", Tensor::scalar(2.0))).is_err());
    }
}
