use std::cell::RefCell;

use super::{fmt_dims, Elem, Tensor};
use crate::error::{shape_bail, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<(Var, Tensor<T>)>>;

struct Node<T: Elem> {
    value: Tensor<T>,
    back: Option<BackFn<T>>,
}

/// Reverse-mode autograd tape. Ops push nodes in evaluation order, so the
/// recording order is already topological and the backward pass is a single
/// reverse sweep over node ids.
pub struct Tape<T: Elem> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Elem> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Elem> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record an input with no upstream gradient.
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, None)
    }

    pub(crate) fn push_op(&self, value: Tensor<T>, back: BackFn<T>) -> Var {
        self.push(value, Some(back))
    }

    fn push(&self, value: Tensor<T>, back: Option<BackFn<T>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, back });
        Var(nodes.len() - 1)
    }

    /// Cheap clone of the stored value (shared storage).
    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn dims(&self, v: Var) -> [usize; 4] {
        self.nodes.borrow()[v.0].value.dims()
    }

    /// Backpropagate from a scalar root with seed 1.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let dims = self.dims(root);
        if dims.iter().product::<usize>() != 1 {
            shape_bail!("backward root must be scalar, got {}", fmt_dims(&dims));
        }
        self.backward_seeded(root, &Tensor::full(dims, T::one()))
    }

    /// Backpropagate from `root` with an explicit cotangent.
    pub fn backward_seeded(&self, root: Var, seed: &Tensor<T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if seed.dims() != nodes[root.0].value.dims() {
            shape_bail!(
                "backward seed {} does not match root {}",
                fmt_dims(&seed.dims()),
                fmt_dims(&nodes[root.0].value.dims())
            );
        }
        let mut acc: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        acc[root.0] = Some(seed.clone());
        for id in (0..=root.0).rev() {
            let Some(grad) = acc[id].clone() else { continue };
            let Some(back) = &nodes[id].back else { continue };
            for (var, contrib) in back(&grad) {
                debug_assert!(var.0 < id, "backward edge must point to an earlier node");
                if contrib.dims() != nodes[var.0].value.dims() {
                    shape_bail!(
                        "gradient {} does not match value {} at node {}",
                        fmt_dims(&contrib.dims()),
                        fmt_dims(&nodes[var.0].value.dims()),
                        var.0
                    );
                }
                acc[var.0] = Some(match acc[var.0].take() {
                    Some(prev) => prev.add(&contrib)?,
                    None => contrib,
                });
            }
        }
        Ok(Gradients { grads: acc })
    }
}

/// Result of a backward sweep: one optional gradient per tape node.
pub struct Gradients<T: Elem> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Elem> Gradients<T> {
    /// Gradient of the root w.r.t. `v`, if `v` influenced the root.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ops, EwiseOp};

    #[test]
    fn product_rule_through_shared_input() {
        // y = x * x, dy/dx = 2x
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new([1, 1, 1, 3], vec![2.0, -3.0, 0.5]).unwrap());
        let y = ops::ewise(&tape, x, x, EwiseOp::Mul).unwrap();
        let s = ops::reduce_sum_all(&tape, y);
        let grads = tape.backward(s).unwrap();
        let gx = grads.get(x).unwrap();
        assert_eq!(gx.data(), &[4.0, -6.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 1, 2, 2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unreached_leaf_has_no_gradient() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(Tensor::scalar(5.0));
        let s = ops::scale(&tape, x, 3.0);
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0]);
    }
}
