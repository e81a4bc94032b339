use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Computes input gradients from `(inputs, output, grad_output, needs_grad)`.
///
/// Returns one entry per input; `None` where the input needs no gradient.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&[Rc<Tensor<T>>], &Tensor<T>, &[T], &[bool]) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    inputs: Vec<usize>,
    requires_grad: bool,
    is_leaf: bool,
    backward: Option<BackwardFn<T>>,
}

/// Records operations in creation order and replays them backwards.
///
/// A tape is single-owner: build one per forward pass, call
/// [`Tape::backward`] once, then read leaf gradients through [`Var::grad`].
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Vec<T>>>>,
    check_finite: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    /// A new tape; finite-value checks follow `debug_assertions`.
    pub fn new() -> Self {
        Self::with_finite_checks(cfg!(debug_assertions))
    }

    pub fn with_finite_checks(check_finite: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
            check_finite,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            inputs: Vec::new(),
            requires_grad,
            is_leaf: true,
            backward: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn record(
        &self,
        op: &str,
        value: Tensor<T>,
        inputs: &[Var<'_, T>],
        backward: BackwardFn<T>,
    ) -> Result<Var<'_, T>> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {op}")));
        }
        let mut nodes = self.nodes.borrow_mut();
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let requires_grad = ids.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            inputs: ids,
            requires_grad,
            is_leaf: false,
            backward: requires_grad.then_some(backward),
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Back-propagates from a one-element `loss`, storing `dloss/dleaf` for
    /// every differentiable leaf.
    ///
    /// Contributions are summed while walking nodes in exact reverse creation
    /// order, so repeated passes over identical tapes are bit-identical.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::State("backward on an empty tape".into()));
        }
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        if loss_node.requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            let inputs: Vec<Rc<Tensor<T>>> =
                node.inputs.iter().map(|&i| nodes[i].value.clone()).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let input_grads = backward(&inputs, &node.value, &grad_out, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&input, grad) in node.inputs.iter().zip(input_grads) {
                let Some(grad) = grad else { continue };
                if !nodes[input].requires_grad {
                    continue;
                }
                debug_assert_eq!(grad.len(), nodes[input].value.numel());
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, &g)| *a = *a + g),
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if !(node.is_leaf && node.requires_grad) {
                grads[id] = None;
            }
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Gradient of the last loss passed to [`Tape::backward`]; `None` for
    /// constants, intermediate nodes, or before backward ran. A leaf the loss
    /// does not depend on reports a zero gradient.
    pub fn grad(&self) -> Option<Tensor<T>> {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        if !(node.is_leaf && node.requires_grad) {
            return None;
        }
        let grads = self.tape.grads.borrow();
        if grads.is_empty() {
            return None;
        }
        let shape = node.value.shape().to_vec();
        let data = grads[self.id]
            .clone()
            .unwrap_or_else(|| vec![T::zero(); node.value.numel()]);
        Some(Tensor::new(shape, data).expect("gradient shape matches value"))
    }

    /// Identity forward; blocks every gradient backward.
    pub fn stop_gradient(&self) -> Var<'t, T> {
        let value = (*self.value()).clone();
        self.tape.constant(value)
    }
}
