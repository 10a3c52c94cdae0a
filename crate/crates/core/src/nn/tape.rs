//! Reverse-mode differentiation record.
//!
//! Every op appends a node holding its value, the handles of its inputs and,
//! when any input needs a gradient, a closure mapping the output gradient to
//! input gradients. Nodes are appended in evaluation order, so the node list
//! is already topologically sorted and [`Tape::backward`] just walks it in
//! reverse.

use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Maps the output gradient to one optional gradient per input. Entries for
/// inputs whose `needs` flag is false may be `None`.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that never records backward rules; for forward-only passes.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Trainable leaf; [`Tape::backward`] reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        let rg = self.recording;
        self.push_leaf(value, rg)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            requires_grad,
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Whether an op over `inputs` would get a backward rule.
    pub(crate) fn will_record(&self, inputs: &[Var]) -> bool {
        self.recording && inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Appends an op result. `make_backward` only runs when some input needs
    /// a gradient, so ops can capture saved tensors inside it lazily.
    pub(crate) fn record<F>(&mut self, value: Tensor, inputs: &[Var], make_backward: F) -> Var
    where
        F: FnOnce() -> BackwardFn,
    {
        let requires_grad = self.will_record(inputs);
        let backward = requires_grad.then(make_backward);
        self.nodes.push(Node {
            value,
            inputs: inputs.to_vec(),
            requires_grad,
            backward,
        });
        Var(self.nodes.len() - 1)
    }

    /// Accumulates d(loss)/d(leaf) for every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(NnError::NotScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = backward(&g, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for ((input, ig), &need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                let (Some(ig), true) = (ig, need) else {
                    continue;
                };
                debug_assert_eq!(ig.shape(), self.nodes[input.0].value.shape());
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `value` when `v` is disconnected.
    pub fn wrt(&self, v: Var, value: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_fn(vec![2, 3], |i| i as f64));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(vec![3]));
        assert!(matches!(tape.backward(x), Err(NnError::NotScalarLoss(_))));
    }

    #[test]
    fn disconnected_param_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::full(vec![2], 2.0));
        let y = tape.param(Tensor::full(vec![2], 3.0));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert!(g.get(y).is_none());
        assert_eq!(g.wrt(y, tape.value(y)).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::full(vec![1], 3.0));
        let y = tape.mul(x, x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn inference_tape_records_nothing() {
        let mut tape = Tape::inference();
        let x = tape.param(Tensor::full(vec![1], 3.0));
        let y = tape.mul(x, x);
        assert!(!tape.requires_grad(y));
        assert!(tape.backward(y).unwrap().get(x).is_none());
    }
}
