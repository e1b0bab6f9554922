//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every operation appends a node holding its output value and enough of
//! its inputs to replay the adjoint. Nodes only ever reference earlier
//! nodes, so reverse index order is a valid topological order for the
//! backward sweep.
//!
//! ```
//! use mygo::autograd::Tape;
//! use mygo::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(&Tensor::new(&[3], vec![1.0, 2.0, 3.0], true).unwrap());
//! let s = tape.sum(x);
//! tape.backward(s).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
//! ```

pub(crate) mod kernels;
mod ops;

pub use ops::{Activation, LossKind};

use crate::error::{Error, Result};
use crate::tensor::{check_shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: ops::Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node and gradient so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.consumed = false;
    }

    /// Records a copy of `tensor` as an input. It takes part in the
    /// backward pass iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(tensor.shape().to_vec(), tensor.data().to_vec(), tensor.requires_grad(), ops::Op::Leaf)
    }

    /// Records a value as an input with an explicit gradient flag.
    pub fn input(&mut self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Var> {
        let numel = check_shape(shape)?;
        if numel != values.len() {
            return Err(Error::Shape(format!(
                "length mismatch: shape {shape:?} needs {numel} values, got {}",
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, requires_grad, ops::Op::Leaf))
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        self.input(shape, values, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a node's value out as a detached tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::new(&node.shape, node.value.clone(), false).expect("tape nodes are well formed")
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// was reachable and requires a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient recorded for `v` into `tensor`'s gradient buffer.
    /// A reachable leaf with no recorded gradient contributes zeros.
    pub fn write_grad(&self, v: Var, tensor: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => tensor.accumulate_grad(&vec![0.0; tensor.numel()]),
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: ops::Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    ///
    /// Gradients from multiple uses of a node accumulate. A tape supports a
    /// single backward pass; call [`Tape::reset`] to record a new graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::Autograd("backward called twice on the same tape".into()));
        }
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Autograd(format!("backward needs a scalar loss, got shape {:?}", root.shape)));
        }
        self.consumed = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !root.requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let Tape { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if node.requires_grad && !matches!(node.op, ops::Op::Leaf) {
                ops::backprop(&node.op, &node.value, &g, nodes, grads);
            }
            grads[i] = Some(g);
        }
        Ok(())
    }
}

/// Accumulates into the gradient slot of `v`, allocating zeros on first use.
/// Does nothing for nodes that do not require gradients.
fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
    f(slot);
}
