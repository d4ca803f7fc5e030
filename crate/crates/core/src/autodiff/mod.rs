//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation records a node holding its output value, its inputs and a
//! backward rule. Backward rules are themselves written in terms of recorded
//! operations, so running [`backward`] or [`grad`] with `higher_order = true`
//! yields gradients that are differentiable graph nodes. This is what the
//! Wasserstein gradient penalties need: the penalty is a function of
//! `d f / d x`, and its gradient with respect to the critic parameters is a
//! second derivative.
//!
//! Node ids grow monotonically, so reverse execution order is simply
//! descending id order over the nodes reachable from the root.

mod activation;
mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

pub use activation::Activation;
pub use conv::{conv3d_output_extent, conv_transpose3d_output_extent};
pub use elementwise::Elementwise;
pub use reduce::Reduction;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Inputs handed to a backward rule. When higher-order mode is off the inputs
/// and the output are detached copies, so nothing the rule computes is
/// recorded.
pub(crate) struct BackwardCtx<'a, T: Real> {
    pub cot: &'a Var<T>,
    pub inputs: &'a [Var<T>],
    pub output: &'a Var<T>,
    /// Which inputs require a gradient; rules may skip the others.
    pub needs: &'a [bool],
}

pub(crate) trait Backward<T: Real> {
    /// One cotangent per input, `None` where the input gets no gradient.
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>>;
}

struct Node<T: Real> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    inputs: Vec<Var<T>>,
    rule: Option<Box<dyn Backward<T>>>,
    grad: RefCell<Option<Var<T>>>,
}

/// A tensor participating in a differentiation graph.
pub struct Var<T: Real> {
    node: Rc<Node<T>>,
}

impl<T: Real> Clone for Var<T> {
    fn clone(&self) -> Self {
        Self {
            node: Rc::clone(&self.node),
        }
    }
}

impl<T: Real> core::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.node.id)
            .field("shape", &self.node.value.shape())
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl<T: Real> Var<T> {
    fn from_node(value: Tensor<T>, requires_grad: bool, inputs: Vec<Var<T>>, rule: Option<Box<dyn Backward<T>>>) -> Self {
        Self {
            node: Rc::new(Node {
                id: next_id(),
                value,
                requires_grad,
                inputs,
                rule,
                grad: RefCell::new(None),
            }),
        }
    }

    /// A constant: never receives gradients.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::from_node(value, false, Vec::new(), None)
    }

    /// A leaf that accumulates gradients on [`backward`].
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::from_node(value, true, Vec::new(), None)
    }

    pub fn scalar(v: T) -> Self {
        Self::constant(Tensor::scalar(v))
    }

    /// Records an operation result. Only records the graph edge when some
    /// input requires gradients.
    pub(crate) fn record(value: Tensor<T>, inputs: Vec<Var<T>>, rule: impl Backward<T> + 'static) -> Self {
        if inputs.iter().any(Var::requires_grad) {
            Self::from_node(value, true, inputs, Some(Box::new(rule)))
        } else {
            Self::constant(value)
        }
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.node.value
    }

    pub fn shape(&self) -> &[usize] {
        self.node.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.node.value.numel()
    }

    pub fn data(&self) -> &[T] {
        self.node.value.data()
    }

    pub fn item(&self) -> Result<T> {
        self.node.value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.rule.is_none()
    }

    /// Same value, cut from the graph. Shares the buffer.
    pub fn detach(&self) -> Self {
        Self::constant(self.node.value.clone())
    }

    /// Accumulated gradient of a leaf after [`backward`].
    pub fn grad(&self) -> Option<Var<T>> {
        self.node.grad.borrow().clone()
    }

    /// Clears the accumulated gradient. Needed after higher-order backward
    /// calls, whose gradients reference the graph they came from.
    pub fn zero_grad(&self) {
        self.node.grad.borrow_mut().take();
    }
}

/// Cotangents of every leaf reachable from `root`, keyed by node id. With
/// `targets`, only nodes depending on one of the target ids are traversed.
fn backprop<T: Real>(
    root: &Var<T>,
    higher_order: bool,
    targets: Option<&BTreeSet<u64>>,
) -> Result<BTreeMap<u64, (Var<T>, Var<T>)>> {
    if root.numel() != 1 {
        bail!(Contract, "backward needs a scalar root, got shape {:?}", root.shape());
    }
    if !root.requires_grad() {
        bail!(Contract, "backward on a graph with no differentiable leaves");
    }

    let mut nodes: BTreeMap<u64, Var<T>> = BTreeMap::new();
    let mut stack = vec![root.clone()];
    while let Some(v) = stack.pop() {
        if nodes.contains_key(&v.id()) {
            continue;
        }
        for input in &v.node.inputs {
            if input.requires_grad() && !nodes.contains_key(&input.id()) {
                stack.push(input.clone());
            }
        }
        nodes.insert(v.id(), v);
    }

    if let Some(targets) = targets {
        // Inputs have smaller ids than their consumers, so one ascending
        // pass settles dependence.
        let mut relevant = BTreeSet::new();
        for (&id, var) in nodes.iter() {
            if targets.contains(&id) || var.node.inputs.iter().any(|i| relevant.contains(&i.id())) {
                relevant.insert(id);
            }
        }
        nodes.retain(|id, _| relevant.contains(id));
    }

    let mut cots: BTreeMap<u64, Var<T>> = BTreeMap::new();
    cots.insert(root.id(), Var::constant(Tensor::ones(root.shape())));
    let mut leaves = BTreeMap::new();

    for (&id, var) in nodes.iter().rev() {
        let Some(cot) = cots.remove(&id) else { continue };
        if var.node.rule.is_none() || targets.map_or(false, |t| t.contains(&id)) {
            leaves.insert(id, (var.clone(), cot.clone()));
        }
        let Some(rule) = var.node.rule.as_ref() else { continue };
        let detached_inputs: Vec<Var<T>>;
        let detached_output: Var<T>;
        let (inputs, output) = if higher_order {
            (&var.node.inputs[..], var)
        } else {
            detached_inputs = var.node.inputs.iter().map(Var::detach).collect();
            detached_output = var.detach();
            (&detached_inputs[..], &detached_output)
        };
        let cot = if higher_order { cot } else { cot.detach() };
        let needs: Vec<bool> = var
            .node
            .inputs
            .iter()
            .map(|i| i.requires_grad() && nodes.contains_key(&i.id()))
            .collect();
        let parts = rule.backward(&BackwardCtx {
            cot: &cot,
            inputs,
            output,
            needs: &needs,
        })?;
        for ((input, g), &needed) in var.node.inputs.iter().zip(parts).zip(&needs) {
            let Some(g) = g else { continue };
            if !needed {
                continue;
            }
            debug_assert_eq!(g.shape(), input.shape());
            let merged = match cots.remove(&input.id()) {
                Some(prev) => prev.add(&g)?,
                None => g,
            };
            cots.insert(input.id(), merged);
        }
    }
    Ok(leaves)
}

/// Accumulates `d root / d leaf` into every reachable leaf that requires
/// gradients. With `higher_order` the stored gradients are differentiable.
pub fn backward<T: Real>(root: &Var<T>, higher_order: bool) -> Result<()> {
    for (_, (leaf, g)) in backprop(root, higher_order, None)? {
        let mut slot = leaf.node.grad.borrow_mut();
        let merged = match slot.take() {
            Some(prev) => prev.add(&g)?,
            None => g,
        };
        *slot = Some(merged);
    }
    Ok(())
}

/// Gradients of `root` with respect to `wrt`, without touching the leaves'
/// accumulated gradients. Inputs that `root` does not depend on yield zeros.
pub fn grad<T: Real>(root: &Var<T>, wrt: &[&Var<T>], higher_order: bool) -> Result<Vec<Var<T>>> {
    let zeros = |v: &Var<T>| Var::constant(Tensor::zeros(v.shape()));
    if !root.requires_grad() {
        if root.numel() != 1 {
            bail!(Contract, "grad needs a scalar root, got shape {:?}", root.shape());
        }
        return Ok(wrt.iter().map(|v| zeros(v)).collect());
    }
    let targets: BTreeSet<u64> = wrt.iter().map(|v| v.id()).collect();
    let leaves = backprop(root, higher_order, Some(&targets))?;
    Ok(wrt
        .iter()
        .map(|v| match leaves.get(&v.id()) {
            Some((_, g)) => g.clone(),
            None => zeros(v),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_backward_gives_ones() {
        let x = Var::leaf(t(&[3], &[1.0, -2.0, 5.0]));
        backward(&x.sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_backward() {
        let x = Var::leaf(t(&[2], &[1.0, 2.0]));
        backward(&x.square().sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let x = Var::leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(backward(&x.square(), false), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn detached_graph_is_rejected() {
        let x = Var::leaf(t(&[2], &[1.0, 2.0]));
        let y = x.detach().square().sum().unwrap();
        assert!(matches!(backward(&y, false), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x*x + x  => dy/dx = 2x + 1
        let x = Var::leaf(t(&[1], &[3.0]));
        let y = x.mul(&x).unwrap().add(&x).unwrap().sum().unwrap();
        backward(&y, false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[7.0]);
    }

    #[test]
    fn first_order_backward_records_nothing() {
        let x = Var::leaf(t(&[2], &[1.0, 2.0]));
        backward(&x.square().sum().unwrap(), false).unwrap();
        assert!(!x.grad().unwrap().requires_grad());
    }

    #[test]
    fn gradient_of_gradient_norm() {
        // f = sum(x^2); g = 2x; |g| = 2|x|; d|g|/dx = 2 x / |x|
        let x = Var::leaf(t(&[3], &[1.0, -2.0, 2.0]));
        let f = x.square().sum().unwrap();
        let g = grad(&f, &[&x], true).unwrap().remove(0);
        assert!(g.requires_grad());
        let norm = g.square().sum().unwrap().sqrt().unwrap();
        assert!((norm.item().unwrap() - 6.0).abs() < 1e-12);
        backward(&norm, false).unwrap();
        let h = x.grad().unwrap();
        let expect = [2.0 / 3.0, -4.0 / 3.0, 4.0 / 3.0];
        for (a, b) in h.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grad_of_independent_input_is_zero() {
        let x = Var::leaf(t(&[2], &[1.0, 2.0]));
        let y = Var::leaf(t(&[2], &[3.0, 4.0]));
        let f = x.square().sum().unwrap();
        let gs = grad(&f, &[&x, &y], false).unwrap();
        assert_eq!(gs[1].data(), &[0.0, 0.0]);
        assert!(x.grad().is_none());
    }
}
