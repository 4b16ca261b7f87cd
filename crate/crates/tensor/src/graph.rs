//! Dynamic tape: every recorded op becomes a [`Node`] holding its inputs.
//!
//! Node ids grow monotonically, so sorting reachable nodes by descending id
//! is a valid reverse topological order. Backward rules are written in terms
//! of ordinary tensor ops; running them with recording switched on yields
//! gradients that are themselves differentiable.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub(crate) type GradFn<E> =
    dyn Fn(&[Tensor<E>], &Tensor<E>, &[bool]) -> Result<Vec<Option<Tensor<E>>>>;

pub(crate) struct Node<E: Element> {
    pub(crate) id: u64,
    op: Option<OpRecord<E>>,
    inputs: Vec<Tensor<E>>,
}

struct OpRecord<E: Element> {
    name: &'static str,
    second_order: bool,
    grad_fn: Box<GradFn<E>>,
}

impl<E: Element> Drop for Node<E> {
    // Unwind long chains iteratively instead of recursing through Rc drops.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.inputs);
        while let Some(t) = stack.pop() {
            if let Ok(inner) = Rc::try_unwrap(t.inner) {
                if let Some(node) = inner.node {
                    if let Ok(mut node) = Rc::try_unwrap(node) {
                        stack.append(&mut node.inputs);
                    }
                }
            }
        }
    }
}

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(1) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) fn leaf_node<E: Element>() -> Rc<Node<E>> {
    Rc::new(Node {
        id: next_id(),
        op: None,
        inputs: Vec::new(),
    })
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Restores the previous recording mode on drop.
pub struct GradModeGuard {
    prev: bool,
}

impl GradModeGuard {
    pub fn new(enabled: bool) -> Self {
        let prev = GRAD_ENABLED.with(|c| c.replace(enabled));
        Self { prev }
    }
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

/// Runs `f` without recording any ops.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = GradModeGuard::new(false);
    f()
}

pub(crate) fn record<E, F>(
    name: &'static str,
    shape: Vec<usize>,
    data: Vec<E>,
    inputs: &[&Tensor<E>],
    grad_fn: F,
) -> Tensor<E>
where
    E: Element,
    F: Fn(&[Tensor<E>], &Tensor<E>, &[bool]) -> Result<Vec<Option<Tensor<E>>>> + 'static,
{
    record_impl(name, true, shape, Rc::new(data), inputs, grad_fn)
}

/// Records an op whose backward is computed directly on buffers and so
/// cannot itself be differentiated.
pub(crate) fn record_first_order<E, F>(
    name: &'static str,
    shape: Vec<usize>,
    data: Vec<E>,
    inputs: &[&Tensor<E>],
    grad_fn: F,
) -> Tensor<E>
where
    E: Element,
    F: Fn(&[Tensor<E>], &Tensor<E>, &[bool]) -> Result<Vec<Option<Tensor<E>>>> + 'static,
{
    record_impl(name, false, shape, Rc::new(data), inputs, grad_fn)
}

pub(crate) fn record_shared<E, F>(
    name: &'static str,
    shape: Vec<usize>,
    data: Rc<Vec<E>>,
    inputs: &[&Tensor<E>],
    grad_fn: F,
) -> Tensor<E>
where
    E: Element,
    F: Fn(&[Tensor<E>], &Tensor<E>, &[bool]) -> Result<Vec<Option<Tensor<E>>>> + 'static,
{
    record_impl(name, true, shape, data, inputs, grad_fn)
}

fn record_impl<E, F>(
    name: &'static str,
    second_order: bool,
    shape: Vec<usize>,
    data: Rc<Vec<E>>,
    inputs: &[&Tensor<E>],
    grad_fn: F,
) -> Tensor<E>
where
    E: Element,
    F: Fn(&[Tensor<E>], &Tensor<E>, &[bool]) -> Result<Vec<Option<Tensor<E>>>> + 'static,
{
    let track = is_grad_enabled() && inputs.iter().any(|t| t.requires_grad());
    let node = track.then(|| {
        Rc::new(Node {
            id: next_id(),
            op: Some(OpRecord {
                name,
                second_order,
                grad_fn: Box::new(grad_fn),
            }),
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
        })
    });
    Tensor::from_parts(shape, data, node)
}

/// Gradients of a scalar with respect to every leaf it depends on.
pub struct Gradients<E: Element> {
    map: HashMap<u64, Tensor<E>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, t: &Tensor<E>) -> Option<&Tensor<E>> {
        t.node().and_then(|n| self.map.get(&n.id))
    }

    /// Gradient of `t`, zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, t: &Tensor<E>) -> Tensor<E> {
        self.get(t).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn check_scalar<E: Element>(loss: &Tensor<E>) -> Result<()> {
    match loss.shape() {
        [] | [1] => Ok(()),
        s => Err(TensorError::NonScalarLoss(s.to_vec())),
    }
}

/// Backpropagates `loss` to every reachable leaf.
pub fn backward<E: Element>(loss: &Tensor<E>) -> Result<Gradients<E>> {
    check_scalar(loss)?;
    let map = run(loss, None, false)?;
    Ok(Gradients { map })
}

/// Gradients of `output` with respect to `wrt`, in order.
///
/// With `create_graph` the returned tensors are recorded on the graph and can
/// be differentiated again. Inputs the output does not depend on get zeros.
pub fn grad<E: Element>(
    output: &Tensor<E>,
    wrt: &[&Tensor<E>],
    create_graph: bool,
) -> Result<Vec<Tensor<E>>> {
    check_scalar(output)?;
    let targets: HashSet<u64> = wrt.iter().filter_map(|t| t.node().map(|n| n.id)).collect();
    let mut map = run(output, Some(&targets), create_graph)?;
    Ok(wrt
        .iter()
        .map(|t| {
            t.node()
                .and_then(|n| map.remove(&n.id))
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect())
}

fn run<E: Element>(
    output: &Tensor<E>,
    targets: Option<&HashSet<u64>>,
    create_graph: bool,
) -> Result<HashMap<u64, Tensor<E>>> {
    let mut grads: HashMap<u64, Tensor<E>> = HashMap::new();
    let Some(root) = output.node() else {
        return Ok(grads);
    };

    let mut nodes: Vec<Rc<Node<E>>> = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![Rc::clone(root)];
    seen.insert(root.id);
    while let Some(node) = stack.pop() {
        for input in &node.inputs {
            if let Some(n) = input.node() {
                if seen.insert(n.id) {
                    stack.push(Rc::clone(n));
                }
            }
        }
        nodes.push(node);
    }
    nodes.sort_unstable_by_key(|n| n.id);

    let is_target = |n: &Node<E>| match targets {
        Some(t) => t.contains(&n.id),
        None => n.op.is_none(),
    };
    // Which nodes have a path to a requested target.
    let mut leads: HashSet<u64> = HashSet::new();
    for n in &nodes {
        if is_target(n) || n.inputs.iter().any(|i| i.node().is_some_and(|x| leads.contains(&x.id))) {
            leads.insert(n.id);
        }
    }

    if !leads.contains(&root.id) {
        return Ok(grads);
    }

    let _mode = GradModeGuard::new(create_graph);
    grads.insert(root.id, Tensor::ones(output.shape()));
    for node in nodes.iter().rev() {
        if !leads.contains(&node.id) {
            continue;
        }
        let Some(op) = &node.op else { continue };
        let g = if is_target(node) {
            grads.get(&node.id).cloned()
        } else {
            grads.remove(&node.id)
        };
        let Some(g) = g else { continue };
        if create_graph && !op.second_order {
            return Err(TensorError::NoSecondOrder { op: op.name });
        }
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|i| i.node().is_some_and(|n| leads.contains(&n.id)))
            .collect();
        let input_grads = (op.grad_fn)(&node.inputs, &g, &needs)?;
        for ((input, ig), need) in node.inputs.iter().zip(input_grads).zip(needs) {
            let (Some(ig), true) = (ig, need) else { continue };
            let id = input.node().map(|n| n.id).expect("needed input has a node");
            let acc = match grads.remove(&id) {
                Some(prev) => prev.add(&ig)?,
                None => ig,
            };
            grads.insert(id, acc);
        }
    }
    if let Some(t) = targets {
        grads.retain(|id, _| t.contains(id));
    }
    Ok(grads)
}
