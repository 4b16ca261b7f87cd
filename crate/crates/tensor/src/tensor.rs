use std::fmt;
use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{self, Node};

/// Dense row-major tensor, optionally attached to the differentiation graph.
///
/// Cloning is cheap: data and graph node are reference counted. Tensors are
/// never mutated in place once created.
pub struct Tensor<E: Element> {
    pub(crate) inner: Rc<Inner<E>>,
}

pub(crate) struct Inner<E: Element> {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Rc<Vec<E>>,
    pub(crate) node: Option<Rc<Node<E>>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let head: Vec<_> = data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("dtype", &E::NAME)
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &format_args!("{head:?}{}", if data.len() > 8 { "…" } else { "" }))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<E: Element> Tensor<E> {
    pub(crate) fn from_parts(shape: Vec<usize>, data: Rc<Vec<E>>, node: Option<Rc<Node<E>>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            inner: Rc::new(Inner { shape, data, node }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn from_vec(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), Rc::new(data), None))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&v| E::from_f64_lossy(v)).collect(), shape)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        Self::from_parts(shape.to_vec(), Rc::new(vec![value; numel(shape)]), None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, E::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, E::one())
    }

    /// Rank-0 constant.
    pub fn scalar(value: E) -> Self {
        Self::full(&[], value)
    }

    /// Fresh leaf that gradients are accumulated for.
    pub fn parameter(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Ok(Self::from_vec(data, shape)?.requires_grad_())
    }

    /// Same values as a new differentiable leaf.
    pub fn requires_grad_(&self) -> Self {
        Self::from_parts(
            self.inner.shape.clone(),
            Rc::clone(&self.inner.data),
            Some(graph::leaf_node()),
        )
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.inner.shape.clone(), Rc::clone(&self.inner.data), None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.inner.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.as_ref().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64_lossy()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(TensorError::InvalidShape {
                op: "item",
                msg: format!("expected one element, shape is {:?}", self.shape()),
            });
        }
        Ok(self.data()[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.node.is_some()
    }

    pub(crate) fn node(&self) -> Option<&Rc<Node<E>>> {
        self.inner.node.as_ref()
    }

    /// True when both handles refer to the same graph node or buffer.
    pub fn same_as(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Converts element type; the result is a constant.
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor::from_parts(
            self.shape().to_vec(),
            Rc::new(self.data().iter().map(|v| F::from_f64_lossy(v.to_f64_lossy())).collect()),
            None,
        )
    }

    pub(crate) fn expect_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(TensorError::InvalidShape {
                op,
                msg: format!("expected rank {rank}, got shape {:?}", self.shape()),
            });
        }
        Ok(())
    }
}
