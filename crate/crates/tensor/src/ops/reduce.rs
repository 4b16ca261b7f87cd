use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::record;
use crate::tensor::{numel, Tensor};

impl<E: Element> Tensor<E> {
    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Self {
        let total: E = self.data().iter().copied().sum();
        let shape = self.shape().to_vec();
        record("sum", vec![], vec![total], &[self], move |_, g, _| {
            Ok(vec![Some(g.expand_scalar(&shape)?)])
        })
    }

    pub fn mean(&self) -> Self {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand_scalar(&self, shape: &[usize]) -> Result<Self> {
        if self.numel() != 1 {
            return Err(TensorError::InvalidShape {
                op: "expand_scalar",
                msg: format!("source must hold one element, shape is {:?}", self.shape()),
            });
        }
        let data = vec![self.data()[0]; numel(shape)];
        let src_shape = self.shape().to_vec();
        Ok(record("expand_scalar", shape.to_vec(), data, &[self], move |_, g, _| {
            Ok(vec![Some(g.sum().reshape(&src_shape)?)])
        }))
    }

    /// `[N, ...] -> [N]`, summing everything but the leading axis.
    pub fn sum_per_sample(&self) -> Result<Self> {
        if self.rank() == 0 {
            return Err(TensorError::InvalidShape {
                op: "sum_per_sample",
                msg: "needs a leading batch axis".into(),
            });
        }
        let n = self.dim(0);
        let per = self.numel() / n.max(1);
        let data: Vec<E> = if per == 0 {
            vec![E::zero(); n]
        } else {
            self.data().chunks(per).map(|c| c.iter().copied().sum()).collect()
        };
        let shape = self.shape().to_vec();
        Ok(record("sum_per_sample", vec![n], data, &[self], move |_, g, _| {
            Ok(vec![Some(g.expand_per_sample(&shape)?)])
        }))
    }

    /// `[N] -> shape` where `shape[0] == N`, repeating each value.
    pub fn expand_per_sample(&self, shape: &[usize]) -> Result<Self> {
        if self.rank() != 1 || shape.first() != Some(&self.dim(0)) {
            return Err(TensorError::ShapeMismatch {
                op: "expand_per_sample",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let per = numel(&shape[1..]);
        let mut data = Vec::with_capacity(numel(shape));
        for &v in self.data() {
            data.extend(std::iter::repeat_n(v, per));
        }
        Ok(record("expand_per_sample", shape.to_vec(), data, &[self], |_, g, _| {
            Ok(vec![Some(g.sum_per_sample()?)])
        }))
    }

    /// Broadcasts `[N', C]` (N' = 1 or N) over `[N, C, ...]`.
    pub fn broadcast_nc(&self, shape: &[usize]) -> Result<Self> {
        let bad = || TensorError::ShapeMismatch {
            op: "broadcast_nc",
            lhs: self.shape().to_vec(),
            rhs: shape.to_vec(),
        };
        if self.rank() != 2 || shape.len() < 2 {
            return Err(bad());
        }
        let (src_n, c) = (self.dim(0), self.dim(1));
        let n = shape[0];
        if c != shape[1] || !(src_n == 1 || src_n == n) {
            return Err(bad());
        }
        let spatial = numel(&shape[2..]);
        let src = self.data();
        let mut data = Vec::with_capacity(numel(shape));
        for i in 0..n {
            let row = if src_n == 1 { 0 } else { i };
            for ch in 0..c {
                data.extend(std::iter::repeat_n(src[row * c + ch], spatial));
            }
        }
        Ok(record("broadcast_nc", shape.to_vec(), data, &[self], move |_, g, _| {
            Ok(vec![Some(g.reduce_nc(src_n)?)])
        }))
    }

    /// `[N, C, ...] -> [n_out, C]` summing trailing axes (and the batch when
    /// `n_out == 1`).
    pub fn reduce_nc(&self, n_out: usize) -> Result<Self> {
        if self.rank() < 2 || !(n_out == 1 || n_out == self.dim(0)) {
            return Err(TensorError::InvalidShape {
                op: "reduce_nc",
                msg: format!("cannot reduce {:?} to [{n_out}, C]", self.shape()),
            });
        }
        let (n, c) = (self.dim(0), self.dim(1));
        let spatial = numel(&self.shape()[2..]);
        let mut data = vec![E::zero(); n_out * c];
        for (idx, chunk) in self.data().chunks(spatial.max(1)).enumerate().take(n * c) {
            let (i, ch) = (idx / c, idx % c);
            let row = if n_out == 1 { 0 } else { i };
            let s: E = if spatial == 0 { E::zero() } else { chunk.iter().copied().sum() };
            data[row * c + ch] = data[row * c + ch] + s;
        }
        let shape = self.shape().to_vec();
        Ok(record("reduce_nc", vec![n_out, c], data, &[self], move |_, g, _| {
            Ok(vec![Some(g.broadcast_nc(&shape)?)])
        }))
    }

    /// Adds a per-channel bias `[C]` to `[N, C, ...]`.
    pub fn add_bias(&self, bias: &Self) -> Result<Self> {
        let c = bias.numel();
        self.add(&bias.reshape(&[1, c])?.broadcast_nc(self.shape())?)
    }

    /// Adds a per-sample, per-channel bias `[N, C]` to `[N, C, ...]`.
    pub fn add_sample_bias(&self, bias: &Self) -> Result<Self> {
        self.add(&bias.broadcast_nc(self.shape())?)
    }

    /// Multiplies `[N, C, ...]` by a per-channel scale `[C]`.
    pub fn mul_channels(&self, scale: &Self) -> Result<Self> {
        let c = scale.numel();
        self.mul(&scale.reshape(&[1, c])?.broadcast_nc(self.shape())?)
    }

    /// Reinterprets the buffer with a new shape of equal size.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let src = self.shape().to_vec();
        Ok(crate::graph::record_shared(
            "reshape",
            shape.to_vec(),
            Rc::clone(&self.inner.data),
            &[self],
            move |_, g, _| Ok(vec![Some(g.reshape(&src)?)]),
        ))
    }
}
