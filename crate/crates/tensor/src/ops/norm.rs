use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::record_first_order;
use crate::tensor::{numel, Tensor};

/// Per-group mean and reciprocal standard deviation.
fn group_stats<E: Element>(x: &[E], groups: usize, group_len: usize, eps: f64) -> Vec<(E, E)> {
    x.chunks(group_len)
        .take(groups)
        .map(|chunk| {
            let n = chunk.len() as f64;
            let mean = chunk.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
            let var = chunk.iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>() / n;
            (E::from_f64_lossy(mean), E::from_f64_lossy(1.0 / (var + eps).sqrt()))
        })
        .collect()
}

impl<E: Element> Tensor<E> {
    /// Group normalization without affine terms over `[N, C, ...]`.
    ///
    /// `groups == C` gives instance normalization. The backward pass is
    /// computed directly and does not support double backward.
    pub fn group_norm(&self, groups: usize, eps: f64) -> Result<Self> {
        if self.rank() < 3 || groups == 0 || self.dim(1) % groups != 0 {
            return Err(TensorError::InvalidShape {
                op: "group_norm",
                msg: format!("{groups} groups for shape {:?}", self.shape()),
            });
        }
        let total_groups = self.dim(0) * groups;
        let group_len = self.dim(1) / groups * numel(&self.shape()[2..]);
        let stats = group_stats(self.data(), total_groups, group_len, eps);
        let mut out = Vec::with_capacity(self.numel());
        for (chunk, &(mean, rstd)) in self.data().chunks(group_len).zip(&stats) {
            out.extend(chunk.iter().map(|&v| (v - mean) * rstd));
        }
        Ok(record_first_order("group_norm", self.shape().to_vec(), out, &[self], move |x, g, _| {
            let x = &x[0];
            let stats = group_stats(x.data(), total_groups, group_len, eps);
            let inv_n = E::from_f64_lossy(1.0 / group_len as f64);
            let mut dx = Vec::with_capacity(x.numel());
            for ((xc, gc), &(mean, rstd)) in x.data().chunks(group_len).zip(g.data().chunks(group_len)).zip(&stats) {
                let mut g_mean = E::zero();
                let mut gx_mean = E::zero();
                for (&xv, &gv) in xc.iter().zip(gc) {
                    g_mean = g_mean + gv;
                    gx_mean = gx_mean + gv * (xv - mean) * rstd;
                }
                g_mean = g_mean * inv_n;
                gx_mean = gx_mean * inv_n;
                dx.extend(
                    xc.iter()
                        .zip(gc)
                        .map(|(&xv, &gv)| rstd * (gv - g_mean - (xv - mean) * rstd * gx_mean)),
                );
            }
            Ok(vec![Some(Tensor::from_parts(x.shape().to_vec(), Rc::new(dx), None))])
        }))
    }

    pub fn instance_norm(&self, eps: f64) -> Result<Self> {
        let c = if self.rank() >= 2 { self.dim(1) } else { 0 };
        self.group_norm(c, eps)
    }
}
