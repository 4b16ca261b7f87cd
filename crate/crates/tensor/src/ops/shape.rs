use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::record;
use crate::tensor::{numel, Tensor};

fn nc_rest(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], numel(&shape[2..]))
}

impl<E: Element> Tensor<E> {
    /// Concatenates `[N, C_i, ...]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(TensorError::InvalidShape {
            op: "concat_channels",
            msg: "no inputs".into(),
        })?;
        if first.rank() < 2 {
            return Err(TensorError::InvalidShape {
                op: "concat_channels",
                msg: format!("need rank >= 2, got {:?}", first.shape()),
            });
        }
        for p in parts {
            if p.rank() != first.rank() || p.dim(0) != first.dim(0) || p.shape()[2..] != first.shape()[2..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let (n, _, rest) = nc_rest(first.shape());
        let channels: Vec<usize> = parts.iter().map(|p| p.dim(1)).collect();
        let total: usize = channels.iter().sum();
        let mut data = Vec::with_capacity(n * total * rest);
        for i in 0..n {
            for (p, &c) in parts.iter().zip(&channels) {
                data.extend_from_slice(&p.data()[i * c * rest..(i + 1) * c * rest]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[1] = total;
        Ok(record("concat_channels", shape, data, parts, move |_, g, needs| {
            let mut start = 0;
            let mut out = Vec::with_capacity(channels.len());
            for (&c, &need) in channels.iter().zip(needs) {
                out.push(if need { Some(g.narrow_channels(start, c)?) } else { None });
                start += c;
            }
            Ok(out)
        }))
    }

    /// Channels `start..start + len` of `[N, C, ...]`.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        if self.rank() < 2 || start + len > self.dim(1) {
            return Err(TensorError::InvalidShape {
                op: "narrow_channels",
                msg: format!("channels {start}..{} out of {:?}", start + len, self.shape()),
            });
        }
        let (n, c, rest) = nc_rest(self.shape());
        let mut data = Vec::with_capacity(n * len * rest);
        for i in 0..n {
            let base = i * c * rest;
            data.extend_from_slice(&self.data()[base + start * rest..base + (start + len) * rest]);
        }
        let mut shape = self.shape().to_vec();
        shape[1] = len;
        Ok(record("narrow_channels", shape, data, &[self], move |_, g, _| {
            Ok(vec![Some(g.pad_channels(start, c)?)])
        }))
    }

    /// Embeds `[N, c, ...]` at channel offset `before` in a zero `[N, total, ...]`.
    pub fn pad_channels(&self, before: usize, total: usize) -> Result<Self> {
        if self.rank() < 2 || before + self.dim(1) > total {
            return Err(TensorError::InvalidShape {
                op: "pad_channels",
                msg: format!("cannot place {:?} at {before} in {total} channels", self.shape()),
            });
        }
        let (n, c, rest) = nc_rest(self.shape());
        let mut data = vec![E::zero(); n * total * rest];
        for i in 0..n {
            let dst = i * total * rest + before * rest;
            data[dst..dst + c * rest].copy_from_slice(&self.data()[i * c * rest..(i + 1) * c * rest]);
        }
        let mut shape = self.shape().to_vec();
        shape[1] = total;
        Ok(record("pad_channels", shape, data, &[self], move |_, g, _| {
            Ok(vec![Some(g.narrow_channels(before, c)?)])
        }))
    }

    /// Nearest-neighbour 2x upsampling of `[N, C, H, W]`.
    pub fn upsample_nearest2x(&self) -> Result<Self> {
        self.expect_rank("upsample_nearest2x", 4)?;
        let (nc, h, w) = (self.dim(0) * self.dim(1), self.dim(2), self.dim(3));
        let (h2, w2) = (2 * h, 2 * w);
        let mut data = vec![E::zero(); nc * h2 * w2];
        let src = self.data();
        for p in 0..nc {
            for y in 0..h2 {
                let srow = &src[p * h * w + (y / 2) * w..][..w];
                let drow = &mut data[p * h2 * w2 + y * w2..][..w2];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = srow[x / 2];
                }
            }
        }
        let shape = vec![self.dim(0), self.dim(1), h2, w2];
        Ok(record("upsample_nearest2x", shape, data, &[self], |_, g, _| {
            Ok(vec![Some(g.sum_pool2x()?)])
        }))
    }

    /// Sums non-overlapping 2x2 windows; adjoint of [`Self::upsample_nearest2x`].
    pub fn sum_pool2x(&self) -> Result<Self> {
        self.expect_rank("sum_pool2x", 4)?;
        let (nc, h, w) = (self.dim(0) * self.dim(1), self.dim(2), self.dim(3));
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::InvalidShape {
                op: "sum_pool2x",
                msg: format!("odd spatial size {:?}", self.shape()),
            });
        }
        let (h2, w2) = (h / 2, w / 2);
        let mut data = vec![E::zero(); nc * h2 * w2];
        let src = self.data();
        for p in 0..nc {
            for y in 0..h {
                let srow = &src[p * h * w + y * w..][..w];
                let drow = &mut data[p * h2 * w2 + (y / 2) * w2..][..w2];
                for (x, &v) in srow.iter().enumerate() {
                    drow[x / 2] = drow[x / 2] + v;
                }
            }
        }
        let shape = vec![self.dim(0), self.dim(1), h2, w2];
        Ok(record("sum_pool2x", shape, data, &[self], |_, g, _| {
            Ok(vec![Some(g.upsample_nearest2x()?)])
        }))
    }
}
