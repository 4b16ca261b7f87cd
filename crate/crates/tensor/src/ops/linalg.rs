use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::record;
use crate::tensor::Tensor;

impl<E: Element> Tensor<E> {
    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rank() != 2 || rhs.rank() != 2 || self.dim(1) != rhs.dim(0) {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let (m, k, n) = (self.dim(0), self.dim(1), rhs.dim(1));
        let mut out = vec![E::zero(); m * n];
        E::gemm(
            m,
            k,
            n,
            E::one(),
            self.data(),
            (k as isize, 1),
            rhs.data(),
            (n as isize, 1),
            E::zero(),
            &mut out,
            (n as isize, 1),
        );
        Ok(record("matmul", vec![m, n], out, &[self, rhs], |x, g, needs| {
            Ok(vec![
                if needs[0] { Some(g.matmul(&x[1].transpose()?)?) } else { None },
                if needs[1] { Some(x[0].transpose()?.matmul(g)?) } else { None },
            ])
        }))
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Self> {
        self.expect_rank("transpose", 2)?;
        let (r, c) = (self.dim(0), self.dim(1));
        let src = self.data();
        let mut out = vec![E::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(record("transpose", vec![c, r], out, &[self], |_, g, _| {
            Ok(vec![Some(g.transpose()?)])
        }))
    }
}
