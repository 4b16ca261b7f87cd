use crate::element::Element;
use crate::error::Result;
use crate::graph::record;
use crate::tensor::Tensor;

/// Slope used for negative inputs by [`Tensor::leaky_relu_default`].
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

fn map<E: Element>(x: &Tensor<E>, f: impl Fn(E) -> E) -> Vec<E> {
    x.data().iter().map(|&v| f(v)).collect()
}

fn zip<E: Element>(a: &Tensor<E>, b: &Tensor<E>, f: impl Fn(E, E) -> E) -> Vec<E> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

#[inline]
pub(crate) fn sigmoid_scalar<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

#[inline]
fn softplus_scalar<E: Element>(x: E) -> E {
    x.max(E::zero()) + (-x.abs()).exp().ln_1p()
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.expect_shape("add", rhs)?;
        let data = zip(self, rhs, |a, b| a + b);
        Ok(record("add", self.shape().to_vec(), data, &[self, rhs], |_, g, _| {
            Ok(vec![Some(g.clone()), Some(g.clone())])
        }))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.expect_shape("sub", rhs)?;
        let data = zip(self, rhs, |a, b| a - b);
        Ok(record("sub", self.shape().to_vec(), data, &[self, rhs], |_, g, needs| {
            Ok(vec![Some(g.clone()), if needs[1] { Some(g.neg()) } else { None }])
        }))
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.expect_shape("mul", rhs)?;
        let data = zip(self, rhs, |a, b| a * b);
        Ok(record("mul", self.shape().to_vec(), data, &[self, rhs], |x, g, needs| {
            Ok(vec![
                if needs[0] { Some(g.mul(&x[1])?) } else { None },
                if needs[1] { Some(g.mul(&x[0])?) } else { None },
            ])
        }))
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        self.expect_shape("div", rhs)?;
        let data = zip(self, rhs, |a, b| a / b);
        Ok(record("div", self.shape().to_vec(), data, &[self, rhs], |x, g, needs| {
            Ok(vec![
                if needs[0] { Some(g.div(&x[1])?) } else { None },
                if needs[1] {
                    Some(g.mul(&x[0])?.div(&x[1].square())?.neg())
                } else {
                    None
                },
            ])
        }))
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Multiplies every element by a constant.
    pub fn scale(&self, c: f64) -> Self {
        let ce = E::from_f64_lossy(c);
        let data = map(self, |v| v * ce);
        record("scale", self.shape().to_vec(), data, &[self], move |_, g, _| {
            Ok(vec![Some(g.scale(c))])
        })
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let ce = E::from_f64_lossy(c);
        let data = map(self, |v| v + ce);
        record("add_scalar", self.shape().to_vec(), data, &[self], |_, g, _| {
            Ok(vec![Some(g.clone())])
        })
    }

    pub fn exp(&self) -> Self {
        let data = map(self, E::exp);
        record("exp", self.shape().to_vec(), data, &[self], |x, g, _| {
            Ok(vec![Some(g.mul(&x[0].exp())?)])
        })
    }

    pub fn log(&self) -> Self {
        let data = map(self, E::ln);
        record("log", self.shape().to_vec(), data, &[self], |x, g, _| {
            Ok(vec![Some(g.div(&x[0])?)])
        })
    }

    pub fn square(&self) -> Self {
        let data = map(self, |v| v * v);
        record("square", self.shape().to_vec(), data, &[self], |x, g, _| {
            Ok(vec![Some(g.mul(&x[0])?.scale(2.0))])
        })
    }

    pub fn sigmoid(&self) -> Self {
        let data = map(self, sigmoid_scalar);
        record("sigmoid", self.shape().to_vec(), data, &[self], |x, g, _| {
            let s = x[0].sigmoid();
            Ok(vec![Some(g.mul(&s.sub(&s.square())?)?)])
        })
    }

    pub fn tanh(&self) -> Self {
        let data = map(self, E::tanh);
        record("tanh", self.shape().to_vec(), data, &[self], |x, g, _| {
            let th2 = x[0].tanh().square();
            Ok(vec![Some(g.sub(&g.mul(&th2)?)?)])
        })
    }

    /// `ln(1 + e^x)`, stable for large |x|.
    pub fn softplus(&self) -> Self {
        let data = map(self, softplus_scalar);
        record("softplus", self.shape().to_vec(), data, &[self], |x, g, _| {
            Ok(vec![Some(g.mul(&x[0].sigmoid())?)])
        })
    }

    /// `x·sigmoid(x)`.
    pub fn swish(&self) -> Result<Self> {
        self.mul(&self.sigmoid())
    }

    pub fn abs(&self) -> Self {
        let data = map(self, E::abs);
        record("abs", self.shape().to_vec(), data, &[self], |x, g, _| {
            let sign = Tensor::from_parts(
                x[0].shape().to_vec(),
                std::rc::Rc::new(map(&x[0], |v| {
                    if v > E::zero() {
                        E::one()
                    } else if v < E::zero() {
                        -E::one()
                    } else {
                        E::zero()
                    }
                })),
                None,
            );
            Ok(vec![Some(g.mul(&sign)?)])
        })
    }

    pub fn leaky_relu(&self, slope: f64) -> Self {
        let s = E::from_f64_lossy(slope);
        let data = map(self, |v| if v > E::zero() { v } else { v * s });
        record("leaky_relu", self.shape().to_vec(), data, &[self], move |x, g, _| {
            let mask = Tensor::from_parts(
                x[0].shape().to_vec(),
                std::rc::Rc::new(map(&x[0], |v| if v > E::zero() { E::one() } else { s })),
                None,
            );
            Ok(vec![Some(g.mul(&mask)?)])
        })
    }

    pub fn leaky_relu_default(&self) -> Self {
        self.leaky_relu(LEAKY_RELU_SLOPE)
    }

    /// Multiplies each batch element (leading axis) by its own constant.
    pub fn scale_per_sample(&self, factors: &[f64]) -> Result<Self> {
        let n = self.shape().first().copied().unwrap_or(1);
        if factors.len() != n {
            return Err(crate::TensorError::InvalidShape {
                op: "scale_per_sample",
                msg: format!("{} factors for batch of {n}", factors.len()),
            });
        }
        let per = self.numel() / n.max(1);
        let mut data = Vec::with_capacity(self.numel());
        for (chunk, &f) in self.data().chunks(per.max(1)).zip(factors) {
            let fe = E::from_f64_lossy(f);
            data.extend(chunk.iter().map(|&v| v * fe));
        }
        let factors = factors.to_vec();
        Ok(record("scale_per_sample", self.shape().to_vec(), data, &[self], move |_, g, _| {
            Ok(vec![Some(g.scale_per_sample(&factors)?)])
        }))
    }
}
