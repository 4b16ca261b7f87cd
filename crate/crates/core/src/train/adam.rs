use syndiff_tensor::{Element, Gradients, Tensor, TensorError};

use crate::error::Result;
use crate::nets::Module;

pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction. Moments are kept in f64, one pair per
/// parameter in visit order, zero until first touched.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: ADAM_EPS,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over every parameter of `module`; parameters without a
    /// gradient see a zero gradient.
    pub fn step<E: Element, M: Module<E> + ?Sized>(&mut self, module: &mut M, grads: &Gradients<E>) -> Result<()> {
        let mut pairs = Vec::new();
        module.visit("", &mut |_, p| pairs.push(grads.get_or_zeros(p)));
        let mut i = 0;
        let mut err = None;
        self.step += 1;
        let (b1t, b2t) = self.bias_corrections();
        module.visit_mut("", &mut |_, p| {
            if err.is_none() {
                if let Err(e) = self.update(i, p, &pairs[i], b1t, b2t) {
                    err = Some(e);
                }
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }

    /// One update over explicit parameter/gradient pairs.
    pub fn step_tensors<E: Element>(&mut self, params: &mut [Tensor<E>], grads: &[Tensor<E>]) -> Result<()> {
        self.step += 1;
        let (b1t, b2t) = self.bias_corrections();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g, b1t, b2t)?;
        }
        Ok(())
    }

    fn bias_corrections(&self) -> (f64, f64) {
        let t = self.step as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    fn update<E: Element>(&mut self, i: usize, param: &mut Tensor<E>, grad: &Tensor<E>, b1t: f64, b2t: f64) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: param.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            }
            .into());
        }
        if self.moments.len() <= i {
            self.moments.resize_with(i + 1, Default::default);
        }
        let (m, v) = &mut self.moments[i];
        if m.len() != param.numel() {
            *m = vec![0.0; param.numel()];
            *v = vec![0.0; param.numel()];
        }
        let data: Vec<E> = param
            .data()
            .iter()
            .zip(grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
            .map(|((&w, &g), (m, v))| {
                let g = g.to_f64_lossy();
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let step = self.lr * (*m / b1t) / ((*v / b2t).sqrt() + self.eps);
                E::from_f64_lossy(w.to_f64_lossy() - step)
            })
            .collect();
        *param = Tensor::parameter(data, param.shape())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::parameter(vec![v], &[1]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.3, -7.0, 1e-3] {
            let mut s = AdamState::new(0.01, 0.5, 0.9);
            let mut p = [scalar(1.0)];
            s.step_tensors(&mut p, &[scalar(g)]).unwrap();
            let expect = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[0].data()[0] - expect).abs() < 1e-15);
            assert!((p[0].data()[0] - (1.0 - 0.01 * g.signum())).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(0.1, 0.5, 0.9);
        let mut p = [Tensor::<f32>::parameter(vec![0.25, -3.5], &[2]).unwrap()];
        s.step_tensors(&mut p, &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p[0].data(), &[0.25, -3.5]);
    }

    #[test]
    fn two_steps_on_square_match_reference() {
        let (lr, b1, b2, eps) = (0.1, 0.5, 0.9, 1e-8);
        let mut s = AdamState::new(lr, b1, b2);
        let mut p = [scalar(1.0)];
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            let grad = scalar(2.0 * p[0].data()[0]);
            s.step_tensors(&mut p, &[grad]).unwrap();
            assert!((p[0].data()[0] - x).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut s = AdamState::new(0.1, 0.5, 0.9);
        let mut p = [Tensor::<f64>::zeros(&[2])];
        assert!(s.step_tensors(&mut p, &[Tensor::zeros(&[3])]).is_err());
    }
}
