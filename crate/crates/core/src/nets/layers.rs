use rand::Rng;
use syndiff_tensor::{Element, Tensor};

use super::{join, Module};
use crate::error::Result;
use crate::random::SynRng;

const NORM_EPS: f64 = 1e-5;

fn uniform<E: Element>(shape: &[usize], bound: f64, rng: &mut SynRng) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| E::from_f64_lossy(rng.random_range(-bound..=bound))).collect();
    Tensor::parameter(data, shape).expect("length matches shape")
}

fn zeroed<E: Element>(t: &Tensor<E>) -> Tensor<E> {
    Tensor::parameter(vec![E::zero(); t.numel()], t.shape()).expect("same shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    pub stride: usize,
    pub pad: usize,
}

impl<E: Element> Conv2d<E> {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize, rng: &mut SynRng) -> Self {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        Self {
            weight: uniform(&[cout, cin, kernel, kernel], bound, rng),
            bias: uniform(&[cout], bound, rng),
            stride,
            pad,
        }
    }

    /// Same-size convolution with odd `kernel`.
    pub fn same(cin: usize, cout: usize, kernel: usize, rng: &mut SynRng) -> Self {
        Self::new(cin, cout, kernel, 1, kernel / 2, rng)
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(x.conv2d(&self.weight, self.stride, self.pad)?.add_bias(&self.bias)?)
    }

    pub fn zero_(&mut self) {
        self.weight = zeroed(&self.weight);
        self.bias = zeroed(&self.bias);
    }
}

impl<E: Element> Module<E> for Conv2d<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Stride-2 upsampling transposed convolution (kernel 4, padding 1).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> ConvTranspose2d<E> {
    pub fn new(cin: usize, cout: usize, rng: &mut SynRng) -> Self {
        let bound = 1.0 / ((cout * 16) as f64).sqrt();
        Self {
            weight: uniform(&[cin, cout, 4, 4], bound, rng),
            bias: uniform(&[cout], bound, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let hw = (x.dim(2) * 2, x.dim(3) * 2);
        Ok(x.conv_transpose2d(&self.weight, 2, 1, hw)?.add_bias(&self.bias)?)
    }
}

impl<E: Element> Module<E> for ConvTranspose2d<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// `[N, in] -> [N, out]`.
#[derive(Debug, Clone)]
pub struct Linear<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut SynRng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: uniform(&[fan_in, fan_out], bound, rng),
            bias: uniform(&[fan_out], bound, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(x.matmul(&self.weight)?.add_bias(&self.bias)?)
    }

    pub fn zero_(&mut self) {
        self.weight = zeroed(&self.weight);
        self.bias = zeroed(&self.bias);
    }
}

impl<E: Element> Module<E> for Linear<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Group normalization with a learnable per-channel scale and shift.
/// `groups == channels` is instance normalization.
#[derive(Debug, Clone)]
pub struct Norm<E: Element> {
    pub scale: Tensor<E>,
    pub shift: Tensor<E>,
    pub groups: usize,
}

impl<E: Element> Norm<E> {
    pub fn instance(channels: usize) -> Self {
        Self::with_groups(channels, channels)
    }

    /// `min(32, channels)` groups.
    pub fn group(channels: usize) -> Self {
        Self::with_groups(channels, channels.min(32))
    }

    fn with_groups(channels: usize, groups: usize) -> Self {
        Self {
            scale: Tensor::parameter(vec![E::one(); channels], &[channels]).expect("shape"),
            shift: Tensor::parameter(vec![E::zero(); channels], &[channels]).expect("shape"),
            groups,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(x.group_norm(self.groups, NORM_EPS)?
            .mul_channels(&self.scale)?
            .add_bias(&self.shift)?)
    }
}

impl<E: Element> Module<E> for Norm<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        f(join(prefix, "scale"), &self.scale);
        f(join(prefix, "shift"), &self.shift);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        f(join(prefix, "scale"), &mut self.scale);
        f(join(prefix, "shift"), &mut self.shift);
    }
}
