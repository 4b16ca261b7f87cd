use syndiff_tensor::{Element, Tensor};

use super::layers::{Conv2d, ConvTranspose2d, Norm};
use super::{expect_image, join, Module, NetConfig};
use crate::error::Result;
use crate::random::SynRng;

pub const RESIDUAL_BLOCKS: usize = 6;

#[derive(Debug, Clone)]
struct Residual<E: Element> {
    conv1: Conv2d<E>,
    norm: Norm<E>,
    conv2: Conv2d<E>,
}

impl<E: Element> Residual<E> {
    fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let h = self.norm.forward(&self.conv1.forward(x)?)?.leaky_relu_default();
        Ok(x.add(&self.conv2.forward(&h)?)?)
    }
}

/// One-shot translator: three encoding stages (the last two halve the
/// resolution), six residual blocks and three decoding stages.
#[derive(Debug, Clone)]
pub struct ResNetGenerator<E: Element> {
    enc: [(Conv2d<E>, Norm<E>); 3],
    res: Vec<Residual<E>>,
    dec: [(ConvTranspose2d<E>, Norm<E>); 2],
    output: Conv2d<E>,
}

impl<E: Element> ResNetGenerator<E> {
    pub fn new(config: &NetConfig, rng: &mut SynRng) -> Result<Self> {
        config.validate()?;
        let r = config.resnet_channels;
        let enc = [
            (Conv2d::same(1, r, 7, rng), Norm::group(r)),
            (Conv2d::new(r, 2 * r, 3, 2, 1, rng), Norm::group(2 * r)),
            (Conv2d::new(2 * r, 4 * r, 3, 2, 1, rng), Norm::group(4 * r)),
        ];
        let res = (0..RESIDUAL_BLOCKS)
            .map(|_| Residual {
                conv1: Conv2d::same(4 * r, 4 * r, 3, rng),
                norm: Norm::group(4 * r),
                conv2: Conv2d::same(4 * r, 4 * r, 3, rng),
            })
            .collect();
        let dec = [
            (ConvTranspose2d::new(4 * r, 2 * r, rng), Norm::group(2 * r)),
            (ConvTranspose2d::new(2 * r, r, rng), Norm::group(r)),
        ];
        Ok(Self {
            enc,
            res,
            dec,
            output: Conv2d::same(r, 1, 7, rng),
        })
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        expect_image("resnet_forward", x, 1)?;
        if x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0 {
            return Err(crate::Error::Config(format!(
                "resnet_forward needs sides divisible by 4, got {:?}",
                x.shape()
            )));
        }
        let mut h = x.clone();
        for (conv, norm) in &self.enc {
            h = norm.forward(&conv.forward(&h)?)?.leaky_relu_default();
        }
        for block in &self.res {
            h = block.forward(&h)?;
        }
        for (conv, norm) in &self.dec {
            h = norm.forward(&conv.forward(&h)?)?.leaky_relu_default();
        }
        Ok(self.output.forward(&h)?.tanh())
    }

    /// Zeroes the second convolution of every residual block so each one
    /// starts as the identity.
    pub fn zero_residual_branches_(&mut self) {
        for b in &mut self.res {
            b.conv2.zero_();
        }
    }
}

impl<E: Element> Module<E> for ResNetGenerator<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        for (i, (c, n)) in self.enc.iter().enumerate() {
            c.visit(&join(prefix, &format!("enc.{i}.conv")), f);
            n.visit(&join(prefix, &format!("enc.{i}.norm")), f);
        }
        for (i, b) in self.res.iter().enumerate() {
            b.conv1.visit(&join(prefix, &format!("res.{i}.conv1")), f);
            b.norm.visit(&join(prefix, &format!("res.{i}.norm")), f);
            b.conv2.visit(&join(prefix, &format!("res.{i}.conv2")), f);
        }
        for (i, (c, n)) in self.dec.iter().enumerate() {
            c.visit(&join(prefix, &format!("dec.{i}.conv")), f);
            n.visit(&join(prefix, &format!("dec.{i}.norm")), f);
        }
        self.output.visit(&join(prefix, "output"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        for (i, (c, n)) in self.enc.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("enc.{i}.conv")), f);
            n.visit_mut(&join(prefix, &format!("enc.{i}.norm")), f);
        }
        for (i, b) in self.res.iter_mut().enumerate() {
            b.conv1.visit_mut(&join(prefix, &format!("res.{i}.conv1")), f);
            b.norm.visit_mut(&join(prefix, &format!("res.{i}.norm")), f);
            b.conv2.visit_mut(&join(prefix, &format!("res.{i}.conv2")), f);
        }
        for (i, (c, n)) in self.dec.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("dec.{i}.conv")), f);
            n.visit_mut(&join(prefix, &format!("dec.{i}.norm")), f);
        }
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}
