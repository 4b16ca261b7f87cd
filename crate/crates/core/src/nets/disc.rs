use syndiff_tensor::{Element, Tensor};

use super::embedding::TimeEmbedding;
use super::layers::{Conv2d, Linear};
use super::{expect_image, expect_same, expect_times, join, Module, NetConfig};
use crate::error::Result;
use crate::random::SynRng;

#[derive(Debug, Clone)]
struct DownBlock<E: Element> {
    conv1: Conv2d<E>,
    temb: Option<Linear<E>>,
    conv2: Conv2d<E>,
}

/// Convolutional critic producing one logit per sample.
///
/// The diffusive variant judges a candidate denoised sample next to the
/// noisier `x_t` it came from and is told the time; the plain variant judges
/// a single image. No normalization layers, so the input gradient is itself
/// differentiable for the gradient penalty.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet<E: Element> {
    temb: Option<TimeEmbedding<E>>,
    input: Conv2d<E>,
    blocks: Vec<DownBlock<E>>,
    head: Linear<E>,
    in_channels: usize,
}

impl<E: Element> DiscriminatorNet<E> {
    pub fn diffusive(config: &NetConfig, rng: &mut SynRng) -> Result<Self> {
        Self::build(config, true, rng)
    }

    pub fn plain(config: &NetConfig, rng: &mut SynRng) -> Result<Self> {
        Self::build(config, false, rng)
    }

    fn build(config: &NetConfig, timed: bool, rng: &mut SynRng) -> Result<Self> {
        config.validate()?;
        let base = config.disc_channels;
        let in_channels = if timed { 2 } else { 1 };
        let temb = timed.then(|| TimeEmbedding::new(config.embed_dim, config.hidden_dim, rng));
        let input = Conv2d::same(in_channels, base, 3, rng);
        let mut ch = base;
        let mut blocks = Vec::with_capacity(config.levels);
        for i in 0..config.levels {
            let w = base * NetConfig::channel_mult(i + 1);
            blocks.push(DownBlock {
                conv1: Conv2d::same(ch, w, 3, rng),
                temb: timed.then(|| Linear::new(config.hidden_dim, w, rng)),
                conv2: Conv2d::new(w, w, 3, 2, 1, rng),
            });
            ch = w;
        }
        let side = config.image_size >> config.levels;
        Ok(Self {
            temb,
            input,
            blocks,
            head: Linear::new(ch * side * side, 1, rng),
            in_channels,
        })
    }

    pub fn is_diffusive(&self) -> bool {
        self.temb.is_some()
    }

    /// Logits `[N]` for the diffusive variant.
    pub fn forward(&self, candidate: &Tensor<E>, x_t: &Tensor<E>, ts: &[usize]) -> Result<Tensor<E>> {
        expect_same("discriminator_forward", candidate, x_t)?;
        expect_times("discriminator_forward", candidate, ts)?;
        self.run(&Tensor::concat_channels(&[candidate, x_t])?, Some(ts))
    }

    /// Logits `[N]` for the plain variant.
    pub fn forward_plain(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.run(x, None)
    }

    fn run(&self, x: &Tensor<E>, ts: Option<&[usize]>) -> Result<Tensor<E>> {
        expect_image("discriminator_forward", x, self.in_channels)?;
        let temb = match (&self.temb, ts) {
            (Some(e), Some(ts)) => Some(e.forward(ts)?.swish()?),
            (None, None) => None,
            _ => {
                return Err(crate::Error::Config(
                    "time input does not match discriminator variant".into(),
                ))
            }
        };
        let mut h = self.input.forward(x)?.leaky_relu_default();
        for b in &self.blocks {
            h = b.conv1.forward(&h)?.leaky_relu_default();
            if let (Some(p), Some(e)) = (&b.temb, &temb) {
                h = h.add_sample_bias(&p.forward(e)?)?;
            }
            h = b.conv2.forward(&h)?.leaky_relu_default();
        }
        let n = h.dim(0);
        let flat = h.reshape(&[n, h.numel() / n])?;
        Ok(self.head.forward(&flat)?.reshape(&[n])?)
    }

    /// Zeroes the output layer so every logit is exactly 0.
    pub fn zero_head_(&mut self) {
        self.head.zero_();
    }
}

impl<E: Element> Module<E> for DiscriminatorNet<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        if let Some(e) = &self.temb {
            e.visit(&join(prefix, "temb"), f);
        }
        self.input.visit(&join(prefix, "input"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.conv1.visit(&join(prefix, &format!("block.{i}.conv1")), f);
            if let Some(p) = &b.temb {
                p.visit(&join(prefix, &format!("block.{i}.temb")), f);
            }
            b.conv2.visit(&join(prefix, &format!("block.{i}.conv2")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        if let Some(e) = &mut self.temb {
            e.visit_mut(&join(prefix, "temb"), f);
        }
        self.input.visit_mut(&join(prefix, "input"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.conv1.visit_mut(&join(prefix, &format!("block.{i}.conv1")), f);
            if let Some(p) = &mut b.temb {
                p.visit_mut(&join(prefix, &format!("block.{i}.temb")), f);
            }
            b.conv2.visit_mut(&join(prefix, &format!("block.{i}.conv2")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
