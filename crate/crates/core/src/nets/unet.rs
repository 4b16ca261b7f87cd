use syndiff_tensor::{Element, Tensor};

use super::embedding::TimeEmbedding;
use super::layers::{Conv2d, Linear, Norm};
use super::{expect_image, expect_same, expect_times, join, Module, NetConfig};
use crate::diffusion::Denoiser;
use crate::error::Result;
use crate::random::SynRng;

/// Pre-activation residual block with the time embedding added as a
/// per-sample channel bias between its two convolutions.
#[derive(Debug, Clone)]
struct ResBlock<E: Element> {
    norm1: Norm<E>,
    conv1: Conv2d<E>,
    temb: Linear<E>,
    norm2: Norm<E>,
    conv2: Conv2d<E>,
    skip: Option<Conv2d<E>>,
}

impl<E: Element> ResBlock<E> {
    fn new(cin: usize, cout: usize, hidden: usize, rng: &mut SynRng) -> Self {
        Self {
            norm1: Norm::instance(cin),
            conv1: Conv2d::same(cin, cout, 3, rng),
            temb: Linear::new(hidden, cout, rng),
            norm2: Norm::instance(cout),
            conv2: Conv2d::same(cout, cout, 3, rng),
            skip: (cin != cout).then(|| Conv2d::same(cin, cout, 1, rng)),
        }
    }

    fn forward(&self, x: &Tensor<E>, temb: &Tensor<E>) -> Result<Tensor<E>> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.swish()?)?;
        let h = h.add_sample_bias(&self.temb.forward(temb)?)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.swish()?)?;
        let shortcut = match &self.skip {
            Some(c) => c.forward(x)?,
            None => x.clone(),
        };
        Ok(shortcut.add(&h)?)
    }
}

impl<E: Element> Module<E> for ResBlock<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.temb.visit(&join(prefix, "temb"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        if let Some(s) = &self.skip {
            s.visit(&join(prefix, "skip"), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.temb.visit_mut(&join(prefix, "temb"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        if let Some(s) = &mut self.skip {
            s.visit_mut(&join(prefix, "skip"), f);
        }
    }
}

#[derive(Debug, Clone)]
struct DownLevel<E: Element> {
    blocks: [ResBlock<E>; 2],
    down: Conv2d<E>,
}

#[derive(Debug, Clone)]
struct UpLevel<E: Element> {
    up: Conv2d<E>,
    blocks: [ResBlock<E>; 2],
}

/// Conditional UNet mapping `(x_t, y, t)` to a clean-image estimate in
/// `[−1, 1]`. `x_t` and `y` enter as two stacked input channels.
#[derive(Debug, Clone)]
pub struct GeneratorNet<E: Element> {
    config: NetConfig,
    temb: TimeEmbedding<E>,
    input: Conv2d<E>,
    down: Vec<DownLevel<E>>,
    mid: [ResBlock<E>; 2],
    up: Vec<UpLevel<E>>,
    out_norm: Norm<E>,
    output: Conv2d<E>,
    saturate: bool,
}

impl<E: Element> GeneratorNet<E> {
    pub fn new(config: NetConfig, rng: &mut SynRng) -> Result<Self> {
        Self::build(config, true, rng)
    }

    /// Same backbone with an unbounded output, used as the DDPM noise
    /// predictor.
    pub fn noise_predictor(config: NetConfig, rng: &mut SynRng) -> Result<Self> {
        Self::build(config, false, rng)
    }

    fn build(config: NetConfig, saturate: bool, rng: &mut SynRng) -> Result<Self> {
        config.validate()?;
        let base = config.base_channels;
        let hidden = config.hidden_dim;
        let width = |i: usize| base * NetConfig::channel_mult(i);
        let temb = TimeEmbedding::new(config.embed_dim, hidden, rng);
        let input = Conv2d::same(2, base, 3, rng);
        let mut down = Vec::with_capacity(config.levels);
        let mut ch = base;
        for i in 0..config.levels {
            let w = width(i);
            let blocks = [ResBlock::new(ch, w, hidden, rng), ResBlock::new(w, w, hidden, rng)];
            down.push(DownLevel {
                blocks,
                down: Conv2d::new(w, w, 3, 2, 1, rng),
            });
            ch = w;
        }
        let wm = width(config.levels);
        let mid = [ResBlock::new(ch, wm, hidden, rng), ResBlock::new(wm, wm, hidden, rng)];
        ch = wm;
        let mut up = Vec::with_capacity(config.levels);
        for i in (0..config.levels).rev() {
            let w = width(i);
            up.push(UpLevel {
                up: Conv2d::same(ch, w, 3, rng),
                blocks: [ResBlock::new(2 * w, w, hidden, rng), ResBlock::new(w, w, hidden, rng)],
            });
            ch = w;
        }
        Ok(Self {
            config,
            temb,
            input,
            down,
            mid,
            up,
            out_norm: Norm::instance(ch),
            output: Conv2d::same(ch, 1, 3, rng),
            saturate,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn forward(&self, x_t: &Tensor<E>, y: &Tensor<E>, ts: &[usize]) -> Result<Tensor<E>> {
        expect_image("generator_forward", x_t, 1)?;
        expect_same("generator_forward", x_t, y)?;
        expect_times("generator_forward", x_t, ts)?;
        let temb = self.temb.forward(ts)?.swish()?;
        let mut h = self.input.forward(&Tensor::concat_channels(&[x_t, y])?)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for level in &self.down {
            for b in &level.blocks {
                h = b.forward(&h, &temb)?;
            }
            skips.push(h.clone());
            h = level.down.forward(&h)?;
        }
        for b in &self.mid {
            h = b.forward(&h, &temb)?;
        }
        for level in &self.up {
            h = level.up.forward(&h.upsample_nearest2x()?)?;
            let skip = skips.pop().expect("one skip per level");
            h = Tensor::concat_channels(&[&h, &skip])?;
            for b in &level.blocks {
                h = b.forward(&h, &temb)?;
            }
        }
        let out = self.output.forward(&self.out_norm.forward(&h)?.swish()?)?;
        Ok(if self.saturate { out.tanh() } else { out })
    }
}

impl<E: Element> Denoiser<E> for GeneratorNet<E> {
    fn denoise(&self, x_t: &Tensor<E>, y: &Tensor<E>, ts: &[usize]) -> Result<Tensor<E>> {
        self.forward(x_t, y, ts)
    }
}

impl<E: Element> Module<E> for GeneratorNet<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.temb.visit(&join(prefix, "temb"), f);
        self.input.visit(&join(prefix, "input"), f);
        for (i, l) in self.down.iter().enumerate() {
            for (j, b) in l.blocks.iter().enumerate() {
                b.visit(&join(prefix, &format!("down.{i}.block.{j}")), f);
            }
            l.down.visit(&join(prefix, &format!("down.{i}.down")), f);
        }
        for (j, b) in self.mid.iter().enumerate() {
            b.visit(&join(prefix, &format!("mid.{j}")), f);
        }
        for (i, l) in self.up.iter().enumerate() {
            l.up.visit(&join(prefix, &format!("up.{i}.up")), f);
            for (j, b) in l.blocks.iter().enumerate() {
                b.visit(&join(prefix, &format!("up.{i}.block.{j}")), f);
            }
        }
        self.out_norm.visit(&join(prefix, "out_norm"), f);
        self.output.visit(&join(prefix, "output"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.temb.visit_mut(&join(prefix, "temb"), f);
        self.input.visit_mut(&join(prefix, "input"), f);
        for (i, l) in self.down.iter_mut().enumerate() {
            for (j, b) in l.blocks.iter_mut().enumerate() {
                b.visit_mut(&join(prefix, &format!("down.{i}.block.{j}")), f);
            }
            l.down.visit_mut(&join(prefix, &format!("down.{i}.down")), f);
        }
        for (j, b) in self.mid.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("mid.{j}")), f);
        }
        for (i, l) in self.up.iter_mut().enumerate() {
            l.up.visit_mut(&join(prefix, &format!("up.{i}.up")), f);
            for (j, b) in l.blocks.iter_mut().enumerate() {
                b.visit_mut(&join(prefix, &format!("up.{i}.block.{j}")), f);
            }
        }
        self.out_norm.visit_mut(&join(prefix, "out_norm"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}
