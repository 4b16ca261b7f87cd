//! The four network families: the diffusive UNet generator, the time-aware
//! discriminator, the one-shot ResNet translator and its plain discriminator.

mod disc;
mod embedding;
mod layers;
mod resnet;
mod unet;

use serde::{Deserialize, Serialize};
use syndiff_tensor::{Element, Tensor};

use crate::error::{Error, Result};

pub use disc::DiscriminatorNet;
pub use embedding::{sinusoidal_encoding, TimeEmbedding};
pub use layers::{Conv2d, ConvTranspose2d, Linear, Norm};
pub use resnet::{ResNetGenerator, RESIDUAL_BLOCKS};
pub use unet::GeneratorNet;

/// Visits named parameters. Names are dotted paths, stable across runs, and
/// double as checkpoint keys.
pub trait Module<E: Element> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>));

    fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t.clone())));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Network sizes. The defaults are a desk-scale shrink of the full model
/// (256-pixel inputs with six halvings).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub image_size: usize,
    pub base_channels: usize,
    pub levels: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub disc_channels: usize,
    pub resnet_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            base_channels: 32,
            levels: 3,
            embed_dim: 32,
            hidden_dim: 128,
            disc_channels: 16,
            resnet_channels: 16,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return fail(format!("image_size {} must be a power of two >= 16", self.image_size));
        }
        if self.levels == 0 || self.levels >= usize::BITS as usize || self.image_size >> self.levels < 2 {
            return fail(format!(
                "{} halvings of {} pixels leave fewer than 2",
                self.levels, self.image_size
            ));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return fail(format!("embed_dim {} must be even and positive", self.embed_dim));
        }
        for (name, v) in [
            ("base_channels", self.base_channels),
            ("hidden_dim", self.hidden_dim),
            ("disc_channels", self.disc_channels),
            ("resnet_channels", self.resnet_channels),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Width multiplier at resolution level `i`: doubles every other level,
    /// capped at four.
    pub fn channel_mult(i: usize) -> usize {
        (1usize << i.div_ceil(2)).min(4)
    }
}

pub(crate) fn expect_image<E: Element>(op: &'static str, x: &Tensor<E>, channels: usize) -> Result<()> {
    let s = x.shape();
    if s.len() != 4 || s[1] != channels {
        return Err(syndiff_tensor::TensorError::InvalidShape {
            op,
            msg: format!("expected [N, {channels}, H, W], got {s:?}"),
        }
        .into());
    }
    Ok(())
}

pub(crate) fn expect_same<E: Element>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(syndiff_tensor::TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }
        .into());
    }
    Ok(())
}

pub(crate) fn expect_times<E: Element>(op: &'static str, x: &Tensor<E>, ts: &[usize]) -> Result<()> {
    if ts.len() != x.dim(0) {
        return Err(syndiff_tensor::TensorError::InvalidShape {
            op,
            msg: format!("{} timesteps for batch of {}", ts.len(), x.dim(0)),
        }
        .into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_multipliers() {
        let m: Vec<usize> = (0..6).map(NetConfig::channel_mult).collect();
        assert_eq!(m, vec![1, 2, 2, 4, 4, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::default().validate().is_ok());
        let bad = NetConfig { image_size: 24, ..Default::default() };
        assert!(bad.validate().is_err());
        let deep = NetConfig { levels: 4, image_size: 16, ..Default::default() };
        assert!(deep.validate().is_err());
        let odd = NetConfig { embed_dim: 31, ..Default::default() };
        assert!(odd.validate().is_err());
    }
}
