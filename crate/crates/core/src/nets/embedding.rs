use syndiff_tensor::{Element, Tensor};

use super::layers::Linear;
use super::{join, Module};
use crate::error::Result;
use crate::random::SynRng;

const MAX_PERIOD: f64 = 10_000.0;

/// Interleaved `[sin(t·ω₀), cos(t·ω₀), sin(t·ω₁), …]` with geometric
/// frequencies `ω_i = 10000^(−i / (dim/2))`, one row per time.
pub fn sinusoidal_encoding(ts: &[usize], dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        for i in 0..half {
            let freq = MAX_PERIOD.powf(-(i as f64) / half as f64);
            let arg = t as f64 * freq;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    out
}

/// Sinusoidal encoding followed by a two-layer swish MLP.
#[derive(Debug, Clone)]
pub struct TimeEmbedding<E: Element> {
    pub embed_dim: usize,
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
}

impl<E: Element> TimeEmbedding<E> {
    pub fn new(embed_dim: usize, hidden_dim: usize, rng: &mut SynRng) -> Self {
        Self {
            embed_dim,
            fc1: Linear::new(embed_dim, hidden_dim, rng),
            fc2: Linear::new(hidden_dim, hidden_dim, rng),
        }
    }

    /// `[N, hidden_dim]`.
    pub fn forward(&self, ts: &[usize]) -> Result<Tensor<E>> {
        let enc = Tensor::from_f64(&sinusoidal_encoding(ts, self.embed_dim), &[ts.len(), self.embed_dim])?;
        self.fc2.forward(&self.fc1.forward(&enc)?.swish()?)
    }
}

impl<E: Element> Module<E> for TimeEmbedding<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
