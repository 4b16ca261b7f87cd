use syndiff_tensor::{backward, Tensor};

use super::adam::AdamState;
use crate::error::Result;
use crate::losses::ddpm_eps_loss;
use crate::nets::{GeneratorNet, NetConfig};
use crate::random::SynRng;
use crate::schedule::FastSchedule;

/// Noise-prediction baseline on a unit-step schedule.
pub struct DdpmTrainer {
    pub net: GeneratorNet<f32>,
    pub schedule: FastSchedule,
    pub opt: AdamState,
}

impl DdpmTrainer {
    pub fn new(net: NetConfig, schedule: FastSchedule, lr: f64, rng: &mut SynRng) -> Result<Self> {
        Ok(Self {
            net: GeneratorNet::noise_predictor(net, rng)?,
            schedule,
            opt: AdamState::new(lr, 0.9, 0.999),
        })
    }

    /// One optimizer step on `x0` with conditioning `y`; returns the loss.
    pub fn step(&mut self, x0: &Tensor<f32>, y: &Tensor<f32>, rng: &mut SynRng) -> Result<f64> {
        let loss = ddpm_eps_loss(&self.net, x0, y, &self.schedule, rng)?;
        let grads = backward(&loss)?;
        self.opt.step(&mut self.net, &grads)?;
        Ok(loss.item()? as f64)
    }
}
