use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::NetConfig;
use crate::schedule::{ExponentForm, FastSchedule};

/// Every training knob, with flat key names for the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    #[serde(rename = "T")]
    pub total_steps: usize,
    #[serde(rename = "k")]
    pub step: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub schedule_form: ExponentForm,
    pub lambda_cyc: f64,
    pub gp_weight: f64,
    pub seed: u64,
    /// Write an intermediate checkpoint every this many epochs (0: only at
    /// the end).
    pub checkpoint_every: usize,
    pub image_size: usize,
    pub base_channels: usize,
    pub levels: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub disc_channels: usize,
    pub resnet_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        let w = LossWeights::default();
        Self {
            epochs: 50,
            lr: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            batch_size: 2,
            total_steps: 1000,
            step: 250,
            beta_min: 0.1,
            beta_max: 20.0,
            schedule_form: ExponentForm::Printed,
            lambda_cyc: w.lambda_cyc,
            gp_weight: w.gp_weight,
            seed: 0,
            checkpoint_every: 0,
            image_size: net.image_size,
            base_channels: net.base_channels,
            levels: net.levels,
            embed_dim: net.embed_dim,
            hidden_dim: net.hidden_dim,
            disc_channels: net.disc_channels,
            resnet_channels: net.resnet_channels,
        }
    }
}

impl TrainConfig {
    pub fn net(&self) -> NetConfig {
        NetConfig {
            image_size: self.image_size,
            base_channels: self.base_channels,
            levels: self.levels,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            disc_channels: self.disc_channels,
            resnet_channels: self.resnet_channels,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_cyc: self.lambda_cyc,
            gp_weight: self.gp_weight,
        }
    }

    pub fn schedule(&self) -> Result<FastSchedule> {
        Ok(FastSchedule::with_form(
            self.total_steps,
            self.step,
            self.beta_min,
            self.beta_max,
            self.schedule_form,
        )?)
    }

    /// Checks every field and builds the schedule once.
    pub fn validate(&self) -> Result<FastSchedule> {
        let schedule = self.schedule()?;
        self.net().validate()?;
        self.weights().validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        Ok(schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.total_steps, c.step), (50, 1000, 250));
        assert_eq!((c.lr, c.adam_beta1, c.adam_beta2), (1e-4, 0.5, 0.9));
        assert_eq!((c.lambda_cyc, c.gp_weight, c.beta_min, c.beta_max), (0.5, 0.5, 0.1, 20.0));
        assert_eq!(c.validate().unwrap().num_steps(), 4);
    }

    #[test]
    fn json_uses_flat_keys_and_rejects_unknown() {
        let c: TrainConfig = serde_json::from_str(r#"{"T": 1000, "k": 500, "lr": 0.001}"#).unwrap();
        assert_eq!((c.step, c.lr, c.epochs), (500, 0.001, 50));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
        let text = serde_json::to_string(&TrainConfig::default()).unwrap();
        assert!(text.contains("\"T\":1000") && text.contains("\"k\":250"));
    }

    #[test]
    fn invalid_values_rejected() {
        let bad_k = TrainConfig { step: 300, ..Default::default() };
        assert!(matches!(bad_k.validate(), Err(Error::Schedule(_))));
        let bad_beta = TrainConfig { adam_beta2: 1.0, ..Default::default() };
        assert!(bad_beta.validate().is_err());
        let bad_lr = TrainConfig { lr: 0.0, ..Default::default() };
        assert!(bad_lr.validate().is_err());
    }
}
