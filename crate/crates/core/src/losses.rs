//! Training objectives. Every function returns a scalar tensor attached to
//! the graph of its inputs.

use serde::{Deserialize, Serialize};
use syndiff_tensor::{Element, Tensor};

use crate::diffusion::{forward_marginal_with_noise, Denoiser};
use crate::error::{Error, Result};
use crate::random::{randn, SynRng};
use crate::schedule::{FastSchedule, ScheduleError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the cycle-consistency term in the generator objective.
    pub lambda_cyc: f64,
    /// Weight of the gradient penalty on real samples.
    pub gp_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 0.5,
            gp_weight: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cyc >= 0.0 && self.gp_weight >= 0.0) {
            return Err(Error::Config(format!("loss weights must be >= 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Non-saturating generator loss `mean(−log σ(z)) = mean(softplus(−z))`.
pub fn loss_g_adv<E: Element>(fake_logits: &Tensor<E>) -> Tensor<E> {
    fake_logits.neg().softplus().mean()
}

/// `mean(−log σ(real)) + mean(−log(1 − σ(fake))) + gp_weight·mean(penalty)`.
/// `penalty` holds per-sample squared input-gradient norms at real samples.
pub fn loss_d_adv<E: Element>(
    real_logits: &Tensor<E>,
    fake_logits: &Tensor<E>,
    penalty: Option<&Tensor<E>>,
    gp_weight: f64,
) -> Result<Tensor<E>> {
    let adv = real_logits.neg().softplus().mean().add(&fake_logits.softplus().mean())?;
    match penalty {
        Some(p) if gp_weight != 0.0 => Ok(adv.add(&p.mean().scale(gp_weight))?),
        _ => Ok(adv),
    }
}

pub fn mean_l1<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    Ok(a.sub(b)?.abs().mean())
}

/// Sum of four per-pixel mean L1 reconstruction errors: the one-shot cycles
/// and the diffusive cycles of both modalities.
pub fn loss_cycle<E: Element>(
    x0_a: &Tensor<E>,
    x0_b: &Tensor<E>,
    recon_nondiff_a: &Tensor<E>,
    recon_nondiff_b: &Tensor<E>,
    recon_diff_a: &Tensor<E>,
    recon_diff_b: &Tensor<E>,
) -> Result<Tensor<E>> {
    Ok(mean_l1(x0_a, recon_nondiff_a)?
        .add(&mean_l1(x0_b, recon_nondiff_b)?)?
        .add(&mean_l1(x0_a, recon_diff_a)?)?
        .add(&mean_l1(x0_b, recon_diff_b)?)?)
}

/// Four generator adversarial terms plus the weighted cycle loss.
pub fn total_g<E: Element>(
    diff_a: &Tensor<E>,
    diff_b: &Tensor<E>,
    nondiff_a: &Tensor<E>,
    nondiff_b: &Tensor<E>,
    cycle: &Tensor<E>,
    lambda_cyc: f64,
) -> Result<Tensor<E>> {
    Ok(diff_a
        .add(diff_b)?
        .add(nondiff_a)?
        .add(nondiff_b)?
        .add(&cycle.scale(lambda_cyc))?)
}

pub fn total_d<E: Element>(
    diff_a: &Tensor<E>,
    diff_b: &Tensor<E>,
    nondiff_a: &Tensor<E>,
    nondiff_b: &Tensor<E>,
) -> Result<Tensor<E>> {
    Ok(diff_a.add(diff_b)?.add(nondiff_a)?.add(nondiff_b)?)
}

/// Noise-prediction loss: squared error summed over pixels, averaged over the
/// batch, with one uniform time and fresh noise per sample.
pub fn ddpm_eps_loss<E: Element, N: Denoiser<E> + ?Sized>(
    eps_net: &N,
    x0: &Tensor<E>,
    y: &Tensor<E>,
    schedule: &FastSchedule,
    rng: &mut SynRng,
) -> Result<Tensor<E>> {
    use rand::Rng;
    if schedule.step() != 1 {
        return Err(ScheduleError::NotUnitStep(schedule.step()).into());
    }
    let n = x0.shape().first().copied().unwrap_or(1);
    let ts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=schedule.total_steps())).collect();
    let eps = randn::<E>(x0.shape(), rng);
    let x_t = forward_marginal_with_noise(schedule, x0, &ts, &eps)?;
    let pred = eps_net.denoise(&x_t, y, &ts)?;
    Ok(eps.sub(&pred)?.square().sum_per_sample()?.mean())
}
