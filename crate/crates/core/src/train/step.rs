use rand::Rng;
use syndiff_tensor::{grad_norm_sq, Element, Tensor};

use super::model::SynDiffNets;
use crate::diffusion::{forward_marginal_at, posterior_params_at, posterior_sample};
use crate::error::{Error, Result};
use crate::losses::{loss_cycle, loss_d_adv, loss_g_adv, total_d, total_g, LossWeights};
use crate::random::SynRng;
use crate::schedule::FastSchedule;

/// Everything one iteration computes before any update. Generator outputs
/// stay attached so the generator step can reuse them.
#[derive(Debug, Clone)]
pub struct Forward<E: Element> {
    pub x0_a: Tensor<E>,
    pub x0_b: Tensor<E>,
    /// One-shot translations: `synth_b` from `x0_a`, `synth_a` from `x0_b`.
    pub synth_a: Tensor<E>,
    pub synth_b: Tensor<E>,
    /// One-shot round trips back to the source modality.
    pub cycle_a: Tensor<E>,
    pub cycle_b: Tensor<E>,
    pub ts_a: Vec<usize>,
    pub ts_b: Vec<usize>,
    pub xt_a: Tensor<E>,
    pub xt_b: Tensor<E>,
    /// Real less-noisy samples from the posterior anchored at the true image.
    pub real_prev_a: Tensor<E>,
    pub real_prev_b: Tensor<E>,
    /// Clean-image estimates of the diffusive generators.
    pub est_a: Tensor<E>,
    pub est_b: Tensor<E>,
    /// Fake less-noisy samples from the posterior anchored at the estimates.
    pub fake_prev_a: Tensor<E>,
    pub fake_prev_b: Tensor<E>,
}

/// Per-sample times drawn uniformly from `{k, 2k, …, T}`.
pub fn sample_times(schedule: &FastSchedule, n: usize, rng: &mut SynRng) -> Vec<usize> {
    (0..n)
        .map(|_| rng.random_range(1..=schedule.num_steps()) * schedule.step())
        .collect()
}

pub fn forward_pass<E: Element>(
    nets: &SynDiffNets<E>,
    x0_a: &Tensor<E>,
    x0_b: &Tensor<E>,
    schedule: &FastSchedule,
    rng: &mut SynRng,
) -> Result<Forward<E>> {
    if x0_a.shape() != x0_b.shape() {
        return Err(Error::Config(format!(
            "batch shapes differ: {:?} vs {:?}",
            x0_a.shape(),
            x0_b.shape()
        )));
    }
    let g = &nets.gens;
    let synth_b = g.nondiff_a2b.forward(x0_a)?;
    let cycle_a = g.nondiff_b2a.forward(&synth_b)?;
    let synth_a = g.nondiff_b2a.forward(x0_b)?;
    let cycle_b = g.nondiff_a2b.forward(&synth_a)?;

    let n = x0_a.dim(0);
    let ts_a = sample_times(schedule, n, rng);
    let ts_b = sample_times(schedule, n, rng);
    let xt_a = forward_marginal_at(schedule, x0_a, &ts_a, rng)?;
    let xt_b = forward_marginal_at(schedule, x0_b, &ts_b, rng)?;
    let real_prev_a = posterior_sample(&posterior_params_at(schedule, &xt_a, x0_a, &ts_a)?, rng)?;
    let real_prev_b = posterior_sample(&posterior_params_at(schedule, &xt_b, x0_b, &ts_b)?, rng)?;

    let est_a = g.diff_b2a.forward(&xt_a, &synth_b, &ts_a)?;
    let est_b = g.diff_a2b.forward(&xt_b, &synth_a, &ts_b)?;
    let fake_prev_a = posterior_sample(&posterior_params_at(schedule, &xt_a, &est_a, &ts_a)?, rng)?;
    let fake_prev_b = posterior_sample(&posterior_params_at(schedule, &xt_b, &est_b, &ts_b)?, rng)?;

    Ok(Forward {
        x0_a: x0_a.clone(),
        x0_b: x0_b.clone(),
        synth_a,
        synth_b,
        cycle_a,
        cycle_b,
        ts_a,
        ts_b,
        xt_a,
        xt_b,
        real_prev_a,
        real_prev_b,
        est_a,
        est_b,
        fake_prev_a,
        fake_prev_b,
    })
}

#[derive(Debug, Clone)]
pub struct DiscriminatorLosses<E: Element> {
    pub total: Tensor<E>,
    pub diff_a: Tensor<E>,
    pub diff_b: Tensor<E>,
    pub nondiff_a: Tensor<E>,
    pub nondiff_b: Tensor<E>,
}

/// Discriminator objective on detached generator outputs, with the gradient
/// penalty on the real diffusive samples only.
pub fn discriminator_losses<E: Element>(
    nets: &SynDiffNets<E>,
    f: &Forward<E>,
    weights: &LossWeights,
) -> Result<DiscriminatorLosses<E>> {
    let d = &nets.discs;
    let diffusive = |disc: &crate::nets::DiscriminatorNet<E>,
                     real: &Tensor<E>,
                     fake: &Tensor<E>,
                     xt: &Tensor<E>,
                     ts: &[usize]|
     -> Result<Tensor<E>> {
        let real = real.detach().requires_grad_();
        let real_logits = disc.forward(&real, xt, ts)?;
        let penalty = if weights.gp_weight != 0.0 {
            Some(grad_norm_sq(&real_logits, &real)?)
        } else {
            None
        };
        let fake_logits = disc.forward(&fake.detach(), xt, ts)?;
        loss_d_adv(&real_logits, &fake_logits, penalty.as_ref(), weights.gp_weight)
    };
    let diff_a = diffusive(&d.diff_a, &f.real_prev_a, &f.fake_prev_a, &f.xt_a, &f.ts_a)?;
    let diff_b = diffusive(&d.diff_b, &f.real_prev_b, &f.fake_prev_b, &f.xt_b, &f.ts_b)?;
    let nondiff_a = loss_d_adv(
        &d.nondiff_a.forward_plain(&f.x0_a)?,
        &d.nondiff_a.forward_plain(&f.synth_a.detach())?,
        None,
        0.0,
    )?;
    let nondiff_b = loss_d_adv(
        &d.nondiff_b.forward_plain(&f.x0_b)?,
        &d.nondiff_b.forward_plain(&f.synth_b.detach())?,
        None,
        0.0,
    )?;
    Ok(DiscriminatorLosses {
        total: total_d(&diff_a, &diff_b, &nondiff_a, &nondiff_b)?,
        diff_a,
        diff_b,
        nondiff_a,
        nondiff_b,
    })
}

#[derive(Debug, Clone)]
pub struct GeneratorLosses<E: Element> {
    pub total: Tensor<E>,
    pub diff_a: Tensor<E>,
    pub diff_b: Tensor<E>,
    pub nondiff_a: Tensor<E>,
    pub nondiff_b: Tensor<E>,
    pub cycle: Tensor<E>,
}

/// Non-saturating adversarial terms of the four generators plus the
/// weighted cycle loss. The diffusive cycle uses the clean-image estimates.
pub fn generator_losses<E: Element>(
    nets: &SynDiffNets<E>,
    f: &Forward<E>,
    weights: &LossWeights,
) -> Result<GeneratorLosses<E>> {
    let d = &nets.discs;
    let diff_a = loss_g_adv(&d.diff_a.forward(&f.fake_prev_a, &f.xt_a, &f.ts_a)?);
    let diff_b = loss_g_adv(&d.diff_b.forward(&f.fake_prev_b, &f.xt_b, &f.ts_b)?);
    let nondiff_a = loss_g_adv(&d.nondiff_a.forward_plain(&f.synth_a)?);
    let nondiff_b = loss_g_adv(&d.nondiff_b.forward_plain(&f.synth_b)?);
    let cycle = loss_cycle(&f.x0_a, &f.x0_b, &f.cycle_a, &f.cycle_b, &f.est_a, &f.est_b)?;
    Ok(GeneratorLosses {
        total: total_g(&diff_a, &diff_b, &nondiff_a, &nondiff_b, &cycle, weights.lambda_cyc)?,
        diff_a,
        diff_b,
        nondiff_a,
        nondiff_b,
        cycle,
    })
}
