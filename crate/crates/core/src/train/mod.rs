//! Cycle-consistent adversarial training of the four generator and four
//! discriminator networks, plus checkpointing and inference.

mod adam;
pub mod checkpoint;
mod config;
mod ddpm;
mod model;
mod step;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use syndiff_tensor::{backward, no_grad, Tensor};

pub use adam::{AdamState, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointHeader};
pub use config::TrainConfig;
pub use ddpm::DdpmTrainer;
pub use model::{Discriminators, Generators, SynDiffNets};
pub use step::{
    discriminator_losses, forward_pass, generator_losses, sample_times, DiscriminatorLosses, Forward, GeneratorLosses,
};

use crate::data::{images_to_tensor, tensor_to_images, GrayImage, UnpairedPools};
use crate::diffusion::{reverse_sample, CountingDenoiser};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::random::{seeded, SynRng};
use crate::schedule::FastSchedule;

/// Scalar losses of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub g_total: f64,
    pub d_total: f64,
    pub cycle: f64,
    pub g_diff_a: f64,
    pub g_diff_b: f64,
    pub g_nondiff_a: f64,
    pub g_nondiff_b: f64,
    pub d_diff: f64,
    pub d_nondiff: f64,
}

impl LossReport {
    pub const TSV_HEADER: &'static str =
        "epoch\titer\tL_G_total\tL_D_total\tL_cyc\tL_G_diff_A\tL_G_diff_B\tL_G_nondiff_A\tL_G_nondiff_B\tL_D_diff\tL_D_nondiff";

    pub fn values(&self) -> [f64; 9] {
        [
            self.g_total,
            self.d_total,
            self.cycle,
            self.g_diff_a,
            self.g_diff_b,
            self.g_nondiff_a,
            self.g_nondiff_b,
            self.d_diff,
            self.d_nondiff,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn tsv_row(&self, epoch: usize, iter: usize) -> String {
        let cols: Vec<String> = self.values().iter().map(|v| format!("{v:.6}")).collect();
        format!("{epoch}\t{iter}\t{}", cols.join("\t"))
    }
}

fn item(t: &Tensor<f32>) -> Result<f64> {
    Ok(t.item()? as f64)
}

/// Networks, optimizers and the single random stream of a training run.
pub struct Trainer {
    pub nets: SynDiffNets<f32>,
    pub schedule: FastSchedule,
    pub config: TrainConfig,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub rng: SynRng,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let schedule = config.validate()?;
        let mut rng = seeded(config.seed);
        let nets = SynDiffNets::new(config.net(), &mut rng)?;
        Ok(Self {
            nets,
            schedule,
            opt_g: AdamState::new(config.lr, config.adam_beta1, config.adam_beta2),
            opt_d: AdamState::new(config.lr, config.adam_beta1, config.adam_beta2),
            config,
            rng,
        })
    }

    pub fn weights(&self) -> LossWeights {
        self.config.weights()
    }

    pub fn forward(&mut self, x0_a: &Tensor<f32>, x0_b: &Tensor<f32>) -> Result<Forward<f32>> {
        forward_pass(&self.nets, x0_a, x0_b, &self.schedule, &mut self.rng)
    }

    /// Updates only the discriminators.
    pub fn discriminator_step(&mut self, f: &Forward<f32>) -> Result<DiscriminatorLosses<f32>> {
        let d = discriminator_losses(&self.nets, f, &self.weights())?;
        let grads = backward(&d.total)?;
        self.opt_d.step(&mut self.nets.discs, &grads)?;
        Ok(d)
    }

    /// Updates only the generators, judged by the current discriminators.
    pub fn generator_step(&mut self, f: &Forward<f32>) -> Result<GeneratorLosses<f32>> {
        let g = generator_losses(&self.nets, f, &self.weights())?;
        let grads = backward(&g.total)?;
        self.opt_g.step(&mut self.nets.gens, &grads)?;
        Ok(g)
    }

    /// Forward pass, discriminator update, then generator update.
    pub fn train_iteration(&mut self, x0_a: &Tensor<f32>, x0_b: &Tensor<f32>) -> Result<LossReport> {
        let f = self.forward(x0_a, x0_b)?;
        let d = self.discriminator_step(&f)?;
        let g = self.generator_step(&f)?;
        Ok(LossReport {
            g_total: item(&g.total)?,
            d_total: item(&d.total)?,
            cycle: item(&g.cycle)?,
            g_diff_a: item(&g.diff_a)?,
            g_diff_b: item(&g.diff_b)?,
            g_nondiff_a: item(&g.nondiff_a)?,
            g_nondiff_b: item(&g.nondiff_b)?,
            d_diff: item(&d.diff_a)? + item(&d.diff_b)?,
            d_nondiff: item(&d.nondiff_a)? + item(&d.nondiff_b)?,
        })
    }

    /// Batches for one epoch: the larger pool is visited once in shuffled
    /// order, the smaller one cycles through its own shuffle.
    pub fn epoch_batches(&mut self, len_a: usize, len_b: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        let longest = len_a.max(len_b);
        let mut order = |len: usize| {
            let mut idx: Vec<usize> = (0..len).collect();
            idx.shuffle(&mut self.rng);
            (0..longest).map(|i| idx[i % len]).collect::<Vec<_>>()
        };
        let a = order(len_a);
        let b = order(len_b);
        let bs = self.config.batch_size;
        (0..longest.div_ceil(bs))
            .map(|i| {
                let r = i * bs..((i + 1) * bs).min(longest);
                (a[r.clone()].to_vec(), b[r].to_vec())
            })
            .collect()
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            net: self.config.net(),
            total_steps: self.schedule.total_steps(),
            step: self.schedule.step(),
            beta_min: self.schedule.beta_min(),
            beta_max: self.schedule.beta_max(),
            form: self.schedule.form(),
        }
    }

    /// Full training run. Each iteration appends a loss row to `log`; the
    /// final (and any periodic) checkpoint goes to `checkpoint`.
    pub fn train(&mut self, pools: &UnpairedPools, checkpoint: &Path, log: &mut dyn Write) -> Result<Vec<LossReport>> {
        pools.validate(self.config.image_size)?;
        let log_err = |e: std::io::Error| Error::io("loss log", e);
        writeln!(log, "{}", LossReport::TSV_HEADER).map_err(log_err)?;
        let mut history = Vec::new();
        for epoch in 1..=self.config.epochs {
            let batches = self.epoch_batches(pools.a().len(), pools.b().len());
            for (iter, (ia, ib)) in batches.into_iter().enumerate() {
                let xa = images_to_tensor(&ia.iter().map(|&i| &pools.a()[i]).collect::<Vec<_>>())?;
                let xb = images_to_tensor(&ib.iter().map(|&i| &pools.b()[i]).collect::<Vec<_>>())?;
                let report = self.train_iteration(&xa, &xb)?;
                writeln!(log, "{}", report.tsv_row(epoch, iter)).map_err(log_err)?;
                history.push(report);
            }
            log.flush().map_err(log_err)?;
            let every = self.config.checkpoint_every;
            if every > 0 && epoch % every == 0 && epoch != self.config.epochs {
                save_checkpoint(checkpoint, &self.header(), &self.nets)?;
            }
        }
        save_checkpoint(checkpoint, &self.header(), &self.nets)?;
        Ok(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    A2B,
    B2A,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A2B" => Ok(Self::A2B),
            "B2A" => Ok(Self::B2A),
            _ => Err(Error::Config(format!("direction must be A2B or B2A, got {s:?}"))),
        }
    }
}

/// Output of [`translate`] with the number of generator evaluations.
#[derive(Debug, Clone)]
pub struct Translation {
    pub images: Vec<GrayImage>,
    pub generator_calls: usize,
}

/// Reverse diffusion with the diffusive generator of `direction`, using the
/// source images as the conditioning input.
pub fn translate(
    nets: &SynDiffNets<f32>,
    schedule: &FastSchedule,
    sources: &[&GrayImage],
    direction: Direction,
    rng: &mut SynRng,
) -> Result<Translation> {
    let size = nets.config.image_size;
    if let Some(bad) = sources.iter().find(|s| s.dims() != (size, size)) {
        return Err(CheckpointError::ImageSize {
            expected: size,
            found: bad.dims(),
        }
        .into());
    }
    let y = images_to_tensor::<f32>(sources)?;
    let gen = match direction {
        Direction::A2B => &nets.gens.diff_a2b,
        Direction::B2A => &nets.gens.diff_b2a,
    };
    let counted = CountingDenoiser::new(gen);
    let out = no_grad(|| reverse_sample(&counted, &y, schedule, rng))?;
    Ok(Translation {
        images: tensor_to_images(&out)?,
        generator_calls: counted.calls(),
    })
}
