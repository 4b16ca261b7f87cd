//! Unpaired two-modality image translation with a large-step conditional
//! diffusion model whose reverse steps are adversarially trained.
//!
//! The pipeline: [`schedule`] builds the noise variances, [`diffusion`]
//! noises and denoises, [`nets`] holds the four network families,
//! [`losses`] and [`train`] run cycle-consistent training, [`data`]
//! generates and stores toy images and [`metrics`] scores translations.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod random;
pub mod schedule;
pub mod train;

pub use error::{Error, Result};
pub use schedule::{ExponentForm, FastSchedule, ScheduleError};
