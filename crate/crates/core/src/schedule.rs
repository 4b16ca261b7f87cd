//! Exponential noise schedule on the coarse time grid `{k, 2k, …, T}`.
//!
//! Per-step variance is `γ_t = 1 − exp(e_t)` with
//! `e_t = ±β̄_min·k/T − (β̄_max − β̄_min)·(2tk − k²)/(2T²)`. The cumulative
//! product `ᾱ_t = ∏ (1 − γ_τ)` over grid points up to `t`, with `ᾱ_0 = 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("total steps T must be positive")]
    ZeroSteps,
    #[error("step size k={k} must be positive and divide T={total}")]
    StepDoesNotDivide { total: usize, k: usize },
    #[error("beta bounds must satisfy 0 <= beta_min < beta_max, got ({min}, {max})")]
    InvalidBounds { min: f64, max: f64 },
    #[error("noise variance gamma at t={t} is {gamma}, outside (0, 1)")]
    GammaOutOfRange { t: usize, gamma: f64 },
    #[error("t={t} is not on the grid {{{k}, 2·{k}, …, {total}}}")]
    OffGrid { t: usize, k: usize, total: usize },
    #[error("operation requires a k=1 schedule, got k={0}")]
    NotUnitStep(usize),
}

/// Sign of the `β̄_min·k/T` term in the per-step exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentForm {
    /// `+β̄_min·k/T`, the fast-diffusion default.
    #[default]
    Printed,
    /// `−β̄_min·k/T`: the increment of the integrated linear-β
    /// variance-preserving process. Valid down to `k = 1`.
    VariancePreserving,
}

impl ExponentForm {
    pub fn code(self) -> u32 {
        match self {
            Self::Printed => 0,
            Self::VariancePreserving => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::Printed),
            1 => Some(Self::VariancePreserving),
            _ => None,
        }
    }
}

/// Immutable precomputed schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSchedule {
    total_steps: usize,
    step: usize,
    beta_min: f64,
    beta_max: f64,
    form: ExponentForm,
    /// `γ_{rk}` at index `r − 1`.
    gamma: Vec<f64>,
    /// `ᾱ_{rk}` at index `r`, `ᾱ_0 = 1`.
    alpha_bar: Vec<f64>,
}

/// Per-step log-retention `ln α_t` for the given form.
pub fn step_exponent(t: usize, total: usize, k: usize, beta_min: f64, beta_max: f64, form: ExponentForm) -> f64 {
    let (t, total, k) = (t as f64, total as f64, k as f64);
    let linear = beta_min * k / total;
    let linear = match form {
        ExponentForm::Printed => linear,
        ExponentForm::VariancePreserving => -linear,
    };
    linear - (beta_max - beta_min) * (2.0 * t * k - k * k) / (2.0 * total * total)
}

impl FastSchedule {
    pub fn new(total_steps: usize, step: usize, beta_min: f64, beta_max: f64) -> Result<Self, ScheduleError> {
        Self::with_form(total_steps, step, beta_min, beta_max, ExponentForm::Printed)
    }

    /// Single-step (`k = 1`) schedule for the standard DDPM baseline.
    pub fn regular(total_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, ScheduleError> {
        Self::with_form(total_steps, 1, beta_min, beta_max, ExponentForm::VariancePreserving)
    }

    pub fn with_form(
        total_steps: usize,
        step: usize,
        beta_min: f64,
        beta_max: f64,
        form: ExponentForm,
    ) -> Result<Self, ScheduleError> {
        if total_steps == 0 {
            return Err(ScheduleError::ZeroSteps);
        }
        if step == 0 || total_steps % step != 0 {
            return Err(ScheduleError::StepDoesNotDivide { total: total_steps, k: step });
        }
        if !(beta_min >= 0.0 && beta_min < beta_max && beta_max.is_finite()) {
            return Err(ScheduleError::InvalidBounds { min: beta_min, max: beta_max });
        }
        let n = total_steps / step;
        let mut gamma = Vec::with_capacity(n);
        let mut alpha_bar = Vec::with_capacity(n + 1);
        alpha_bar.push(1.0);
        for r in 1..=n {
            let t = r * step;
            let e = step_exponent(t, total_steps, step, beta_min, beta_max, form);
            let g = -e.exp_m1();
            if !(g > 0.0 && g < 1.0) {
                return Err(ScheduleError::GammaOutOfRange { t, gamma: g });
            }
            gamma.push(g);
            alpha_bar.push(alpha_bar[r - 1] * (1.0 - g));
        }
        Ok(Self {
            total_steps,
            step,
            beta_min,
            beta_max,
            form,
            gamma,
            alpha_bar,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn form(&self) -> ExponentForm {
        self.form
    }

    /// Number of reverse steps `T/k`.
    pub fn num_steps(&self) -> usize {
        self.gamma.len()
    }

    /// Grid times `k, 2k, …, T` in increasing order.
    pub fn times(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        (1..=self.num_steps()).map(move |r| r * self.step)
    }

    fn index(&self, t: usize) -> Result<usize, ScheduleError> {
        if t == 0 || t % self.step != 0 || t > self.total_steps {
            return Err(ScheduleError::OffGrid {
                t,
                k: self.step,
                total: self.total_steps,
            });
        }
        Ok(t / self.step)
    }

    pub fn gamma(&self, t: usize) -> Result<f64, ScheduleError> {
        Ok(self.gamma[self.index(t)? - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64, ScheduleError> {
        Ok(1.0 - self.gamma(t)?)
    }

    /// `ᾱ_t`; `t = 0` is allowed and gives 1.
    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        if t == 0 {
            return Ok(1.0);
        }
        Ok(self.alpha_bar[self.index(t)?])
    }

    /// Rows `(t, γ_t, α_t, ᾱ_t)` for every grid time.
    pub fn table(&self) -> Vec<(usize, f64, f64, f64)> {
        self.times()
            .enumerate()
            .map(|(i, t)| (t, self.gamma[i], 1.0 - self.gamma[i], self.alpha_bar[i + 1]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_schedule() -> FastSchedule {
        FastSchedule::new(1000, 250, 0.1, 20.0).unwrap()
    }

    #[test]
    fn golden_gamma_values() {
        let s = default_schedule();
        // exponents 0.025 − 19.9·62500/2e6 and 0.025 − 19.9·437500/2e6
        let g250 = 1.0 - (0.025f64 - 19.9 * 62_500.0 / 2e6).exp();
        let g1000 = 1.0 - (-4.328125f64).exp();
        assert!((s.gamma(250).unwrap() - g250).abs() < 1e-15);
        assert!((s.gamma(1000).unwrap() - g1000).abs() < 1e-15);
        assert!((s.gamma(250).unwrap() - 0.44946).abs() < 1e-4);
        assert!((s.gamma(1000).unwrap() - 0.98682).abs() < 1e-4);
    }

    #[test]
    fn first_cumulative_value_is_first_alpha() {
        let s = default_schedule();
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert_eq!(s.alpha_bar(250).unwrap(), s.alpha(250).unwrap());
        assert_eq!(s.alpha_bar(250).unwrap(), 1.0 - s.gamma(250).unwrap());
    }

    #[test]
    fn regular_schedule_is_valid_and_monotone() {
        let s = FastSchedule::regular(1000, 0.1, 20.0).unwrap();
        assert_eq!(s.num_steps(), 1000);
        let g1 = s.gamma(1).unwrap();
        assert!(g1 > 0.0 && g1 < 1.0);
        let table = s.table();
        for w in table.windows(2) {
            assert!(w[1].1 > w[0].1, "gamma not increasing at t={}", w[1].0);
            assert!(w[1].3 < w[0].3);
        }
        assert!(s.alpha_bar(1000).unwrap() < 1e-3);
    }

    #[test]
    fn printed_form_rejects_unit_step_with_offending_time() {
        match FastSchedule::new(1000, 1, 0.1, 20.0) {
            Err(ScheduleError::GammaOutOfRange { t, gamma }) => {
                assert_eq!(t, 1);
                assert!(gamma < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_step_that_does_not_divide() {
        assert!(matches!(
            FastSchedule::new(1000, 300, 0.1, 20.0),
            Err(ScheduleError::StepDoesNotDivide { .. })
        ));
        assert!(matches!(FastSchedule::new(1000, 250, 20.0, 0.1), Err(ScheduleError::InvalidBounds { .. })));
    }

    #[test]
    fn off_grid_queries_fail() {
        let s = default_schedule();
        assert!(s.gamma(0).is_err());
        assert!(s.gamma(100).is_err());
        assert!(s.gamma(1250).is_err());
        assert!(s.alpha_bar(0).is_ok());
    }

    #[test]
    fn cumulative_product_matches_summed_log_alpha() {
        for form in [ExponentForm::Printed, ExponentForm::VariancePreserving] {
            for (total, k) in [(1000, 250), (1000, 500), (1000, 1000), (1000, 125)] {
                let s = FastSchedule::with_form(total, k, 0.1, 20.0, form).unwrap();
                let mut log_sum = 0.0;
                for t in s.times() {
                    log_sum += s.alpha(t).unwrap().ln();
                    assert!((log_sum.exp() - s.alpha_bar(t).unwrap()).abs() < 1e-10);
                }
            }
        }
        let s = FastSchedule::regular(1000, 0.1, 20.0).unwrap();
        let log_sum: f64 = s.times().map(|t| s.alpha(t).unwrap().ln()).sum();
        assert!((log_sum.exp() - s.alpha_bar(1000).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn terminal_sample_is_nearly_pure_noise() {
        assert!(1.0 - default_schedule().alpha_bar(1000).unwrap() > 0.99);
    }

    #[test]
    fn coarse_and_unit_grids_agree_on_shared_times() {
        let fine = FastSchedule::regular(1000, 0.1, 20.0).unwrap();
        let coarse = FastSchedule::with_form(1000, 250, 0.1, 20.0, ExponentForm::VariancePreserving).unwrap();
        for t in [250, 500, 750, 1000] {
            let (a, b) = (coarse.alpha_bar(t).unwrap(), fine.alpha_bar(t).unwrap());
            assert!(((a - b) / b).abs() < 0.02, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn gamma_strictly_increasing_on_default_grid() {
        let s = default_schedule();
        let g: Vec<f64> = s.times().map(|t| s.gamma(t).unwrap()).collect();
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
