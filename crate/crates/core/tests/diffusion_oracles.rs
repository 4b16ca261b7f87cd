use rand::Rng;
use syndiff::diffusion::{
    ddpm_mean, forward_marginal, forward_step, posterior_coefficients, posterior_params, posterior_sample, Denoiser,
    PosteriorParams,
};
use syndiff::random::{randn, seeded};
use syndiff::{ExponentForm, FastSchedule};
use syndiff_tensor::Tensor;

const TRIALS: usize = 100_000;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Asserts sample mean and variance sit within three standard errors of the
/// expected Gaussian moments.
fn assert_moments(v: &[f64], mean: f64, var: f64, what: &str) {
    let n = v.len() as f64;
    let (m, s2) = moments(v);
    let se_mean = (var / n).sqrt();
    let se_var = var * (2.0 / (n - 1.0)).sqrt();
    assert!((m - mean).abs() < 3.0 * se_mean, "{what}: mean {m} vs {mean}");
    assert!((s2 - var).abs() < 3.0 * se_var, "{what}: var {s2} vs {var}");
}

fn random_schedule(rng: &mut impl Rng) -> FastSchedule {
    loop {
        let k = [50, 100, 125, 200, 250, 500][rng.random_range(0..6)];
        let bmin = rng.random_range(0.05..0.5);
        let bmax = rng.random_range(5.0..25.0);
        let form = if rng.random_bool(0.5) {
            ExponentForm::Printed
        } else {
            ExponentForm::VariancePreserving
        };
        if let Ok(s) = FastSchedule::with_form(1000, k, bmin, bmax, form) {
            return s;
        }
    }
}

/// Posterior mean and variance of the earlier sample by multiplying the two
/// forward densities on a dense grid and integrating numerically.
fn grid_posterior(x0: f64, xt: f64, gamma: f64, ab_prev: f64) -> (f64, f64) {
    let prior_mean = ab_prev.sqrt() * x0;
    let prior_var = 1.0 - ab_prev;
    let log_density = |s: f64| {
        -(xt - (1.0 - gamma).sqrt() * s).powi(2) / (2.0 * gamma) - (s - prior_mean).powi(2) / (2.0 * prior_var)
    };
    let integrate = |lo: f64, hi: f64| {
        let n = TRIALS;
        let h = (hi - lo) / (n - 1) as f64;
        let pts: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let logs: Vec<f64> = pts.iter().map(|&s| log_density(s)).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (s, l) in pts.iter().zip(&logs) {
            let w = (l - top).exp();
            z += w;
            m1 += w * s;
            m2 += w * s * s;
        }
        let mean = m1 / z;
        (mean, m2 / z - mean * mean)
    };
    // A coarse pass locates the mass, a fine pass resolves it.
    let (m, v) = integrate(-40.0, 40.0);
    let sd = v.sqrt();
    integrate(m - 14.0 * sd, m + 14.0 * sd)
}

#[test]
fn posterior_matches_grid_bayes() {
    let mut rng = seeded(2024);
    for _ in 0..20 {
        let s = random_schedule(&mut rng);
        let k = s.step();
        let r = rng.random_range(2..=s.num_steps());
        let t = r * k;
        let x0: f64 = rng.random_range(0.2..1.0);
        let xt: f64 = rng.random_range(0.2..1.5);
        let (mean, var) = grid_posterior(x0, xt, s.gamma(t).unwrap(), s.alpha_bar(t - k).unwrap());
        let x0_t = Tensor::<f64>::from_vec(vec![x0], &[1, 1]).unwrap();
        let xt_t = Tensor::<f64>::from_vec(vec![xt], &[1, 1]).unwrap();
        let p = posterior_params(&s, &xt_t, &x0_t, t).unwrap();
        let got_mean = p.mean.data()[0];
        assert!((got_mean - mean).abs() / mean.abs() < 1e-5, "t={t} k={k}: {got_mean} vs {mean}");
        assert!((p.variance[0] - var).abs() / var < 1e-5, "t={t} k={k}: {} vs {var}", p.variance[0]);
    }
}

#[test]
fn forward_step_from_zero_has_step_variance() {
    let s = FastSchedule::new(1000, 250, 0.1, 20.0).unwrap();
    let mut rng = seeded(11);
    let zero = Tensor::<f64>::zeros(&[1, TRIALS]);
    for t in s.times() {
        let x = forward_step(&s, &zero, t, &mut rng).unwrap();
        assert_moments(x.data(), 0.0, s.gamma(t).unwrap(), "forward_step");
    }
}

#[test]
fn composed_steps_match_marginal() {
    let s = FastSchedule::new(1000, 250, 0.1, 20.0).unwrap();
    let mut rng = seeded(12);
    let c = 0.6;
    let x0 = Tensor::<f64>::full(&[1, TRIALS], c);
    let mut x = x0.clone();
    for t in s.times() {
        x = forward_step(&s, &x, t, &mut rng).unwrap();
        let ab = s.alpha_bar(t).unwrap();
        assert_moments(x.data(), ab.sqrt() * c, 1.0 - ab, "composed");
        let direct = forward_marginal(&s, &x0, t, &mut rng).unwrap();
        assert_moments(direct.data(), ab.sqrt() * c, 1.0 - ab, "marginal");
    }
}

#[test]
fn terminal_marginal_of_zero_is_nearly_unit_variance() {
    let s = FastSchedule::new(1000, 250, 0.1, 20.0).unwrap();
    let zero = Tensor::<f64>::zeros(&[1, TRIALS]);
    let x = forward_marginal(&s, &zero, 1000, &mut seeded(13)).unwrap();
    let ab = s.alpha_bar(1000).unwrap();
    assert_moments(x.data(), 0.0, 1.0 - ab, "terminal");
    assert!(1.0 - ab > 0.99);
}

#[test]
fn posterior_after_marginal_is_previous_marginal() {
    let s = FastSchedule::new(1000, 250, 0.1, 20.0).unwrap();
    let mut rng = seeded(14);
    let c = -0.4;
    let x0 = Tensor::<f64>::full(&[1, TRIALS], c);
    for t in [500, 750, 1000] {
        let xt = forward_marginal(&s, &x0, t, &mut rng).unwrap();
        let p = posterior_params(&s, &xt, &x0, t).unwrap();
        let prev = posterior_sample(&p, &mut rng).unwrap();
        let ab = s.alpha_bar(t - 250).unwrap();
        assert_moments(prev.data(), ab.sqrt() * c, 1.0 - ab, "posterior composition");
    }
}

#[test]
fn posterior_sample_has_posterior_variance() {
    let s = FastSchedule::new(1000, 250, 0.1, 20.0).unwrap();
    let (_, _, v) = posterior_coefficients(&s, 750).unwrap();
    let p = PosteriorParams {
        mean: Tensor::<f64>::zeros(&[1, TRIALS]),
        variance: vec![v],
    };
    let x = posterior_sample(&p, &mut seeded(15)).unwrap();
    assert_moments(x.data(), 0.0, v, "posterior sample");
}

struct Fixed(Tensor<f64>);

impl Denoiser<f64> for Fixed {
    fn denoise(&self, _x: &Tensor<f64>, _y: &Tensor<f64>, _ts: &[usize]) -> syndiff::Result<Tensor<f64>> {
        Ok(self.0.clone())
    }
}

#[test]
fn ddpm_mean_matches_scalar_reference() {
    let s = FastSchedule::regular(1000, 0.1, 20.0).unwrap();
    let mut rng = seeded(16);
    let shape = [3, 1, 5, 5];
    let xt = randn::<f64>(&shape, &mut rng);
    let eps = randn::<f64>(&shape, &mut rng);
    let ts = [1, 437, 1000];
    let m = ddpm_mean(&Fixed(eps.clone()), &xt, &xt, &ts, &s).unwrap();
    for (i, &t) in ts.iter().enumerate() {
        let beta = s.gamma(t).unwrap();
        let alpha = 1.0 - beta;
        let ab = s.alpha_bar(t).unwrap();
        for j in 0..25 {
            let idx = i * 25 + j;
            let want = (xt.data()[idx] - beta / (1.0 - ab).sqrt() * eps.data()[idx]) / alpha.sqrt();
            let got = m.data()[idx];
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12), "t={t}: {got} vs {want}");
        }
    }
}
