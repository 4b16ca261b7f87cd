#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syndiff_tensor::{grad, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values in ±[0.2, 1.5], away from kinks at zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Vec<f64> {
    let n: usize = shape.iter().product();
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.2..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect()
}

pub struct Input {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Input {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Self {
        Self { data, shape: shape.to_vec() }
    }
}

pub fn leaves(inputs: &[Input]) -> Vec<Tensor<f64>> {
    inputs
        .iter()
        .map(|i| Tensor::parameter(i.data.clone(), &i.shape).unwrap())
        .collect()
}

fn eval(f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>, inputs: &[Input]) -> f64 {
    let ts: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|i| Tensor::from_vec(i.data.clone(), &i.shape).unwrap())
        .collect();
    f(&ts).item().unwrap()
}

/// Central differences of a scalar function, step `h`, for every input entry.
pub fn numeric_grads(f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>, inputs: &[Input], h: f64) -> Vec<Vec<f64>> {
    let mut work: Vec<Input> = inputs.iter().map(|i| Input::new(i.data.clone(), &i.shape)).collect();
    let mut out = Vec::new();
    for k in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[k].data.len());
        for j in 0..inputs[k].data.len() {
            let orig = work[k].data[j];
            work[k].data[j] = orig + h;
            let fp = eval(f, &work);
            work[k].data[j] = orig - h;
            let fm = eval(f, &work);
            work[k].data[j] = orig;
            g.push((fp - fm) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

pub fn analytic_grads(f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>, inputs: &[Input]) -> Vec<Vec<f64>> {
    let ts = leaves(inputs);
    let out = f(&ts);
    let refs: Vec<&Tensor<f64>> = ts.iter().collect();
    grad(&out, &refs, false)
        .unwrap()
        .into_iter()
        .map(|g| g.to_vec())
        .collect()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Worst relative error between backward and central differences over all inputs.
pub fn check_grads(f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>, inputs: &[Input]) -> f64 {
    let a = analytic_grads(f, inputs);
    let n = numeric_grads(f, inputs, 1e-4);
    a.iter().zip(&n).map(|(x, y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Weighted sum with fixed pseudo-random weights so every output entry gets a
/// distinct upstream gradient.
pub fn project(t: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let w = Tensor::from_vec(uniform(&mut r, t.shape(), -1.0, 1.0), t.shape()).unwrap();
    t.mul(&w).unwrap().sum()
}
