//! Backward passes against 64-bit central differences (step 1e-4).

mod common;

use common::*;
use syndiff_tensor::{grad, grad_norm_sq, Tensor};

const PRIMITIVE_TOL: f64 = 1e-5;

type F = Box<dyn Fn(&[Tensor<f64>]) -> Tensor<f64>>;

fn unary(name: &'static str, op: fn(&Tensor<f64>) -> Tensor<f64>, data: Vec<f64>, shape: &[usize]) -> (&'static str, F, Vec<Input>) {
    (name, Box::new(move |x| project(&op(&x[0]), 7)), vec![Input::new(data, shape)])
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut r = rng(1);
    let s = [2, 3, 2];
    let cases: Vec<(&str, F, Vec<Input>)> = vec![
        ("add", Box::new(|x| project(&x[0].add(&x[1]).unwrap(), 1)), vec![Input::new(uniform(&mut r, &s, -1.0, 1.0), &s), Input::new(uniform(&mut r, &s, -1.0, 1.0), &s)]),
        ("sub", Box::new(|x| project(&x[0].sub(&x[1]).unwrap(), 2)), vec![Input::new(uniform(&mut r, &s, -1.0, 1.0), &s), Input::new(uniform(&mut r, &s, -1.0, 1.0), &s)]),
        ("mul", Box::new(|x| project(&x[0].mul(&x[1]).unwrap(), 3)), vec![Input::new(uniform(&mut r, &s, -1.0, 1.0), &s), Input::new(uniform(&mut r, &s, -1.0, 1.0), &s)]),
        ("div", Box::new(|x| project(&x[0].div(&x[1]).unwrap(), 4)), vec![Input::new(uniform(&mut r, &s, -1.0, 1.0), &s), Input::new(uniform(&mut r, &s, 0.5, 2.0), &s)]),
        unary("scale", |x| x.scale(-1.7), uniform(&mut r, &s, -1.0, 1.0), &s),
        unary("add_scalar", |x| x.add_scalar(0.3), uniform(&mut r, &s, -1.0, 1.0), &s),
        unary("neg", |x| x.neg(), uniform(&mut r, &s, -1.0, 1.0), &s),
        unary("exp", |x| x.exp(), uniform(&mut r, &s, -1.0, 1.0), &s),
        unary("log", |x| x.log(), uniform(&mut r, &s, 0.3, 2.0), &s),
        unary("square", |x| x.square(), uniform(&mut r, &s, -1.0, 1.0), &s),
        unary("sigmoid", |x| x.sigmoid(), uniform(&mut r, &s, -3.0, 3.0), &s),
        unary("tanh", |x| x.tanh(), uniform(&mut r, &s, -2.0, 2.0), &s),
        unary("softplus", |x| x.softplus(), uniform(&mut r, &s, -4.0, 4.0), &s),
        unary("swish", |x| x.swish().unwrap(), uniform(&mut r, &s, -3.0, 3.0), &s),
        unary("abs", |x| x.abs(), away_from_zero(&mut r, &s), &s),
        unary("leaky_relu", |x| x.leaky_relu_default(), away_from_zero(&mut r, &s), &s),
        unary("scale_per_sample", |x| x.scale_per_sample(&[0.5, -2.0]).unwrap(), uniform(&mut r, &s, -1.0, 1.0), &s),
    ];
    for (name, f, inputs) in cases {
        let err = check_grads(&*f, &inputs);
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn reduction_and_shape_ops_match_finite_differences() {
    let mut r = rng(2);
    let s4 = [2, 3, 2, 2];
    let cases: Vec<(&str, F, Vec<Input>)> = vec![
        ("sum", Box::new(|x| x[0].square().sum()), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("mean", Box::new(|x| x[0].square().mean()), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("expand_scalar", Box::new(|x| project(&x[0].expand_scalar(&[3, 2]).unwrap(), 5)), vec![Input::new(vec![0.4], &[1])]),
        ("sum_per_sample", Box::new(|x| project(&x[0].sum_per_sample().unwrap(), 6)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("expand_per_sample", Box::new(|x| project(&x[0].expand_per_sample(&[2, 3, 2]).unwrap(), 7)), vec![Input::new(vec![0.3, -0.8], &[2])]),
        ("broadcast_nc/shared", Box::new(|x| project(&x[0].broadcast_nc(&[2, 3, 2, 2]).unwrap(), 8)), vec![Input::new(uniform(&mut r, &[1, 3], -1.0, 1.0), &[1, 3])]),
        ("broadcast_nc/per-sample", Box::new(|x| project(&x[0].broadcast_nc(&[2, 3, 2, 2]).unwrap(), 9)), vec![Input::new(uniform(&mut r, &[2, 3], -1.0, 1.0), &[2, 3])]),
        ("reduce_nc", Box::new(|x| project(&x[0].reduce_nc(1).unwrap(), 10)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("add_bias", Box::new(|x| project(&x[0].add_bias(&x[1]).unwrap(), 11)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4), Input::new(uniform(&mut r, &[3], -1.0, 1.0), &[3])]),
        ("mul_channels", Box::new(|x| project(&x[0].mul_channels(&x[1]).unwrap(), 12)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4), Input::new(uniform(&mut r, &[3], -1.0, 1.0), &[3])]),
        ("reshape", Box::new(|x| project(&x[0].reshape(&[6, 4]).unwrap(), 13)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("concat_channels", Box::new(|x| project(&Tensor::concat_channels(&[&x[0], &x[1]]).unwrap(), 14)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4), Input::new(uniform(&mut r, &[2, 1, 2, 2], -1.0, 1.0), &[2, 1, 2, 2])]),
        ("narrow_channels", Box::new(|x| project(&x[0].narrow_channels(1, 2).unwrap(), 15)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("pad_channels", Box::new(|x| project(&x[0].pad_channels(1, 5).unwrap(), 16)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("upsample_nearest2x", Box::new(|x| project(&x[0].upsample_nearest2x().unwrap(), 17)), vec![Input::new(uniform(&mut r, &s4, -1.0, 1.0), &s4)]),
        ("sum_pool2x", Box::new(|x| project(&x[0].sum_pool2x().unwrap(), 18)), vec![Input::new(uniform(&mut r, &[1, 2, 4, 4], -1.0, 1.0), &[1, 2, 4, 4])]),
        ("matmul", Box::new(|x| project(&x[0].matmul(&x[1]).unwrap(), 19)), vec![Input::new(uniform(&mut r, &[3, 4], -1.0, 1.0), &[3, 4]), Input::new(uniform(&mut r, &[4, 2], -1.0, 1.0), &[4, 2])]),
        ("transpose", Box::new(|x| project(&x[0].transpose().unwrap(), 20)), vec![Input::new(uniform(&mut r, &[3, 4], -1.0, 1.0), &[3, 4])]),
        ("group_norm", Box::new(|x| project(&x[0].group_norm(3, 1e-5).unwrap(), 21)), vec![Input::new(uniform(&mut r, &[2, 6, 3, 3], -1.0, 1.0), &[2, 6, 3, 3])]),
        ("instance_norm", Box::new(|x| project(&x[0].instance_norm(1e-5).unwrap(), 22)), vec![Input::new(uniform(&mut r, &[2, 3, 3, 3], -1.0, 1.0), &[2, 3, 3, 3])]),
    ];
    for (name, f, inputs) in cases {
        let err = check_grads(&*f, &inputs);
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn convolutions_match_finite_differences() {
    let mut r = rng(3);
    // (input hw, kernel, stride, pad)
    let geoms = [((5, 5), 3, 1, 1), ((5, 5), 3, 2, 1), ((6, 6), 4, 2, 1), ((5, 4), 1, 1, 0), ((7, 7), 7, 1, 3), ((5, 5), 3, 1, 0)];
    for (i, &((h, w), k, s, p)) in geoms.iter().enumerate() {
        let xs = [2, 2, h, w];
        let ws = [3, 2, k, k];
        let x = uniform(&mut r, &xs, -1.0, 1.0);
        let wt = uniform(&mut r, &ws, -1.0, 1.0);
        let seed = 100 + i as u64;
        let f: F = Box::new(move |t| project(&t[0].conv2d(&t[1], s, p).unwrap(), seed));
        let err = check_grads(&*f, &[Input::new(x.clone(), &xs), Input::new(wt.clone(), &ws)]);
        assert!(err < PRIMITIVE_TOL, "conv2d {geoms:?}[{i}]: {err:e}");

        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        let ys = [2, 3, ho, wo];
        let y = uniform(&mut r, &ys, -1.0, 1.0);
        let f: F = Box::new(move |t| project(&t[0].conv_transpose2d(&t[1], s, p, (h, w)).unwrap(), seed));
        let err = check_grads(&*f, &[Input::new(y.clone(), &ys), Input::new(wt.clone(), &ws)]);
        assert!(err < PRIMITIVE_TOL, "conv_transpose2d [{i}]: {err:e}");

        let f: F = Box::new(move |t| project(&t[0].conv2d_weight(&t[1], (k, k), s, p).unwrap(), seed));
        let err = check_grads(&*f, &[Input::new(x, &xs), Input::new(y, &ys)]);
        assert!(err < PRIMITIVE_TOL, "conv2d_weight [{i}]: {err:e}");
    }
}

/// Second derivatives: `h(x, w) = ‖∂f/∂x‖²` built with `create_graph`, checked
/// against central differences of `h` itself.
fn check_second_order(f: fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>, xs: &[usize], ws: &[usize], seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = vec![
        Input::new(away_from_zero(&mut r, xs), xs),
        Input::new(uniform(&mut r, ws, -0.8, 0.8), ws),
    ];
    let h = move |t: &[Tensor<f64>]| {
        let x = if t[0].requires_grad() { t[0].clone() } else { t[0].requires_grad_() };
        let w = if t[1].requires_grad() { t[1].clone() } else { t[1].requires_grad_() };
        let out = f(&x, &w);
        let g = grad(&out, &[&x], true).unwrap().remove(0);
        g.square().sum()
    };
    check_grads(&h, &inputs)
}

#[test]
fn double_backward_matches_finite_differences() {
    type Fx = fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>;
    let cases: Vec<(&str, Fx, Vec<usize>, Vec<usize>)> = vec![
        ("conv2d+sigmoid", |x, w| project(&x.conv2d(w, 1, 1).unwrap().sigmoid(), 1), vec![1, 2, 4, 4], vec![2, 2, 3, 3]),
        ("conv2d stride2+tanh", |x, w| project(&x.conv2d(w, 2, 1).unwrap().tanh(), 2), vec![1, 2, 5, 5], vec![3, 2, 3, 3]),
        ("conv_transpose2d+square", |x, w| project(&x.conv_transpose2d(w, 2, 1, (6, 6)).unwrap().square(), 3), vec![1, 2, 3, 3], vec![2, 1, 4, 4]),
        ("matmul+softplus", |x, w| project(&x.matmul(w).unwrap().softplus(), 4), vec![2, 3], vec![3, 4]),
        ("matmul+swish", |x, w| project(&x.matmul(w).unwrap().swish().unwrap(), 5), vec![2, 3], vec![3, 2]),
        ("mul+exp", |x, w| project(&x.mul(w).unwrap().exp(), 6), vec![2, 3], vec![2, 3]),
        ("div+log", |x, w| project(&x.square().add_scalar(0.5).div(&w.square().add_scalar(1.0)).unwrap().log().mul(w).unwrap(), 7), vec![2, 3], vec![2, 3]),
        ("bias+upsample", |x, w| project(&x.add_bias(w).unwrap().upsample_nearest2x().unwrap().sigmoid(), 8), vec![1, 3, 2, 2], vec![3]),
        ("concat+narrow", |x, w| {
            let c = Tensor::concat_channels(&[x, &x.mul_channels(w).unwrap()]).unwrap();
            project(&c.narrow_channels(1, 3).unwrap().tanh(), 9)
        }, vec![1, 2, 2, 2], vec![2]),
        ("sum_pool+sum_per_sample", |x, w| x.mul_channels(w).unwrap().sum_pool2x().unwrap().square().sum_per_sample().unwrap().sum(), vec![2, 2, 2, 2], vec![2]),
        ("leaky_relu+abs+conv_weight", |x, w| project(&x.leaky_relu_default().conv2d_weight(&w.abs(), (3, 3), 1, 1).unwrap().square(), 10), vec![1, 2, 4, 4], vec![1, 3, 4, 4]),
    ];
    for (i, (name, f, xs, ws)) in cases.into_iter().enumerate() {
        let err = check_second_order(f, &xs, &ws, 50 + i as u64);
        assert!(err < PRIMITIVE_TOL, "{name}: relative error {err:e}");
    }
}

/// Two-layer convolutional critic; the penalty gradient with respect to the
/// weights is compared with finite differences of the penalty value.
#[test]
fn gradient_penalty_of_small_conv_critic_matches_finite_differences() {
    let mut r = rng(9);
    let xs = [2, 1, 6, 6];
    let w1s = [3, 1, 3, 3];
    let w2s = [2, 3, 3, 3];
    let x = Tensor::<f64>::from_vec(uniform(&mut r, &xs, -1.0, 1.0), &xs).unwrap();
    let inputs = vec![
        Input::new(uniform(&mut r, &w1s, -0.7, 0.7), &w1s),
        Input::new(uniform(&mut r, &w2s, -0.7, 0.7), &w2s),
    ];
    let penalty = move |w: &[Tensor<f64>]| {
        let xi = x.requires_grad_();
        let h = xi.conv2d(&w[0], 1, 1).unwrap().leaky_relu_default();
        let d = h.conv2d(&w[1], 2, 1).unwrap().sigmoid().sum_per_sample().unwrap();
        grad_norm_sq(&d, &xi).unwrap().sum()
    };
    let err = check_grads(&penalty, &inputs);
    assert!(err < 1e-3, "gradient penalty: relative error {err:e}");
}
