//! Minimal dense tensor engine with reverse-mode automatic differentiation.
//!
//! Ops are methods on [`Tensor`]. Any op whose inputs require gradients is
//! recorded on an implicit per-thread tape; [`backward`] and [`grad`] walk it
//! in reverse. Passing `create_graph = true` to [`grad`] records the backward
//! pass too, so gradient norms can be differentiated again (gradient
//! penalties). The only op without double backward is [`Tensor::group_norm`].

mod element;
mod error;
mod graph;
mod ops;
mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{backward, grad, is_grad_enabled, no_grad, GradModeGuard, Gradients};
pub use ops::LEAKY_RELU_SLOPE;
pub use tensor::Tensor;

/// `‖∂ Σ D(x) / ∂x‖²` per batch element, as a differentiable `[N]` tensor.
///
/// `d_out` must hold one value per batch element of `x`. Because samples do
/// not interact, the gradient of the summed output splits per sample.
pub fn grad_norm_sq<E: Element>(d_out: &Tensor<E>, x: &Tensor<E>) -> Result<Tensor<E>> {
    let n = x.shape().first().copied().unwrap_or(0);
    if d_out.numel() != n {
        return Err(TensorError::ShapeMismatch {
            op: "grad_norm_sq",
            lhs: d_out.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let _record = GradModeGuard::new(true);
    let g = grad(&d_out.sum(), &[x], true)?.remove(0);
    g.square().sum_per_sample()
}
