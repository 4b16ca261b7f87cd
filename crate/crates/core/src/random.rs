use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use syndiff_tensor::{Element, Tensor};

/// The single generator type threaded through every stochastic operation.
pub type SynRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SynRng {
    SynRng::seed_from_u64(seed)
}

/// Standard-normal constant tensor.
pub fn randn<E: Element>(shape: &[usize], rng: &mut SynRng) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            E::from_f64_lossy(v)
        })
        .collect();
    Tensor::from_vec(data, shape).expect("length matches shape")
}
