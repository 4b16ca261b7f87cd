use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, GrayImage, ImageSample, Modality, Split};
use crate::random::seeded;

pub const CLASSES: usize = 3;
/// Additive noise standard deviation in `[0, 1]` intensity units.
pub const NOISE_SIGMA: f64 = 0.02;

const TAG_TRAIN_A: u64 = 1;
const TAG_TRAIN_B: u64 = 2;
const TAG_EVAL: u64 = 3;
const TAG_NOISE_A: u64 = 0x5eed_a;
const TAG_NOISE_B: u64 = 0x5eed_b;

/// Per-class intensities in `[0, 1]`: background, outer tissue, inner blobs.
/// B is not an affine function of A.
pub fn class_intensities(m: Modality) -> [f64; CLASSES] {
    match m {
        Modality::A => [0.2, 0.5, 0.9],
        Modality::B => [0.8, 0.3, 0.6],
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Geometry seeds differ in their top 16 bits across splits, so the sets
/// are disjoint by construction.
fn geometry_seed(master: u64, tag: u64, index: usize) -> u64 {
    (splitmix(master) & 0x0000_ffff_ffff_ffff) ^ (tag << 48) ^ index as u64
}

/// Class label per pixel: 0 background, 1 a perturbed ellipse, 2 small blobs
/// inside it.
pub fn render_classes(geometry_seed: u64, size: usize) -> Vec<u8> {
    let mut rng = seeded(geometry_seed);
    let s = size as f64;
    let cx = s * (0.5 + rng.random_range(-0.08..0.08));
    let cy = s * (0.5 + rng.random_range(-0.08..0.08));
    let ra = s * rng.random_range(0.26..0.4);
    let rb = s * rng.random_range(0.26..0.4);
    let rot: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let harmonics: Vec<(f64, f64, f64)> = (2..=4)
        .map(|h| (h as f64, rng.random_range(0.0..0.08), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let (sin_r, cos_r) = rot.sin_cos();
    let local = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let u = (dx * cos_r + dy * sin_r) / ra;
        let v = (-dx * sin_r + dy * cos_r) / rb;
        (u, v)
    };
    let inside = |x: f64, y: f64| {
        let (u, v) = local(x, y);
        let phi = v.atan2(u);
        let edge = 1.0 + harmonics.iter().map(|(h, a, p)| a * (h * phi + p).sin()).sum::<f64>();
        (u * u + v * v).sqrt() < edge
    };
    let n_blobs = rng.random_range(1..=3);
    let blobs: Vec<(f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let r = rng.random_range(0.0..0.5);
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (u, v) = (r * a.cos(), r * a.sin());
            let x = cx + u * ra * cos_r - v * rb * sin_r;
            let y = cy + u * ra * sin_r + v * rb * cos_r;
            (x, y, s * rng.random_range(0.06..0.13))
        })
        .collect();
    let mut out = vec![0u8; size * size];
    for row in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
            if !inside(x, y) {
                continue;
            }
            let in_blob = blobs.iter().any(|&(bx, by, r)| (x - bx).powi(2) + (y - by).powi(2) < r * r);
            out[row * size + col] = if in_blob { 2 } else { 1 };
        }
    }
    out
}

/// Renders a class map in one modality with clamped Gaussian noise.
pub fn render_modality(classes: &[u8], size: usize, modality: Modality, noise_seed: u64) -> GrayImage {
    let levels = class_intensities(modality);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let mut rng = seeded(noise_seed);
    let unit: Vec<f64> = classes
        .iter()
        .map(|&c| (levels[c as usize] + noise.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_unit_range(size, size, &unit).expect("square image")
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub size: usize,
    pub train_a: Vec<ImageSample>,
    pub train_b: Vec<ImageSample>,
    pub eval_a: Vec<ImageSample>,
    pub eval_b: Vec<ImageSample>,
    pub train_a_seeds: Vec<u64>,
    pub train_b_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
}

impl ToyDataset {
    pub fn pools(&self) -> super::UnpairedPools {
        super::UnpairedPools::new(
            self.train_a.iter().map(|s| s.image.clone()).collect(),
            self.train_b.iter().map(|s| s.image.clone()).collect(),
        )
    }
}

pub fn generate_toy_dataset(
    seed: u64,
    n_train_per_modality: usize,
    n_eval_pairs: usize,
    size: usize,
) -> Result<ToyDataset, DataError> {
    if size < 16 || !size.is_power_of_two() {
        return Err(DataError::InvalidSize(size));
    }
    let seeds = |tag, n| (0..n).map(|i| geometry_seed(seed, tag, i)).collect::<Vec<u64>>();
    let train_a_seeds = seeds(TAG_TRAIN_A, n_train_per_modality);
    let train_b_seeds = seeds(TAG_TRAIN_B, n_train_per_modality);
    let eval_seeds = seeds(TAG_EVAL, n_eval_pairs);
    let sample = |g: u64, m: Modality, split: Split, pair: Option<String>| {
        let tag = if m == Modality::A { TAG_NOISE_A } else { TAG_NOISE_B };
        let img = render_modality(&render_classes(g, size), size, m, splitmix(g ^ tag));
        ImageSample::new(img, m, split, pair)
    };
    let train_a = train_a_seeds.iter().map(|&g| sample(g, Modality::A, Split::TrainA, None)).collect();
    let train_b = train_b_seeds.iter().map(|&g| sample(g, Modality::B, Split::TrainB, None)).collect();
    let pair_name = |i: usize| format!("{i:04}");
    let eval_a = eval_seeds
        .iter()
        .enumerate()
        .map(|(i, &g)| sample(g, Modality::A, Split::Eval, Some(pair_name(i))))
        .collect();
    let eval_b = eval_seeds
        .iter()
        .enumerate()
        .map(|(i, &g)| sample(g, Modality::B, Split::Eval, Some(pair_name(i))))
        .collect();
    Ok(ToyDataset {
        size,
        train_a,
        train_b,
        eval_a,
        eval_b,
        train_a_seeds,
        train_b_seeds,
        eval_seeds,
    })
}
