//! Images, the synthetic two-modality dataset, file formats and the
//! normalization used by the metrics.

mod layout;
mod pgm;
mod raw;
mod toy;

use syndiff_tensor::{Element, Tensor};
use thiserror::Error;

use crate::error::Result;

pub use layout::{load_image, load_pools, read_dir_images, save_image, write_dataset, EvalPair, EvalSet, UnpairedPools};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm, Pgm};
pub use raw::{decode_f32, encode_f32, load_f32, save_f32};
pub use toy::{
    class_intensities, generate_toy_dataset, render_classes, render_modality, ToyDataset, CLASSES, NOISE_SIGMA,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("image size {0} must be a power of two >= 16")]
    InvalidSize(usize),
    #[error("no images found in {0}")]
    Empty(String),
    #[error("eval image {0} has no counterpart in the other modality")]
    MissingPair(String),
    #[error("image mean is zero, cannot normalize")]
    ZeroMean,
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("unsupported image extension {0:?} (expected .pgm or .f32)")]
    UnknownExtension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    A,
    B,
}

impl Modality {
    pub fn other(self) -> Self {
        match self {
            Self::A => Self::B,
            Self::B => Self::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    TrainA,
    TrainB,
    Eval,
}

/// Single-channel image with pixels in `[−1, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, DataError> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(DataError::Parse {
                offset: 0,
                msg: format!("{} pixels for {height}x{width}", pixels.len()),
            });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Pixels mapped to `[0, 1]`.
    pub fn unit_range(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| (v as f64 + 1.0) / 2.0).collect()
    }

    pub fn from_unit_range(height: usize, width: usize, unit: &[f64]) -> Result<Self, DataError> {
        Self::new(height, width, unit.iter().map(|&v| (v * 2.0 - 1.0) as f32).collect())
    }
}

/// One image with its provenance. `pair_id` is only set on eval samples and
/// is never handed to training, which sees [`UnpairedPools`].
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub image: GrayImage,
    pub modality: Modality,
    pub split: Split,
    pair_id: Option<String>,
}

impl ImageSample {
    pub fn new(image: GrayImage, modality: Modality, split: Split, pair_id: Option<String>) -> Self {
        Self {
            image,
            modality,
            split,
            pair_id,
        }
    }

    pub fn pair_id(&self) -> Option<&str> {
        self.pair_id.as_deref()
    }
}

/// Scales values so their mean is one.
pub fn normalize_mean(values: &[f64]) -> Result<Vec<f64>, DataError> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 || !mean.is_finite() {
        return Err(DataError::ZeroMean);
    }
    Ok(values.iter().map(|v| v / mean).collect())
}

/// Stacks same-size images into `[N, 1, H, W]`.
pub fn images_to_tensor<E: Element>(images: &[&GrayImage]) -> Result<Tensor<E>> {
    let first = images
        .first()
        .ok_or_else(|| DataError::Empty("image batch".into()))?
        .dims();
    let mut data = Vec::with_capacity(images.len() * first.0 * first.1);
    for img in images {
        if img.dims() != first {
            return Err(DataError::ShapeMismatch(first, img.dims()).into());
        }
        data.extend(img.pixels.iter().map(|&v| E::from_f64_lossy(v as f64)));
    }
    Ok(Tensor::from_vec(data, &[images.len(), 1, first.0, first.1])?)
}

/// Splits `[N, 1, H, W]` back into images.
pub fn tensor_to_images<E: Element>(t: &Tensor<E>) -> Result<Vec<GrayImage>> {
    let s = t.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(crate::Error::Config(format!("expected [N, 1, H, W], got {s:?}")));
    }
    let per = s[2] * s[3];
    t.data()
        .chunks(per)
        .map(|c| {
            let px = c.iter().map(|v| v.to_f64_lossy() as f32).collect();
            Ok(GrayImage::new(s[2], s[3], px)?)
        })
        .collect()
}
