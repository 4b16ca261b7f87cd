use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::pgm::{load_pgm, save_pgm};
use super::raw::{load_f32, save_f32};
use super::toy::ToyDataset;
use super::{DataError, GrayImage, ImageSample};
use crate::error::{Error, Result};

pub const TRAIN_A: &str = "trainA";
pub const TRAIN_B: &str = "trainB";
pub const EVAL_A: &str = "evalA";
pub const EVAL_B: &str = "evalB";

/// The only view of the data training receives: two independent pools of
/// images with no pairing information.
#[derive(Debug, Clone)]
pub struct UnpairedPools {
    a: Vec<GrayImage>,
    b: Vec<GrayImage>,
}

impl UnpairedPools {
    pub fn new(a: Vec<GrayImage>, b: Vec<GrayImage>) -> Self {
        Self { a, b }
    }

    pub fn a(&self) -> &[GrayImage] {
        &self.a
    }

    pub fn b(&self) -> &[GrayImage] {
        &self.b
    }

    /// Both pools nonempty and every image `size × size`.
    pub fn validate(&self, size: usize) -> Result<(), DataError> {
        for (name, pool) in [(TRAIN_A, &self.a), (TRAIN_B, &self.b)] {
            if pool.is_empty() {
                return Err(DataError::Empty(name.into()));
            }
            if let Some(img) = pool.iter().find(|i| i.dims() != (size, size)) {
                return Err(DataError::ShapeMismatch((size, size), img.dims()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvalPair {
    pub pair_id: String,
    pub a: GrayImage,
    pub b: GrayImage,
}

#[derive(Debug, Clone)]
pub struct EvalSet {
    pub pairs: Vec<EvalPair>,
}

impl EvalSet {
    pub fn from_samples(a: &[ImageSample], b: &[ImageSample]) -> Result<Self, DataError> {
        let by_id: BTreeMap<&str, &GrayImage> = b.iter().filter_map(|s| Some((s.pair_id()?, &s.image))).collect();
        let mut pairs = Vec::with_capacity(a.len());
        for s in a {
            let id = s.pair_id().ok_or_else(|| DataError::MissingPair("<unpaired>".into()))?;
            let other = by_id.get(id).ok_or_else(|| DataError::MissingPair(id.into()))?;
            pairs.push(EvalPair {
                pair_id: id.into(),
                a: s.image.clone(),
                b: (*other).clone(),
            });
        }
        Ok(Self { pairs })
    }

    /// Pairs `evalA/<name>` with `evalB/<name>` by file stem.
    pub fn load(dir: &Path) -> Result<Self> {
        let a = read_dir_images(&dir.join(EVAL_A))?;
        let mut b: BTreeMap<String, GrayImage> = read_dir_images(&dir.join(EVAL_B))?.into_iter().collect();
        if a.len() != b.len() {
            let missing = a
                .iter()
                .map(|(n, _)| n.clone())
                .find(|n| !b.contains_key(n))
                .or_else(|| b.keys().find(|k| !a.iter().any(|(n, _)| n == *k)).cloned())
                .unwrap_or_default();
            return Err(DataError::MissingPair(missing).into());
        }
        let mut pairs = Vec::with_capacity(a.len());
        for (name, img) in a {
            let other = b.remove(&name).ok_or_else(|| DataError::MissingPair(name.clone()))?;
            pairs.push(EvalPair {
                pair_id: name,
                a: img,
                b: other,
            });
        }
        Ok(Self { pairs })
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Loads `.pgm` or `.f32` by extension.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    match extension(path).as_str() {
        "pgm" => Ok(load_pgm(path)?.image),
        "f32" => load_f32(path),
        other => Err(DataError::UnknownExtension(other.into()).into()),
    }
}

/// Saves `.pgm` (16-bit) or `.f32` by extension.
pub fn save_image(path: &Path, image: &GrayImage) -> Result<()> {
    match extension(path).as_str() {
        "pgm" => save_pgm(path, image, u16::MAX),
        "f32" => save_f32(path, image),
        other => Err(DataError::UnknownExtension(other.into()).into()),
    }
}

/// All `.pgm`/`.f32` images in `dir` keyed by file stem, sorted by name.
pub fn read_dir_images(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && matches!(extension(&path).as_str(), "pgm" | "f32") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(DataError::Empty(dir.display().to_string()).into());
    }
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let img = load_image(&p).map_err(|e| match e {
                Error::Data(d) => Error::Config(format!("{}: {d}", p.display())),
                other => other,
            })?;
            Ok((stem, img))
        })
        .collect()
}

pub fn load_pools(dir: &Path) -> Result<UnpairedPools> {
    let strip = |v: Vec<(String, GrayImage)>| v.into_iter().map(|(_, i)| i).collect();
    Ok(UnpairedPools::new(
        strip(read_dir_images(&dir.join(TRAIN_A))?),
        strip(read_dir_images(&dir.join(TRAIN_B))?),
    ))
}

/// Writes the four-directory layout as 16-bit PGM; eval files are named by
/// pair id in both eval directories.
pub fn write_dataset(dir: &Path, data: &ToyDataset) -> Result<()> {
    let write = |sub: &str, samples: &[ImageSample]| -> Result<()> {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for (i, s) in samples.iter().enumerate() {
            let name = s.pair_id().map(str::to_string).unwrap_or_else(|| format!("{i:04}"));
            save_image(&d.join(format!("{name}.pgm")), &s.image)?;
        }
        Ok(())
    };
    write(TRAIN_A, &data.train_a)?;
    write(TRAIN_B, &data.train_b)?;
    write(EVAL_A, &data.eval_a)?;
    write(EVAL_B, &data.eval_b)
}
