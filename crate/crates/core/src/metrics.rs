//! PSNR and SSIM between a reference and a synthesized image. Both images
//! are mapped to `[0, 1]` and divided by their own mean before comparison.

use std::fmt::Write as _;

use crate::data::{normalize_mean, DataError, GrayImage};

/// Aggregates replace an infinite PSNR (identical images) with this value.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn normalized_pair(reference: &GrayImage, test: &GrayImage) -> Result<(Vec<f64>, Vec<f64>), DataError> {
    if reference.dims() != test.dims() {
        return Err(DataError::ShapeMismatch(reference.dims(), test.dims()));
    }
    Ok((normalize_mean(&reference.unit_range())?, normalize_mean(&test.unit_range())?))
}

/// `10·log10(MAX²/MSE)` with `MAX` the largest reference value; `+∞` when
/// the inputs are identical.
pub fn psnr_normalized(reference: &[f64], test: &[f64]) -> f64 {
    let mse = reference.iter().zip(test).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / reference.len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let max = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    10.0 * (max * max / mse).log10()
}

pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64, DataError> {
    let (r, t) = normalized_pair(reference, test)?;
    Ok(psnr_normalized(&r, &t))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean local SSIM over all fully contained Gaussian windows, with the
/// stabilizing constants derived from the dynamic range `range`.
pub fn ssim_with_range(a: &[f64], b: &[f64], height: usize, width: usize, range: f64) -> Result<f64, DataError> {
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(DataError::InvalidSize(height.min(width)));
    }
    let w = gaussian_window();
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=height - SSIM_WINDOW {
        for c0 in 0..=width - SSIM_WINDOW {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let k = (r0 + i) * width + c0 + j;
                    let wt = w[i * SSIM_WINDOW + j];
                    let (x, y) = (a[k], b[k]);
                    ma += wt * x;
                    mb += wt * y;
                    aa += wt * x * x;
                    bb += wt * y * y;
                    ab += wt * x * y;
                }
            }
            let va = aa - ma * ma;
            let vb = bb - mb * mb;
            let cov = ab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += if den == 0.0 {
                if num == 0.0 { 1.0 } else { 0.0 }
            } else {
                num / den
            };
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn ssim(reference: &GrayImage, test: &GrayImage) -> Result<f64, DataError> {
    let (r, t) = normalized_pair(reference, test)?;
    let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    ssim_with_range(&r, &t, reference.height(), reference.width(), hi - lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub pair_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, pair_id: impl Into<String>, reference: &GrayImage, test: &GrayImage) -> Result<(), DataError> {
        self.rows.push(MetricRow {
            pair_id: pair_id.into(),
            psnr_db: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
        });
        Ok(())
    }

    /// Mean and population standard deviation; PSNR capped first.
    pub fn aggregate(&self) -> Aggregate {
        let (psnr_mean, psnr_std) = mean_std(self.rows.iter().map(|r| r.psnr_db.min(PSNR_CAP_DB)));
        let (ssim_mean, ssim_std) = mean_std(self.rows.iter().map(|r| r.ssim));
        Aggregate {
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
        }
    }

    /// Header, one row per pair, then an `aggregate` row of means.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pair_id\tpsnr_db\tssim\n");
        for r in &self.rows {
            writeln!(out, "{}\t{:.6}\t{:.6}", r.pair_id, r.psnr_db, r.ssim).expect("string write");
        }
        let a = self.aggregate();
        writeln!(out, "aggregate\t{:.6}\t{:.6}", a.psnr_mean, a.ssim_mean).expect("string write");
        out
    }
}
