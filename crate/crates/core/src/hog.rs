//! Histogram of oriented gradients over 32×32 images.
//!
//! Pipeline: luma grayscale, central-difference gradients with border
//! replication, unsigned orientation histograms per cell with linear voting
//! between the two nearest bin centers, and L2-Hys normalized overlapping blocks.

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{LabeledImageSet, RgbImage, IMAGE_SIDE, PLANE_LEN};
use crate::features::FeatureSet;

/// Guard added to block norms so all-zero blocks stay zero.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HogError {
    #[error("invalid HOG configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HogConfig {
    /// Bins over [0°, 180°).
    pub orientations: usize,
    /// Pixels per cell side.
    pub cell_size: usize,
    /// Cells per block side.
    pub block_size: usize,
    /// Block step, in cells.
    pub block_stride: usize,
    /// L2-Hys clipping threshold.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            orientations: 9,
            cell_size: 8,
            block_size: 2,
            block_stride: 1,
            clip: 0.2,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<(), HogError> {
        let fail = |m: String| Err(HogError::Config(m));
        if self.orientations < 2 {
            return fail(format!(
                "orientations must be >= 2, got {}",
                self.orientations
            ));
        }
        if self.cell_size == 0 || !IMAGE_SIDE.is_multiple_of(self.cell_size) {
            return fail(format!(
                "cell size {} does not divide {IMAGE_SIDE}",
                self.cell_size
            ));
        }
        let cells = IMAGE_SIDE / self.cell_size;
        if self.block_size == 0 || self.block_size > cells {
            return fail(format!(
                "block size {} must be in 1..={cells} cells",
                self.block_size
            ));
        }
        if self.block_stride == 0 {
            return fail("block stride must be >= 1".into());
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return fail(format!("clip must be positive, got {}", self.clip));
        }
        Ok(())
    }

    pub fn cells_per_axis(&self) -> usize {
        IMAGE_SIDE / self.cell_size
    }

    pub fn blocks_per_axis(&self) -> usize {
        (self.cells_per_axis() - self.block_size) / self.block_stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size * self.orientations
    }

    pub fn dimension(&self) -> usize {
        let b = self.blocks_per_axis();
        b * b * self.block_len()
    }
}

/// Luma intensities scaled into [0, 1].
pub fn grayscale(img: &RgbImage) -> Array2<f64> {
    let bytes = img.as_bytes();
    Array2::from_shape_fn((IMAGE_SIDE, IMAGE_SIDE), |(r, c)| {
        let i = r * IMAGE_SIDE + c;
        (0.299 * f64::from(bytes[i])
            + 0.587 * f64::from(bytes[PLANE_LEN + i])
            + 0.114 * f64::from(bytes[2 * PLANE_LEN + i]))
            / 255.0
    })
}

/// Per-pixel gradient magnitude and unsigned orientation in degrees, [0, 180).
pub fn gradients(gray: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = gray.dim();
    let mut magnitude = Array2::zeros((h, w));
    let mut orientation = Array2::zeros((h, w));
    for r in 0..h {
        let (up, down) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (left, right) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let gx = gray[[r, right]] - gray[[r, left]];
            let gy = gray[[down, c]] - gray[[up, c]];
            magnitude[[r, c]] = gx.hypot(gy);
            orientation[[r, c]] = gy.atan2(gx).to_degrees().rem_euclid(180.0);
        }
    }
    (magnitude, orientation)
}

/// Orientation histograms per cell, shaped (cell_row, cell_col, bin).
pub fn cell_histograms(img: &RgbImage, cfg: &HogConfig) -> Result<Array3<f64>, HogError> {
    cfg.validate()?;
    let (magnitude, orientation) = gradients(&grayscale(img));
    let cells = cfg.cells_per_axis();
    let bins = cfg.orientations;
    let bin_width = 180.0 / bins as f64;
    let mut hist = Array3::zeros((cells, cells, bins));
    for ((r, c), &m) in magnitude.indexed_iter() {
        if m == 0.0 {
            continue;
        }
        // bin k is centered at (k + 0.5) * bin_width; wrap at 180°
        let pos = orientation[[r, c]] / bin_width - 0.5;
        let lower = pos.floor();
        let frac = pos - lower;
        let lo = (lower as isize).rem_euclid(bins as isize) as usize;
        let hi = (lo + 1) % bins;
        let (cr, cc) = (r / cfg.cell_size, c / cfg.cell_size);
        hist[[cr, cc, lo]] += m * (1.0 - frac);
        hist[[cr, cc, hi]] += m * frac;
    }
    Ok(hist)
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = 1.0 / (norm + NORM_EPSILON);
    v.iter_mut().for_each(|x| *x *= scale);
}

/// L2 normalize, clip, renormalize.
fn l2_hys(v: &mut [f64], clip: f64) {
    l2_normalize(v);
    for x in v.iter_mut() {
        *x = x.min(clip);
    }
    debug_assert!(v.iter().all(|&x| x <= clip + 1e-9));
    l2_normalize(v);
    debug_assert!(v.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-9);
}

pub fn hog_features(img: &RgbImage, cfg: &HogConfig) -> Result<Vec<f64>, HogError> {
    let hist = cell_histograms(img, cfg)?;
    let blocks = cfg.blocks_per_axis();
    let mut out = Vec::with_capacity(cfg.dimension());
    let mut block = Vec::with_capacity(cfg.block_len());
    for by in 0..blocks {
        for bx in 0..blocks {
            block.clear();
            for i in 0..cfg.block_size {
                for j in 0..cfg.block_size {
                    let (cr, cc) = (by * cfg.block_stride + i, bx * cfg.block_stride + j);
                    block.extend((0..cfg.orientations).map(|k| hist[[cr, cc, k]]));
                }
            }
            l2_hys(&mut block, cfg.clip);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

/// HOG rows for every image, in input order.
pub fn hog_feature_set(set: &LabeledImageSet, cfg: &HogConfig) -> Result<FeatureSet, HogError> {
    cfg.validate()?;
    let d = cfg.dimension();
    let rows = set
        .images()
        .par_iter()
        .map(|img| hog_features(img, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f32> = rows.into_iter().flatten().map(|v| v as f32).collect();
    Ok(
        FeatureSet::from_rows("hog", d, values, set.labels().to_vec())
            .expect("HOG rows are finite"),
    )
}
