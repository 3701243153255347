//! Raw pixel intensities as features: the 3072 plane-major bytes scaled into [0, 1].

use crate::dataset::{LabeledImageSet, RgbImage, IMAGE_BYTES};
use crate::features::FeatureSet;

pub const PIXEL_DIM: usize = IMAGE_BYTES;

pub fn pixel_features(img: &RgbImage) -> Vec<f32> {
    img.as_bytes()
        .iter()
        .map(|&b| f32::from(b) / 255.0)
        .collect()
}

pub fn pixel_feature_set(set: &LabeledImageSet) -> FeatureSet {
    let mut values = Vec::with_capacity(set.len() * PIXEL_DIM);
    for img in set.images() {
        values.extend(img.as_bytes().iter().map(|&b| f32::from(b) / 255.0));
    }
    FeatureSet::from_rows("pixel", PIXEL_DIM, values, set.labels().to_vec())
        .expect("pixel rows are finite")
}

/// Inverts [`pixel_features`] by rescaling and rounding. Returns `None` unless
/// the row has exactly 3072 entries.
pub fn reconstruct_image(row: &[f32]) -> Option<RgbImage> {
    if row.len() != PIXEL_DIM {
        return None;
    }
    let bytes: Vec<u8> = row
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage::from_bytes(&bytes).ok()
}
