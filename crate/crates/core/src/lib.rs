//! Feature-ensemble image classification for CIFAR-10.
//!
//! Hand-crafted (HOG, raw pixel) and externally computed feature sets are
//! concatenated, optionally standardized and reduced with PCA, and classified
//! by a small fully connected network.

mod binio;

pub mod cli;
pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod fcnn;
pub mod features;
pub mod hog;
pub mod manifest;
pub mod pca;
pub mod pixel;

pub use dataset::{ClassLabel, LabeledImageSet, RgbImage};
pub use features::FeatureSet;
