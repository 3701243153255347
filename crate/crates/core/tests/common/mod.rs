//! Shared test fixtures and independent reference implementations.
#![allow(dead_code)]

use std::path::Path;

use ensemblekit::dataset::{
    to_cifar10_bytes, ClassLabel, LabeledImageSet, RgbImage, IMAGE_SIDE, NUM_CLASSES, TEST_FILE,
    TRAIN_FILES,
};
use ensemblekit::features::FeatureSet;
use ensemblekit::hog::HogConfig;
use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl RngCore) -> RgbImage {
    let mut bytes = vec![0u8; 3 * IMAGE_SIDE * IMAGE_SIDE];
    rng.fill_bytes(&mut bytes);
    RgbImage::from_bytes(&bytes).unwrap()
}

pub fn label(i: usize) -> ClassLabel {
    ClassLabel::new(i as u8).unwrap()
}

/// `per_class` random images of every class, classes interleaved.
pub fn random_image_set(per_class: usize, seed: u64) -> LabeledImageSet {
    let mut r = rng(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * NUM_CLASSES {
        images.push(random_image(&mut r));
        labels.push(label(i % NUM_CLASSES));
    }
    LabeledImageSet::new(images, labels, "synthetic").unwrap()
}

/// Writes a CIFAR-10 style directory: five train batches and one test batch.
pub fn write_synthetic_cifar(dir: &Path, train_per_class_per_file: usize, test_per_class: usize) {
    for (i, name) in TRAIN_FILES.iter().enumerate() {
        let set = random_image_set(train_per_class_per_file, 100 + i as u64);
        std::fs::write(dir.join(name), to_cifar10_bytes(&set)).unwrap();
    }
    let test = random_image_set(test_per_class, 99);
    std::fs::write(dir.join(TEST_FILE), to_cifar10_bytes(&test)).unwrap();
}

// ---------------------------------------------------------------------------
// HOG reference: per-pixel loops, explicit circular bin distances.

fn ref_gray(img: &RgbImage, r: isize, c: isize) -> f64 {
    let clamp = |v: isize| v.clamp(0, IMAGE_SIDE as isize - 1) as usize;
    let (r, c) = (clamp(r), clamp(c));
    let red = img.pixel(0, r, c) as f64;
    let green = img.pixel(1, r, c) as f64;
    let blue = img.pixel(2, r, c) as f64;
    (0.299 * red + 0.587 * green + 0.114 * blue) / 255.0
}

/// Brute-force descriptor: every cell histogram is recomputed from scratch by
/// giving each pixel a triangular weight against every bin center.
pub fn reference_hog(img: &RgbImage, cfg: &HogConfig) -> Vec<f64> {
    let bins = cfg.orientations;
    let width = 180.0 / bins as f64;
    let cells = IMAGE_SIDE / cfg.cell_size;
    let cell_hist = |cr: usize, cc: usize| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for r in cr * cfg.cell_size..(cr + 1) * cfg.cell_size {
            for c in cc * cfg.cell_size..(cc + 1) * cfg.cell_size {
                let (ri, ci) = (r as isize, c as isize);
                let gx = ref_gray(img, ri, ci + 1) - ref_gray(img, ri, ci - 1);
                let gy = ref_gray(img, ri + 1, ci) - ref_gray(img, ri - 1, ci);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut theta = gy.atan2(gx).to_degrees();
                while theta < 0.0 {
                    theta += 180.0;
                }
                while theta >= 180.0 {
                    theta -= 180.0;
                }
                for (k, slot) in h.iter_mut().enumerate() {
                    let center = (k as f64 + 0.5) * width;
                    let diff = (theta - center).abs();
                    let dist = diff.min(180.0 - diff);
                    let w = 1.0 - dist / width;
                    if w > 0.0 {
                        *slot += mag * w;
                    }
                }
            }
        }
        h
    };
    let normalize = |v: &mut Vec<f64>| {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= n + 1e-12;
        }
    };
    let blocks = (cells - cfg.block_size) / cfg.block_stride + 1;
    let mut out = Vec::new();
    for by in 0..blocks {
        for bx in 0..blocks {
            let mut v = Vec::new();
            for i in 0..cfg.block_size {
                for j in 0..cfg.block_size {
                    v.extend(cell_hist(
                        by * cfg.block_stride + i,
                        bx * cfg.block_stride + j,
                    ));
                }
            }
            normalize(&mut v);
            for x in v.iter_mut() {
                if *x > cfg.clip {
                    *x = cfg.clip;
                }
            }
            normalize(&mut v);
            out.extend(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition by cyclic Jacobi rotations.

/// Eigenvalues (descending) and matching unit eigenvectors as columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Sample covariance with the `n - 1` denominator.
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = x - &mean;
    centered.t().dot(&centered) / (n - 1.0)
}

pub fn uniform_matrix(rng: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Two-factor data: class = 2 * a + b. Set A sees only factor a, set B only b.

pub struct TwoFactorData {
    pub train_a: FeatureSet,
    pub train_b: FeatureSet,
    pub test_a: FeatureSet,
    pub test_b: FeatureSet,
}

fn factor_block(rng: &mut ChaCha8Rng, bit: usize, d: usize) -> Vec<f32> {
    // factor shifts the first four coordinates; the rest is shared noise
    (0..d)
        .map(|j| {
            let noise = (rng.random::<f64>() - 0.5) * 0.6;
            let signal = if j < 4 {
                if bit == 1 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            };
            (signal + noise) as f32
        })
        .collect()
}

fn two_factor_split(n: usize, d: usize, seed: u64) -> (FeatureSet, FeatureSet) {
    let mut r = rng(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let class = i % 4;
        let (fa, fb) = (class / 2, class % 2);
        a.extend(factor_block(&mut r, fa, d));
        b.extend(factor_block(&mut r, fb, d));
        labels.push(label(class));
    }
    (
        FeatureSet::from_rows("factor_a", d, a, labels.clone()).unwrap(),
        FeatureSet::from_rows("factor_b", d, b, labels).unwrap(),
    )
}

pub fn two_factor_data(n_train: usize, n_test: usize, d: usize, seed: u64) -> TwoFactorData {
    let (train_a, train_b) = two_factor_split(n_train, d, seed);
    let (test_a, test_b) = two_factor_split(n_test, d, seed + 1);
    TwoFactorData {
        train_a,
        train_b,
        test_a,
        test_b,
    }
}
