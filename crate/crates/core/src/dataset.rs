//! CIFAR-10 binary ingestion, flip augmentation and seeded per-class subsetting.
//!
//! The on-disk layout is the official binary distribution: each record is one
//! label byte followed by 3072 pixel bytes, stored as three 1024-byte planes
//! (red, green, blue), each plane row-major 32×32.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const IMAGE_SIDE: usize = 32;
pub const PLANE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CHANNELS: usize = 3;
pub const IMAGE_BYTES: usize = PLANE_LEN * CHANNELS;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;
pub const NUM_CLASSES: usize = 10;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("batch length {len} is not a positive multiple of {RECORD_BYTES}")]
    Length { len: usize },
    #[error("record {record}: label byte {value} is outside 0..=9")]
    Label { record: usize, value: u8 },
    #[error("image payload must be {IMAGE_BYTES} bytes, got {len}")]
    ImageSize { len: usize },
    #[error("class '{class}' has {available} images, {requested} requested")]
    InsufficientClass {
        class: &'static str,
        available: usize,
        requested: usize,
    },
    #[error("images ({images}) and labels ({labels}) differ in length")]
    Mismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One of the ten CIFAR-10 classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel(u8);

impl ClassLabel {
    pub fn new(index: u8) -> Option<Self> {
        ((index as usize) < NUM_CLASSES).then_some(ClassLabel(index))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CLASS_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ClassLabel(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (0..NUM_CLASSES as u8).map(ClassLabel)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A 32×32 RGB image in plane-major order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    pixels: Box<[u8]>,
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RgbImage").finish_non_exhaustive()
    }
}

impl RgbImage {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        if bytes.len() != IMAGE_BYTES {
            return Err(DatasetError::ImageSize { len: bytes.len() });
        }
        Ok(RgbImage {
            pixels: bytes.into(),
        })
    }

    /// Builds an image from a per-pixel function of (plane, row, col).
    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut pixels = vec![0u8; IMAGE_BYTES];
        for plane in 0..CHANNELS {
            for row in 0..IMAGE_SIDE {
                for col in 0..IMAGE_SIDE {
                    pixels[Self::offset(plane, row, col)] = f(plane, row, col);
                }
            }
        }
        RgbImage {
            pixels: pixels.into_boxed_slice(),
        }
    }

    pub fn filled(value: u8) -> Self {
        RgbImage {
            pixels: vec![value; IMAGE_BYTES].into_boxed_slice(),
        }
    }

    #[inline]
    fn offset(plane: usize, row: usize, col: usize) -> usize {
        plane * PLANE_LEN + row * IMAGE_SIDE + col
    }

    #[inline]
    pub fn pixel(&self, plane: usize, row: usize, col: usize) -> u8 {
        assert!(plane < CHANNELS && row < IMAGE_SIDE && col < IMAGE_SIDE);
        self.pixels[Self::offset(plane, row, col)]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }
}

/// Mirrors the image left-to-right.
pub fn horizontal_flip(img: &RgbImage) -> RgbImage {
    RgbImage::from_fn(|p, r, c| img.pixel(p, r, IMAGE_SIDE - 1 - c))
}

/// Mirrors the image top-to-bottom. Not used by the default augmentation.
pub fn vertical_flip(img: &RgbImage) -> RgbImage {
    RgbImage::from_fn(|p, r, c| img.pixel(p, IMAGE_SIDE - 1 - r, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flip {
    Horizontal,
    Vertical,
}

impl Flip {
    pub fn apply(self, img: &RgbImage) -> RgbImage {
        match self {
            Flip::Horizontal => horizontal_flip(img),
            Flip::Vertical => vertical_flip(img),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Flip::Horizontal => "hflip",
            Flip::Vertical => "vflip",
        }
    }
}

/// Ordered images with aligned labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledImageSet {
    images: Vec<RgbImage>,
    labels: Vec<ClassLabel>,
    provenance: String,
}

impl LabeledImageSet {
    pub fn new(
        images: Vec<RgbImage>,
        labels: Vec<ClassLabel>,
        provenance: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        if images.len() != labels.len() {
            return Err(DatasetError::Mismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        Ok(LabeledImageSet {
            images,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn empty(provenance: impl Into<String>) -> Self {
        LabeledImageSet {
            images: Vec::new(),
            labels: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[RgbImage] {
        &self.images
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn get(&self, i: usize) -> Option<(&RgbImage, ClassLabel)> {
        Some((self.images.get(i)?, *self.labels.get(i)?))
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        class_counts(&self.labels)
    }

    /// Picks rows by index, in the order given.
    pub fn select(&self, indices: &[usize], provenance: impl Into<String>) -> Self {
        LabeledImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: provenance.into(),
        }
    }

    /// Appends another set after this one.
    pub fn concat(mut self, other: LabeledImageSet, provenance: impl Into<String>) -> Self {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
        self.provenance = provenance.into();
        self
    }
}

pub fn class_counts(labels: &[ClassLabel]) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Parses a CIFAR-10 binary batch.
pub fn parse_cifar10_batch(bytes: &[u8]) -> Result<LabeledImageSet, DatasetError> {
    parse_with_provenance(bytes, "batch")
}

fn parse_with_provenance(bytes: &[u8], provenance: &str) -> Result<LabeledImageSet, DatasetError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(DatasetError::Length { len: bytes.len() });
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (record, chunk) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let value = chunk[0];
        let label = ClassLabel::new(value).ok_or(DatasetError::Label { record, value })?;
        labels.push(label);
        images.push(RgbImage {
            pixels: chunk[1..].into(),
        });
    }
    Ok(LabeledImageSet {
        images,
        labels,
        provenance: provenance.to_owned(),
    })
}

/// Serializes a set back into 3073-byte records.
pub fn to_cifar10_bytes(set: &LabeledImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(set.len() * RECORD_BYTES);
    for (img, label) in set.images.iter().zip(&set.labels) {
        out.push(label.0);
        out.extend_from_slice(img.as_bytes());
    }
    out
}

/// Returns the set followed by its flipped copy: originals occupy `[0, n)`, flips `[n, 2n)`.
pub fn augment_with_flip(set: &LabeledImageSet, flip: Flip) -> LabeledImageSet {
    let mut images = Vec::with_capacity(set.len() * 2);
    images.extend(set.images.iter().cloned());
    images.extend(set.images.iter().map(|img| flip.apply(img)));
    let mut labels = Vec::with_capacity(set.len() * 2);
    labels.extend_from_slice(&set.labels);
    labels.extend_from_slice(&set.labels);
    LabeledImageSet {
        images,
        labels,
        provenance: format!("{}+{}", set.provenance, flip.tag()),
    }
}

pub fn augment_with_hflip(set: &LabeledImageSet) -> LabeledImageSet {
    augment_with_flip(set, Flip::Horizontal)
}

/// Seeded per-class selection.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`. Classes
/// are visited in index order; each class's member indices (ascending) are
/// Fisher-Yates shuffled with `j = next_u64() % (i + 1)` for `i` from `len-1`
/// down to 1, and the first `per_class` are kept. The returned indices are
/// sorted ascending so the subset preserves the source ordering.
pub fn subset_indices_per_class(
    labels: &[ClassLabel],
    per_class: usize,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    if let Some((class, members)) = by_class
        .iter()
        .enumerate()
        .find(|(_, members)| members.len() < per_class)
    {
        return Err(DatasetError::InsufficientClass {
            class: CLASS_NAMES[class],
            available: members.len(),
            requested: per_class,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(per_class * NUM_CLASSES);
    for mut members in by_class {
        for i in (1..members.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            members.swap(i, j);
        }
        selected.extend_from_slice(&members[..per_class]);
    }
    selected.sort_unstable();
    Ok(selected)
}

pub fn subset_per_class(
    set: &LabeledImageSet,
    per_class: usize,
    seed: u64,
) -> Result<LabeledImageSet, DatasetError> {
    let indices = subset_indices_per_class(&set.labels, per_class, seed)?;
    Ok(set.select(
        &indices,
        format!("{}[{}/class,seed={}]", set.provenance, per_class, seed),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn files(self) -> &'static [&'static str] {
        match self {
            Split::Train => &TRAIN_FILES,
            Split::Test => std::slice::from_ref(&TEST_FILE),
        }
    }

    pub fn paths(self, data_dir: &Path) -> Vec<PathBuf> {
        self.files().iter().map(|f| data_dir.join(f)).collect()
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train or test)")),
        }
    }
}

pub fn read_batch_file(path: &Path) -> Result<LabeledImageSet, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_with_provenance(&bytes, &path.display().to_string())
}

/// Loads a split from a directory holding the official batch files, in canonical order.
pub fn load_split(data_dir: &Path, split: Split) -> Result<LabeledImageSet, DatasetError> {
    let mut out = LabeledImageSet::empty(split.as_str());
    for path in split.paths(data_dir) {
        let batch = read_batch_file(&path)?;
        out = out.concat(batch, split.as_str());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; RECORD_BYTES];
        r[0] = label;
        r
    }

    #[test]
    fn single_record_frog() {
        let set = parse_cifar10_batch(&record(6, 0)).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.labels()[0].name(), "frog");
        assert!(set.images()[0].as_bytes().iter().all(|&b| b == 0));
    }

    #[test]
    fn truncated_record_is_rejected() {
        assert!(matches!(
            parse_cifar10_batch(&vec![0u8; IMAGE_BYTES]),
            Err(DatasetError::Length { len: 3072 })
        ));
        assert!(matches!(
            parse_cifar10_batch(&[]),
            Err(DatasetError::Length { len: 0 })
        ));
    }

    #[test]
    fn bad_label_names_record() {
        let mut bytes = record(1, 0);
        bytes.extend(record(10, 0));
        assert!(matches!(
            parse_cifar10_batch(&bytes),
            Err(DatasetError::Label {
                record: 1,
                value: 10
            })
        ));
    }

    #[test]
    fn flip_moves_first_column_to_last() {
        let img = RgbImage::from_fn(|_, _, c| if c == 0 { 255 } else { 0 });
        let flipped = horizontal_flip(&img);
        for p in 0..CHANNELS {
            for r in 0..IMAGE_SIDE {
                for c in 0..IMAGE_SIDE {
                    let want = if c == 31 { 255 } else { 0 };
                    assert_eq!(flipped.pixel(p, r, c), want);
                }
            }
        }
    }

    #[test]
    fn vertical_flip_moves_first_row_to_last() {
        let img = RgbImage::from_fn(|_, r, _| if r == 0 { 9 } else { 1 });
        let flipped = vertical_flip(&img);
        assert_eq!(flipped.pixel(2, 31, 5), 9);
        assert_eq!(flipped.pixel(2, 0, 5), 1);
    }

    #[test]
    fn augment_orders_originals_then_flips() {
        let labels: Vec<_> = [1u8, 1, 4]
            .iter()
            .map(|&l| ClassLabel::new(l).unwrap())
            .collect();
        let images: Vec<_> = (0..3u8)
            .map(|v| RgbImage::from_fn(|_, _, c| v * 10 + c as u8))
            .collect();
        let set = LabeledImageSet::new(images.clone(), labels, "t").unwrap();
        let aug = augment_with_hflip(&set);
        assert_eq!(aug.len(), 6);
        let got: Vec<usize> = aug.labels().iter().map(|l| l.index()).collect();
        assert_eq!(got, vec![1, 1, 4, 1, 1, 4]);
        for (i, img) in images.iter().enumerate() {
            assert_eq!(&aug.images()[i], img);
            assert_eq!(aug.images()[i + 3], horizontal_flip(img));
        }
        assert_eq!(aug.provenance(), "t+hflip");
        assert!(augment_with_hflip(&LabeledImageSet::empty("e")).is_empty());
    }

    fn balanced(per_class: usize) -> LabeledImageSet {
        let n = per_class * NUM_CLASSES;
        let images = (0..n).map(|i| RgbImage::filled((i % 251) as u8)).collect();
        let labels = (0..n)
            .map(|i| ClassLabel::new((i % NUM_CLASSES) as u8).unwrap())
            .collect();
        LabeledImageSet::new(images, labels, "synthetic").unwrap()
    }

    #[test]
    fn subset_counts_and_determinism() {
        let set = balanced(50);
        let a = subset_per_class(&set, 7, 42).unwrap();
        let b = subset_per_class(&set, 7, 42).unwrap();
        assert_eq!(a.len(), 70);
        assert_eq!(a.class_counts(), [7; NUM_CLASSES]);
        assert_eq!(to_cifar10_bytes(&a), to_cifar10_bytes(&b));
        let c = subset_indices_per_class(set.labels(), 7, 43).unwrap();
        assert_ne!(subset_indices_per_class(set.labels(), 7, 42).unwrap(), c);
    }

    #[test]
    fn subset_reports_deficient_class() {
        let mut set = balanced(5);
        // drop one truck
        let keep: Vec<usize> = (0..set.len()).filter(|&i| i != 9).collect();
        set = set.select(&keep, "short");
        match subset_per_class(&set, 5, 1) {
            Err(DatasetError::InsufficientClass {
                class,
                available,
                requested,
            }) => {
                assert_eq!(class, "truck");
                assert_eq!((available, requested), (4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_names_round_trip() {
        for l in ClassLabel::all() {
            assert_eq!(ClassLabel::from_name(l.name()), Some(l));
        }
        assert_eq!(ClassLabel::new(10), None);
    }
}
