//! Labeled feature matrices and the FSET interchange format.
//!
//! FSET layout (all integers little-endian):
//!
//! ```text
//! "FSET" | version u32 = 1 | n u64 | d u32 | name_len u16 | name (UTF-8)
//!        | n label bytes | n*d binary32 values, row-major
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::binio::{CountingWriter, DecodeError, OffsetReader};
use crate::dataset::ClassLabel;

pub const FSET_MAGIC: [u8; 4] = *b"FSET";
pub const FSET_VERSION: u32 = 1;

/// Columns whose training σ falls below this are only centered.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("values hold {values} entries, expected n*d = {expected}")]
    Shape { values: usize, expected: usize },
    #[error("labels hold {labels} entries, expected n = {n}")]
    LabelCount { labels: usize, n: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature set name is {0} bytes; at most 65535 allowed")]
    NameTooLong(usize),
    #[error("feature sets misaligned: {0}")]
    Alignment(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no feature sets given")]
    Empty,
}

#[derive(Debug, Error)]
pub enum FsetError {
    #[error("bad magic at offset {offset}: expected \"FSET\"")]
    Magic { offset: u64 },
    #[error("unsupported version {found} at offset {offset}")]
    Version { offset: u64, found: u32 },
    #[error("file truncated at offset {offset}")]
    Truncation { offset: u64 },
    #[error("name at offset {offset} is not valid UTF-8")]
    Name { offset: u64 },
    #[error("label byte {value} at offset {offset} is outside 0..=9")]
    Label { offset: u64, value: u8 },
    #[error("non-finite value at offset {offset}")]
    NonFinite { offset: u64 },
    #[error("{extra} trailing bytes after offset {offset}")]
    Trailing { offset: u64, extra: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FsetError {
    pub fn offset(&self) -> Option<u64> {
        match *self {
            FsetError::Magic { offset }
            | FsetError::Version { offset, .. }
            | FsetError::Truncation { offset }
            | FsetError::Name { offset }
            | FsetError::Label { offset, .. }
            | FsetError::NonFinite { offset }
            | FsetError::Trailing { offset, .. } => Some(offset),
            FsetError::Io(_) => None,
        }
    }
}

impl From<DecodeError> for FsetError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Eof { offset } => FsetError::Truncation { offset },
            DecodeError::Io(e) => FsetError::Io(e),
        }
    }
}

/// A named n×d matrix of per-image features with aligned labels.
///
/// Values are held at 32-bit precision; use [`FeatureSet::to_f64`] before any
/// linear algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    name: String,
    values: Array2<f32>,
    labels: Vec<ClassLabel>,
}

impl FeatureSet {
    pub fn new(
        name: impl Into<String>,
        values: Array2<f32>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self, FeatureError> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(FeatureError::NameTooLong(name.len()));
        }
        if labels.len() != values.nrows() {
            return Err(FeatureError::LabelCount {
                labels: labels.len(),
                n: values.nrows(),
            });
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row, col });
        }
        Ok(FeatureSet {
            name,
            values,
            labels,
        })
    }

    /// Builds a set from a flat row-major buffer.
    pub fn from_rows(
        name: impl Into<String>,
        d: usize,
        values: Vec<f32>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self, FeatureError> {
        let n = labels.len();
        if values.len() != n * d {
            return Err(FeatureError::Shape {
                values: values.len(),
                expected: n * d,
            });
        }
        let values = Array2::from_shape_vec((n, d), values).expect("shape checked");
        Self::new(name, values, labels)
    }

    /// Rounds a 64-bit matrix into a set.
    pub fn from_f64(
        name: impl Into<String>,
        values: &Array2<f64>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self, FeatureError> {
        Self::new(name, values.mapv(|v| v as f32), labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f32> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.values.row(i)
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Picks rows by index, in the order given.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            name: self.name.clone(),
            values: self.values.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Size in bytes of this set's FSET encoding.
    pub fn encoded_len(&self) -> u64 {
        (4 + 4 + 8 + 4 + 2 + self.name.len() + self.n() + 4 * self.n() * self.d()) as u64
    }
}

pub fn write_fset<W: Write>(set: &FeatureSet, sink: W) -> io::Result<u64> {
    let mut w = CountingWriter::new(sink);
    w.bytes(&FSET_MAGIC)?;
    w.u32(FSET_VERSION)?;
    w.u64(set.n() as u64)?;
    w.u32(u32::try_from(set.d()).map_err(|_| {
        io::Error::new(io::ErrorKind::InvalidInput, "feature dimension exceeds u32")
    })?)?;
    w.u16(set.name.len() as u16)?;
    w.bytes(set.name.as_bytes())?;
    let labels: Vec<u8> = set.labels.iter().map(|l| l.index() as u8).collect();
    w.bytes(&labels)?;
    let mut buf = Vec::with_capacity(set.d() * 4);
    for row in set.values.rows() {
        buf.clear();
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.bytes(&buf)?;
    }
    w.flush()?;
    Ok(w.written())
}

/// Parses one FSET record from the stream. Bytes after the record are not consumed.
pub fn read_fset<R: Read>(source: R) -> Result<FeatureSet, FsetError> {
    let mut r = OffsetReader::new(source);
    read_fset_from(&mut r)
}

fn read_fset_from<R: Read>(r: &mut OffsetReader<R>) -> Result<FeatureSet, FsetError> {
    let magic: [u8; 4] = r.array()?;
    if magic != FSET_MAGIC {
        return Err(FsetError::Magic { offset: 0 });
    }
    let version_offset = r.offset();
    let version = r.u32()?;
    if version != FSET_VERSION {
        return Err(FsetError::Version {
            offset: version_offset,
            found: version,
        });
    }
    let n = r.u64()?;
    let d = r.u32()? as u64;
    let name_len = r.u16()? as usize;
    let name_offset = r.offset();
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| FsetError::Name {
        offset: name_offset,
    })?;

    // Grow buffers as data arrives so a corrupt header cannot force a huge allocation.
    const CHUNK: u64 = 1 << 16;
    let mut labels = Vec::with_capacity(n.min(CHUNK) as usize);
    let mut remaining = n;
    let mut buf = vec![0u8; n.min(CHUNK) as usize];
    while remaining > 0 {
        let take = remaining.min(CHUNK) as usize;
        let start = r.offset();
        r.read_exact(&mut buf[..take])?;
        for (i, &value) in buf[..take].iter().enumerate() {
            labels.push(ClassLabel::new(value).ok_or(FsetError::Label {
                offset: start + i as u64,
                value,
            })?);
        }
        remaining -= take as u64;
    }

    let total = n
        .checked_mul(d)
        .ok_or(FsetError::Truncation { offset: r.offset() })?;
    let mut values = Vec::with_capacity(total.min(CHUNK) as usize);
    let mut remaining = total;
    let mut bytes = vec![0u8; (total.min(CHUNK) * 4) as usize];
    while remaining > 0 {
        let take = remaining.min(CHUNK) as usize;
        let start = r.offset();
        r.read_exact(&mut bytes[..take * 4])?;
        for (i, chunk) in bytes[..take * 4].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FsetError::NonFinite {
                    offset: start + 4 * i as u64,
                });
            }
            values.push(v);
        }
        remaining -= take as u64;
    }
    let values = Array2::from_shape_vec((n as usize, d as usize), values).expect("length tracked");
    Ok(FeatureSet {
        name,
        values,
        labels,
    })
}

pub fn write_fset_file(set: &FeatureSet, path: &Path) -> io::Result<u64> {
    let file = File::create(path)?;
    write_fset(set, BufWriter::new(file))
}

/// Reads a whole FSET file and rejects trailing bytes.
pub fn read_fset_file(path: &Path) -> Result<FeatureSet, FsetError> {
    let file = File::open(path)?;
    let total = file.metadata()?.len();
    let mut r = OffsetReader::new(BufReader::new(file));
    let set = read_fset_from(&mut r)?;
    if !r.at_end()? {
        return Err(FsetError::Trailing {
            offset: r.offset(),
            extra: total.saturating_sub(r.offset()),
        });
    }
    Ok(set)
}

/// Concatenates label-aligned sets column-wise, in list order.
pub fn concat_feature_sets(sets: &[FeatureSet]) -> Result<FeatureSet, FeatureError> {
    let first = sets.first().ok_or(FeatureError::Empty)?;
    for (k, s) in sets.iter().enumerate().skip(1) {
        if s.n() != first.n() {
            return Err(FeatureError::Alignment(format!(
                "set {k} ('{}') has {} rows, set 0 ('{}') has {}",
                s.name,
                s.n(),
                first.name,
                first.n()
            )));
        }
        if let Some(row) = (0..s.n()).find(|&i| s.labels[i] != first.labels[i]) {
            return Err(FeatureError::Alignment(format!(
                "set {k} ('{}') label at row {row} is {}, set 0 has {}",
                s.name, s.labels[row], first.labels[row]
            )));
        }
    }
    let views: Vec<_> = sets.iter().map(|s| s.values.view()).collect();
    let values = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    let name = sets
        .iter()
        .map(|s| s.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(FeatureSet {
        name,
        values,
        labels: first.labels.clone(),
    })
}

/// Per-column training statistics used for z-scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation of each training column.
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(train: &FeatureSet) -> Result<Self, FeatureError> {
        if train.n() == 0 {
            return Err(FeatureError::Empty);
        }
        let x = train.to_f64();
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let mut var = vec![0.0f64; x.ncols()];
        for row in x.rows() {
            for ((acc, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *acc += c * c;
            }
        }
        Ok(StandardizationStats {
            mean: mean.to_vec(),
            std: var.into_iter().map(|v| (v / n).sqrt()).collect(),
        })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, set: &FeatureSet) -> Result<FeatureSet, FeatureError> {
        if set.d() != self.d() {
            return Err(FeatureError::Dimension {
                expected: self.d(),
                found: set.d(),
            });
        }
        let mut values = set.values.clone();
        for mut row in values.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                let centered = f64::from(*v) - m;
                *v = if s < SIGMA_FLOOR {
                    centered
                } else {
                    centered / s
                } as f32;
            }
        }
        FeatureSet::new(set.name.clone(), values, set.labels.clone())
    }
}

/// Fits z-score statistics on `train` and applies them to `train` and every set in `others`.
pub fn standardize(
    train: &FeatureSet,
    others: &[FeatureSet],
) -> Result<(FeatureSet, Vec<FeatureSet>, StandardizationStats), FeatureError> {
    if let Some(bad) = others.iter().find(|o| o.d() != train.d()) {
        return Err(FeatureError::Dimension {
            expected: train.d(),
            found: bad.d(),
        });
    }
    let stats = StandardizationStats::fit(train)?;
    let train_out = stats.apply(train)?;
    let others_out = others
        .iter()
        .map(|o| stats.apply(o))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((train_out, others_out, stats))
}
