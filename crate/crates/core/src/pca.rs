//! Principal component analysis for feature fusion.
//!
//! Components come from the SVD of the training-centered data matrix. When the
//! matrix is wider than tall the equivalent eigendecomposition of the n×n Gram
//! matrix is used instead. Each component is sign-normalized so its
//! largest-magnitude entry is positive (first such entry on ties).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::binio::{CountingWriter, DecodeError, OffsetReader};

pub const PCAM_MAGIC: [u8; 4] = *b"PCAM";
pub const PCAM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("invalid argument: {0}")]
    Arg(String),
    #[error("dimension mismatch: model expects {expected} columns, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("total variance is zero (all-constant data)")]
    DegenerateData,
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("PCAM decode error at offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<DecodeError> for PcaError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Eof { offset } => PcaError::Format {
                offset,
                reason: "truncated".into(),
            },
            DecodeError::Io(e) => PcaError::Io(e),
        }
    }
}

/// Non-fatal: more components were requested than the data's numerical rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankWarning {
    pub requested: usize,
    pub numerical_rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// k×d, orthonormal rows in descending-variance order.
    components: Array2<f64>,
    variances: Array1<f64>,
    total_variance: f64,
}

impl PcaModel {
    pub fn new(
        mean: Array1<f64>,
        components: Array2<f64>,
        variances: Array1<f64>,
        total_variance: f64,
    ) -> Result<Self, PcaError> {
        if components.ncols() != mean.len() {
            return Err(PcaError::Arg(format!(
                "components have {} columns, mean has {}",
                components.ncols(),
                mean.len()
            )));
        }
        if variances.len() != components.nrows() {
            return Err(PcaError::Arg(format!(
                "{} variances for {} components",
                variances.len(),
                components.nrows()
            )));
        }
        Ok(PcaModel {
            mean,
            components,
            variances,
            total_variance,
        })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn variances(&self) -> &Array1<f64> {
        &self.variances
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Projects rows onto the components: `(X - mean) · componentsᵀ`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, PcaError> {
        if x.ncols() != self.d() {
            return Err(PcaError::Dimension {
                expected: self.d(),
                found: x.ncols(),
            });
        }
        let centered = &x - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }

    /// Maps projected rows back into the original space.
    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>, PcaError> {
        if z.ncols() != self.k() {
            return Err(PcaError::Dimension {
                expected: self.k(),
                found: z.ncols(),
            });
        }
        Ok(z.dot(&self.components) + &self.mean)
    }

    pub fn explained_variance_ratio(&self) -> Result<Array1<f64>, PcaError> {
        if self.total_variance <= 0.0 {
            return Err(PcaError::DegenerateData);
        }
        Ok(&self.variances / self.total_variance)
    }

    pub fn cumulative_explained_variance(&self) -> Result<f64, PcaError> {
        Ok(self.explained_variance_ratio()?.sum())
    }

    /// Keeps only the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<PcaModel, PcaError> {
        if k > self.k() {
            return Err(PcaError::Arg(format!(
                "cannot keep {k} of {} components",
                self.k()
            )));
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: self.components.slice(s![..k, ..]).to_owned(),
            variances: self.variances.slice(s![..k]).to_owned(),
            total_variance: self.total_variance,
        })
    }

    /// Reports components whose variance is numerically zero relative to the leading one.
    pub fn rank_warning(&self) -> Option<RankWarning> {
        let top = self.variances.first().copied().unwrap_or(0.0);
        let tol = top * (self.d() as f64) * f64::EPSILON * 1e2;
        let rank = self
            .variances
            .iter()
            .filter(|&&v| v > tol && v > 0.0)
            .count();
        (rank < self.k()).then_some(RankWarning {
            requested: self.k(),
            numerical_rank: rank,
        })
    }
}

/// Fits a `k`-component model to the rows of `x`.
pub fn pca_fit(x: ArrayView2<'_, f64>, k: usize) -> Result<PcaModel, PcaError> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(PcaError::Arg(format!("need at least 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(PcaError::Arg(format!(
            "k = {k} must be in 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PcaError::Arg("input contains non-finite values".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;

    faer::set_global_parallelism(faer::Par::Seq);
    let (mut components, variances) = if n >= d {
        svd_components(&centered, k, denom)?
    } else {
        gram_components(&centered, k, denom)?
    };
    orthonormalize_rows(&mut components);
    for mut row in components.rows_mut() {
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let model = PcaModel {
        mean,
        components,
        variances,
        total_variance,
    };
    if let Some(w) = model.rank_warning() {
        log::warn!(
            "requested {} components but numerical rank is {}",
            w.requested,
            w.numerical_rank
        );
    }
    Ok(model)
}

fn to_faer(a: &Array2<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn svd_components(
    centered: &Array2<f64>,
    k: usize,
    denom: f64,
) -> Result<(Array2<f64>, Array1<f64>), PcaError> {
    let m = to_faer(centered);
    let svd = m
        .as_ref()
        .thin_svd()
        .map_err(|e| PcaError::Decomposition(format!("{e:?}")))?;
    let sv = svd.S().column_vector();
    let v = svd.V();
    let mut order: Vec<usize> = (0..sv.nrows()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let d = centered.ncols();
    let components = Array2::from_shape_fn((k, d), |(r, j)| v[(j, order[r])]);
    let variances = Array1::from_shape_fn(k, |r| sv[order[r]] * sv[order[r]] / denom);
    Ok((components, variances))
}

fn gram_components(
    centered: &Array2<f64>,
    k: usize,
    denom: f64,
) -> Result<(Array2<f64>, Array1<f64>), PcaError> {
    let gram = centered.dot(&centered.t());
    let g = to_faer(&gram);
    let evd = g
        .as_ref()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| PcaError::Decomposition(format!("{e:?}")))?;
    let vals = evd.S().column_vector();
    let vecs = evd.U();
    let n = gram.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let top = vals[order[0]].max(0.0);
    let tol = top * n as f64 * f64::EPSILON * 1e2;
    let d = centered.ncols();
    let mut components = Array2::zeros((k, d));
    let mut variances = Array1::zeros(k);
    for r in 0..k {
        let idx = order[r];
        let lambda = vals[idx].max(0.0);
        variances[r] = lambda / denom;
        if lambda > tol {
            // right singular vector v = Xᵀu / σ
            let u = Array1::from_shape_fn(n, |i| vecs[(i, idx)]);
            let v = centered.t().dot(&u) / lambda.sqrt();
            components.row_mut(r).assign(&v);
        }
        // zero rows are completed by orthonormalize_rows
    }
    Ok((components, variances))
}

/// Modified Gram-Schmidt over the rows; rows that vanish are replaced by the
/// first standard basis vector that is linearly independent of earlier rows.
fn orthonormalize_rows(rows: &mut Array2<f64>) {
    let (k, d) = rows.dim();
    let mut next_basis = 0;
    for r in 0..k {
        for _pass in 0..2 {
            for prev in 0..r {
                let dot = rows.row(r).dot(&rows.row(prev));
                let p = rows.row(prev).to_owned();
                rows.row_mut(r).scaled_add(-dot, &p);
            }
        }
        let mut norm = rows.row(r).dot(&rows.row(r)).sqrt();
        while norm < 1e-6 {
            assert!(next_basis < d, "cannot complete an orthonormal basis");
            let mut e = Array1::zeros(d);
            e[next_basis] = 1.0;
            next_basis += 1;
            rows.row_mut(r).assign(&e);
            for _pass in 0..2 {
                for prev in 0..r {
                    let dot = rows.row(r).dot(&rows.row(prev));
                    let p = rows.row(prev).to_owned();
                    rows.row_mut(r).scaled_add(-dot, &p);
                }
            }
            norm = rows.row(r).dot(&rows.row(r)).sqrt();
        }
        rows.row_mut(r).mapv_inplace(|v| v / norm);
    }
}

/// PCAM layout (little-endian): `"PCAM" | version u32 | d u32 | k u32 |
/// mean f64[d] | components f64[k*d] row-major | variances f64[k] | total_variance f64`.
pub fn write_pcam<W: Write>(model: &PcaModel, sink: W) -> io::Result<u64> {
    let mut w = CountingWriter::new(sink);
    w.bytes(&PCAM_MAGIC)?;
    w.u32(PCAM_VERSION)?;
    w.u32(model.d() as u32)?;
    w.u32(model.k() as u32)?;
    for &v in &model.mean {
        w.f64(v)?;
    }
    for &v in &model.components {
        w.f64(v)?;
    }
    for &v in &model.variances {
        w.f64(v)?;
    }
    w.f64(model.total_variance)?;
    w.flush()?;
    Ok(w.written())
}

pub fn read_pcam<R: Read>(source: R) -> Result<PcaModel, PcaError> {
    let mut r = OffsetReader::new(source);
    let magic: [u8; 4] = r.array()?;
    if magic != PCAM_MAGIC {
        return Err(PcaError::Format {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != PCAM_VERSION {
        return Err(PcaError::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    if k > d {
        return Err(PcaError::Format {
            offset: 12,
            reason: format!("k = {k} exceeds d = {d}"),
        });
    }
    let mut read_vec = |len: usize| -> Result<Vec<f64>, PcaError> {
        let mut out = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            let offset = r.offset();
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(PcaError::Format {
                    offset,
                    reason: "non-finite value".into(),
                });
            }
            out.push(v);
        }
        Ok(out)
    };
    let mean = Array1::from(read_vec(d)?);
    let components = Array2::from_shape_vec((k, d), read_vec(k * d)?).expect("length read");
    let variances = Array1::from(read_vec(k)?);
    let total_variance = read_vec(1)?[0];
    PcaModel::new(mean, components, variances, total_variance)
}

pub fn write_pcam_file(model: &PcaModel, path: &Path) -> io::Result<u64> {
    write_pcam(model, BufWriter::new(File::create(path)?))
}

pub fn read_pcam_file(path: &Path) -> Result<PcaModel, PcaError> {
    read_pcam(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn line_y_equals_x() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [-3.0, -3.0]];
        let m = pca_fit(x.view(), 1).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((m.components()[[0, 0]] - h).abs() < 1e-12);
        assert!((m.components()[[0, 1]] - h).abs() < 1e-12);
        let ratio = m.explained_variance_ratio().unwrap();
        assert!((ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_covariance_four_to_one() {
        // columns: ±2 and ±1 patterns, uncorrelated, n = 4 -> sample variances 16/3 and 4/3
        let x = array![[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]];
        let m = pca_fit(x.view(), 2).unwrap();
        assert_eq!(m.components().row(0).to_vec(), vec![1.0, 0.0]);
        assert!((m.variances()[0] / m.variances()[1] - 4.0).abs() < 1e-12);
        let r = m.explained_variance_ratio().unwrap();
        assert!((r[0] - 0.8).abs() < 1e-12 && (r[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mean_row_maps_to_zero_and_empty_input() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 0.0, 1.0], [2.0, 2.0, 9.0]];
        let m = pca_fit(x.view(), 2).unwrap();
        let mean = m.mean().clone().insert_axis(Axis(0));
        assert!(m
            .transform(mean.view())
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
        let empty = Array2::<f64>::zeros((0, 3));
        assert_eq!(m.transform(empty.view()).unwrap().dim(), (0, 2));
        assert!(matches!(
            m.transform(Array2::zeros((1, 4)).view()),
            Err(PcaError::Dimension {
                expected: 3,
                found: 4
            })
        ));
    }

    #[test]
    fn argument_errors_and_degenerate_data() {
        let x = Array2::<f64>::ones((5, 3));
        assert!(matches!(pca_fit(x.view(), 4), Err(PcaError::Arg(_))));
        assert!(matches!(
            pca_fit(x.slice(s![..1, ..]), 1),
            Err(PcaError::Arg(_))
        ));
        let m = pca_fit(x.view(), 2).unwrap();
        assert!(matches!(
            m.explained_variance_ratio(),
            Err(PcaError::DegenerateData)
        ));
        assert_eq!(m.rank_warning().map(|w| w.numerical_rank), Some(0));
    }

    #[test]
    fn wide_matrix_uses_gram_route() {
        // n = 4 rows, d = 6 columns: centered rank is 3, so k = 4 needs basis completion
        let x = array![
            [1.0, 0.0, 2.0, 0.0, 1.0, 3.0],
            [0.0, 1.0, 0.0, 2.0, 1.0, 0.0],
            [2.0, 2.0, 1.0, 0.0, 0.0, 1.0],
            [0.0, 3.0, 1.0, 1.0, 2.0, 2.0]
        ];
        let m = pca_fit(x.view(), 4).unwrap();
        let gram = m.components().dot(&m.components().t());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
        assert!(m.variances()[3].abs() < 1e-10);
        assert!(m.rank_warning().is_some());
        let z = m.transform(x.view()).unwrap();
        let back = m.inverse_transform(z.view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pcam_round_trip_and_magic() {
        let x = array![[1.0, 2.0], [3.0, 1.0], [0.0, 5.0]];
        let m = pca_fit(x.view(), 2).unwrap();
        let mut buf = Vec::new();
        let len = write_pcam(&m, &mut buf).unwrap();
        assert_eq!(len as usize, buf.len());
        assert_eq!(read_pcam(&buf[..]).unwrap(), m);
        buf[0] = b'Q';
        assert!(matches!(
            read_pcam(&buf[..]),
            Err(PcaError::Format { offset: 0, .. })
        ));
    }
}
