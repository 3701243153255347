//! C ABI over the `ensemblekit` library.
//!
//! Every function returns an [`EkStatus`]. On failure a message is available
//! from [`ek_last_error_message`] on the same thread until the next call.
//! Handles are opaque and must be released with their `*_free` function.
//! Matrices are dense, row-major and contiguous.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ensemblekit::dataset::{RgbImage, IMAGE_BYTES};
use ensemblekit::fcnn::{self, FcnnError, FcnnModel};
use ensemblekit::features::{read_fset_file, write_fset_file, FeatureSet, FsetError};
use ensemblekit::hog::{hog_features, HogConfig};
use ensemblekit::pca::{self, PcaError, PcaModel};
use ensemblekit::ClassLabel;
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    Numerical = 6,
    Panic = 7,
}

/// Loaded FSET feature matrix with labels.
pub struct EkFeatureSet {
    inner: FeatureSet,
}

/// Fitted PCA projection.
pub struct EkPcaModel {
    inner: PcaModel,
}

/// Trained classifier.
pub struct EkFcnnModel {
    inner: FcnnModel,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkHogConfig {
    pub orientations: u32,
    pub cell_size: u32,
    pub block_size: u32,
    pub block_stride: u32,
    pub clip: f64,
}

impl From<EkHogConfig> for HogConfig {
    fn from(c: EkHogConfig) -> Self {
        HogConfig {
            orientations: c.orientations as usize,
            cell_size: c.cell_size as usize,
            block_size: c.block_size as usize,
            block_stride: c.block_stride as usize,
            clip: c.clip,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EkStatus, String);

impl From<FsetError> for Failure {
    fn from(e: FsetError) -> Self {
        let status = match e {
            FsetError::Io(_) => EkStatus::Io,
            _ => EkStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<PcaError> for Failure {
    fn from(e: PcaError) -> Self {
        let status = match e {
            PcaError::Io(_) => EkStatus::Io,
            PcaError::Format { .. } => EkStatus::Format,
            PcaError::Dimension { .. } => EkStatus::Dimension,
            PcaError::Decomposition(_) | PcaError::DegenerateData => EkStatus::Numerical,
            _ => EkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<FcnnError> for Failure {
    fn from(e: FcnnError) -> Self {
        let status = match e {
            FcnnError::Io(_) => EkStatus::Io,
            FcnnError::Format { .. } => EkStatus::Format,
            FcnnError::Dimension { .. } => EkStatus::Dimension,
            FcnnError::NonFiniteLoss { .. } => EkStatus::Numerical,
            _ => EkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EkStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EkStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EkStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EkStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(EkStatus::InvalidArgument, message.into())
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(path) }
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from the matching constructor.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| invalid("element count overflows"))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { out.write(value) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ek_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the last failed call on this thread, or null.
///
/// The pointer stays valid until the next `ek_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ek_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads an FSET file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_read(
    path: *const c_char,
    out: *mut *mut EkFeatureSet,
) -> EkStatus {
    guard(|| {
        let path = unsafe { path_arg(path)? };
        let set = read_fset_file(&path)?;
        let boxed = Box::into_raw(Box::new(EkFeatureSet { inner: set }));
        unsafe { write_out(out, boxed, "out") }.inspect_err(|_| {
            // SAFETY: just allocated above and not shared.
            drop(unsafe { Box::from_raw(boxed) });
        })
    })
}

/// Builds a feature set from `n` rows of `d` values and `n` labels in 0..9.
///
/// # Safety
/// `name` must be NUL-terminated; `values` holds `n * d` floats and `labels` `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_from_rows(
    name: *const c_char,
    values: *const f32,
    labels: *const u8,
    n: u64,
    d: u32,
    out: *mut *mut EkFeatureSet,
) -> EkStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let name = unsafe { CStr::from_ptr(name) }
            .to_str()
            .map_err(|_| invalid("name is not valid UTF-8"))?;
        let (n, d) = (n as usize, d as usize);
        let len = checked_len(n, d)?;
        let values = unsafe { slice_in(values, len, "values")? }.to_vec();
        let labels = unsafe { slice_in(labels, n, "labels")? }
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                ClassLabel::new(l).ok_or_else(|| invalid(format!("label {l} at row {i}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let set =
            FeatureSet::from_rows(name, d, values, labels).map_err(|e| invalid(e.to_string()))?;
        let boxed = Box::into_raw(Box::new(EkFeatureSet { inner: set }));
        unsafe { write_out(out, boxed, "out") }.inspect_err(|_| {
            // SAFETY: just allocated above and not shared.
            drop(unsafe { Box::from_raw(boxed) });
        })
    })
}

/// Writes a feature set as an FSET file.
///
/// # Safety
/// `set` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_write(set: *const EkFeatureSet, path: *const c_char) -> EkStatus {
    guard(|| {
        let set = unsafe { handle(set, "set")? };
        let path = unsafe { path_arg(path)? };
        write_fset_file(&set.inner, &path)
            .map(|_| ())
            .map_err(|e| Failure(EkStatus::Io, e.to_string()))
    })
}

/// Number of rows and columns.
///
/// # Safety
/// `set` must be a live handle; `rows` and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_shape(
    set: *const EkFeatureSet,
    rows: *mut u64,
    dim: *mut u32,
) -> EkStatus {
    guard(|| {
        let set = unsafe { handle(set, "set")? };
        unsafe {
            write_out(rows, set.inner.n() as u64, "rows")?;
            write_out(dim, set.inner.d() as u32, "dim")
        }
    })
}

/// Copies row `i` into `out`, which holds `len` floats (at least the dimension).
///
/// # Safety
/// `set` must be a live handle and `out` hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_row(
    set: *const EkFeatureSet,
    i: u64,
    out: *mut f32,
    len: usize,
) -> EkStatus {
    guard(|| {
        let set = unsafe { handle(set, "set")? };
        let i = i as usize;
        if i >= set.inner.n() {
            return Err(invalid(format!(
                "row {i} out of range ({} rows)",
                set.inner.n()
            )));
        }
        let d = set.inner.d();
        if len < d {
            return Err(Failure(
                EkStatus::Dimension,
                format!("buffer holds {len} values, row has {d}"),
            ));
        }
        let dst = unsafe { slice_out(out, d, "out")? };
        for (dst, src) in dst.iter_mut().zip(set.inner.row(i)) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Class index (0..9) of row `i`.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_label(set: *const EkFeatureSet, i: u64, out: *mut u8) -> EkStatus {
    guard(|| {
        let set = unsafe { handle(set, "set")? };
        let label = set
            .inner
            .labels()
            .get(i as usize)
            .ok_or_else(|| invalid(format!("row {i} out of range")))?;
        unsafe { write_out(out, label.index() as u8, "out") }
    })
}

/// Releases a feature set. Null is ignored.
///
/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ek_fset_free(set: *mut EkFeatureSet) {
    if !set.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(set) });
    }
}

/// 9 orientations, 8-pixel cells, 2x2 blocks with stride 1, clip 0.2.
#[no_mangle]
pub extern "C" fn ek_hog_default_config() -> EkHogConfig {
    let d = HogConfig::default();
    EkHogConfig {
        orientations: d.orientations as u32,
        cell_size: d.cell_size as u32,
        block_size: d.block_size as u32,
        block_stride: d.block_stride as u32,
        clip: d.clip,
    }
}

/// Descriptor length for `config`.
///
/// # Safety
/// `config` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_hog_dimension(config: *const EkHogConfig, out: *mut u64) -> EkStatus {
    guard(|| {
        let cfg: HogConfig = (*unsafe { handle(config, "config")? }).into();
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        unsafe { write_out(out, cfg.dimension() as u64, "out") }
    })
}

/// HOG descriptor of one 32x32 image given as 3072 planar RGB bytes.
///
/// # Safety
/// `image` holds 3072 bytes; `out` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ek_hog_compute(
    config: *const EkHogConfig,
    image: *const u8,
    out: *mut f64,
    len: usize,
) -> EkStatus {
    guard(|| {
        let cfg: HogConfig = (*unsafe { handle(config, "config")? }).into();
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        let bytes = unsafe { slice_in(image, IMAGE_BYTES, "image")? };
        let img = RgbImage::from_bytes(bytes).map_err(|e| invalid(e.to_string()))?;
        let dim = cfg.dimension();
        if len < dim {
            return Err(Failure(
                EkStatus::Dimension,
                format!("buffer holds {len} values, descriptor has {dim}"),
            ));
        }
        let features = hog_features(&img, &cfg).map_err(|e| invalid(e.to_string()))?;
        unsafe { slice_out(out, dim, "out")? }.copy_from_slice(&features);
        Ok(())
    })
}

/// Loads a PCA model file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_pca_load(path: *const c_char, out: *mut *mut EkPcaModel) -> EkStatus {
    guard(|| {
        let path = unsafe { path_arg(path)? };
        let model = pca::read_pcam_file(&path)?;
        let boxed = Box::into_raw(Box::new(EkPcaModel { inner: model }));
        unsafe { write_out(out, boxed, "out") }.inspect_err(|_| {
            // SAFETY: just allocated above and not shared.
            drop(unsafe { Box::from_raw(boxed) });
        })
    })
}

/// Input dimension `d` and number of components `k`.
///
/// # Safety
/// `model` must be a live handle; `d` and `k` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_pca_dims(
    model: *const EkPcaModel,
    d: *mut u32,
    k: *mut u32,
) -> EkStatus {
    guard(|| {
        let m = unsafe { handle(model, "model")? };
        unsafe {
            write_out(d, m.inner.d() as u32, "d")?;
            write_out(k, m.inner.k() as u32, "k")
        }
    })
}

/// Projects `n` rows of `d` doubles into `out`, which receives `n * k` doubles.
///
/// # Safety
/// `x` holds `n * d` doubles and `out` `n * k`.
#[no_mangle]
pub unsafe extern "C" fn ek_pca_transform(
    model: *const EkPcaModel,
    x: *const f64,
    n: u64,
    out: *mut f64,
) -> EkStatus {
    guard(|| {
        let m = unsafe { handle(model, "model")? };
        let (n, d, k) = (n as usize, m.inner.d(), m.inner.k());
        let input = unsafe { slice_in(x, checked_len(n, d)?, "x")? };
        let view = ArrayView2::from_shape((n, d), input).map_err(|e| invalid(e.to_string()))?;
        let z = m.inner.transform(view)?;
        let dst = unsafe { slice_out(out, checked_len(n, k)?, "out")? };
        for (dst, src) in dst.iter_mut().zip(z.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Releases a PCA model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ek_pca_free(model: *mut EkPcaModel) {
    if !model.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Loads a trained classifier file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_fcnn_load(path: *const c_char, out: *mut *mut EkFcnnModel) -> EkStatus {
    guard(|| {
        let path = unsafe { path_arg(path)? };
        let model = fcnn::read_model_file(&path)?;
        let boxed = Box::into_raw(Box::new(EkFcnnModel { inner: model }));
        unsafe { write_out(out, boxed, "out") }.inspect_err(|_| {
            // SAFETY: just allocated above and not shared.
            drop(unsafe { Box::from_raw(boxed) });
        })
    })
}

/// Expected input width and number of classes.
///
/// # Safety
/// `model` must be a live handle; `input_dim` and `classes` writable.
#[no_mangle]
pub unsafe extern "C" fn ek_fcnn_dims(
    model: *const EkFcnnModel,
    input_dim: *mut u32,
    classes: *mut u32,
) -> EkStatus {
    guard(|| {
        let m = unsafe { handle(model, "model")? };
        let cfg = m.inner.config();
        unsafe {
            write_out(input_dim, cfg.input_dim as u32, "input_dim")?;
            write_out(classes, cfg.classes as u32, "classes")
        }
    })
}

/// Class probabilities for `n` rows. `probs` receives `n * classes` doubles;
/// `labels`, if not null, receives the argmax class of each row.
///
/// # Safety
/// `x` holds `n * input_dim` doubles, `probs` `n * classes`, `labels` `n` entries or null.
#[no_mangle]
pub unsafe extern "C" fn ek_fcnn_predict(
    model: *const EkFcnnModel,
    x: *const f64,
    n: u64,
    probs: *mut f64,
    labels: *mut u32,
) -> EkStatus {
    guard(|| {
        let m = unsafe { handle(model, "model")? };
        let (n, d, c) = (
            n as usize,
            m.inner.config().input_dim,
            m.inner.config().classes,
        );
        let input = unsafe { slice_in(x, checked_len(n, d)?, "x")? };
        let view = ArrayView2::from_shape((n, d), input).map_err(|e| invalid(e.to_string()))?;
        let p = m.inner.predict_proba(view)?;
        let dst = unsafe { slice_out(probs, checked_len(n, c)?, "probs")? };
        for (dst, src) in dst.iter_mut().zip(p.iter()) {
            *dst = *src;
        }
        if !labels.is_null() {
            let dst = unsafe { slice_out(labels, n, "labels")? };
            for (dst, row) in dst.iter_mut().zip(p.rows()) {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                *dst = best as u32;
            }
        }
        Ok(())
    })
}

/// Releases a classifier. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ek_fcnn_free(model: *mut EkFcnnModel) {
    if !model.is_null() {
        // SAFETY: handle was produced by Box::into_raw.
        drop(unsafe { Box::from_raw(model) });
    }
}
