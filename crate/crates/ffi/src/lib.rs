//! C ABI over the `frfnet` pipeline.
//!
//! Every fallible function returns an [`FrfnetStatus`]. On failure the
//! message is kept per thread and read back with [`frfnet_last_error`].
//! Handles are opaque, created by the `*_load` functions and released with
//! the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use frfnet::container;
use frfnet::damage::{self, BasisPair, Task, TaskModel};
use frfnet::linalg::Matrix;
use frfnet::pca;
use frfnet::signal::{ChannelKind, FrfMatrix};
use frfnet::Error;

/// Result codes shared by every function of the library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrfnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The caller's buffer is too small; the required length is reported.
    BufferTooSmall = 3,
    Io = 4,
    Corrupt = 5,
    BasisMismatch = 6,
    WrongTask = 7,
    Numerical = 8,
    Panic = 9,
}

/// A measured or simulated FRF matrix.
pub struct FrfnetFrf {
    inner: FrfMatrix,
}

/// An accelerance and strain PCA basis pair.
pub struct FrfnetBases {
    inner: BasisPair,
}

/// One trained task network.
pub struct FrfnetModel {
    inner: TaskModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> FrfnetStatus {
    match err {
        Error::Stage { source, .. } => status_of(source),
        Error::Io(_) => FrfnetStatus::Io,
        Error::Corrupt { .. } | Error::Json(_) | Error::Csv(_) => FrfnetStatus::Corrupt,
        Error::BasisMismatch { .. } => FrfnetStatus::BasisMismatch,
        Error::IndefiniteMass { .. }
        | Error::NoConvergence { .. }
        | Error::DeadBin { .. }
        | Error::Diverged { .. } => FrfnetStatus::Numerical,
        Error::Config(_) | Error::InvalidInput(_) | Error::Dimension(_) => {
            FrfnetStatus::InvalidArgument
        }
    }
}

struct Fail(FrfnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FrfnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            FrfnetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FrfnetStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FrfnetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FrfnetStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_slice(values: &[f64], out: *mut f64, cap: usize, out_len: *mut usize) -> Result<(), Fail> {
    if !out_len.is_null() {
        *out_len = values.len();
    }
    if cap < values.len() {
        return Err(Fail(
            FrfnetStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn fingerprint(bases: &BasisPair, frf: &FrfMatrix) -> Result<pca::FeatureVector, Fail> {
    Ok(bases.project(frf)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn frfnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn frfnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads an FRF container.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frfnet_frf_load(path: *const c_char, out: *mut *mut FrfnetFrf) -> FrfnetStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let inner = container::read_frf(&path)?;
        store(out, FrfnetFrf { inner })
    })
}

/// # Safety
/// `frf` must come from [`frfnet_frf_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn frfnet_frf_free(frf: *mut FrfnetFrf) {
    if !frf.is_null() {
        drop(Box::from_raw(frf));
    }
}

/// # Safety
/// `frf` must be a live handle or NULL (gives 0).
#[no_mangle]
pub unsafe extern "C" fn frfnet_frf_n_channels(frf: *const FrfnetFrf) -> usize {
    frf.as_ref().map_or(0, |f| f.inner.n_channels())
}

/// Number of frequency bins including DC.
///
/// # Safety
/// `frf` must be a live handle or NULL (gives 0).
#[no_mangle]
pub unsafe extern "C" fn frfnet_frf_n_bins(frf: *const FrfnetFrf) -> usize {
    frf.as_ref().map_or(0, |f| f.inner.n_bins())
}

/// Reads the accelerance and strain basis containers.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frfnet_bases_load(
    accel_path: *const c_char,
    strain_path: *const c_char,
    out: *mut *mut FrfnetBases,
) -> FrfnetStatus {
    guard(|| {
        let accel = container::read_basis(&path_arg(accel_path, "accel_path")?)?;
        let strain = container::read_basis(&path_arg(strain_path, "strain_path")?)?;
        if accel.block != ChannelKind::Accelerance || strain.block != ChannelKind::Strain {
            return Err(Fail(
                FrfnetStatus::InvalidArgument,
                "expected an accelerance basis and a strain basis, in that order".into(),
            ));
        }
        store(out, FrfnetBases {
            inner: BasisPair { accel, strain },
        })
    })
}

/// # Safety
/// `bases` must come from [`frfnet_bases_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn frfnet_bases_free(bases: *mut FrfnetBases) {
    if !bases.is_null() {
        drop(Box::from_raw(bases));
    }
}

/// # Safety
/// `bases` must be a live handle or NULL (gives 0).
#[no_mangle]
pub unsafe extern "C" fn frfnet_bases_fingerprint_len(bases: *const FrfnetBases) -> usize {
    bases.as_ref().map_or(0, |b| b.inner.fingerprint_len())
}

/// Projects `frf` onto `bases`. `out_len` receives the fingerprint length
/// even when `capacity` is too small.
///
/// # Safety
/// Handles must be live; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn frfnet_fingerprint(
    bases: *const FrfnetBases,
    frf: *const FrfnetFrf,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FrfnetStatus {
    guard(|| {
        let bases = handle(bases, "bases")?;
        let frf = handle(frf, "frf")?;
        let fv = fingerprint(&bases.inner, &frf.inner)?;
        write_slice(&fv.values, out, capacity, out_len)
    })
}

/// Reads a task model container.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frfnet_model_load(path: *const c_char, out: *mut *mut FrfnetModel) -> FrfnetStatus {
    guard(|| {
        let inner = container::read_model(&path_arg(path, "path")?)?;
        store(out, FrfnetModel { inner })
    })
}

/// # Safety
/// `model` must come from [`frfnet_model_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn frfnet_model_free(model: *mut FrfnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// 1 for a localization model, 0 for a severity model or NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn frfnet_model_is_localizer(model: *const FrfnetModel) -> i32 {
    model.as_ref().map_or(0, |m| i32::from(m.inner.task == Task::Localize))
}

/// Output width of the model: 34 for localization, 1 for severity.
///
/// # Safety
/// `model` must be a live handle or NULL (gives 0).
#[no_mangle]
pub unsafe extern "C" fn frfnet_model_output_dim(model: *const FrfnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.network.output_dim())
}

/// Rivet scores and threshold decisions for one FRF. `scores` and `flags`
/// must each hold `capacity` entries; `out_len` receives the rivet count.
///
/// # Safety
/// Handles must be live; buffers must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn frfnet_localize(
    model: *const FrfnetModel,
    bases: *const FrfnetBases,
    frf: *const FrfnetFrf,
    threshold: f64,
    scores: *mut f64,
    flags: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> FrfnetStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let bases = handle(bases, "bases")?;
        let frf = handle(frf, "frf")?;
        if model.inner.task != Task::Localize {
            return Err(Fail(
                FrfnetStatus::WrongTask,
                format!("{} model used for localization", model.inner.task),
            ));
        }
        let fv = fingerprint(&bases.inner, &frf.inner)?;
        let rv = damage::localize(&fv, &model.inner, threshold)?;
        write_slice(&rv.scores, scores, capacity, out_len)?;
        if flags.is_null() {
            return Err(null("flags"));
        }
        for (i, &b) in rv.binary.iter().enumerate() {
            *flags.add(i) = u8::from(b);
        }
        Ok(())
    })
}

/// Severity in physical units (mm, stiffness-loss fraction or kg), clamped
/// at zero, for the damage kind the model was trained on.
///
/// # Safety
/// Handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frfnet_severity(
    model: *const FrfnetModel,
    bases: *const FrfnetBases,
    frf: *const FrfnetFrf,
    value: *mut f64,
) -> FrfnetStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let bases = handle(bases, "bases")?;
        let frf = handle(frf, "frf")?;
        let Task::Severity(kind) = model.inner.task else {
            return Err(Fail(
                FrfnetStatus::WrongTask,
                "localization model used for severity".into(),
            ));
        };
        if value.is_null() {
            return Err(null("value"));
        }
        let fv = fingerprint(&bases.inner, &frf.inner)?;
        *value = damage::estimate_severity(&fv, &model.inner, kind)?.value;
        Ok(())
    })
}

/// Eigen-decomposition of a symmetric `n x n` row-major matrix. Eigenvalues
/// are written in descending order; `vectors` receives the eigenvectors as
/// columns, row-major.
///
/// # Safety
/// `a` and `vectors` must hold `n * n` doubles, `values` must hold `n`.
#[no_mangle]
pub unsafe extern "C" fn frfnet_eig_sym(
    n: usize,
    a: *const f64,
    values: *mut f64,
    vectors: *mut f64,
) -> FrfnetStatus {
    guard(|| {
        if a.is_null() || values.is_null() || vectors.is_null() {
            return Err(null("matrix or output buffer"));
        }
        if n == 0 {
            return Err(Fail(FrfnetStatus::InvalidArgument, "n must be positive".into()));
        }
        let data = std::slice::from_raw_parts(a, n * n).to_vec();
        let eig = pca::eig_sym(&Matrix::from_vec(n, n, data)?)?;
        ptr::copy_nonoverlapping(eig.values.as_ptr(), values, n);
        ptr::copy_nonoverlapping(eig.vectors.as_slice().as_ptr(), vectors, n * n);
        Ok(())
    })
}
