//! C ABI for the jvcqma library.
//!
//! Conventions:
//! - Handles (`JvcqmaDataset`, `JvcqmaModel`) are opaque; create them with
//!   the constructors here and release them with the matching `_free`.
//! - Every fallible call returns a `JvcqmaStatus` code; on failure a
//!   thread-local message is readable through `jvcqma_last_error_message`
//!   until the next failing call on the same thread.
//! - Strings returned by the library are NUL-terminated UTF-8 owned by the
//!   callee side; release them with `jvcqma_string_free`.

use jvcqma::average::{fit_averaged, predict_averaged, AveragedModel, WeightScheme};
use jvcqma::bandwidth::plan_bandwidths;
use jvcqma::dataset::Dataset;
use jvcqma::linalg::Mat;
use jvcqma::math::{check_loss, quantile_adjust_factor, KernelKind, QuantileLevel};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvcqmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8 = 3,
    SolveFailed = 4,
    Serialization = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into();
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Message describing the most recent failure on this thread, or NULL.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jvcqma_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Opaque dataset handle.
pub struct JvcqmaDataset {
    inner: Dataset,
}

/// Opaque fitted-model handle; owns a copy of its training data so
/// prediction is self-contained.
pub struct JvcqmaModel {
    model: AveragedModel,
    kernel: KernelKind,
    train: Dataset,
}

fn catch<F: FnOnce() -> JvcqmaStatus>(f: F) -> JvcqmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic crossed the FFI boundary");
            JvcqmaStatus::Panic
        }
    }
}

/// Build a dataset from row-major covariates.
///
/// `y`: n responses; `x`: n*num_cols row-major covariates;
/// `continuous`/`discrete`: 0-based column indices partitioning the
/// covariates.
///
/// # Safety
/// All pointers must be valid for the stated lengths; `out` must be a valid
/// location to store the handle.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_dataset_new(
    y: *const f64,
    n: usize,
    x: *const f64,
    num_cols: usize,
    continuous: *const usize,
    n_continuous: usize,
    discrete: *const usize,
    n_discrete: usize,
    out: *mut *mut JvcqmaDataset,
) -> JvcqmaStatus {
    if y.is_null() || x.is_null() || continuous.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    if n_discrete > 0 && discrete.is_null() {
        set_error("null discrete pointer with nonzero length");
        return JvcqmaStatus::NullPointer;
    }
    let y = std::slice::from_raw_parts(y, n).to_vec();
    let x = std::slice::from_raw_parts(x, n * num_cols).to_vec();
    let cont = std::slice::from_raw_parts(continuous, n_continuous).to_vec();
    let disc = if n_discrete == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(discrete, n_discrete).to_vec()
    };
    catch(|| match Dataset::new(y, Mat::from_vec(n, num_cols, x), cont, disc) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(JvcqmaDataset { inner }));
            JvcqmaStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            JvcqmaStatus::InvalidArgument
        }
    })
}

/// Load a dataset from a CSV file with a JSON column schema.
///
/// # Safety
/// `path` and `schema_json` must be NUL-terminated strings; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_dataset_from_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut JvcqmaDataset,
) -> JvcqmaStatus {
    if path.is_null() || schema_json.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not UTF-8");
        return JvcqmaStatus::Utf8;
    };
    let Ok(schema_text) = CStr::from_ptr(schema_json).to_str() else {
        set_error("schema is not UTF-8");
        return JvcqmaStatus::Utf8;
    };
    catch(|| {
        let schema: Vec<jvcqma::data::ColumnSchema> = match serde_json::from_str(schema_text) {
            Ok(s) => s,
            Err(e) => {
                set_error(format!("schema: {e}"));
                return JvcqmaStatus::Serialization;
            }
        };
        match jvcqma::data::load_csv(std::path::Path::new(path), &schema) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(JvcqmaDataset { inner }));
                JvcqmaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                JvcqmaStatus::InvalidArgument
            }
        }
    })
}

/// # Safety
/// `handle` must come from a jvcqma constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_dataset_free(handle: *mut JvcqmaDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_dataset_rows(handle: *const JvcqmaDataset) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { (*handle).inner.n() }
}

/// # Safety
/// `handle` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_dataset_cols(handle: *const JvcqmaDataset) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { (*handle).inner.num_covariates() }
}

/// Weight scheme selector for `jvcqma_fit`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvcqmaScheme {
    Loocv = 0,
    Equal = 1,
    SmoothedBic = 2,
}

/// Kernel selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvcqmaKernel {
    Gaussian = 0,
    Epanechnikov = 1,
}

/// Fit averaging weights on a dataset at one quantile level. Bandwidths are
/// selected by leave-one-out least-squares cross-validation on the default
/// grid and adjusted for the quantile level.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_fit(
    dataset: *const JvcqmaDataset,
    tau: f64,
    scheme: JvcqmaScheme,
    kernel: JvcqmaKernel,
    out: *mut *mut JvcqmaModel,
) -> JvcqmaStatus {
    if dataset.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let data = &(*dataset).inner;
    catch(|| {
        let tau = match QuantileLevel::new(tau) {
            Ok(t) => t,
            Err(e) => {
                set_error(e.to_string());
                return JvcqmaStatus::InvalidArgument;
            }
        };
        let kernel = match kernel {
            JvcqmaKernel::Gaussian => KernelKind::Gaussian,
            JvcqmaKernel::Epanechnikov => KernelKind::Epanechnikov,
        };
        let scheme = match scheme {
            JvcqmaScheme::Loocv => WeightScheme::Loocv,
            JvcqmaScheme::Equal => WeightScheme::Equal,
            JvcqmaScheme::SmoothedBic => WeightScheme::SmoothedBic,
        };
        let result = plan_bandwidths(data, tau, None, kernel)
            .and_then(|plan| fit_averaged(data, tau, scheme, &plan, kernel));
        match result {
            Ok(model) => {
                *out = Box::into_raw(Box::new(JvcqmaModel {
                    model,
                    kernel,
                    train: data.clone(),
                }));
                JvcqmaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                JvcqmaStatus::SolveFailed
            }
        }
    })
}

/// # Safety
/// `handle` must come from `jvcqma_fit`/`jvcqma_model_from_json` and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_model_free(handle: *mut JvcqmaModel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_model_num_candidates(handle: *const JvcqmaModel) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { (*handle).model.weights.len() }
}

/// Copy the averaging weights into `out` (capacity `len`, must be at least
/// the candidate count).
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_model_weights(
    handle: *const JvcqmaModel,
    out: *mut f64,
    len: usize,
) -> JvcqmaStatus {
    if handle.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let w = (*handle).model.weights.as_slice();
    if len < w.len() {
        set_error(format!("need capacity {}, got {len}", w.len()));
        return JvcqmaStatus::InvalidArgument;
    }
    std::ptr::copy_nonoverlapping(w.as_ptr(), out, w.len());
    JvcqmaStatus::Ok
}

/// Predict conditional quantiles for `n_rows` query rows (row-major, same
/// covariate layout as the training data). Failed rows come back as NaN.
///
/// # Safety
/// `queries` must hold n_rows * num_covariates doubles; `out` must hold
/// n_rows writable doubles.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_predict(
    handle: *const JvcqmaModel,
    queries: *const f64,
    n_rows: usize,
    out: *mut f64,
) -> JvcqmaStatus {
    if handle.is_null() || queries.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let m = &*handle;
    let cols = m.train.num_covariates();
    let q = std::slice::from_raw_parts(queries, n_rows * cols).to_vec();
    catch(|| {
        match predict_averaged(&m.model, &m.train, &Mat::from_vec(n_rows, cols, q), m.kernel) {
            Ok(preds) => {
                std::ptr::copy_nonoverlapping(preds.as_ptr(), out, n_rows);
                JvcqmaStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                JvcqmaStatus::SolveFailed
            }
        }
    })
}

/// Serialize a model (weights, bandwidths, quantile level, scheme, column
/// map) to JSON. Training data is not embedded.
///
/// # Safety
/// `out` must be valid; free the returned string with `jvcqma_string_free`.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_model_to_json(
    handle: *const JvcqmaModel,
    out: *mut *mut c_char,
) -> JvcqmaStatus {
    if handle.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    match serde_json::to_string(&(*handle).model) {
        Ok(json) => match CString::new(json) {
            Ok(c) => {
                *out = c.into_raw();
                JvcqmaStatus::Ok
            }
            Err(_) => {
                set_error("serialized JSON contained NUL");
                JvcqmaStatus::Serialization
            }
        },
        Err(e) => {
            set_error(e.to_string());
            JvcqmaStatus::Serialization
        }
    }
}

/// Rebuild a model handle from `jvcqma_model_to_json` output plus the
/// training dataset it was fit on.
///
/// # Safety
/// `json` must be NUL-terminated; `dataset` live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_model_from_json(
    json: *const c_char,
    dataset: *const JvcqmaDataset,
    kernel: JvcqmaKernel,
    out: *mut *mut JvcqmaModel,
) -> JvcqmaStatus {
    if json.is_null() || dataset.is_null() || out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        set_error("json is not UTF-8");
        return JvcqmaStatus::Utf8;
    };
    match serde_json::from_str::<AveragedModel>(text) {
        Ok(model) => {
            let kernel = match kernel {
                JvcqmaKernel::Gaussian => KernelKind::Gaussian,
                JvcqmaKernel::Epanechnikov => KernelKind::Epanechnikov,
            };
            *out = Box::into_raw(Box::new(JvcqmaModel {
                model,
                kernel,
                train: (*dataset).inner.clone(),
            }));
            JvcqmaStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            JvcqmaStatus::Serialization
        }
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Check loss rho_tau(u); returns InvalidArgument for tau outside (0,1) or
/// non-finite u.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_check_loss(tau: f64, u: f64, out: *mut f64) -> JvcqmaStatus {
    if out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let Ok(t) = QuantileLevel::new(tau) else {
        set_error(format!("invalid quantile level {tau}"));
        return JvcqmaStatus::InvalidArgument;
    };
    if !u.is_finite() {
        set_error("u must be finite");
        return JvcqmaStatus::InvalidArgument;
    }
    *out = check_loss(t, u);
    JvcqmaStatus::Ok
}

/// Quantile bandwidth adjustment factor {tau(1-tau)/phi^2(Phi^-1(tau))}^(1/5).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jvcqma_quantile_adjust_factor(
    tau: f64,
    out: *mut f64,
) -> JvcqmaStatus {
    if out.is_null() {
        set_error("null pointer argument");
        return JvcqmaStatus::NullPointer;
    }
    let Ok(t) = QuantileLevel::new(tau) else {
        set_error(format!("invalid quantile level {tau}"));
        return JvcqmaStatus::InvalidArgument;
    };
    *out = quantile_adjust_factor(t);
    JvcqmaStatus::Ok
}
