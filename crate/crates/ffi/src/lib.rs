//! C ABI over the martlens core.
//!
//! Conventions:
//! - every fallible call returns an `int32_t` status, `ML_OK` on success;
//! - results come back through out-pointers;
//! - on failure `martlens_last_error()` describes the most recent error on
//!   the calling thread;
//! - handles are opaque and owned by the caller until passed to the matching
//!   `*_free`; strings returned by the library are freed with
//!   `martlens_string_free`.
//!
//! Panics never cross the boundary; they surface as `ML_ERR_PANIC`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use martlens::bundle::{self, sha256_hex, BundleError, ModelRegistryEntry, TrainOptions};
use martlens::data::{self, DataError, Dataset};
use martlens::explain::{self, ExplainError, ExplainerConfig};
use martlens::linreg::LinregError;

pub const ML_OK: i32 = 0;
/// A required pointer argument was null.
pub const ML_ERR_NULL: i32 = 1;
/// A string argument was not UTF-8, or a numeric argument was out of range.
pub const ML_ERR_INVALID_ARG: i32 = 2;
pub const ML_ERR_IO: i32 = 3;
/// Malformed CSV or JSON input.
pub const ML_ERR_PARSE: i32 = 4;
/// Feature names do not match the model.
pub const ML_ERR_SCHEMA: i32 = 5;
pub const ML_ERR_SINGULAR: i32 = 6;
/// A stored model's id does not match its content.
pub const ML_ERR_INTEGRITY: i32 = 7;
/// Any other domain error.
pub const ML_ERR_DOMAIN: i32 = 8;
pub const ML_ERR_PANIC: i32 = 9;

/// Opaque dataset handle.
pub struct MlDataset {
    inner: Dataset,
    csv_id: String,
}

/// Opaque trained-model handle.
pub struct MlModel {
    inner: ModelRegistryEntry,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(i32, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(ML_ERR_NULL, format!("{what} is null"))
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Io(_) => ML_ERR_IO,
            DataError::Parse { .. } | DataError::Csv(_) | DataError::Schema(_) => ML_ERR_PARSE,
            DataError::SchemaMismatch { .. } => ML_ERR_SCHEMA,
            _ => ML_ERR_DOMAIN,
        };
        Failure(code, e.to_string())
    }
}

impl From<LinregError> for Failure {
    fn from(e: LinregError) -> Self {
        let code = match e {
            LinregError::SingularMatrix { .. } => ML_ERR_SINGULAR,
            LinregError::SchemaMismatch { .. } => ML_ERR_SCHEMA,
            LinregError::InvalidInput(_) | LinregError::NonFiniteInput(..) => ML_ERR_INVALID_ARG,
            _ => ML_ERR_DOMAIN,
        };
        Failure(code, e.to_string())
    }
}

impl From<BundleError> for Failure {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Data(d) => d.into(),
            BundleError::Fit(f) => f.into(),
            BundleError::Io(_) => Failure(ML_ERR_IO, e.to_string()),
            BundleError::Json(_) => Failure(ML_ERR_PARSE, e.to_string()),
            BundleError::IdMismatch { .. } => Failure(ML_ERR_INTEGRITY, e.to_string()),
            BundleError::Discretize(_) => Failure(ML_ERR_DOMAIN, e.to_string()),
        }
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Fit(f) => f.into(),
            ExplainError::SchemaMismatch { .. } => Failure(ML_ERR_SCHEMA, e.to_string()),
            _ => Failure(ML_ERR_DOMAIN, e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(ML_ERR_IO, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ML_OK
        }
        Ok(Err(Failure(code, message))) => {
            set_last_error(&message);
            code
        }
        Err(_) => {
            set_last_error("panic inside martlens");
            ML_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ML_ERR_INVALID_ARG, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(ML_ERR_DOMAIN, "output contains a NUL byte".into()))
}

fn parse_instance(json: &str) -> Result<BTreeMap<String, f64>, Failure> {
    serde_json::from_str(json).map_err(|e| Failure(ML_ERR_PARSE, format!("instance: {e}")))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn martlens_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next martlens call on the same thread.
#[no_mangle]
pub extern "C" fn martlens_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a sales CSV whose target column is `target`.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    out: *mut *mut MlDataset,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let target = str_arg(target, "target")?;
        let text = std::fs::read_to_string(path)?;
        let inner = data::parse_csv(&text, target)?;
        *out = Box::into_raw(Box::new(MlDataset {
            inner,
            csv_id: sha256_hex(text.as_bytes()),
        }));
        Ok(())
    })
}

/// Generates the synthetic mart dataset.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_dataset_synthetic(n: usize, seed: u64, out: *mut *mut MlDataset) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if n == 0 {
            return Err(Failure(ML_ERR_INVALID_ARG, "n must be positive".into()));
        }
        let inner = data::gen_synthetic_mart(n, seed);
        let csv_id = sha256_hex(inner.to_csv_string().as_bytes());
        *out = Box::into_raw(Box::new(MlDataset { inner, csv_id }));
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn martlens_dataset_rows(dataset: *const MlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of feature columns, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn martlens_dataset_features(dataset: *const MlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n_features())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn martlens_dataset_free(dataset: *mut MlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains a price model: 80/20 split with seed 42, ridge `lambda`, 4 bins.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_train(dataset: *const MlDataset, lambda: f64, out: *mut *mut MlModel) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = ref_arg(dataset, "dataset")?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Failure(ML_ERR_INVALID_ARG, format!("lambda must be >= 0, got {lambda}")));
        }
        let options = TrainOptions {
            lambda,
            ..TrainOptions::default()
        };
        let outcome = bundle::train(&d.inner, &d.csv_id, &options)?;
        *out = Box::into_raw(Box::new(MlModel {
            inner: ModelRegistryEntry::new(outcome.artifact),
        }));
        Ok(())
    })
}

/// Loads a model bundle, verifying its content id.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_load(path: *const c_char, out: *mut *mut MlModel) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = ModelRegistryEntry::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MlModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_save(model: *const MlModel, path: *const c_char) -> i32 {
    guard(|| {
        let m = ref_arg(model, "model")?;
        m.inner.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Content id (64 lowercase hex chars); free with `martlens_string_free`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_id(model: *const MlModel, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(ref_arg(model, "model")?.inner.model_id.clone())?;
        Ok(())
    })
}

/// Number of model features, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_features(model: *const MlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.artifact.model.n_features())
}

/// Predicts from `len` values in the model's feature order.
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_predict(
    model: *const MlModel,
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        if values.is_null() && len > 0 {
            return Err(Failure::null("values"));
        }
        let values = if len == 0 { &[][..] } else { std::slice::from_raw_parts(values, len) };
        *out = m.inner.artifact.model.predict(values)?;
        Ok(())
    })
}

/// Predicts from a JSON object of feature values.
///
/// # Safety
/// `instance_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_predict_json(
    model: *const MlModel,
    instance_json: *const c_char,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let instance = parse_instance(str_arg(instance_json, "instance_json")?)?;
        *out = m.inner.artifact.model.predict_map(&instance)?;
        Ok(())
    })
}

/// Explains one prediction; writes the explanation as JSON. `num_samples`
/// and `num_features` of 0 select the defaults.
///
/// # Safety
/// `instance_json` must be a NUL-terminated string; `out_json` must be
/// writable. Free the result with `martlens_string_free`.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_explain_json(
    model: *const MlModel,
    instance_json: *const c_char,
    seed: u64,
    num_samples: usize,
    num_features: usize,
    out_json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        *out = ptr::null_mut();
        let m = ref_arg(model, "model")?;
        let instance = parse_instance(str_arg(instance_json, "instance_json")?)?;
        let defaults = ExplainerConfig::default();
        let cfg = ExplainerConfig {
            seed,
            num_samples: if num_samples == 0 { defaults.num_samples } else { num_samples },
            num_features: if num_features == 0 { defaults.num_features } else { num_features },
            ..defaults
        };
        let e = explain::explain_map(&m.inner.artifact.model, &m.inner.artifact.discretization, &instance, &cfg)?;
        let json = serde_json::to_string(&e).map_err(|err| Failure(ML_ERR_DOMAIN, err.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn martlens_model_free(model: *mut MlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn martlens_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
