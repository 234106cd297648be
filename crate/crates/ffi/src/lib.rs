//! C interface over the hankel-dmd core.
//!
//! Conventions:
//! - Models are opaque handles created by `hdmd_identify` or
//!   `hdmd_model_load` and released with `hdmd_model_free`.
//! - Every fallible call returns an [`HdmdStatus`]; on failure the message is
//!   retrievable with `hdmd_last_error` (per thread).
//! - Matrices cross the boundary as dense row-major `double` buffers with
//!   explicit dimensions; channel-major means one row per sensor.
//! - No call takes ownership of caller memory and no returned pointer may be
//!   freed by the caller except through `hdmd_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hankel_dmd::error::{Error, ErrorCategory};
use hankel_dmd::koopman::{self, KoopmanModel, ModeLabel, ModeShapes};
use hankel_dmd::preprocess::{self, FilterSpec};
use hankel_dmd::sensing::{self, RollingConfig, SensorMask};
use hankel_dmd::timeseries::TimeSeriesMatrix;
use hankel_dmd::{embedding, model_io};
use ndarray::Array2;

/// Call outcome. Nonzero values group failures the same way the CLI's exit
/// codes do, with FFI-specific conditions above them.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum HdmdStatus {
    Ok = 0,
    /// Invalid parameter or configuration.
    Usage = 2,
    /// Malformed or inconsistent input data.
    Data = 3,
    /// Numerical failure while fitting or solving.
    Numerical = 4,
    /// A required pointer argument was null.
    NullArgument = 5,
    /// Internal invariant violation caught at the boundary.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn fail(e: &Error) -> HdmdStatus {
    set_error(&e.to_string());
    match e.category() {
        ErrorCategory::Usage => HdmdStatus::Usage,
        ErrorCategory::Data => HdmdStatus::Data,
        ErrorCategory::Numerical => HdmdStatus::Numerical,
    }
}

/// Runs `f` with panics converted to `HdmdStatus::Panic`.
fn guard<F: FnOnce() -> HdmdStatus>(f: F) -> HdmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            HdmdStatus::Panic
        }
    }
}

fn null_arg(name: &str) -> HdmdStatus {
    set_error(&format!("null argument: {name}"));
    HdmdStatus::NullArgument
}

/// Opaque fitted-model handle.
pub struct HdmdModel {
    inner: KoopmanModel,
}

/// Copies the most recent error message for the calling thread into `buf`
/// (NUL-terminated, truncated to `cap`) and returns the full message length
/// in bytes, excluding the terminator. `buf` may be null to query the length.
#[no_mangle]
pub unsafe extern "C" fn hdmd_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hdmd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn series_from_raw(
    data: *const f64,
    p: usize,
    n: usize,
    dt: f64,
) -> Result<TimeSeriesMatrix, Error> {
    let slice = std::slice::from_raw_parts(data, p * n);
    let values = Array2::from_shape_vec((p, n), slice.to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    TimeSeriesMatrix::new(values, dt)
}

/// Fits a Koopman model to channel-major data (`p` sensors by `n` samples,
/// row-major) sampled every `dt` seconds.
///
/// The data is bandpass filtered (Butterworth order `filter_order`, passband
/// `low_hz..high_hz`, zero-phase; order 0 disables filtering), z-scored per
/// channel, delay-embedded `delay_count` deep, and truncated to `rank`
/// singular directions. `exact_modes` selects exact instead of projected
/// mode shapes. On success `*out` owns the new handle.
#[no_mangle]
pub unsafe extern "C" fn hdmd_identify(
    data: *const f64,
    p: usize,
    n: usize,
    dt: f64,
    delay_count: usize,
    rank: usize,
    filter_order: usize,
    low_hz: f64,
    high_hz: f64,
    exact_modes: bool,
    out: *mut *mut HdmdModel,
) -> HdmdStatus {
    guard(|| {
        if data.is_null() {
            return null_arg("data");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let filter = FilterSpec {
            order: filter_order,
            low_hz,
            high_hz,
            zero_phase: true,
        };
        let result = (|| -> Result<KoopmanModel, Error> {
            let raw = series_from_raw(data, p, n, dt)?;
            let filtered = preprocess::bandpass_zero_phase(&raw, &filter)?;
            let norm = preprocess::zscore_fit(&filtered)?;
            let x = preprocess::zscore_apply(&filtered, &norm)?;
            let h = embedding::build_hankel(&x, delay_count)?;
            let shapes = if exact_modes { ModeShapes::Exact } else { ModeShapes::Projected };
            let mut model = koopman::fit_with(&h, rank, shapes)?;
            model.norm = norm;
            model.filter = filter;
            model.channel_names = raw.channel_names;
            Ok(model)
        })();
        match result {
            Ok(model) => {
                *out = Box::into_raw(Box::new(HdmdModel { inner: model }));
                HdmdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

unsafe fn path_from(ptr: *const c_char, name: &str) -> Result<&'static Path, HdmdStatus> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(&format!("{name} is not valid UTF-8"));
            Err(HdmdStatus::Usage)
        }
    }
}

/// Loads a model container written by `hdmd_model_save` or the CLI.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_load(
    path: *const c_char,
    out: *mut *mut HdmdModel,
) -> HdmdStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let path = match path_from(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match model_io::load_model(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(HdmdModel { inner: model }));
                HdmdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Writes the model container to `path` (JSON, deterministic bytes).
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_save(
    model: *const HdmdModel,
    path: *const c_char,
) -> HdmdStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return null_arg("model");
        };
        let path = match path_from(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match model_io::save_model(path, &model.inner) {
            Ok(()) => HdmdStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Releases a model handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_free(model: *mut HdmdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of retained modes, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_rank(model: *const HdmdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.r)
}

/// Number of physical sensors, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_sensor_count(model: *const HdmdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.p)
}

/// Delay-embedding depth, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_delay_count(model: *const HdmdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d)
}

/// Sample interval in seconds, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_dt(model: *const HdmdModel) -> f64 {
    model.as_ref().map_or(0.0, |m| m.inner.dt)
}

/// Copies the continuous-time eigenvalues into `out_re`/`out_im` (each of
/// capacity `cap`; either may be null to skip) and returns the mode count.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_eigenvalues(
    model: *const HdmdModel,
    out_re: *mut f64,
    out_im: *mut f64,
    cap: usize,
) -> usize {
    let Some(model) = model.as_ref() else { return 0 };
    let lambda = &model.inner.lambda_c;
    let n = lambda.len().min(cap);
    for j in 0..n {
        if !out_re.is_null() {
            *out_re.add(j) = lambda[j].re;
        }
        if !out_im.is_null() {
            *out_im.add(j) = lambda[j].im;
        }
    }
    lambda.len()
}

/// Copies mode `j`'s physical-sensor shape (complex, `p` entries) into
/// `out_re`/`out_im` of capacity `cap` and returns `p`; returns 0 when the
/// handle is null or `j` is out of range.
#[no_mangle]
pub unsafe extern "C" fn hdmd_model_mode_shape(
    model: *const HdmdModel,
    j: usize,
    out_re: *mut f64,
    out_im: *mut f64,
    cap: usize,
) -> usize {
    let Some(model) = model.as_ref() else { return 0 };
    let m = &model.inner;
    if j >= m.r {
        return 0;
    }
    let col = m.phi_phys.column(j);
    let n = col.len().min(cap);
    for i in 0..n {
        if !out_re.is_null() {
            *out_re.add(i) = col[i].re;
        }
        if !out_im.is_null() {
            *out_im.add(i) = col[i].im;
        }
    }
    col.len()
}

/// Rolling reconstruction through the model: data is filtered and normalized
/// with the model's stored parameters, the sensors listed in `hidden` (of
/// length `n_hidden`; null for none) are withheld, non-growing modes with at
/// least `stability_floor` energy share are retained, and every channel is
/// re-predicted in windows of `horizon_w` samples from `calibration_len`
/// samples of visible history.
///
/// `y_hat` receives the `p` x `n` prediction (row-major, normalized domain);
/// `r2`/`nrmse` (each length `p`, may be null) receive per-channel scores.
#[no_mangle]
pub unsafe extern "C" fn hdmd_reconstruct(
    model: *const HdmdModel,
    data: *const f64,
    p: usize,
    n: usize,
    hidden: *const usize,
    n_hidden: usize,
    horizon_w: usize,
    calibration_len: usize,
    stability_floor: f64,
    y_hat: *mut f64,
    r2: *mut f64,
    nrmse: *mut f64,
) -> HdmdStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return null_arg("model");
        };
        if data.is_null() {
            return null_arg("data");
        }
        if y_hat.is_null() {
            return null_arg("y_hat");
        }
        let m = &model.inner;
        let result = (|| -> Result<sensing::ReconstructionReport, Error> {
            if p != m.p {
                return Err(Error::ModelDataMismatch(format!(
                    "data has {p} channels, model expects {}",
                    m.p
                )));
            }
            let raw = series_from_raw(data, p, n, m.dt)?;
            let filtered = preprocess::bandpass_zero_phase(&raw, &m.filter)?;
            let x = preprocess::zscore_apply(&filtered, &m.norm)?;
            let mask = if hidden.is_null() || n_hidden == 0 {
                SensorMask::full(p)
            } else {
                SensorMask::hiding(p, std::slice::from_raw_parts(hidden, n_hidden))?
            };
            let labels = koopman::classify_stability(m, stability_floor)?;
            let keep: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, l)| matches!(l, ModeLabel::Structural))
                .map(|(j, _)| j)
                .collect();
            let retained = m.retain_modes(&keep)?;
            let cfg = RollingConfig::new(horizon_w, calibration_len);
            sensing::rolling_reconstruct(&retained, &mask, &x, &cfg)
        })();
        match result {
            Ok(report) => {
                let vals = report.y_hat.values.as_standard_layout();
                let flat = vals.as_slice().expect("standard layout");
                std::ptr::copy_nonoverlapping(flat.as_ptr(), y_hat, p * n);
                if !r2.is_null() {
                    std::ptr::copy_nonoverlapping(report.r2.as_ptr(), r2, p);
                }
                if !nrmse.is_null() {
                    std::ptr::copy_nonoverlapping(report.nrmse.as_ptr(), nrmse, p);
                }
                HdmdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
