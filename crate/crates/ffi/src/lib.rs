//! C interface to the parsimony toolkit.
//!
//! Frames and recovery results are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns a
//! [`PsmStatus`]; on failure the message is available from
//! [`psm_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use parsimony::frame_analysis::{mutual_coherence, spark_with_cap, DEFAULT_SUBSET_CAP};
use parsimony::solvers::{Solver, SolverParams};
use parsimony::{Error, Frame, RecoveryResult, Signal};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    UnknownSolver = 4,
    Config = 5,
    TooLarge = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque handle to an `n × m` frame.
pub struct PsmFrame(Frame);

/// Opaque handle to the outcome of a recovery.
pub struct PsmResult(RecoveryResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PsmStatus {
    match e {
        Error::InvalidInput(_) | Error::ZeroColumn(_) | Error::NotUnitNorm { .. } | Error::Parse { .. } => {
            PsmStatus::InvalidArgument
        }
        Error::DimensionMismatch { .. } => PsmStatus::DimensionMismatch,
        Error::UnknownSolver { .. } => PsmStatus::UnknownSolver,
        Error::Config { .. } | Error::Json(_) => PsmStatus::Config,
        Error::TooLarge { .. } => PsmStatus::TooLarge,
        _ => PsmStatus::Numerical,
    }
}

struct Fail(PsmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PsmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PsmStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(PsmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn psm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn psm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a frame from `rows * cols` values in row-major order.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out` must be a
/// valid place to store the handle.
#[no_mangle]
pub unsafe extern "C" fn psm_frame_new(rows: usize, cols: usize, data: *const f64, out: *mut *mut PsmFrame) -> PsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(PsmStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let values = slice(data, len, "data")?;
        let frame = Frame::from_row_slice(rows, cols, values)?;
        *out = Box::into_raw(Box::new(PsmFrame(frame)));
        Ok(())
    })
}

/// Releases a frame. NULL is ignored.
///
/// # Safety
/// `frame` must come from [`psm_frame_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn psm_frame_free(frame: *mut PsmFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// # Safety
/// `frame` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn psm_frame_rows(frame: *const PsmFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.0.rows())
}

/// # Safety
/// `frame` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn psm_frame_cols(frame: *const PsmFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.0.cols())
}

/// Mutual coherence of the frame's normalized columns.
///
/// # Safety
/// `frame` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psm_frame_coherence(frame: *const PsmFrame, out: *mut f64) -> PsmStatus {
    guard(|| {
        let f = frame.as_ref().ok_or_else(|| null("frame"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mutual_coherence(&f.0)?;
        Ok(())
    })
}

/// Spark by exhaustive search; fails with `TooLarge` past the subset cap.
///
/// # Safety
/// `frame` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psm_frame_spark(frame: *const PsmFrame, out: *mut usize) -> PsmStatus {
    guard(|| {
        let f = frame.as_ref().ok_or_else(|| null("frame"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = spark_with_cap(&f.0, DEFAULT_SUBSET_CAP)?;
        Ok(())
    })
}

/// Recovers a sparse code for `signal` (length = frame rows) with the named
/// solver. `params_json` is a JSON object of solver parameters or NULL.
///
/// # Safety
/// `frame` must be a live handle, `solver` a NUL-terminated string,
/// `params_json` NULL or NUL-terminated, `signal` must hold `len` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psm_recover(
    frame: *const PsmFrame,
    solver: *const c_char,
    params_json: *const c_char,
    signal: *const f64,
    len: usize,
    out: *mut *mut PsmResult,
) -> PsmStatus {
    guard(|| {
        let f = frame.as_ref().ok_or_else(|| null("frame"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let name = text(solver, "solver")?;
        let params: SolverParams = if params_json.is_null() {
            SolverParams::default()
        } else {
            serde_json::from_str(text(params_json, "params_json")?).map_err(Error::from)?
        };
        let s = Signal::from_column_slice(slice(signal, len, "signal")?);
        let result = Solver::with_params(name, &params)?.solve(&f.0, &s)?;
        *out = Box::into_raw(Box::new(PsmResult(result)));
        Ok(())
    })
}

/// Releases a result. NULL is ignored.
///
/// # Safety
/// `result` must come from [`psm_recover`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn psm_result_free(result: *mut PsmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Length of the coefficient vector (frame columns).
///
/// # Safety
/// `result` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn psm_result_len(result: *const PsmResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.code.len())
}

/// Number of non-zero coefficients.
///
/// # Safety
/// `result` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn psm_result_support_size(result: *const PsmResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.code.support().len())
}

/// Copies the dense coefficients into `buf`, which must hold at least
/// [`psm_result_len`] doubles.
///
/// # Safety
/// `result` must be a live handle and `buf` must hold `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn psm_result_coefficients(result: *const PsmResult, buf: *mut f64, cap: usize) -> PsmStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let values = r.0.code.values();
        if cap < values.len() {
            return Err(Fail(PsmStatus::BufferTooSmall, format!("buffer holds {cap}, need {}", values.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// `‖Φα − s‖₂` of the returned code; NaN for NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn psm_result_residual_norm(result: *const PsmResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.residual_norm)
}

/// # Safety
/// `result` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn psm_result_iterations(result: *const PsmResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// `result` must be a live handle or NULL (which yields false).
#[no_mangle]
pub unsafe extern "C" fn psm_result_converged(result: *const PsmResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.converged)
}
