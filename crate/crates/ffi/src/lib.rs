//! C ABI over the `cfep` crate.
//!
//! Every fallible call returns a `CfepErrorCode`; on failure the message is
//! available from `cfep_last_error_message` on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.
//! Strings returned by the library are released with `cfep_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfep::config::RunConfig;
use cfep::sim::{aggregate, nmse, run_estimator_suite, to_csv, Estimator, Instance, Summary};
use cfep::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfepErrorCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 99,
}

/// Estimator identifiers used in `CfepSummary`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfepEstimator {
    MmseGenie = 0,
    GenieEp = 1,
    Proposed = 2,
    PilotOnly = 3,
}

impl From<Estimator> for CfepEstimator {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::MmseGenie => CfepEstimator::MmseGenie,
            Estimator::GenieEp => CfepEstimator::GenieEp,
            Estimator::Proposed => CfepEstimator::Proposed,
            Estimator::PilotOnly => CfepEstimator::PilotOnly,
        }
    }
}

/// One row of the aggregated results. `mean_ser` is NaN for estimators
/// that make no symbol decisions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfepSummary {
    pub estimator: CfepEstimator,
    pub tx_power_dbm: f64,
    pub snr_db: f64,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub mean_ser: f64,
    pub realizations: usize,
    pub mean_iters: f64,
}

impl From<&Summary> for CfepSummary {
    fn from(s: &Summary) -> Self {
        Self {
            estimator: s.estimator.into(),
            tx_power_dbm: s.tx_power_dbm,
            snr_db: s.snr_db,
            mean_nmse: s.mean_nmse,
            std_nmse: s.std_nmse,
            mean_ser: s.mean_ser.unwrap_or(f64::NAN),
            realizations: s.realizations,
            mean_iters: s.mean_iters,
        }
    }
}

/// Run configuration.
pub struct CfepConfig {
    inner: RunConfig,
}

/// Aggregated results of a full run.
pub struct CfepResults {
    summaries: Vec<Summary>,
    completed_jobs: usize,
    failed_jobs: usize,
}

/// The proposed estimator on a single realization, stepped by the caller.
pub struct CfepSession {
    instance: Instance,
    session: cfep::Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> CfepErrorCode {
    match e {
        Error::Config(_) => CfepErrorCode::Config,
        Error::Io { .. } => CfepErrorCode::Io,
        Error::NotPositiveDefinite
        | Error::NotNormalized(_)
        | Error::MessageUnderflow { .. }
        | Error::ZeroDenominator => CfepErrorCode::Numerical,
        _ => CfepErrorCode::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into codes.
fn guard(f: impl FnOnce() -> Result<(), (CfepErrorCode, String)>) -> CfepErrorCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfepErrorCode::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CfepErrorCode::Panic
        }
    }
}

fn lib<T>(r: cfep::Result<T>) -> Result<T, (CfepErrorCode, String)> {
    r.map_err(|e| (code_of(&e), e.to_string()))
}

fn null(what: &str) -> (CfepErrorCode, String) {
    (CfepErrorCode::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CfepErrorCode, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CfepErrorCode, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Free with
/// `cfep_string_free`.
#[no_mangle]
pub extern "C" fn cfep_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(s) => s.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cfep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_default(out: *mut *mut CfepConfig) -> CfepErrorCode {
    guard(|| {
        let out = handle_mut(out, "out")?;
        *out = Box::into_raw(Box::new(CfepConfig {
            inner: RunConfig::default(),
        }));
        Ok(())
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_from_toml(
    text: *const c_char,
    out: *mut *mut CfepConfig,
) -> CfepErrorCode {
    guard(|| {
        let out = handle_mut(out, "out")?;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (CfepErrorCode::InvalidUtf8, e.to_string()))?;
        let inner = lib(RunConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(CfepConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_free(cfg: *mut CfepConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_set_seed(cfg: *mut CfepConfig, seed: u64) -> CfepErrorCode {
    guard(|| {
        handle_mut(cfg, "cfg")?.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_set_realizations(
    cfg: *mut CfepConfig,
    realizations: usize,
) -> CfepErrorCode {
    guard(|| {
        let cfg = handle_mut(cfg, "cfg")?;
        let mut next = cfg.inner.clone();
        next.scenario.realizations = realizations;
        lib(next.validate())?;
        cfg.inner = next;
        Ok(())
    })
}

/// Replaces the transmit-power sweep.
///
/// # Safety
/// `cfg` must be a valid handle and `powers` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cfep_config_set_powers(
    cfg: *mut CfepConfig,
    powers: *const f64,
    len: usize,
) -> CfepErrorCode {
    guard(|| {
        let cfg = handle_mut(cfg, "cfg")?;
        if powers.is_null() {
            return Err(null("powers"));
        }
        let mut next = cfg.inner.clone();
        next.sweep.tx_power_dbm = std::slice::from_raw_parts(powers, len).to_vec();
        lib(next.validate())?;
        cfg.inner = next;
        Ok(())
    })
}

/// Runs every estimator over the sweep. Failed realizations are skipped and
/// counted; see `cfep_results_job_counts`.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_run(cfg: *const CfepConfig, out: *mut *mut CfepResults) -> CfepErrorCode {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = handle_mut(out, "out")?;
        let suite = lib(run_estimator_suite(&cfg.inner))?;
        let summaries = lib(aggregate(&suite.records))?;
        *out = Box::into_raw(Box::new(CfepResults {
            completed_jobs: suite.completed_jobs(),
            failed_jobs: suite.failures.len(),
            summaries,
        }));
        Ok(())
    })
}

/// # Safety
/// `res` must be NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfep_results_free(res: *mut CfepResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of summary rows.
///
/// # Safety
/// `res` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfep_results_len(res: *const CfepResults) -> usize {
    res.as_ref().map_or(0, |r| r.summaries.len())
}

/// # Safety
/// `res` must be a valid handle; `completed` and `failed` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cfep_results_job_counts(
    res: *const CfepResults,
    completed: *mut usize,
    failed: *mut usize,
) -> CfepErrorCode {
    guard(|| {
        let r = handle(res, "res")?;
        *handle_mut(completed, "completed")? = r.completed_jobs;
        *handle_mut(failed, "failed")? = r.failed_jobs;
        Ok(())
    })
}

/// # Safety
/// `res` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_results_get(
    res: *const CfepResults,
    index: usize,
    out: *mut CfepSummary,
) -> CfepErrorCode {
    guard(|| {
        let r = handle(res, "res")?;
        let out = handle_mut(out, "out")?;
        let s = r.summaries.get(index).ok_or_else(|| {
            (
                CfepErrorCode::OutOfRange,
                format!("row {index} of {}", r.summaries.len()),
            )
        })?;
        *out = s.into();
        Ok(())
    })
}

/// CSV text of the results. Free with `cfep_string_free`.
///
/// # Safety
/// `res` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_results_csv(res: *const CfepResults, out: *mut *mut c_char) -> CfepErrorCode {
    guard(|| {
        let r = handle(res, "res")?;
        let out = handle_mut(out, "out")?;
        *out = CString::new(to_csv(&r.summaries))
            .map_err(|e| (CfepErrorCode::InvalidArgument, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Builds realization `realization` at `tx_power_dbm` and an unstarted
/// proposed-estimator session on it.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_session_new(
    cfg: *const CfepConfig,
    tx_power_dbm: f64,
    realization: usize,
    out: *mut *mut CfepSession,
) -> CfepErrorCode {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = handle_mut(out, "out")?;
        let instance = lib(Instance::build(&cfg.inner, tx_power_dbm, realization))?;
        let session = lib(instance.session(&cfg.inner))?;
        *out = Box::into_raw(Box::new(CfepSession { instance, session }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfep_session_free(s: *mut CfepSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// One outer iteration; writes the iteration residual to `residual` if it
/// is not NULL.
///
/// # Safety
/// `s` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfep_session_step(s: *mut CfepSession, residual: *mut f64) -> CfepErrorCode {
    guard(|| {
        let s = handle_mut(s, "session")?;
        let report = lib(s.session.step(None))?;
        if let Some(r) = residual.as_mut() {
            *r = report.residual();
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfep_session_iterations(s: *const CfepSession) -> usize {
    s.as_ref().map_or(0, |s| s.session.iterations())
}

/// NMSE of the current channel estimates against the true channels.
///
/// # Safety
/// `s` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfep_session_nmse(s: *const CfepSession, out: *mut f64) -> CfepErrorCode {
    guard(|| {
        let s = handle(s, "session")?;
        let out = handle_mut(out, "out")?;
        *out = lib(nmse(
            &s.session.channel_estimates(),
            &s.instance.realization.channels,
        ))?;
        Ok(())
    })
}
