//! C ABI for the recapture engine: run a sampler from a JSON configuration
//! and read back posterior summaries and traces through an opaque handle.
//!
//! Conventions: functions return [`RecapStatus`]; strings handed out must
//! be released with [`recap_string_free`] and results with
//! [`recap_result_free`]. The generated header lives in
//! `include/recapture.h`.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use recapture::cli::{run, RunConfig, RunReport};
use recapture::integrate::{gauss_hermite_rule, mh_prob_unobserved};

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecapStatus {
    Ok = 0,
    /// A pointer argument was null or an index was out of range.
    InvalidArgument = 1,
    /// The configuration JSON could not be parsed or failed validation.
    ParseError = 2,
    /// The sampler or its input loading failed.
    RunError = 3,
}

/// Posterior summary of one monitored quantity.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RecapSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ess: f64,
    pub ess_per_second: f64,
    /// Potential scale reduction factor; meaningful only when `has_psrf`
    /// is nonzero (two or more chains).
    pub psrf: f64,
    pub has_psrf: i32,
    /// Nonzero when a trace was constant and the ESS is reported as zero.
    pub degenerate: i32,
}

/// Opaque handle to a finished run.
pub struct RecapResult {
    report: RunReport,
}

fn set_error(error_out: *mut *mut c_char, message: &str) {
    if !error_out.is_null() {
        let c = CString::new(message.replace('\0', " "))
            .unwrap_or_else(|_| CString::new("error").unwrap());
        unsafe { *error_out = c.into_raw() };
    }
}

/// Version of the underlying engine as a static C string.
#[no_mangle]
pub extern "C" fn recap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Run a sampler described by a JSON configuration document (the same
/// schema the command-line driver reads). Relative data paths resolve
/// against the current working directory. When `write_outputs` is false
/// the configured output directory is ignored and nothing is written.
///
/// On success `*out_result` owns the run; on failure `*error_out` (when
/// non-null) receives a message to release with [`recap_string_free`].
///
/// # Safety
/// `config_json` must point to a valid NUL-terminated string; `out_result`
/// must be a valid pointer; `error_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn recap_run_json(
    config_json: *const c_char,
    write_outputs: bool,
    out_result: *mut *mut RecapResult,
    error_out: *mut *mut c_char,
) -> RecapStatus {
    if config_json.is_null() || out_result.is_null() {
        set_error(error_out, "null argument");
        return RecapStatus::InvalidArgument;
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error(error_out, "configuration is not valid UTF-8");
            return RecapStatus::InvalidArgument;
        }
    };
    let mut config: RunConfig = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(error_out, &format!("cannot parse configuration: {e}"));
            return RecapStatus::ParseError;
        }
    };
    if let Err(e) = config.validate() {
        set_error(error_out, &e.to_string());
        return RecapStatus::ParseError;
    }
    if !write_outputs {
        config.out_dir = None;
    }
    match run(&config, Path::new(".")) {
        Ok(report) => {
            *out_result = Box::into_raw(Box::new(RecapResult { report }));
            RecapStatus::Ok
        }
        Err(e) => {
            set_error(error_out, &e.to_string());
            RecapStatus::RunError
        }
    }
}

/// Number of monitored quantities.
///
/// # Safety
/// `result` must be a live handle from [`recap_run_json`].
#[no_mangle]
pub unsafe extern "C" fn recap_result_param_count(result: *const RecapResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).report.parameters.len()
}

/// Name of the monitored quantity at `index`, as a new string to release
/// with [`recap_string_free`].
///
/// # Safety
/// `result` must be a live handle; `name_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn recap_result_param_name(
    result: *const RecapResult,
    index: usize,
    name_out: *mut *mut c_char,
) -> RecapStatus {
    if result.is_null() || name_out.is_null() {
        return RecapStatus::InvalidArgument;
    }
    match (&(*result).report.parameters).get(index) {
        Some(name) => {
            *name_out = CString::new(name.as_str()).unwrap().into_raw();
            RecapStatus::Ok
        }
        None => RecapStatus::InvalidArgument,
    }
}

/// Posterior summary for a monitored quantity by name.
///
/// # Safety
/// `result` must be a live handle; `param` a NUL-terminated string;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn recap_result_summary(
    result: *const RecapResult,
    param: *const c_char,
    out: *mut RecapSummary,
) -> RecapStatus {
    if result.is_null() || param.is_null() || out.is_null() {
        return RecapStatus::InvalidArgument;
    }
    let name = match CStr::from_ptr(param).to_str() {
        Ok(n) => n,
        Err(_) => return RecapStatus::InvalidArgument,
    };
    match (*result).report.summary_for(name) {
        Some(s) => {
            *out = RecapSummary {
                mean: s.mean,
                median: s.median,
                sd: s.sd,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                ess: s.ess,
                ess_per_second: s.ess_per_second,
                psrf: s.psrf.unwrap_or(f64::NAN),
                has_psrf: i32::from(s.psrf.is_some()),
                degenerate: i32::from(s.degenerate),
            };
            RecapStatus::Ok
        }
        None => RecapStatus::InvalidArgument,
    }
}

/// Number of chains in the run.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn recap_result_chain_count(result: *const RecapResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).report.traces.len()
}

/// Stored samples per chain.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn recap_result_sample_count(
    result: *const RecapResult,
    chain: usize,
) -> usize {
    if result.is_null() {
        return 0;
    }
    (&(*result).report.traces).get(chain).map_or(0, |t| t.len())
}

/// Copy one chain's samples of a monitored quantity into `buffer`
/// (capacity in doubles); `*written` receives the number copied.
///
/// # Safety
/// `result` must be a live handle; `param` a NUL-terminated string;
/// `buffer` must point to at least `capacity` doubles; `written` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn recap_result_samples(
    result: *const RecapResult,
    chain: usize,
    param: *const c_char,
    buffer: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> RecapStatus {
    if result.is_null() || param.is_null() || buffer.is_null() || written.is_null() {
        return RecapStatus::InvalidArgument;
    }
    let name = match CStr::from_ptr(param).to_str() {
        Ok(n) => n,
        Err(_) => return RecapStatus::InvalidArgument,
    };
    let trace = match (&(*result).report.traces).get(chain) {
        Some(t) => t,
        None => return RecapStatus::InvalidArgument,
    };
    let column = match trace.column(name) {
        Some(c) => c,
        None => return RecapStatus::InvalidArgument,
    };
    let count = column.len().min(capacity);
    ptr::copy_nonoverlapping(column.as_ptr(), buffer, count);
    *written = count;
    RecapStatus::Ok
}

/// Wall time of the sampling run in seconds.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn recap_wall_seconds(result: *const RecapResult) -> f64 {
    if result.is_null() {
        return f64::NAN;
    }
    (*result).report.wall_seconds
}

/// Release a run handle.
///
/// # Safety
/// `result` must come from [`recap_run_json`] and must not be used again.
#[no_mangle]
pub unsafe extern "C" fn recap_result_free(result: *mut RecapResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from a recapture function and must not be used again.
#[no_mangle]
pub unsafe extern "C" fn recap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Probability that an individual with logit-normal detection
/// heterogeneity is never observed over `occasions` occasions, by
/// Gauss-Hermite quadrature of the given order. Writes 1 - p* to `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn recap_mh_prob_unobserved(
    alpha: f64,
    sigma: f64,
    occasions: u32,
    order: usize,
    out: *mut f64,
) -> RecapStatus {
    if out.is_null() {
        return RecapStatus::InvalidArgument;
    }
    let rule = match gauss_hermite_rule(order) {
        Ok(r) => r,
        Err(_) => return RecapStatus::InvalidArgument,
    };
    match mh_prob_unobserved(alpha, sigma, occasions, &rule) {
        Ok(v) => {
            *out = v;
            RecapStatus::Ok
        }
        Err(_) => RecapStatus::InvalidArgument,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = recap_version();
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert!(!s.is_empty());
    }
}
