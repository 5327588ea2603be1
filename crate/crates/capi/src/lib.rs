//! C ABI surface over the evalframe library.
//!
//! Conventions:
//! - Handles (`EfDataset`, `EfReport`) are opaque; create with the matching
//!   `_load`/`_run` function and release with the matching `_free`.
//! - Functions returning a pointer yield null on failure; functions returning
//!   `EfStatus` yield a nonzero code. Either way `ef_last_error` holds a
//!   message for the calling thread until the next failure.
//! - Strings returned as `*mut c_char` are owned by the caller and must be
//!   released with `ef_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use evalframe::corpus::{load_dataset, validate_dataset, Dataset};
use evalframe::harness::run::{run_eval, EvalReport, RunConfig};
use evalframe::overlap::{bleu, keyword_recall, rouge, OverlapConfig, RougeVariant};
use evalframe::report::{compare_runs, render_report, ComparisonSelection, ReportFormat};
use evalframe::stats::{required_sample_size, SampleSizeSpec};
use evalframe::EvalError;

/// Status codes returned by fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Parse = 5,
    Runtime = 6,
}

/// Opaque handle to a loaded dataset.
#[repr(C)]
pub struct EfDataset {
    _private: [u8; 0],
}

/// Opaque handle to a completed evaluation report.
#[repr(C)]
pub struct EfReport {
    _private: [u8; 0],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &EvalError) -> EfStatus {
    match err {
        EvalError::Io(_) => EfStatus::Io,
        EvalError::Parse { .. } => EfStatus::Parse,
        EvalError::InvalidDataset(_)
        | EvalError::InvalidConfig(_)
        | EvalError::InvalidInput(_)
        | EvalError::Incomparable(_) => EfStatus::InvalidInput,
        _ => EfStatus::Runtime,
    }
}

fn fail(err: EvalError) -> EfStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Borrow a required UTF-8 C string argument.
unsafe fn arg_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, EfStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} is null"));
        return Err(EfStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        EfStatus::InvalidUtf8
    })
}

unsafe fn dataset_ref<'a>(ptr: *const EfDataset) -> Option<&'a Dataset> {
    if ptr.is_null() {
        set_error("dataset handle is null");
        return None;
    }
    Some(&*(ptr as *const Dataset))
}

unsafe fn report_ref<'a>(ptr: *const EfReport) -> Option<&'a EvalReport> {
    if ptr.is_null() {
        set_error("report handle is null");
        return None;
    }
    Some(&*(ptr as *const EvalReport))
}

fn out_string(s: String) -> *mut c_char {
    match CString::new(s.replace('\0', " ")) {
        Ok(c) => c.into_raw(),
        Err(_) => ptr::null_mut(),
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn ef_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string previously returned by this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ef_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load an NDJSON dataset from `path`. Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn ef_dataset_load(path: *const c_char) -> *mut EfDataset {
    let path = match arg_str(path, "path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    match load_dataset(Path::new(path)) {
        Ok(ds) => Box::into_raw(Box::new(ds)) as *mut EfDataset,
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn ef_dataset_free(ds: *mut EfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds as *mut Dataset));
    }
}

/// Number of items in the dataset; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ef_dataset_item_count(ds: *const EfDataset) -> usize {
    dataset_ref(ds).map(|d| d.items.len()).unwrap_or(0)
}

/// Run invariant checks. Returns the violation count, or -1 on a null handle.
/// A newline-separated description is written to `*out_detail` when non-null
/// and violations exist (free with `ef_string_free`).
#[no_mangle]
pub unsafe extern "C" fn ef_dataset_validate(
    ds: *const EfDataset,
    out_detail: *mut *mut c_char,
) -> i64 {
    let Some(ds) = dataset_ref(ds) else { return -1 };
    let violations = validate_dataset(ds);
    if !out_detail.is_null() {
        *out_detail = if violations.is_empty() {
            ptr::null_mut()
        } else {
            let text = violations
                .iter()
                .map(|v| match &v.item_id {
                    Some(id) => format!("[{}] item {}: {}", v.rule, id, v.detail),
                    None => format!("[{}]: {}", v.rule, v.detail),
                })
                .collect::<Vec<_>>()
                .join("\n");
            out_string(text)
        };
    }
    violations.len() as i64
}

/// Sample size for a target margin of error at the given confidence level.
#[no_mangle]
pub unsafe extern "C" fn ef_required_sample_size(
    confidence: f64,
    expected_metric: f64,
    margin: f64,
    out_n: *mut u64,
) -> EfStatus {
    if out_n.is_null() {
        set_error("out_n is null");
        return EfStatus::NullPointer;
    }
    let spec = SampleSizeSpec {
        confidence: Some(confidence),
        z: None,
        expected_metric,
        margin,
    };
    match required_sample_size(&spec) {
        Ok(r) => {
            *out_n = r.n as u64;
            EfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// ROUGE-N F-measure of `candidate` against a single reference.
#[no_mangle]
pub unsafe extern "C" fn ef_rouge_n(
    candidate: *const c_char,
    reference: *const c_char,
    n: u32,
    out_f: *mut f64,
) -> EfStatus {
    let (candidate, reference) = match (arg_str(candidate, "candidate"), arg_str(reference, "reference")) {
        (Ok(c), Ok(r)) => (c, r),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    if out_f.is_null() {
        set_error("out_f is null");
        return EfStatus::NullPointer;
    }
    let cfg = OverlapConfig {
        rouge_variant: RougeVariant::N(n as usize),
        ..OverlapConfig::default()
    };
    match rouge(candidate, &[reference], &cfg) {
        Ok(s) => {
            *out_f = s.f_beta;
            EfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// BLEU score of `candidate` against a single reference.
#[no_mangle]
pub unsafe extern "C" fn ef_bleu(
    candidate: *const c_char,
    reference: *const c_char,
    out_score: *mut f64,
) -> EfStatus {
    let (candidate, reference) = match (arg_str(candidate, "candidate"), arg_str(reference, "reference")) {
        (Ok(c), Ok(r)) => (c, r),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    if out_score.is_null() {
        set_error("out_score is null");
        return EfStatus::NullPointer;
    }
    match bleu(candidate, &[reference], &OverlapConfig::default()) {
        Ok(s) => {
            *out_score = s;
            EfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Fraction of `terms` (array of `n_terms` C strings) present in `response`.
#[no_mangle]
pub unsafe extern "C" fn ef_keyword_recall(
    response: *const c_char,
    terms: *const *const c_char,
    n_terms: usize,
    out_recall: *mut f64,
) -> EfStatus {
    let response = match arg_str(response, "response") {
        Ok(r) => r,
        Err(s) => return s,
    };
    if terms.is_null() || out_recall.is_null() {
        set_error("terms or out_recall is null");
        return EfStatus::NullPointer;
    }
    let mut owned = Vec::with_capacity(n_terms);
    for i in 0..n_terms {
        match arg_str(*terms.add(i), "terms[i]") {
            Ok(t) => owned.push(t),
            Err(s) => return s,
        }
    }
    match keyword_recall(response, &owned) {
        Ok(r) => {
            *out_recall = r;
            EfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Execute a full evaluation run from a JSON config file. Returns null on
/// failure; the report is also written to the path named in the config.
#[no_mangle]
pub unsafe extern "C" fn ef_run_eval(config_path: *const c_char) -> *mut EfReport {
    let path = match arg_str(config_path, "config_path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    let result = RunConfig::from_path(Path::new(path)).and_then(|cfg| run_eval(&cfg));
    match result {
        Ok(report) => Box::into_raw(Box::new(report)) as *mut EfReport,
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Load a previously written report JSON file. Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn ef_report_load(path: *const c_char) -> *mut EfReport {
    let path = match arg_str(path, "path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    match EvalReport::from_path(Path::new(path)) {
        Ok(report) => Box::into_raw(Box::new(report)) as *mut EfReport,
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn ef_report_free(report: *mut EfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report as *mut EvalReport));
    }
}

/// Canonical JSON rendering of the report (free with `ef_string_free`).
#[no_mangle]
pub unsafe extern "C" fn ef_report_to_json(report: *const EfReport) -> *mut c_char {
    let Some(report) = report_ref(report) else {
        return ptr::null_mut();
    };
    match render_report(report, ReportFormat::Json) {
        Ok(s) => out_string(s),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Config hash of the run that produced this report (free with
/// `ef_string_free`).
#[no_mangle]
pub unsafe extern "C" fn ef_report_config_hash(report: *const EfReport) -> *mut c_char {
    match report_ref(report) {
        Some(r) => out_string(r.config_hash.clone()),
        None => ptr::null_mut(),
    }
}

/// Compare two reports with paired tests at significance level `alpha`.
/// `metric` restricts the comparison to one metric when non-null. On success
/// `*out_regression` is set to 1 if any compared metric shows a statistically
/// significant regression from A to B, else 0.
#[no_mangle]
pub unsafe extern "C" fn ef_compare_runs(
    report_a: *const EfReport,
    report_b: *const EfReport,
    metric: *const c_char,
    alpha: f64,
    out_regression: *mut i32,
) -> EfStatus {
    let (Some(a), Some(b)) = (report_ref(report_a), report_ref(report_b)) else {
        return EfStatus::NullPointer;
    };
    if out_regression.is_null() {
        set_error("out_regression is null");
        return EfStatus::NullPointer;
    }
    let metric = if metric.is_null() {
        None
    } else {
        match arg_str(metric, "metric") {
            Ok(m) => Some(m.to_string()),
            Err(s) => return s,
        }
    };
    let selection = ComparisonSelection {
        metric,
        alpha,
        ..ComparisonSelection::default()
    };
    match compare_runs(a, b, &selection) {
        Ok(results) => {
            *out_regression = results.iter().any(|r| r.regression) as i32;
            EfStatus::Ok
        }
        Err(e) => fail(e),
    }
}
