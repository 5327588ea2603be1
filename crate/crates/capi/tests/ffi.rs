//! Smoke tests exercising the C ABI from Rust.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use evalframe_capi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn fixture() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/table1.ndjson");
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ef_last_error()).to_string_lossy().into_owned() }
}

fn write_config(dir: &Path, out: &Path, response: &str) -> CString {
    let dataset = dir.join("small.ndjson");
    let mut lines = vec!["{\"name\":\"small\",\"version\":1,\"changelog\":[]}".to_string()];
    for i in 0..4 {
        lines.push(
            serde_json::json!({
                "id": format!("q{i}"),
                "prompt": format!("Question {i}?"),
                "references": [format!("the moon landing answer {i}")],
            })
            .to_string(),
        );
    }
    std::fs::write(&dataset, lines.join("\n")).unwrap();
    let cfg = serde_json::json!({
        "dataset": {"path": dataset},
        "providers": {"generator": {"kind": "mock", "table": {"entries": [], "default": response}}},
        "metrics": ["rouge1"],
        "output": {"path": out},
        "seed": 11,
    });
    let path = dir.join(format!("{}.cfg.json", out.file_stem().unwrap().to_string_lossy()));
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    c(path.to_str().unwrap())
}

#[test]
fn dataset_load_validate_free() {
    unsafe {
        let ds = ef_dataset_load(fixture().as_ptr());
        assert!(!ds.is_null(), "{}", last_error());
        assert_eq!(ef_dataset_item_count(ds), 1);
        let mut detail: *mut std::ffi::c_char = ptr::null_mut();
        assert_eq!(ef_dataset_validate(ds, &mut detail), 0);
        assert!(detail.is_null());
        ef_dataset_free(ds);
    }
}

#[test]
fn dataset_load_missing_file_sets_error() {
    unsafe {
        let ds = ef_dataset_load(c("/nonexistent/nope.ndjson").as_ptr());
        assert!(ds.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn sample_size_matches_library() {
    unsafe {
        let mut n = 0u64;
        let status = ef_required_sample_size(0.95, 0.8, 0.05, &mut n);
        assert_eq!(status, EfStatus::Ok, "{}", last_error());
        assert_eq!(n, 246);

        let status = ef_required_sample_size(0.95, 0.8, 0.0, &mut n);
        assert_eq!(status, EfStatus::InvalidInput);
    }
}

#[test]
fn overlap_scores_through_ffi() {
    unsafe {
        let mut f = -1.0;
        let cand = c("the cat sat on the mat");
        assert_eq!(
            ef_rouge_n(cand.as_ptr(), cand.as_ptr(), 1, &mut f),
            EfStatus::Ok
        );
        assert_eq!(f, 1.0);

        let mut b = -1.0;
        assert_eq!(ef_bleu(cand.as_ptr(), cand.as_ptr(), &mut b), EfStatus::Ok);
        assert_eq!(b, 1.0);

        let terms = [c("cat"), c("dog")];
        let ptrs: Vec<*const std::ffi::c_char> = terms.iter().map(|t| t.as_ptr()).collect();
        let mut r = -1.0;
        assert_eq!(
            ef_keyword_recall(cand.as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut r),
            EfStatus::Ok
        );
        assert_eq!(r, 0.5);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert!(ef_dataset_load(ptr::null()).is_null());
        assert_eq!(ef_dataset_item_count(ptr::null()), 0);
        assert_eq!(ef_dataset_validate(ptr::null(), ptr::null_mut()), -1);
        let mut f = 0.0;
        assert_eq!(
            ef_bleu(ptr::null(), ptr::null(), &mut f),
            EfStatus::NullPointer
        );
        ef_string_free(ptr::null_mut());
        ef_dataset_free(ptr::null_mut());
        ef_report_free(ptr::null_mut());
    }
}

#[test]
fn run_report_and_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let out_a = dir.path().join("a.json");
        let cfg_a = write_config(dir.path(), &out_a, "armstrong and aldrin walked on the moon");
        let report_a = ef_run_eval(cfg_a.as_ptr());
        assert!(!report_a.is_null(), "{}", last_error());

        let hash = ef_report_config_hash(report_a);
        assert!(!hash.is_null());
        assert_eq!(CStr::from_ptr(hash).to_str().unwrap().len(), 64);
        ef_string_free(hash);

        let json = ef_report_to_json(report_a);
        assert!(!json.is_null());
        let parsed: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed["report_version"], 1);
        ef_string_free(json);

        // the written file loads back and compares clean against itself
        let loaded = ef_report_load(c(out_a.to_str().unwrap()).as_ptr());
        assert!(!loaded.is_null(), "{}", last_error());
        let mut regression = -1;
        let status = ef_compare_runs(report_a, loaded, ptr::null(), 0.05, &mut regression);
        assert_eq!(status, EfStatus::Ok, "{}", last_error());
        assert_eq!(regression, 0);

        ef_report_free(loaded);
        ef_report_free(report_a);
    }
}

#[test]
fn header_is_generated() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/evalframe.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in [
        "ef_dataset_load",
        "ef_run_eval",
        "ef_compare_runs",
        "ef_last_error",
        "ef_string_free",
    ] {
        assert!(text.contains(symbol), "missing {symbol}");
    }
}
