use std::ffi::{CStr, CString};
use std::io::Write;
use std::ptr;

use gbkmv_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = gbkmv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

/// Dataset where record i holds tokens t0..t(10+i).
fn write_dataset(dir: &std::path::Path) -> std::path::PathBuf {
    let p = dir.join("data.txt");
    let mut f = std::fs::File::create(&p).unwrap();
    for i in 0..40 {
        let line: Vec<String> = (0..10 + i).map(|t| format!("t{t}")).collect();
        writeln!(f, "{}", line.join(" ")).unwrap();
    }
    p
}

#[test]
fn build_query_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let data = c(write_dataset(dir.path()).to_str().unwrap());
    let mut h = ptr::null_mut();
    // Full budget: every record is stored exactly.
    let st = unsafe { gbkmv_build(data.as_ptr(), 1.0, 0, 3, 1, &mut h) };
    assert_eq!(st, GbkmvStatus::Ok);
    let (mut m, mut r, mut tau) = (0u64, 0u64, 0f64);
    assert_eq!(unsafe { gbkmv_info(h, &mut m, &mut r, &mut tau) }, GbkmvStatus::Ok);
    assert_eq!((m, r, tau), (40, 0, 1.0));

    let q: Vec<String> = (0..20).map(|t| format!("t{t}")).collect();
    let q = c(&q.join(" "));
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { gbkmv_query(h, q.as_ptr(), 1.0, &mut res) }, GbkmvStatus::Ok);
    // Records 10..40 contain all of t0..t19.
    assert_eq!(unsafe { gbkmv_results_len(res) }, 30);
    let (mut id, mut cont) = (0u64, 0f64);
    assert_eq!(unsafe { gbkmv_results_get(res, 0, &mut id, &mut cont) }, GbkmvStatus::Ok);
    assert_eq!((id, cont), (10, 1.0));
    assert_eq!(unsafe { gbkmv_results_get(res, 30, &mut id, &mut cont) }, GbkmvStatus::OutOfRange);
    assert!(last_error().contains("30"));
    unsafe { gbkmv_results_free(res) };

    let file = c(dir.path().join("x.gbkm").to_str().unwrap());
    assert_eq!(unsafe { gbkmv_save(h, file.as_ptr()) }, GbkmvStatus::Ok);
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { gbkmv_load(file.as_ptr(), &mut h2) }, GbkmvStatus::Ok);
    let mut res2 = ptr::null_mut();
    assert_eq!(unsafe { gbkmv_query(h2, q.as_ptr(), 0.5, &mut res2) }, GbkmvStatus::Ok);
    assert_eq!(unsafe { gbkmv_results_len(res2) }, 40);
    unsafe {
        gbkmv_results_free(res2);
        gbkmv_free(h);
        gbkmv_free(h2);
    }
}

#[test]
fn unknown_and_empty_queries() {
    let dir = tempfile::tempdir().unwrap();
    let data = c(write_dataset(dir.path()).to_str().unwrap());
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gbkmv_build(data.as_ptr(), 0.5, -1, 0, 10, &mut h) }, GbkmvStatus::Ok);
    for q in ["", "never seen tokens"] {
        let q = c(q);
        let mut res = ptr::null_mut();
        assert_eq!(unsafe { gbkmv_query(h, q.as_ptr(), 0.5, &mut res) }, GbkmvStatus::Ok);
        assert_eq!(unsafe { gbkmv_results_len(res) }, 0);
        unsafe { gbkmv_results_free(res) };
    }
    unsafe { gbkmv_free(h) };
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gbkmv_load(ptr::null(), &mut h) }, GbkmvStatus::NullArgument);
    assert!(h.is_null());
    let missing = c("/nonexistent/index.gbkm");
    assert_eq!(unsafe { gbkmv_load(missing.as_ptr(), &mut h) }, GbkmvStatus::Io);
    assert!(!last_error().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk");
    std::fs::write(&junk, b"not an index").unwrap();
    let junk = c(junk.to_str().unwrap());
    assert_eq!(unsafe { gbkmv_load(junk.as_ptr(), &mut h) }, GbkmvStatus::Format);

    let data = c(write_dataset(dir.path()).to_str().unwrap());
    // A buffer wider than the budget can pay for.
    assert_eq!(unsafe { gbkmv_build(data.as_ptr(), 0.01, 4096, 0, 1, &mut h) }, GbkmvStatus::Budget);
    assert_eq!(unsafe { gbkmv_build(data.as_ptr(), 0.1, 0, 0, 1000, &mut h) }, GbkmvStatus::EmptyDataset);
    assert_eq!(unsafe { gbkmv_build(data.as_ptr(), 0.1, 0, 0, 1, ptr::null_mut()) }, GbkmvStatus::NullArgument);
    assert_eq!(unsafe { gbkmv_info(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, GbkmvStatus::NullArgument);

    // A successful call clears the message.
    assert_eq!(unsafe { gbkmv_build(data.as_ptr(), 0.1, 0, 0, 1, &mut h) }, GbkmvStatus::Ok);
    assert!(gbkmv_last_error().is_null());
    unsafe {
        gbkmv_free(h);
        gbkmv_free(ptr::null_mut());
        gbkmv_results_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gbkmv.h")).unwrap();
    for name in [
        "typedef struct GbkmvHandle GbkmvHandle",
        "typedef struct GbkmvResults GbkmvResults",
        "GBKMV_STATUS_OK = 0",
        "GBKMV_STATUS_INTERNAL = 10",
        "gbkmv_last_error",
        "gbkmv_build",
        "gbkmv_load",
        "gbkmv_save",
        "gbkmv_free",
        "gbkmv_info",
        "gbkmv_query",
        "gbkmv_results_len",
        "gbkmv_results_get",
        "gbkmv_results_free",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gbkmv.h");
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
