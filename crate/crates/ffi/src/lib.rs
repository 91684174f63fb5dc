//! C interface to the GB-KMV index.
//!
//! Every function returns a `GbkmvStatus`. On failure a message is kept per
//! thread and can be read with `gbkmv_last_error` until the next call.
//! Handles are opaque; free them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gbkmv::dataset::{ingest_path, QueryEncoder};
use gbkmv::eval::budget_units;
use gbkmv::persist::{load_index, save_index};
use gbkmv::search::{query, QueryScratch, SizePartitionIndex, DEFAULT_PARTITIONS};
use gbkmv::{build_gbkmv_index, BufferSize, GbkmvError, GbkmvIndex, HashSource};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbkmvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidParameter = 4,
    EmptyDataset = 5,
    Budget = 6,
    Format = 7,
    Corrupt = 8,
    OutOfRange = 9,
    Internal = 10,
}

/// A loaded or freshly built index together with its search structure.
pub struct GbkmvHandle {
    index: GbkmvIndex,
    accel: SizePartitionIndex,
    scratch: QueryScratch,
}

/// Hits of one query, ordered by record id.
pub struct GbkmvResults {
    hits: Vec<(usize, f64)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GbkmvError) -> GbkmvStatus {
    match e {
        GbkmvError::Io(_) => GbkmvStatus::Io,
        GbkmvError::EmptyDataset => GbkmvStatus::EmptyDataset,
        GbkmvError::BudgetExhausted { .. } | GbkmvError::InfeasibleBuffer { .. } => GbkmvStatus::Budget,
        GbkmvError::Format(_) => GbkmvStatus::Format,
        GbkmvError::Corrupt(_) => GbkmvStatus::Corrupt,
        GbkmvError::InvalidParameter(_) | GbkmvError::Domain(_) => GbkmvStatus::InvalidParameter,
        _ => GbkmvStatus::Internal,
    }
}

struct Fail(GbkmvStatus, String);

impl From<GbkmvError> for Fail {
    fn from(e: GbkmvError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GbkmvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbkmvStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            GbkmvStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(GbkmvStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(GbkmvStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(GbkmvStatus::NullArgument, format!("{what} is null")))
}

fn wrap(index: GbkmvIndex) -> Result<*mut GbkmvHandle, Fail> {
    let accel = SizePartitionIndex::build(&index, DEFAULT_PARTITIONS)?;
    Ok(Box::into_raw(Box::new(GbkmvHandle { index, accel, scratch: QueryScratch::default() })))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gbkmv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build an index from a whitespace-tokenised file, one record per line.
/// `buffer_bits < 0` lets the tuner choose the buffer width.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_build(
    path: *const c_char,
    budget_ratio: f64,
    buffer_bits: i64,
    seed: u64,
    min_size: u32,
    out: *mut *mut GbkmvHandle,
) -> GbkmvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let ds = ingest_path(path, min_size as usize)?;
        let width = if buffer_bits < 0 { BufferSize::Auto } else { BufferSize::Bits(buffer_bits as usize) };
        let b = budget_units(budget_ratio, ds.stats.total)?;
        *out = wrap(build_gbkmv_index(&ds, b, width, &HashSource::computed(seed))?)?;
        Ok(())
    })
}

/// Load an index written by `gbkmv_save` or the `gbkmv build` command.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_load(path: *const c_char, out: *mut *mut GbkmvHandle) -> GbkmvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = wrap(load_index(str_arg(path, "path")?)?)?;
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_save(handle: *const GbkmvHandle, path: *const c_char) -> GbkmvStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| Fail(GbkmvStatus::NullArgument, "handle is null".into()))?;
        save_index(&h.index, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_free(handle: *mut GbkmvHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of records, buffer width in bits and hash threshold of an index.
///
/// # Safety
/// `handle` must come from this library; each out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_info(
    handle: *const GbkmvHandle,
    records: *mut u64,
    buffer_bits: *mut u64,
    tau: *mut f64,
) -> GbkmvStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| Fail(GbkmvStatus::NullArgument, "handle is null".into()))?;
        if let Some(p) = records.as_mut() {
            *p = h.index.len() as u64;
        }
        if let Some(p) = buffer_bits.as_mut() {
            *p = h.index.r() as u64;
        }
        if let Some(p) = tau.as_mut() {
            *p = h.index.tau();
        }
        Ok(())
    })
}

/// Records whose estimated containment of the whitespace-separated `tokens`
/// is at least `threshold`. An empty query yields an empty result.
///
/// # Safety
/// `handle` must come from this library and not be used concurrently;
/// `tokens` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_query(
    handle: *mut GbkmvHandle,
    tokens: *const c_char,
    threshold: f64,
    out: *mut *mut GbkmvResults,
) -> GbkmvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let h = handle.as_mut().ok_or_else(|| Fail(GbkmvStatus::NullArgument, "handle is null".into()))?;
        let line = str_arg(tokens, "tokens")?;
        let hits = match QueryEncoder::new(h.index.dictionary()).encode_line(line) {
            Some(q) => query(&h.index, &h.accel, &q, threshold, &mut h.scratch)?,
            None => Vec::new(),
        };
        *out = Box::into_raw(Box::new(GbkmvResults { hits }));
        Ok(())
    })
}

/// # Safety
/// `results` must come from `gbkmv_query`.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_results_len(results: *const GbkmvResults) -> u64 {
    results.as_ref().map_or(0, |r| r.hits.len() as u64)
}

/// Record id (0-based position among the records kept at ingest) and
/// estimated containment of hit `i`.
///
/// # Safety
/// `results` must come from `gbkmv_query`; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_results_get(
    results: *const GbkmvResults,
    i: u64,
    record: *mut u64,
    containment: *mut f64,
) -> GbkmvStatus {
    guard(|| {
        let r = results.as_ref().ok_or_else(|| Fail(GbkmvStatus::NullArgument, "results is null".into()))?;
        let &(id, c) = r
            .hits
            .get(i as usize)
            .ok_or_else(|| Fail(GbkmvStatus::OutOfRange, format!("hit {i} of {}", r.hits.len())))?;
        *out_arg(record, "record")? = id as u64;
        *out_arg(containment, "containment")? = c;
        Ok(())
    })
}

/// # Safety
/// `results` must come from `gbkmv_query` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gbkmv_results_free(results: *mut GbkmvResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
