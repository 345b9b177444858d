//! C ABI over `bws-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_generate` or `bws_score` and released with the matching `*_free`.
//! Every fallible function returns a [`BwsStatus`]; on failure the message
//! is available from [`bws_last_error`] on the same thread until the next
//! failing call. Strings are UTF-8 and NUL-terminated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bws_core::io;
use bws_core::reliability;
use bws_core::scoring::{self, Strictness};
use bws_core::stats::{self, BoundMethod};
use bws_core::tuplegen;
use bws_core::{Error, Response, ScoredLexicon, Term, TupleSet};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BwsStatus {
    Ok = 0,
    /// Input violated a documented precondition.
    Invalid = 1,
    /// A file could not be read or written.
    Io = 2,
    /// A required pointer argument was null.
    NullArgument = 3,
    /// The statistic is undefined for the input, e.g. zero variance.
    Degenerate = 4,
    /// An internal error; the library state is still usable.
    Internal = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BwsBoundMethod {
    Wilson = 0,
    ClopperPearson = 1,
}

/// Term list.
pub struct BwsTerms {
    terms: Vec<Term>,
}

/// Tuple design.
pub struct BwsDesign {
    set: TupleSet,
}

/// Responses validated against a design.
pub struct BwsResponses {
    responses: Vec<Response>,
}

/// Scores, sorted from highest to lowest.
pub struct BwsLexicon {
    lexicon: ScoredLexicon,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: BwsStatus, message: impl Into<String>) -> BwsStatus {
    set_error(message);
    status
}

fn from_error(e: Error) -> BwsStatus {
    let status = match &e {
        Error::Io { .. } => BwsStatus::Io,
        Error::Degenerate(_) => BwsStatus::Degenerate,
        _ => BwsStatus::Invalid,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> BwsStatus) -> BwsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BwsStatus::Internal, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(BwsStatus::NullArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, BwsStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(BwsStatus::Invalid, "path is not valid UTF-8"))
}

fn boxed<T>(value: T, out: *mut *mut T) -> BwsStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    BwsStatus::Ok
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn bws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads terms: one per line, or `id,text` rows when the path ends in `.csv`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_terms_load(path: *const c_char, out: *mut *mut BwsTerms) -> BwsStatus {
    guard(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::load_terms(&path) {
            Ok(terms) => boxed(BwsTerms { terms }, out),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `terms` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bws_terms_count(terms: *const BwsTerms) -> usize {
    terms.as_ref().map_or(0, |t| t.terms.len())
}

/// # Safety
/// `terms` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bws_terms_free(terms: *mut BwsTerms) {
    if !terms.is_null() {
        drop(Box::from_raw(terms));
    }
}

/// Generates `round(multiplier * n)` tuples over the terms.
///
/// # Safety
/// `terms` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_design_generate(
    terms: *const BwsTerms,
    multiplier: f64,
    seed: u64,
    out: *mut *mut BwsDesign,
) -> BwsStatus {
    guard(|| {
        non_null!(terms, out);
        let result = tuplegen::generate_tuples(&(*terms).terms, multiplier, seed).and_then(TupleSet::new);
        match result {
            Ok(set) => boxed(BwsDesign { set }, out),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_design_load(path: *const c_char, out: *mut *mut BwsDesign) -> BwsStatus {
    guard(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_tuples(&path) {
            Ok(set) => boxed(BwsDesign { set }, out),
            Err(e) => from_error(e),
        }
    })
}

/// Writes the design as tuples CSV.
///
/// # Safety
/// `design` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bws_design_save(design: *const BwsDesign, path: *const c_char) -> BwsStatus {
    guard(|| {
        non_null!(design, path);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::write_tuples(&path, (*design).set.tuples()) {
            Ok(()) => BwsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `design` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bws_design_count(design: *const BwsDesign) -> usize {
    design.as_ref().map_or(0, |d| d.set.len())
}

/// Checks the design against the balance criteria. `*passed` is set to 1
/// when all hold and 0 otherwise.
///
/// # Safety
/// `design` and `terms` must be live handles and `passed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_design_verify(
    design: *const BwsDesign,
    terms: *const BwsTerms,
    passed: *mut i32,
) -> BwsStatus {
    guard(|| {
        non_null!(design, terms, passed);
        let report = tuplegen::verify_design((*design).set.tuples(), &(*terms).terms);
        *passed = i32::from(report.all_passed());
        BwsStatus::Ok
    })
}

/// # Safety
/// `design` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bws_design_free(design: *mut BwsDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Loads a responses CSV and checks it against `design`. With `permissive`
/// nonzero, rows naming unknown tuples are dropped instead of failing.
///
/// # Safety
/// `path` must be a NUL-terminated string, `design` a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_responses_load(
    path: *const c_char,
    design: *const BwsDesign,
    permissive: i32,
    out: *mut *mut BwsResponses,
) -> BwsStatus {
    guard(|| {
        non_null!(path, design, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_responses_checked(&path, &(*design).set, permissive != 0) {
            Ok(v) => boxed(BwsResponses { responses: v.responses }, out),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `responses` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bws_responses_count(responses: *const BwsResponses) -> usize {
    responses.as_ref().map_or(0, |r| r.responses.len())
}

/// # Safety
/// `responses` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bws_responses_free(responses: *mut BwsResponses) {
    if !responses.is_null() {
        drop(Box::from_raw(responses));
    }
}

/// Scores every term. Strict mode fails when a term never appears in an
/// answered tuple; permissive mode leaves such terms out.
///
/// # Safety
/// `design` and `responses` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_score(
    design: *const BwsDesign,
    responses: *const BwsResponses,
    permissive: i32,
    out: *mut *mut BwsLexicon,
) -> BwsStatus {
    guard(|| {
        non_null!(design, responses, out);
        let mode = if permissive != 0 { Strictness::Permissive } else { Strictness::Strict };
        match scoring::compute_scores(&(*design).set, &(*responses).responses, mode) {
            Ok(scores) => {
                let ids = scores
                    .lexicon
                    .entries()
                    .iter()
                    .map(|e| CString::new(e.term_id.as_str()).unwrap_or_default())
                    .collect();
                boxed(
                    BwsLexicon {
                        lexicon: scores.lexicon,
                        ids,
                    },
                    out,
                )
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `lexicon` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bws_lexicon_len(lexicon: *const BwsLexicon) -> usize {
    lexicon.as_ref().map_or(0, |l| l.lexicon.len())
}

/// Entry `index` in rank order. `*term_id` borrows from the lexicon and is
/// valid until it is freed.
///
/// # Safety
/// `lexicon` must be a live handle; `term_id` and `score` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bws_lexicon_entry(
    lexicon: *const BwsLexicon,
    index: usize,
    term_id: *mut *const c_char,
    score: *mut f64,
) -> BwsStatus {
    guard(|| {
        non_null!(lexicon, term_id, score);
        let l = &*lexicon;
        match l.lexicon.entries().get(index) {
            Some(e) => {
                *term_id = l.ids[index].as_ptr();
                *score = e.score;
                BwsStatus::Ok
            }
            None => fail(BwsStatus::Invalid, format!("index {index} out of range")),
        }
    })
}

/// Writes the lexicon as `label<TAB>score` lines. Labels are term texts when
/// `terms` is non-null and ids otherwise.
///
/// # Safety
/// `lexicon` must be a live handle, `terms` a live handle or null, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bws_lexicon_save(
    lexicon: *const BwsLexicon,
    terms: *const BwsTerms,
    path: *const c_char,
) -> BwsStatus {
    guard(|| {
        non_null!(lexicon, path);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let terms = terms.as_ref().map(|t| t.terms.as_slice());
        match io::write_lexicon(&path, &(*lexicon).lexicon, terms) {
            Ok(()) => BwsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `lexicon` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bws_lexicon_free(lexicon: *mut BwsLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Mean split-half correlations over `iterations` random splits.
///
/// # Safety
/// `design` and `responses` must be live handles; output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn bws_split_half(
    design: *const BwsDesign,
    responses: *const BwsResponses,
    iterations: usize,
    seed: u64,
    spearman_mean: *mut f64,
    pearson_mean: *mut f64,
) -> BwsStatus {
    guard(|| {
        non_null!(design, responses, spearman_mean, pearson_mean);
        match reliability::split_half(&(*design).set, &(*responses).responses, iterations, seed) {
            Ok(r) => {
                *spearman_mean = r.spearman_mean;
                *pearson_mean = r.pearson_mean;
                BwsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn correlation(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> bws_core::Result<f64>,
) -> BwsStatus {
    guard(|| {
        non_null!(a, b, out);
        let (a, b) = (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n));
        match f(a, b) {
            Ok(v) => {
                *out = v;
                BwsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Spearman rank correlation of two arrays of length `n`, ties averaged.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bws_spearman(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> BwsStatus {
    correlation(a, b, n, out, stats::spearman_slices)
}

/// Pearson correlation of two arrays of length `n`.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bws_pearson(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> BwsStatus {
    correlation(a, b, n, out, stats::pearson_slices)
}

/// One-sided lower confidence bound for a binomial proportion.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bws_binom_lower_bound(
    successes: u64,
    trials: u64,
    confidence: f64,
    method: BwsBoundMethod,
    out: *mut f64,
) -> BwsStatus {
    guard(|| {
        non_null!(out);
        let method = match method {
            BwsBoundMethod::Wilson => BoundMethod::Wilson,
            BwsBoundMethod::ClopperPearson => BoundMethod::ClopperPearson,
        };
        match stats::binom_lower_bound_with(successes, trials, confidence, method) {
            Ok(v) => {
                *out = v;
                BwsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
