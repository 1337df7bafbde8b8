//! C ABI over the workpulse toolkit.
//!
//! Every fallible function returns a `WpStatus` code (0 on success) and
//! writes its result through an out pointer. The message for the last failure
//! on the calling thread is available from `wp_last_error_message`.
//! Objects are opaque handles released with their `_free` function; strings
//! returned by the library are released with `wp_string_free`.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use workpulse::analytics::kendall_tau;
use workpulse::annotation::{fleiss_kappa, krippendorff_alpha};
use workpulse::corpus::{normalize_text, tokenize, SlangDictionary};
use workpulse::lexicon::{score_category, Lexicon};
use workpulse::model::{load_model, LinearModel};
use workpulse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    NotFound = 6,
    DegenerateModel = 7,
    Panic = 99,
}

/// Trained classifier.
pub struct WpModel(LinearModel);

/// Word-category lexicon.
pub struct WpLexicon(Lexicon);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(WpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => WpStatus::Io,
            Error::Json(_) | Error::Csv(_) | Error::Format { .. } => WpStatus::Format,
            Error::NotFound(_) | Error::UnknownCategory(_) => WpStatus::NotFound,
            Error::DegenerateModel => WpStatus::DegenerateModel,
            _ => WpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(WpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status code and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WpStatus::Ok as i32,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status as i32
        }
        Err(_) => {
            set_error("internal panic");
            WpStatus::Panic as i32
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn wp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalized text (lowercased, mentions and links replaced). The result
/// must be released with `wp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn wp_normalize(text: *const c_char, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let text = str_arg(text, "text")?;
        let norm = normalize_text(text, &SlangDictionary::new());
        let c = CString::new(norm).map_err(|_| Failure(WpStatus::InvalidArgument, "text holds NUL".into()))?;
        write_out(out, c.into_raw(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn wp_model_load(path: *const c_char, out: *mut *mut WpModel) -> i32 {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = load_model(path)?;
        write_out(out, Box::into_raw(Box::new(WpModel(model))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn wp_model_free(model: *mut WpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wp_model_num_features(model: *const WpModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.weights.len())
}

/// Signed distance of `text` from the model's hyperplane; positive means
/// job-related.
#[no_mangle]
pub unsafe extern "C" fn wp_model_score(model: *const WpModel, text: *const c_char, out: *mut f64) -> i32 {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let text = str_arg(text, "text")?;
        let tokens = tokenize(&normalize_text(text, &SlangDictionary::new()));
        let score = model.0.score_tokens(&tokens)?;
        write_out(out, score.value(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn wp_lexicon_parse(source: *const c_char, out: *mut *mut WpLexicon) -> i32 {
    guard(|| {
        let lex = Lexicon::parse(str_arg(source, "source")?)?;
        write_out(out, Box::into_raw(Box::new(WpLexicon(lex))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn wp_lexicon_load(path: *const c_char, out: *mut *mut WpLexicon) -> i32 {
    guard(|| {
        let lex = Lexicon::load(str_arg(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(WpLexicon(lex))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn wp_lexicon_free(lexicon: *mut WpLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Share of the tokens of `text` matched by `category`. `matches` may be null.
#[no_mangle]
pub unsafe extern "C" fn wp_lexicon_score(
    lexicon: *const WpLexicon,
    text: *const c_char,
    category: *const c_char,
    ratio: *mut f64,
    matches: *mut usize,
) -> i32 {
    guard(|| {
        let lex = lexicon.as_ref().ok_or_else(|| null("lexicon"))?;
        let text = str_arg(text, "text")?;
        let category = str_arg(category, "category")?;
        let tokens = tokenize(&normalize_text(text, &SlangDictionary::new()));
        let s = score_category(&tokens, &lex.0, category)?;
        if !matches.is_null() {
            matches.write(s.match_count);
        }
        write_out(ratio, s.ratio, "ratio")
    })
}

/// Fleiss' kappa over a row-major `n_items x n_categories` count table whose
/// rows each sum to `raters`.
#[no_mangle]
pub unsafe extern "C" fn wp_fleiss_kappa(
    counts: *const u32,
    n_items: usize,
    n_categories: usize,
    raters: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let len = n_items
            .checked_mul(n_categories)
            .ok_or_else(|| Failure(WpStatus::InvalidArgument, "table size overflows".into()))?;
        let flat = slice_arg(counts, len, "counts")?;
        if n_categories == 0 {
            return Err(Failure(WpStatus::InvalidArgument, "no categories".into()));
        }
        let rows: Vec<Vec<u32>> = flat.chunks(n_categories).map(<[u32]>::to_vec).collect();
        write_out(out, fleiss_kappa(&rows, raters)?, "out")
    })
}

/// Nominal Krippendorff's alpha over a row-major `n_items x n_coders` grid
/// of category codes; negative codes mark missing values.
#[no_mangle]
pub unsafe extern "C" fn wp_krippendorff_alpha(
    values: *const i32,
    n_items: usize,
    n_coders: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let len = n_items
            .checked_mul(n_coders)
            .ok_or_else(|| Failure(WpStatus::InvalidArgument, "grid size overflows".into()))?;
        let flat = slice_arg(values, len, "values")?;
        if n_coders == 0 {
            return Err(Failure(WpStatus::InvalidArgument, "no coders".into()));
        }
        let grid: Vec<Vec<Option<i32>>> = flat
            .chunks(n_coders)
            .map(|row| row.iter().map(|&v| (v >= 0).then_some(v)).collect())
            .collect();
        write_out(out, krippendorff_alpha(&grid)?, "out")
    })
}

/// Tau-b between two score arrays over the same `n` items.
#[no_mangle]
pub unsafe extern "C" fn wp_kendall_tau(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let x = slice_arg(x, n, "x")?;
        let y = slice_arg(y, n, "y")?;
        let ids = |v: &[f64]| -> Vec<(String, f64)> { v.iter().enumerate().map(|(i, &s)| (i.to_string(), s)).collect() };
        write_out(out, kendall_tau(&ids(x), &ids(y))?.tau, "out")
    })
}
