//! C ABI over the podium engine.
//!
//! Every call returns a [`PodiumStatus`]. On failure the message is kept
//! per thread and read with [`podium_last_error`]. Results are returned as
//! newline-free JSON strings owned by the caller and released with
//! [`podium_string_free`]. Handles are opaque and released with their
//! `_free` function; both handle types may be shared across threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use podium::api::views::{self, to_body, Span};
use podium::api::{ApiError, ErrorCode};
use podium::corpus::CorpusStore;
use podium::effectiveness::EffectivenessModel;
use podium::feature::load_bundle;
use podium::recommend::RecommendationQuery;
use podium::summary::GmmOptions;

/// Result of every call. Values 1 to 19 mirror the engine's error codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodiumStatus {
    Ok = 0,
    SchemaError = 1,
    InvariantViolation = 2,
    NotFound = 3,
    RangeError = 4,
    UndefinedFactor = 5,
    UnknownFactor = 6,
    NoFactorsSelected = 7,
    EmptyCandidates = 8,
    EmptyScript = 9,
    EmptyCorpus = 10,
    DegenerateData = 11,
    SingularInformation = 12,
    NoPoses = 13,
    DuplicateId = 14,
    InvalidId = 15,
    InvalidArgument = 16,
    ModelError = 17,
    StorageError = 18,
    Internal = 19,
    /// A required pointer argument was null.
    NullPointer = 100,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 101,
    /// The engine panicked; the handle involved should be released.
    Panic = 102,
}

impl From<ErrorCode> for PodiumStatus {
    fn from(c: ErrorCode) -> Self {
        match c {
            ErrorCode::SchemaError => PodiumStatus::SchemaError,
            ErrorCode::InvariantViolation => PodiumStatus::InvariantViolation,
            ErrorCode::NotFound => PodiumStatus::NotFound,
            ErrorCode::RangeError => PodiumStatus::RangeError,
            ErrorCode::UndefinedFactor => PodiumStatus::UndefinedFactor,
            ErrorCode::UnknownFactor => PodiumStatus::UnknownFactor,
            ErrorCode::NoFactorsSelected => PodiumStatus::NoFactorsSelected,
            ErrorCode::EmptyCandidates => PodiumStatus::EmptyCandidates,
            ErrorCode::EmptyScript => PodiumStatus::EmptyScript,
            ErrorCode::EmptyCorpus => PodiumStatus::EmptyCorpus,
            ErrorCode::DegenerateData => PodiumStatus::DegenerateData,
            ErrorCode::SingularInformation => PodiumStatus::SingularInformation,
            ErrorCode::NoPoses => PodiumStatus::NoPoses,
            ErrorCode::DuplicateId => PodiumStatus::DuplicateId,
            ErrorCode::InvalidId => PodiumStatus::InvalidId,
            ErrorCode::InvalidArgument => PodiumStatus::InvalidArgument,
            ErrorCode::ModelError => PodiumStatus::ModelError,
            ErrorCode::StorageError => PodiumStatus::StorageError,
            ErrorCode::Internal => PodiumStatus::Internal,
        }
    }
}

/// Opaque corpus handle.
pub struct PodiumStore {
    store: CorpusStore,
}

/// Opaque effectiveness model handle.
pub struct PodiumModel {
    model: EffectivenessModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PodiumStatus, String);

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure(e.code.into(), e.message)
    }
}

type Outcome<T> = Result<T, Failure>;

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Outcome<()>) -> PodiumStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PodiumStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PodiumStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PodiumStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PodiumStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Outcome<&'a [u8]> {
    if p.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Outcome<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn write_json(out: *mut *mut c_char, body: Vec<u8>) -> Outcome<()> {
    let s = CString::new(body).map_err(|e| Failure(PodiumStatus::Internal, e.to_string()))?;
    write_out(out, s.into_raw(), "out_json")
}

/// `NaN` leaves that end of the span open.
fn span(start_s: f64, end_s: f64) -> Span {
    Span {
        start: (!start_s.is_nan()).then_some(start_s),
        end: (!end_s.is_nan()).then_some(end_s),
    }
}

/// Engine version, a static string.
#[no_mangle]
pub extern "C" fn podium_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of this thread's last failed call, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn podium_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn podium_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens, creating if needed, the corpus directory at `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_store_open(path: *const c_char, out: *mut *mut PodiumStore) -> PodiumStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let store = CorpusStore::open(path).map_err(ApiError::from)?;
        write_out(out, Box::into_raw(Box::new(PodiumStore { store })), "out")
    })
}

/// # Safety
/// `store` must come from [`podium_store_open`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn podium_store_free(store: *mut PodiumStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Validates and stores a bundle. Writes `{"schema_version":1,"id":…,"replaced":…}`.
///
/// # Safety
/// `bundle_json` must point to `len` readable bytes; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_store_ingest(
    store: *const PodiumStore,
    bundle_json: *const u8,
    len: usize,
    force: bool,
    out_json: *mut *mut c_char,
) -> PodiumStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let bundle = load_bundle(bytes_arg(bundle_json, len, "bundle_json")?).map_err(ApiError::from)?;
        let o = s.store.ingest(bundle, force).map_err(ApiError::from)?;
        write_json(out_json, to_body(views::IngestResponse { id: o.id, replaced: o.replaced }))
    })
}

/// Writes the stored speeches' metadata, as `GET /api/speeches` returns it.
///
/// # Safety
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_store_list(store: *const PodiumStore, out_json: *mut *mut c_char) -> PodiumStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let snap = s.store.snapshot().map_err(ApiError::from)?;
        write_json(out_json, to_body(views::list_speeches(&snap)))
    })
}

/// The built-in reference model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_model_reference(out: *mut *mut PodiumModel) -> PodiumStatus {
    guard(|| {
        let model = EffectivenessModel::reference();
        write_out(out, Box::into_raw(Box::new(PodiumModel { model })), "out")
    })
}

/// Parses a model file.
///
/// # Safety
/// `json` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_model_from_json(json: *const u8, len: usize, out: *mut *mut PodiumModel) -> PodiumStatus {
    guard(|| {
        let model = EffectivenessModel::from_json(bytes_arg(json, len, "json")?).map_err(ApiError::from)?;
        write_out(out, Box::into_raw(Box::new(PodiumModel { model })), "out")
    })
}

/// Serializes a model in the model file format.
///
/// # Safety
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn podium_model_to_json(model: *const PodiumModel, out_json: *mut *mut c_char) -> PodiumStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_json(out_json, m.model.to_json().into_bytes())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn podium_model_free(model: *mut PodiumModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Factor report of a stored speech over `[start_s, end_s)`, byte-identical
/// to `GET /api/speeches/{id}/factors`. Pass `NaN` for an open end.
///
/// # Safety
/// Handles must be live; `id` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn podium_analyze(
    store: *const PodiumStore,
    model: *const PodiumModel,
    id: *const c_char,
    start_s: f64,
    end_s: f64,
    out_json: *mut *mut c_char,
) -> PodiumStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let m = handle(model, "model")?;
        let id = str_arg(id, "id")?;
        let snap = s.store.snapshot().map_err(ApiError::from)?;
        let report = views::factor_report(&snap, &m.model, id, span(start_s, end_s))?;
        write_json(out_json, to_body(report))
    })
}

/// Factor report of an unstored bundle.
///
/// # Safety
/// `bundle_json` must point to `len` readable bytes; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn podium_analyze_bundle(
    model: *const PodiumModel,
    bundle_json: *const u8,
    len: usize,
    start_s: f64,
    end_s: f64,
    out_json: *mut *mut c_char,
) -> PodiumStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let bundle = load_bundle(bytes_arg(bundle_json, len, "bundle_json")?).map_err(ApiError::from)?;
        let view = span(start_s, end_s).view_of(&bundle)?;
        write_json(out_json, to_body(views::report_for_view(&m.model, &view, None)))
    })
}

/// Runs a recommendation query given as JSON, as `POST /api/recommend` does.
///
/// # Safety
/// `query_json` must be NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn podium_recommend(
    store: *const PodiumStore,
    query_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PodiumStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let q: RecommendationQuery = serde_json::from_str(str_arg(query_json, "query_json")?)
            .map_err(|e| Failure(PodiumStatus::SchemaError, e.to_string()))?;
        let snap = s.store.snapshot().map_err(ApiError::from)?;
        let r = views::recommend_with_twins(&snap, &GmmOptions::default(), &q)?;
        write_json(out_json, to_body(r))
    })
}
