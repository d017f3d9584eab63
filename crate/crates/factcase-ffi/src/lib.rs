//! C ABI for the detection engine.
//!
//! Conventions:
//! - Opaque handles ([`FcEngine`], [`FcStore`]) are created and destroyed
//!   by this library; never free them with anything but the matching
//!   `*_free` function.
//! - Every fallible call returns an [`FcStatus`]; on failure,
//!   [`fc_last_error_message`] returns a description of what went wrong
//!   for the current thread.
//! - Strings returned through out-parameters are NUL-terminated, UTF-8,
//!   allocated by this library, and must be released with
//!   [`fc_string_free`].
//! - Structured data crosses the boundary as JSON text in the same
//!   schemas the CLI reads and writes (news cases in, detection traces
//!   out).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use factcase::config::EngineConfig;
use factcase::deploy;
use factcase::explore::{explore_sample, SampleOutcome};
use factcase::kb::{CaseStore, EmbeddingProvider};
use factcase::metrics;
use factcase::model::{NewsCase, Verdict};

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    /// A pointer was null or an argument malformed.
    InvalidArgument = 1,
    /// Configuration could not be loaded or validated.
    Config = 2,
    /// Dataset, store, or trace data was missing or malformed.
    Data = 3,
    /// A model backend call failed.
    Backend = 4,
    /// Anything unexpected (serialization, poisoned state).
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(status: FcStatus, message: impl Into<String>) -> FcStatus {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message.replace('\0', " ")).ok();
    });
    status
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

/// Engine handle: configuration, agents, and the embedding provider.
pub struct FcEngine {
    config: EngineConfig,
    agents: factcase::agents::Agents,
    provider: Box<dyn EmbeddingProvider>,
}

/// Knowledge-base handle.
pub struct FcStore {
    inner: CaseStore,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, FcStatus> {
    if ptr.is_null() {
        return Err(set_error(
            FcStatus::InvalidArgument,
            format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(
            FcStatus::InvalidArgument,
            format!("{name} must be valid UTF-8"),
        )
    })
}

fn out_string(text: String, out: *mut *mut c_char) -> FcStatus {
    let c = match CString::new(text.replace('\0', " ")) {
        Ok(c) => c,
        Err(_) => return set_error(FcStatus::Internal, "output contained interior NUL"),
    };
    unsafe { *out = c.into_raw() };
    FcStatus::Ok
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Last error message for the current thread, or null when the last call
/// succeeded. Free with [`fc_string_free`].
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `ptr` must be a pointer previously returned through an out-parameter or
/// [`fc_last_error_message`], not yet freed. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fc_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Build an engine from a TOML config file (same format as the CLI).
///
/// # Safety
/// `config_path` must point to a NUL-terminated string; `out_engine` must
/// be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn fc_engine_new(
    config_path: *const c_char,
    out_engine: *mut *mut FcEngine,
) -> FcStatus {
    clear_error();
    if out_engine.is_null() {
        return set_error(FcStatus::InvalidArgument, "out_engine must not be null");
    }
    let path = match cstr_arg(config_path, "config_path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    let config = match EngineConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return set_error(FcStatus::Config, e.to_string()),
    };
    let agents = match config.build_agents() {
        Ok(a) => a,
        Err(e) => return set_error(FcStatus::Config, e.to_string()),
    };
    let provider = match config.build_provider() {
        Ok(p) => p,
        Err(e) => return set_error(FcStatus::Config, e.to_string()),
    };
    let engine = Box::new(FcEngine {
        config,
        agents,
        provider,
    });
    *out_engine = Box::into_raw(engine);
    FcStatus::Ok
}

/// # Safety
/// `engine` must be a handle from [`fc_engine_new`], not yet freed. Null
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fc_engine_free(engine: *mut FcEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Create an empty knowledge base bound to the engine's embedding
/// provider.
///
/// # Safety
/// `engine` must be a live engine handle; `out_store` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_store_new(
    engine: *const FcEngine,
    out_store: *mut *mut FcStore,
) -> FcStatus {
    clear_error();
    if engine.is_null() || out_store.is_null() {
        return set_error(FcStatus::InvalidArgument, "engine and out_store must not be null");
    }
    let engine = &*engine;
    let store = CaseStore::new(engine.provider.as_ref());
    *out_store = Box::into_raw(Box::new(FcStore { inner: store }));
    FcStatus::Ok
}

/// Open a knowledge-base file, verifying it matches the engine's embedding
/// provider.
///
/// # Safety
/// `engine` must be a live engine handle; `path` a NUL-terminated string;
/// `out_store` valid.
#[no_mangle]
pub unsafe extern "C" fn fc_store_open(
    engine: *const FcEngine,
    path: *const c_char,
    out_store: *mut *mut FcStore,
) -> FcStatus {
    clear_error();
    if engine.is_null() || out_store.is_null() {
        return set_error(FcStatus::InvalidArgument, "engine and out_store must not be null");
    }
    let engine = &*engine;
    let path = match cstr_arg(path, "path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    match CaseStore::load_for_provider(&path, engine.provider.as_ref()) {
        Ok(store) => {
            *out_store = Box::into_raw(Box::new(FcStore { inner: store }));
            FcStatus::Ok
        }
        Err(e) => set_error(FcStatus::Data, e.to_string()),
    }
}

/// Number of experience records in the store.
///
/// # Safety
/// `store` must be a live store handle.
#[no_mangle]
pub unsafe extern "C" fn fc_store_len(store: *const FcStore) -> usize {
    if store.is_null() {
        return 0;
    }
    (*store).inner.len()
}

/// Persist the store to a file.
///
/// # Safety
/// `store` must be a live store handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_store_save(store: *const FcStore, path: *const c_char) -> FcStatus {
    clear_error();
    if store.is_null() {
        return set_error(FcStatus::InvalidArgument, "store must not be null");
    }
    let path = match cstr_arg(path, "path") {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    match (*store).inner.save(Path::new(&path)) {
        Ok(()) => FcStatus::Ok,
        Err(e) => set_error(FcStatus::Data, e.to_string()),
    }
}

/// # Safety
/// `store` must be a handle from this library, not yet freed. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn fc_store_free(store: *mut FcStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

fn parse_case(json: &str) -> Result<NewsCase, FcStatus> {
    let case = factcase::dataset::parse_case_json(json)
        .map_err(|e| set_error(FcStatus::Data, format!("bad case JSON: {e}")))?;
    case.validate()
        .map_err(|e| set_error(FcStatus::Data, e.to_string()))?;
    Ok(case)
}

/// Run the full deployment pipeline on one news case (JSON in the
/// normalized dataset schema) and return the detection trace as JSON.
///
/// # Safety
/// `engine` and `store` must be live handles; `case_json` a
/// NUL-terminated string; `out_trace_json` valid. Free the returned
/// string with [`fc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_detect_json(
    engine: *const FcEngine,
    store: *const FcStore,
    case_json: *const c_char,
    out_trace_json: *mut *mut c_char,
) -> FcStatus {
    clear_error();
    if engine.is_null() || store.is_null() || out_trace_json.is_null() {
        return set_error(
            FcStatus::InvalidArgument,
            "engine, store, and out_trace_json must not be null",
        );
    }
    let engine = &*engine;
    let store = &*store;
    let json = match cstr_arg(case_json, "case_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let case = match parse_case(json) {
        Ok(c) => c,
        Err(status) => return status,
    };
    let trace = match deploy::detect(
        &engine.agents,
        engine.provider.as_ref(),
        &store.inner,
        &case,
        &engine.config.ablation,
    ) {
        Ok(t) => t,
        Err(e) => return set_error(FcStatus::Backend, e.to_string()),
    };
    out_string(
        serde_json::to_string(&trace).expect("trace serializes"),
        out_trace_json,
    )
}

/// Run the exploration step on one labeled case, appending a harvested
/// experience to the store when the error-filter condition holds.
/// `out_harvested` is set to 1 when a record was stored, 0 otherwise.
///
/// # Safety
/// `engine` and `store` must be live handles (`store` mutable and not
/// aliased during the call); `case_json` a NUL-terminated string;
/// `out_harvested` valid.
#[no_mangle]
pub unsafe extern "C" fn fc_explore_json(
    engine: *const FcEngine,
    store: *mut FcStore,
    case_json: *const c_char,
    out_harvested: *mut i32,
) -> FcStatus {
    clear_error();
    if engine.is_null() || store.is_null() || out_harvested.is_null() {
        return set_error(
            FcStatus::InvalidArgument,
            "engine, store, and out_harvested must not be null",
        );
    }
    let engine = &*engine;
    let store = &mut *store;
    let json = match cstr_arg(case_json, "case_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let case = match parse_case(json) {
        Ok(c) => c,
        Err(status) => return status,
    };
    if case.gold_label.is_none() {
        return set_error(FcStatus::Data, "exploration requires a gold label");
    }
    match explore_sample(&engine.agents, engine.provider.as_ref(), &case) {
        Ok(SampleOutcome::Harvested(record)) => {
            if let Err(e) = store.inner.add_case(*record) {
                return set_error(FcStatus::Data, e.to_string());
            }
            *out_harvested = 1;
            FcStatus::Ok
        }
        Ok(_) => {
            *out_harvested = 0;
            FcStatus::Ok
        }
        Err(e) => set_error(FcStatus::Backend, e.to_string()),
    }
}

/// Compute the metric suite over (predicted, gold) verdict pairs given as
/// a JSON array of `[predicted, gold]` string pairs; returns the report as
/// JSON.
///
/// # Safety
/// `pairs_json` must be a NUL-terminated string; `out_report_json` valid.
/// Free the returned string with [`fc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_compute_metrics_json(
    pairs_json: *const c_char,
    out_report_json: *mut *mut c_char,
) -> FcStatus {
    clear_error();
    if out_report_json.is_null() {
        return set_error(FcStatus::InvalidArgument, "out_report_json must not be null");
    }
    let json = match cstr_arg(pairs_json, "pairs_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let pairs: Vec<(Verdict, Verdict)> = match serde_json::from_str(json) {
        Ok(p) => p,
        Err(e) => return set_error(FcStatus::Data, format!("bad pairs JSON: {e}")),
    };
    let report = match metrics::compute_metrics(&pairs) {
        Ok(r) => r,
        Err(e) => return set_error(FcStatus::Data, e.to_string()),
    };
    out_string(
        serde_json::to_string(&report).expect("report serializes"),
        out_report_json,
    )
}
