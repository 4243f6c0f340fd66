//! C ABI for the cross-view metric learning library.
//!
//! Handles are opaque pointers owned by Rust; every constructor has a
//! matching `_free`, strings returned to the caller are freed with
//! [`xv_string_free`], and every fallible call returns an [`XvStatus`].
//! A thread-local message explains the most recent failure.
//!
//! The generated header lands in `include/xview.h` at build time.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use xview::cli::RunConfig;
use xview::data::{
    generate_synthetic, load_dataset, save_dataset, split_query_gallery, Dataset, GenConfig,
    SplitTag,
};
use xview::eval::{evaluate, FusionVariant, Metric};
use xview::model::{load_checkpoint, save_checkpoint, Checkpoint};
use xview::numerics::SeededRng;
use xview::trainer::{train_main, train_wcvl, WcvlMode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Io = 4,
    BadFormat = 5,
    Mismatch = 6,
    Internal = 7,
}

/// Dataset role, mirrors the library's split tag.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XvSplit {
    Train = 0,
    Query = 1,
    Gallery = 2,
}

impl From<XvSplit> for SplitTag {
    fn from(s: XvSplit) -> Self {
        match s {
            XvSplit::Train => SplitTag::Train,
            XvSplit::Query => SplitTag::Query,
            XvSplit::Gallery => SplitTag::Gallery,
        }
    }
}

/// Gradient routing for the cross-view stage.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XvWcvlMode {
    Pluggable = 0,
    EndToEnd = 1,
}

/// Order of normalization and averaging at fusion.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XvFusionVariant {
    Na = 0,
    An = 1,
    Nan = 2,
}

impl From<XvFusionVariant> for FusionVariant {
    fn from(v: XvFusionVariant) -> Self {
        match v {
            XvFusionVariant::Na => FusionVariant::Na,
            XvFusionVariant::An => FusionVariant::An,
            XvFusionVariant::Nan => FusionVariant::Nan,
        }
    }
}

/// Ranking metric.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XvMetric {
    Euclidean = 0,
    Dot = 1,
}

impl From<XvMetric> for Metric {
    fn from(m: XvMetric) -> Self {
        match m {
            XvMetric::Euclidean => Metric::Euclidean,
            XvMetric::Dot => Metric::Dot,
        }
    }
}

/// Opaque dataset handle.
pub struct XvDataset(Dataset);

/// Opaque model handle: architecture, stage metadata and parameters.
pub struct XvModel(Checkpoint);

thread_local! {
    static LAST_ERROR: std::cell::RefCell<CString> =
        std::cell::RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: XvStatus, msg: &str) -> XvStatus {
    set_error(msg);
    status
}

/// Message describing the most recent failure on this thread. Borrowed;
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn xv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by an `xv_` function that
/// transfers string ownership, and not yet freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn xv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, XvStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is NULL"));
        return Err(XvStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        XvStatus::InvalidUtf8
    })
}

fn hand_out<T>(out: *mut *mut T, value: T, what: &str) -> XvStatus {
    if out.is_null() {
        return fail(XvStatus::NullPointer, &format!("{what} out-pointer is NULL"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    XvStatus::Ok
}

fn data_status(e: &xview::data::DataError) -> XvStatus {
    use xview::data::DataError::*;
    match e {
        Io(_) => XvStatus::Io,
        FormatVersionMismatch { .. } | CorruptRecord(_) => XvStatus::BadFormat,
        _ => XvStatus::InvalidArgument,
    }
}

fn model_status(e: &xview::model::ModelError) -> XvStatus {
    use xview::model::ModelError::*;
    match e {
        Io(_) => XvStatus::Io,
        FormatVersionMismatch { .. } | CorruptCheckpoint(_) => XvStatus::BadFormat,
        InvalidArch(_) => XvStatus::InvalidArgument,
        _ => XvStatus::Mismatch,
    }
}

// --- datasets ---------------------------------------------------------------

/// Draws a synthetic dataset from a generator config given as JSON with the
/// fields of the library's `GenConfig` (num_identities, views_per_id,
/// obs_dim, id_scale, view_scale, noise_scale, seed).
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `out` must be a
/// valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_generate(
    config_json: *const c_char,
    draw_seed: u64,
    out: *mut *mut XvDataset,
) -> XvStatus {
    let json = match read_str(config_json, "config_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let cfg: GenConfig = match serde_json::from_str(json) {
        Ok(c) => c,
        Err(e) => return fail(XvStatus::InvalidArgument, &format!("generator config: {e}")),
    };
    match generate_synthetic(&cfg, draw_seed) {
        Ok(ds) => hand_out(out, XvDataset(ds), "dataset"),
        Err(e) => fail(data_status(&e), &e.to_string()),
    }
}

/// Loads a dataset file, tagging it with the given split.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_load(
    path: *const c_char,
    split: XvSplit,
    out: *mut *mut XvDataset,
) -> XvStatus {
    let path = match read_str(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match load_dataset(Path::new(path), split.into()) {
        Ok(ds) => hand_out(out, XvDataset(ds), "dataset"),
        Err(e) => fail(data_status(&e), &e.to_string()),
    }
}

/// Writes a dataset in the versioned binary format.
///
/// # Safety
/// `ds` must be a live dataset handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_save(ds: *const XvDataset, path: *const c_char) -> XvStatus {
    let Some(ds) = ds.as_ref() else {
        return fail(XvStatus::NullPointer, "dataset handle is NULL");
    };
    let path = match read_str(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match save_dataset(&ds.0, Path::new(path)) {
        Ok(()) => XvStatus::Ok,
        Err(e) => fail(data_status(&e), &e.to_string()),
    }
}

/// Splits a dataset into query and gallery halves, at least one record per
/// identity on each side.
///
/// # Safety
/// `ds` must be a live handle; `out_query`/`out_gallery` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_split(
    ds: *const XvDataset,
    query_fraction: f64,
    seed: u64,
    out_query: *mut *mut XvDataset,
    out_gallery: *mut *mut XvDataset,
) -> XvStatus {
    let Some(ds) = ds.as_ref() else {
        return fail(XvStatus::NullPointer, "dataset handle is NULL");
    };
    let mut rng = SeededRng::new(seed);
    match split_query_gallery(&ds.0, query_fraction, &mut rng) {
        Ok((q, g)) => {
            let status = hand_out(out_query, XvDataset(q), "query dataset");
            if status != XvStatus::Ok {
                return status;
            }
            hand_out(out_gallery, XvDataset(g), "gallery dataset")
        }
        Err(e) => fail(data_status(&e), &e.to_string()),
    }
}

/// Number of records.
///
/// # Safety
/// `ds` must be a live handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_len(ds: *const XvDataset) -> u64 {
    ds.as_ref().map_or(0, |d| d.0.records.len() as u64)
}

/// Declared identity count.
///
/// # Safety
/// `ds` must be a live handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_num_identities(ds: *const XvDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.0.num_identities)
}

/// Observation dimension.
///
/// # Safety
/// `ds` must be a live handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_obs_dim(ds: *const XvDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.0.obs_dim as u32)
}

/// Releases a dataset handle.
///
/// # Safety
/// `ds` must have come from this library and not be freed twice. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn xv_dataset_free(ds: *mut XvDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// --- training ----------------------------------------------------------------

/// Trains the main (discriminative) stage. `run_config_json` holds a full
/// run config document; its architecture and main-stage sections are used.
///
/// # Safety
/// `train` must be a live dataset handle; strings valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn xv_train_main(
    train: *const XvDataset,
    run_config_json: *const c_char,
    out: *mut *mut XvModel,
) -> XvStatus {
    let Some(train) = train.as_ref() else {
        return fail(XvStatus::NullPointer, "train dataset handle is NULL");
    };
    let json = match read_str(run_config_json, "run_config_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let cfg: RunConfig = match serde_json::from_str(json) {
        Ok(c) => c,
        Err(e) => return fail(XvStatus::InvalidArgument, &format!("run config: {e}")),
    };
    if let Err(e) = cfg.validate() {
        return fail(XvStatus::InvalidArgument, &e.to_string());
    }
    match train_main(&train.0, &cfg.arch, &cfg.main_stage_config()) {
        Ok((ckpt, _)) => hand_out(out, XvModel(ckpt), "model"),
        Err(e) => fail(XvStatus::Mismatch, &e.to_string()),
    }
}

/// Trains the cross-view stage on top of a main-stage model.
///
/// # Safety
/// `main_model` and `train` must be live handles; strings valid; `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn xv_train_wcvl(
    main_model: *const XvModel,
    train: *const XvDataset,
    run_config_json: *const c_char,
    mode: XvWcvlMode,
    out: *mut *mut XvModel,
) -> XvStatus {
    let Some(main_model) = main_model.as_ref() else {
        return fail(XvStatus::NullPointer, "main model handle is NULL");
    };
    let Some(train) = train.as_ref() else {
        return fail(XvStatus::NullPointer, "train dataset handle is NULL");
    };
    let json = match read_str(run_config_json, "run_config_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let cfg: RunConfig = match serde_json::from_str(json) {
        Ok(c) => c,
        Err(e) => return fail(XvStatus::InvalidArgument, &format!("run config: {e}")),
    };
    if let Err(e) = cfg.validate() {
        return fail(XvStatus::InvalidArgument, &e.to_string());
    }
    let mode = match mode {
        XvWcvlMode::Pluggable => WcvlMode::Pluggable,
        XvWcvlMode::EndToEnd => WcvlMode::EndToEnd,
    };
    match train_wcvl(&main_model.0, &train.0, &cfg.wcvl_stage_config(mode)) {
        Ok((ckpt, _)) => hand_out(out, XvModel(ckpt), "model"),
        Err(e) => fail(XvStatus::Mismatch, &e.to_string()),
    }
}

// --- models -------------------------------------------------------------------

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a valid string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn xv_model_load(path: *const c_char, out: *mut *mut XvModel) -> XvStatus {
    let path = match read_str(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match load_checkpoint(Path::new(path)) {
        Ok(ckpt) => hand_out(out, XvModel(ckpt), "model"),
        Err(e) => fail(model_status(&e), &e.to_string()),
    }
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn xv_model_save(model: *const XvModel, path: *const c_char) -> XvStatus {
    let Some(model) = model.as_ref() else {
        return fail(XvStatus::NullPointer, "model handle is NULL");
    };
    let path = match read_str(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match save_checkpoint(&model.0, Path::new(path)) {
        Ok(()) => XvStatus::Ok,
        Err(e) => fail(model_status(&e), &e.to_string()),
    }
}

/// Embedding dimension of the model's heads.
///
/// # Safety
/// `model` must be a live handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn xv_model_embedding_dim(model: *const XvModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.arch.embedding_dim() as u32)
}

/// Releases a model handle.
///
/// # Safety
/// `model` must have come from this library and not be freed twice. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn xv_model_free(model: *mut XvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// --- evaluation -----------------------------------------------------------------

/// Evaluates retrieval quality and writes the report as a JSON string the
/// caller owns (free with [`xv_string_free`]). Pass NULL for `wcvl_model`
/// to score the baseline features alone.
///
/// # Safety
/// Handles must be live (wcvl_model may be NULL); `out_report_json` valid.
#[no_mangle]
pub unsafe extern "C" fn xv_evaluate(
    main_model: *const XvModel,
    wcvl_model: *const XvModel,
    query: *const XvDataset,
    gallery: *const XvDataset,
    variant: XvFusionVariant,
    metric: XvMetric,
    out_report_json: *mut *mut c_char,
) -> XvStatus {
    let Some(main_model) = main_model.as_ref() else {
        return fail(XvStatus::NullPointer, "main model handle is NULL");
    };
    let Some(query) = query.as_ref() else {
        return fail(XvStatus::NullPointer, "query dataset handle is NULL");
    };
    let Some(gallery) = gallery.as_ref() else {
        return fail(XvStatus::NullPointer, "gallery dataset handle is NULL");
    };
    if out_report_json.is_null() {
        return fail(XvStatus::NullPointer, "report out-pointer is NULL");
    }
    let wcvl = wcvl_model.as_ref().map(|m| &m.0);
    match evaluate(
        &main_model.0,
        wcvl,
        &query.0,
        &gallery.0,
        variant.into(),
        metric.into(),
    ) {
        Ok(report) => {
            let json = report.to_json();
            match CString::new(json) {
                Ok(s) => {
                    *out_report_json = s.into_raw();
                    XvStatus::Ok
                }
                Err(_) => fail(XvStatus::Internal, "report contained a NUL byte"),
            }
        }
        Err(e) => fail(XvStatus::Mismatch, &e.to_string()),
    }
}
