//! C ABI over `ppm-core`.
//!
//! Handles are opaque and owned by the caller once returned: free a model with
//! [`ppm_model_free`] and a prediction list with [`ppm_predictions_free`].
//! Every fallible call returns a [`PpmStatus`]; on failure a description is
//! available from [`ppm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ppm_core::checkpoint::{Checkpoint, CheckpointError};
use ppm_core::eval::{damerau_levenshtein, sdl};
use ppm_core::eventlog::{encode_sequence, Event, LogError};
use ppm_core::infer::{beam_search, greedy_decode, BeamConfig, Prediction};
use ppm_core::nn::ModelError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PpmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Checksum = 4,
    Version = 5,
    Format = 6,
    UnknownActivity = 7,
    Dimension = 8,
    OutOfRange = 9,
    Internal = 10,
}

/// A loaded generator checkpoint.
pub struct PpmModel {
    checkpoint: Checkpoint,
    labels: Vec<CString>,
}

/// Ranked suffix predictions for one prefix.
pub struct PpmPredictions {
    items: Vec<Prediction>,
    remaining_days: Vec<f64>,
    durations_days: Vec<Vec<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: PpmStatus, msg: impl Into<String>) -> PpmStatus {
    set_error(msg);
    status
}

fn checkpoint_status(e: &CheckpointError) -> PpmStatus {
    match e {
        CheckpointError::Io(_) => PpmStatus::Io,
        CheckpointError::Checksum => PpmStatus::Checksum,
        CheckpointError::Version { .. } => PpmStatus::Version,
        CheckpointError::Format(_) => PpmStatus::Format,
        CheckpointError::Model(m) => model_status(m),
    }
}

fn model_status(e: &ModelError) -> PpmStatus {
    match e {
        ModelError::Dimension { .. } => PpmStatus::Dimension,
        ModelError::EmptySequence(_) => PpmStatus::InvalidArgument,
        _ => PpmStatus::Internal,
    }
}

/// Runs `f`, converting a panic into [`PpmStatus::Internal`].
fn guarded(f: impl FnOnce() -> PpmStatus) -> PpmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PpmStatus::Internal, "internal panic"),
    }
}

/// Message for the most recent failure on this thread, or NULL.
///
/// The pointer stays valid until the next `ppm_*` call on this thread.
#[no_mangle]
pub extern "C" fn ppm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ppm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_load(path: *const c_char, out: *mut *mut PpmModel) -> PpmStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(PpmStatus::NullArgument, "path and out must not be NULL");
        }
        *out = ptr::null_mut();
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(PpmStatus::InvalidArgument, "path is not UTF-8");
        };
        match Checkpoint::load(path) {
            Ok(checkpoint) => {
                let labels = checkpoint
                    .vocab
                    .labels()
                    .iter()
                    .map(|l| CString::new(l.as_str()).unwrap_or_default())
                    .collect();
                *out = Box::into_raw(Box::new(PpmModel { checkpoint, labels }));
                PpmStatus::Ok
            }
            Err(e) => fail(checkpoint_status(&e), e.to_string()),
        }
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`ppm_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_free(model: *mut PpmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of activities including the two reserved tokens (ids 0 and 1).
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_vocab_size(model: *const PpmModel) -> usize {
    model.as_ref().map_or(0, |m| m.labels.len())
}

/// Default decode cap stored in the checkpoint.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_max_length(model: *const PpmModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.max_length)
}

/// Label of activity `id`, owned by the model; NULL when out of range.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_activity_label(model: *const PpmModel, id: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.labels.get(id))
        .map_or(ptr::null(), |l| l.as_ptr())
}

/// Looks up the id of `label`.
///
/// # Safety
/// `model` must be a live handle, `label` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ppm_model_activity_id(
    model: *const PpmModel,
    label: *const c_char,
    out: *mut usize,
) -> PpmStatus {
    guarded(|| {
        let (Some(m), false, false) = (model.as_ref(), label.is_null(), out.is_null()) else {
            return fail(PpmStatus::NullArgument, "model, label and out must not be NULL");
        };
        let label = CStr::from_ptr(label).to_string_lossy();
        match m.checkpoint.vocab.id(&label) {
            Ok(id) => {
                *out = id;
                PpmStatus::Ok
            }
            Err(e) => fail(PpmStatus::UnknownActivity, e.to_string()),
        }
    })
}

/// Decodes up to `beam_size` suffixes for a prefix of `len` events.
///
/// `activities[i]` is an activity id and `durations_days[i]` the time since
/// the previous event (0 for the first). `beam_size == 1` is greedy decoding.
/// `max_length == 0` uses the checkpoint's cap.
///
/// # Safety
/// `activities` and `durations_days` must point to `len` readable values;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppm_predict(
    model: *const PpmModel,
    activities: *const usize,
    durations_days: *const f64,
    len: usize,
    beam_size: usize,
    max_length: usize,
    out: *mut *mut PpmPredictions,
) -> PpmStatus {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(PpmStatus::NullArgument, "model must not be NULL");
        };
        if out.is_null() || (len > 0 && (activities.is_null() || durations_days.is_null())) {
            return fail(PpmStatus::NullArgument, "prefix arrays and out must not be NULL");
        }
        *out = ptr::null_mut();
        if len == 0 {
            return fail(PpmStatus::InvalidArgument, "prefix must contain at least one event");
        }
        if beam_size == 0 {
            return fail(PpmStatus::InvalidArgument, "beam_size must be at least 1");
        }
        let ids = std::slice::from_raw_parts(activities, len);
        let durs = std::slice::from_raw_parts(durations_days, len);
        if let Some(d) = durs.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return fail(
                PpmStatus::InvalidArgument,
                format!("duration {d} is not a non-negative number"),
            );
        }
        let ck = &m.checkpoint;
        let events: Vec<Event> = ids
            .iter()
            .zip(durs)
            .map(|(&activity_id, &duration)| Event { activity_id, duration })
            .collect();
        let encoded = match encode_sequence(&events, &ck.vocab, &ck.scaler) {
            Ok(e) => e,
            Err(e @ LogError::UnknownActivity(_)) => return fail(PpmStatus::UnknownActivity, e.to_string()),
            Err(e) => return fail(PpmStatus::InvalidArgument, e.to_string()),
        };
        let cap = if max_length == 0 { ck.max_length } else { max_length };
        let decoded = if beam_size == 1 {
            greedy_decode(&ck.generator, &encoded, cap).map(|p| vec![p])
        } else {
            beam_search(&ck.generator, &encoded, BeamConfig::new(beam_size, cap))
        };
        match decoded {
            Ok(items) => {
                let durations_days = items.iter().map(|p| p.durations_days(&ck.scaler)).collect();
                let remaining_days = items.iter().map(|p| p.remaining_time(&ck.scaler)).collect();
                *out = Box::into_raw(Box::new(PpmPredictions {
                    items,
                    remaining_days,
                    durations_days,
                }));
                PpmStatus::Ok
            }
            Err(e) => fail(model_status(&e), e.to_string()),
        }
    })
}

/// Releases a prediction list. NULL is ignored.
///
/// # Safety
/// `preds` must come from [`ppm_predict`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ppm_predictions_free(preds: *mut PpmPredictions) {
    if !preds.is_null() {
        drop(Box::from_raw(preds));
    }
}

/// Number of ranked predictions.
///
/// # Safety
/// `preds` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ppm_predictions_count(preds: *const PpmPredictions) -> usize {
    preds.as_ref().map_or(0, |p| p.items.len())
}

/// Summary of prediction `rank` (0-based): length in events (trailing
/// `[EOS]` included when reached), log-probability, remaining time in days
/// and whether the cap cut it short. Any output pointer may be NULL.
///
/// # Safety
/// `preds` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppm_prediction_info(
    preds: *const PpmPredictions,
    rank: usize,
    len: *mut usize,
    log_prob: *mut f64,
    remaining_days: *mut f64,
    truncated: *mut bool,
) -> PpmStatus {
    guarded(|| {
        let Some(p) = preds.as_ref() else {
            return fail(PpmStatus::NullArgument, "preds must not be NULL");
        };
        let Some(item) = p.items.get(rank) else {
            return fail(PpmStatus::OutOfRange, format!("rank {rank} out of {}", p.items.len()));
        };
        if !len.is_null() {
            *len = item.activities.len();
        }
        if !log_prob.is_null() {
            *log_prob = item.log_prob;
        }
        if !remaining_days.is_null() {
            *remaining_days = p.remaining_days[rank];
        }
        if !truncated.is_null() {
            *truncated = item.truncated;
        }
        PpmStatus::Ok
    })
}

/// Copies the activity ids and per-step durations (days) of prediction
/// `rank` into caller buffers of `capacity` entries. Either buffer may be
/// NULL. Fails with `OutOfRange` if `capacity` is too small.
///
/// # Safety
/// Non-NULL buffers must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn ppm_prediction_events(
    preds: *const PpmPredictions,
    rank: usize,
    activities: *mut usize,
    durations_days: *mut f64,
    capacity: usize,
) -> PpmStatus {
    guarded(|| {
        let Some(p) = preds.as_ref() else {
            return fail(PpmStatus::NullArgument, "preds must not be NULL");
        };
        let Some(item) = p.items.get(rank) else {
            return fail(PpmStatus::OutOfRange, format!("rank {rank} out of {}", p.items.len()));
        };
        let n = item.activities.len();
        if capacity < n {
            return fail(PpmStatus::OutOfRange, format!("buffer holds {capacity}, need {n}"));
        }
        if !activities.is_null() {
            ptr::copy_nonoverlapping(item.activities.as_ptr(), activities, n);
        }
        if !durations_days.is_null() {
            ptr::copy_nonoverlapping(p.durations_days[rank].as_ptr(), durations_days, n);
        }
        PpmStatus::Ok
    })
}

unsafe fn sequence<'a>(p: *const u32, n: usize) -> Option<&'a [u32]> {
    if n == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, n))
    }
}

/// Optimal-string-alignment Damerau-Levenshtein distance.
///
/// # Safety
/// `a` and `b` must point to `a_len` and `b_len` values (or be NULL when the
/// length is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ppm_damerau_levenshtein(
    a: *const u32,
    a_len: usize,
    b: *const u32,
    b_len: usize,
    out: *mut usize,
) -> PpmStatus {
    guarded(|| match (sequence(a, a_len), sequence(b, b_len), out.is_null()) {
        (Some(a), Some(b), false) => {
            *out = damerau_levenshtein(a, b);
            PpmStatus::Ok
        }
        _ => fail(PpmStatus::NullArgument, "sequence or out pointer is NULL"),
    })
}

/// Similarity `1 − DL / max(|a|, |b|)`; 1 for two empty sequences.
///
/// # Safety
/// As for [`ppm_damerau_levenshtein`].
#[no_mangle]
pub unsafe extern "C" fn ppm_sdl(a: *const u32, a_len: usize, b: *const u32, b_len: usize, out: *mut f64) -> PpmStatus {
    guarded(|| match (sequence(a, a_len), sequence(b, b_len), out.is_null()) {
        (Some(a), Some(b), false) => {
            *out = sdl(a, b);
            PpmStatus::Ok
        }
        _ => fail(PpmStatus::NullArgument, "sequence or out pointer is NULL"),
    })
}
