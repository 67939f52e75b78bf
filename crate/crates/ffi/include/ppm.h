#ifndef PPM_H
#define PPM_H

#pragma once

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum PpmStatus {
  PPM_STATUS_OK = 0,
  PPM_STATUS_NULL_ARGUMENT = 1,
  PPM_STATUS_INVALID_ARGUMENT = 2,
  PPM_STATUS_IO = 3,
  PPM_STATUS_CHECKSUM = 4,
  PPM_STATUS_VERSION = 5,
  PPM_STATUS_FORMAT = 6,
  PPM_STATUS_UNKNOWN_ACTIVITY = 7,
  PPM_STATUS_DIMENSION = 8,
  PPM_STATUS_OUT_OF_RANGE = 9,
  PPM_STATUS_INTERNAL = 10,
} PpmStatus;

// A loaded generator checkpoint.
typedef struct PpmModel PpmModel;

// Ranked suffix predictions for one prefix.
typedef struct PpmPredictions PpmPredictions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL.
//
// The pointer stays valid until the next `ppm_*` call on this thread.
const char *ppm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ppm_version(void);

// Loads a checkpoint file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PpmStatus ppm_model_load(const char *path, struct PpmModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from [`ppm_model_load`] and not be used afterwards.
void ppm_model_free(struct PpmModel *model);

// Number of activities including the two reserved tokens (ids 0 and 1).
//
// # Safety
// `model` must be a live handle or NULL.
size_t ppm_model_vocab_size(const struct PpmModel *model);

// Default decode cap stored in the checkpoint.
//
// # Safety
// `model` must be a live handle or NULL.
size_t ppm_model_max_length(const struct PpmModel *model);

// Label of activity `id`, owned by the model; NULL when out of range.
//
// # Safety
// `model` must be a live handle or NULL.
const char *ppm_model_activity_label(const struct PpmModel *model, size_t id);

// Looks up the id of `label`.
//
// # Safety
// `model` must be a live handle, `label` NUL-terminated, `out` writable.
enum PpmStatus ppm_model_activity_id(const struct PpmModel *model, const char *label, size_t *out);

// Decodes up to `beam_size` suffixes for a prefix of `len` events.
//
// `activities[i]` is an activity id and `durations_days[i]` the time since
// the previous event (0 for the first). `beam_size == 1` is greedy decoding.
// `max_length == 0` uses the checkpoint's cap.
//
// # Safety
// `activities` and `durations_days` must point to `len` readable values;
// `out` must be writable.
enum PpmStatus ppm_predict(const struct PpmModel *model,
                           const size_t *activities,
                           const double *durations_days,
                           size_t len,
                           size_t beam_size,
                           size_t max_length,
                           struct PpmPredictions **out);

// Releases a prediction list. NULL is ignored.
//
// # Safety
// `preds` must come from [`ppm_predict`] and not be used afterwards.
void ppm_predictions_free(struct PpmPredictions *preds);

// Number of ranked predictions.
//
// # Safety
// `preds` must be a live handle or NULL.
size_t ppm_predictions_count(const struct PpmPredictions *preds);

// Summary of prediction `rank` (0-based): length in events (trailing
// `[EOS]` included when reached), log-probability, remaining time in days
// and whether the cap cut it short. Any output pointer may be NULL.
//
// # Safety
// `preds` must be a live handle; non-NULL outputs must be writable.
enum PpmStatus ppm_prediction_info(const struct PpmPredictions *preds,
                                   size_t rank,
                                   size_t *len,
                                   double *log_prob,
                                   double *remaining_days,
                                   bool *truncated);

// Copies the activity ids and per-step durations (days) of prediction
// `rank` into caller buffers of `capacity` entries. Either buffer may be
// NULL. Fails with `OutOfRange` if `capacity` is too small.
//
// # Safety
// Non-NULL buffers must have room for `capacity` values.
enum PpmStatus ppm_prediction_events(const struct PpmPredictions *preds,
                                     size_t rank,
                                     size_t *activities,
                                     double *durations_days,
                                     size_t capacity);

// Optimal-string-alignment Damerau-Levenshtein distance.
//
// # Safety
// `a` and `b` must point to `a_len` and `b_len` values (or be NULL when the
// length is 0); `out` must be writable.
enum PpmStatus ppm_damerau_levenshtein(const uint32_t *a,
                                       size_t a_len,
                                       const uint32_t *b,
                                       size_t b_len,
                                       size_t *out);

// Similarity `1 − DL / max(|a|, |b|)`; 1 for two empty sequences.
//
// # Safety
// As for [`ppm_damerau_levenshtein`].
enum PpmStatus ppm_sdl(const uint32_t *a,
                       size_t a_len,
                       const uint32_t *b,
                       size_t b_len,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPM_H */
