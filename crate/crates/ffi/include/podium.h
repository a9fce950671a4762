#ifndef PODIUM_H
#define PODIUM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Values 1 to 19 mirror the engine's error codes.
 */
typedef enum {
  PODIUM_STATUS_OK = 0,
  PODIUM_STATUS_SCHEMA_ERROR = 1,
  PODIUM_STATUS_INVARIANT_VIOLATION = 2,
  PODIUM_STATUS_NOT_FOUND = 3,
  PODIUM_STATUS_RANGE_ERROR = 4,
  PODIUM_STATUS_UNDEFINED_FACTOR = 5,
  PODIUM_STATUS_UNKNOWN_FACTOR = 6,
  PODIUM_STATUS_NO_FACTORS_SELECTED = 7,
  PODIUM_STATUS_EMPTY_CANDIDATES = 8,
  PODIUM_STATUS_EMPTY_SCRIPT = 9,
  PODIUM_STATUS_EMPTY_CORPUS = 10,
  PODIUM_STATUS_DEGENERATE_DATA = 11,
  PODIUM_STATUS_SINGULAR_INFORMATION = 12,
  PODIUM_STATUS_NO_POSES = 13,
  PODIUM_STATUS_DUPLICATE_ID = 14,
  PODIUM_STATUS_INVALID_ID = 15,
  PODIUM_STATUS_INVALID_ARGUMENT = 16,
  PODIUM_STATUS_MODEL_ERROR = 17,
  PODIUM_STATUS_STORAGE_ERROR = 18,
  PODIUM_STATUS_INTERNAL = 19,
  /**
   * A required pointer argument was null.
   */
  PODIUM_STATUS_NULL_POINTER = 100,
  /**
   * A string argument was not valid UTF-8.
   */
  PODIUM_STATUS_INVALID_UTF8 = 101,
  /**
   * The engine panicked; the handle involved should be released.
   */
  PODIUM_STATUS_PANIC = 102,
} PodiumStatus;

/**
 * Opaque effectiveness model handle.
 */
typedef struct PodiumModel PodiumModel;

/**
 * Opaque corpus handle.
 */
typedef struct PodiumStore PodiumStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Engine version, a static string.
 */
const char *podium_version(void);

/**
 * Message of this thread's last failed call, or null after a success.
 * Valid until the next call on the same thread.
 */
const char *podium_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void podium_string_free(char *s);

/**
 * Opens, creating if needed, the corpus directory at `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
PodiumStatus podium_store_open(const char *path, PodiumStore **out);

/**
 * # Safety
 * `store` must come from [`podium_store_open`] and not be freed twice.
 */
void podium_store_free(PodiumStore *store);

/**
 * Validates and stores a bundle. Writes `{"schema_version":1,"id":…,"replaced":…}`.
 *
 * # Safety
 * `bundle_json` must point to `len` readable bytes; `out_json` must be writable.
 */
PodiumStatus podium_store_ingest(const PodiumStore *store,
                                 const uint8_t *bundle_json,
                                 size_t len,
                                 bool force,
                                 char **out_json);

/**
 * Writes the stored speeches' metadata, as `GET /api/speeches` returns it.
 *
 * # Safety
 * `out_json` must be writable.
 */
PodiumStatus podium_store_list(const PodiumStore *store, char **out_json);

/**
 * The built-in reference model.
 *
 * # Safety
 * `out` must be writable.
 */
PodiumStatus podium_model_reference(PodiumModel **out);

/**
 * Parses a model file.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `out` must be writable.
 */
PodiumStatus podium_model_from_json(const uint8_t *json, size_t len, PodiumModel **out);

/**
 * Serializes a model in the model file format.
 *
 * # Safety
 * `out_json` must be writable.
 */
PodiumStatus podium_model_to_json(const PodiumModel *model, char **out_json);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void podium_model_free(PodiumModel *model);

/**
 * Factor report of a stored speech over `[start_s, end_s)`, byte-identical
 * to `GET /api/speeches/{id}/factors`. Pass `NaN` for an open end.
 *
 * # Safety
 * Handles must be live; `id` NUL-terminated; `out_json` writable.
 */
PodiumStatus podium_analyze(const PodiumStore *store,
                            const PodiumModel *model,
                            const char *id,
                            double start_s,
                            double end_s,
                            char **out_json);

/**
 * Factor report of an unstored bundle.
 *
 * # Safety
 * `bundle_json` must point to `len` readable bytes; `out_json` writable.
 */
PodiumStatus podium_analyze_bundle(const PodiumModel *model,
                                   const uint8_t *bundle_json,
                                   size_t len,
                                   double start_s,
                                   double end_s,
                                   char **out_json);

/**
 * Runs a recommendation query given as JSON, as `POST /api/recommend` does.
 *
 * # Safety
 * `query_json` must be NUL-terminated; `out_json` writable.
 */
PodiumStatus podium_recommend(const PodiumStore *store, const char *query_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PODIUM_H */
