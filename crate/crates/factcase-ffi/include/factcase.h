#ifndef FACTCASE_H
#define FACTCASE_H

/* Generated by cbindgen from factcase-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  // A pointer was null or an argument malformed.
  FC_STATUS_INVALID_ARGUMENT = 1,
  // Configuration could not be loaded or validated.
  FC_STATUS_CONFIG = 2,
  // Dataset, store, or trace data was missing or malformed.
  FC_STATUS_DATA = 3,
  // A model backend call failed.
  FC_STATUS_BACKEND = 4,
  // Anything unexpected (serialization, poisoned state).
  FC_STATUS_INTERNAL = 5,
} FcStatus;

// Engine handle: configuration, agents, and the embedding provider.
typedef struct FcEngine FcEngine;

// Knowledge-base handle.
typedef struct FcStore FcStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *fc_version(void);

// Last error message for the current thread, or null when the last call
// succeeded. Free with [`fc_string_free`].
char *fc_last_error_message(void);

// Release a string returned by this library.
//
// # Safety
// `ptr` must be a pointer previously returned through an out-parameter or
// [`fc_last_error_message`], not yet freed. Null is a no-op.
void fc_string_free(char *ptr);

// Build an engine from a TOML config file (same format as the CLI).
//
// # Safety
// `config_path` must point to a NUL-terminated string; `out_engine` must
// be a valid pointer to receive the handle.
enum FcStatus fc_engine_new(const char *config_path, struct FcEngine **out_engine);

// # Safety
// `engine` must be a handle from [`fc_engine_new`], not yet freed. Null
// is a no-op.
void fc_engine_free(struct FcEngine *engine);

// Create an empty knowledge base bound to the engine's embedding
// provider.
//
// # Safety
// `engine` must be a live engine handle; `out_store` must be valid.
enum FcStatus fc_store_new(const struct FcEngine *engine, struct FcStore **out_store);

// Open a knowledge-base file, verifying it matches the engine's embedding
// provider.
//
// # Safety
// `engine` must be a live engine handle; `path` a NUL-terminated string;
// `out_store` valid.
enum FcStatus fc_store_open(const struct FcEngine *engine,
                            const char *path,
                            struct FcStore **out_store);

// Number of experience records in the store.
//
// # Safety
// `store` must be a live store handle.
uintptr_t fc_store_len(const struct FcStore *store);

// Persist the store to a file.
//
// # Safety
// `store` must be a live store handle; `path` a NUL-terminated string.
enum FcStatus fc_store_save(const struct FcStore *store, const char *path);

// # Safety
// `store` must be a handle from this library, not yet freed. Null is a
// no-op.
void fc_store_free(struct FcStore *store);

// Run the full deployment pipeline on one news case (JSON in the
// normalized dataset schema) and return the detection trace as JSON.
//
// # Safety
// `engine` and `store` must be live handles; `case_json` a
// NUL-terminated string; `out_trace_json` valid. Free the returned
// string with [`fc_string_free`].
enum FcStatus fc_detect_json(const struct FcEngine *engine,
                             const struct FcStore *store,
                             const char *case_json,
                             char **out_trace_json);

// Run the exploration step on one labeled case, appending a harvested
// experience to the store when the error-filter condition holds.
// `out_harvested` is set to 1 when a record was stored, 0 otherwise.
//
// # Safety
// `engine` and `store` must be live handles (`store` mutable and not
// aliased during the call); `case_json` a NUL-terminated string;
// `out_harvested` valid.
enum FcStatus fc_explore_json(const struct FcEngine *engine,
                              struct FcStore *store,
                              const char *case_json,
                              int32_t *out_harvested);

// Compute the metric suite over (predicted, gold) verdict pairs given as
// a JSON array of `[predicted, gold]` string pairs; returns the report as
// JSON.
//
// # Safety
// `pairs_json` must be a NUL-terminated string; `out_report_json` valid.
// Free the returned string with [`fc_string_free`].
enum FcStatus fc_compute_metrics_json(const char *pairs_json, char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTCASE_H */
