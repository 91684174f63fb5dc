#ifndef GBKMV_H
#define GBKMV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum GbkmvStatus {
  GBKMV_STATUS_OK = 0,
  GBKMV_STATUS_NULL_ARGUMENT = 1,
  GBKMV_STATUS_INVALID_UTF8 = 2,
  GBKMV_STATUS_IO = 3,
  GBKMV_STATUS_INVALID_PARAMETER = 4,
  GBKMV_STATUS_EMPTY_DATASET = 5,
  GBKMV_STATUS_BUDGET = 6,
  GBKMV_STATUS_FORMAT = 7,
  GBKMV_STATUS_CORRUPT = 8,
  GBKMV_STATUS_OUT_OF_RANGE = 9,
  GBKMV_STATUS_INTERNAL = 10,
} GbkmvStatus;

/**
 * A loaded or freshly built index together with its search structure.
 */
typedef struct GbkmvHandle GbkmvHandle;

/**
 * Hits of one query, ordered by record id.
 */
typedef struct GbkmvResults GbkmvResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *gbkmv_last_error(void);

/**
 * Build an index from a whitespace-tokenised file, one record per line.
 * `buffer_bits < 0` lets the tuner choose the buffer width.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum GbkmvStatus gbkmv_build(const char *path,
                             double budget_ratio,
                             int64_t buffer_bits,
                             uint64_t seed,
                             uint32_t min_size,
                             struct GbkmvHandle **out);

/**
 * Load an index written by `gbkmv_save` or the `gbkmv build` command.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum GbkmvStatus gbkmv_load(const char *path, struct GbkmvHandle **out);

/**
 * # Safety
 * `handle` must come from this library; `path` must be a valid C string.
 */
enum GbkmvStatus gbkmv_save(const struct GbkmvHandle *handle, const char *path);

/**
 * # Safety
 * `handle` must come from this library and not be used afterwards. Null is ignored.
 */
void gbkmv_free(struct GbkmvHandle *handle);

/**
 * Number of records, buffer width in bits and hash threshold of an index.
 *
 * # Safety
 * `handle` must come from this library; each out pointer may be null.
 */
enum GbkmvStatus gbkmv_info(const struct GbkmvHandle *handle,
                            uint64_t *records,
                            uint64_t *buffer_bits,
                            double *tau);

/**
 * Records whose estimated containment of the whitespace-separated `tokens`
 * is at least `threshold`. An empty query yields an empty result.
 *
 * # Safety
 * `handle` must come from this library and not be used concurrently;
 * `tokens` must be a valid C string and `out` a valid pointer.
 */
enum GbkmvStatus gbkmv_query(struct GbkmvHandle *handle,
                             const char *tokens,
                             double threshold,
                             struct GbkmvResults **out);

/**
 * # Safety
 * `results` must come from `gbkmv_query`.
 */
uint64_t gbkmv_results_len(const struct GbkmvResults *results);

/**
 * Record id (0-based position among the records kept at ingest) and
 * estimated containment of hit `i`.
 *
 * # Safety
 * `results` must come from `gbkmv_query`; out pointers must be valid.
 */
enum GbkmvStatus gbkmv_results_get(const struct GbkmvResults *results,
                                   uint64_t i,
                                   uint64_t *record,
                                   double *containment);

/**
 * # Safety
 * `results` must come from `gbkmv_query` and not be used afterwards. Null is ignored.
 */
void gbkmv_results_free(struct GbkmvResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBKMV_H */
