#ifndef QREFRESH_H
#define QREFRESH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Pass as `budget_ms` for an unlimited budget.
 */
#define QR_BUDGET_UNLIMITED UINT64_MAX

typedef enum QrStatus {
  QR_STATUS_OK = 0,
  QR_STATUS_NULL_POINTER = 1,
  QR_STATUS_INVALID_UTF8 = 2,
  QR_STATUS_IO = 3,
  QR_STATUS_PARSE = 4,
  QR_STATUS_CONFIG = 5,
  QR_STATUS_AUDIT = 6,
  QR_STATUS_OUT_OF_RANGE = 7,
  QR_STATUS_PANIC = 8,
} QrStatus;

/**
 * The execution log of one simulation run.
 */
typedef struct QrLog QrLog;

/**
 * A validated change trace.
 */
typedef struct QrTrace QrTrace;

/**
 * Metric row for one run. `effectivity_pct` is `100 * relevant / total_qe`
 * (0 when nothing ran).
 */
typedef struct QrMetrics {
  uint64_t total_qe;
  uint64_t irrelevant;
  uint64_t relevant;
  double effectivity_pct;
  uint64_t abs_delay;
  uint64_t max_delay;
  uint64_t abs_miss;
  uint64_t max_miss;
} QrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful call. Valid until the next call on the same thread.
 */
const char *qr_last_error(void);

/**
 * Library version as a static string.
 */
const char *qr_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QrStatus qr_trace_load(const char *path, struct QrTrace **out);

/**
 * Generates a synthetic trace. `settings` is NULL or `key=value` lines
 * applied over the defaults before `seed`, `n_queries` and `n_revisions`.
 *
 * # Safety
 * `settings` must be NULL or NUL-terminated; `out` must be valid.
 */
enum QrStatus qr_trace_generate(uint64_t seed,
                                uint32_t n_queries,
                                uint32_t n_revisions,
                                const char *settings,
                                struct QrTrace **out);

/**
 * # Safety
 * `trace` must come from this library; `path` must be NUL-terminated.
 */
enum QrStatus qr_trace_save(const struct QrTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be NULL or a handle not yet freed.
 */
void qr_trace_free(struct QrTrace *trace);

/**
 * Number of queries, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t qr_trace_n_queries(const struct QrTrace *trace);

/**
 * Number of revisions after the initial one, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t qr_trace_n_revisions(const struct QrTrace *trace);

/**
 * Ground-truth number of result changes, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t qr_trace_total_changes(const struct QrTrace *trace);

/**
 * Replays `trace` under `policy` (e.g. `"cr:lambda=0.5"`) with a per-slot
 * budget and writes the resulting metrics to `out`.
 *
 * # Safety
 * Pointers must be valid; `policy` must be NUL-terminated.
 */
enum QrStatus qr_simulate(const struct QrTrace *trace,
                          const char *policy,
                          uint64_t budget_ms,
                          struct QrMetrics *out);

/**
 * Like [`qr_simulate`] but hands back the execution log.
 *
 * # Safety
 * Pointers must be valid; `policy` must be NUL-terminated.
 */
enum QrStatus qr_run(const struct QrTrace *trace,
                     const char *policy,
                     uint64_t budget_ms,
                     struct QrLog **out);

/**
 * Audits `log` against `trace` and computes its metrics.
 *
 * # Safety
 * Pointers must be valid handles from this library.
 */
enum QrStatus qr_log_metrics(const struct QrTrace *trace,
                             const struct QrLog *log,
                             struct QrMetrics *out);

/**
 * Number of slots in the log, or 0 for NULL.
 *
 * # Safety
 * `log` must be NULL or a live handle.
 */
size_t qr_log_n_slots(const struct QrLog *log);

/**
 * Copies the query ids executed in `slot` (1-based) into `buf`, in
 * execution order. `*len` receives the full count even when it exceeds
 * `cap`, in which case only `cap` ids are written.
 *
 * # Safety
 * `buf` must hold `cap` elements (or be NULL with `cap == 0`); `len` must
 * be valid.
 */
enum QrStatus qr_log_executed(const struct QrLog *log,
                              size_t slot,
                              uint32_t *buf,
                              size_t cap,
                              size_t *len);

/**
 * Writes the line-oriented audit file for `log`.
 *
 * # Safety
 * `log` must be a live handle; `path` must be NUL-terminated.
 */
enum QrStatus qr_log_save(const struct QrLog *log, const char *path);

/**
 * # Safety
 * `log` must be NULL or a handle not yet freed.
 */
void qr_log_free(struct QrLog *log);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QREFRESH_H */
