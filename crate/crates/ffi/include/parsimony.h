#ifndef PARSIMONY_H
#define PARSIMONY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsmStatus {
  PSM_STATUS_OK = 0,
  PSM_STATUS_NULL_POINTER = 1,
  PSM_STATUS_INVALID_ARGUMENT = 2,
  PSM_STATUS_DIMENSION_MISMATCH = 3,
  PSM_STATUS_UNKNOWN_SOLVER = 4,
  PSM_STATUS_CONFIG = 5,
  PSM_STATUS_TOO_LARGE = 6,
  PSM_STATUS_NUMERICAL = 7,
  PSM_STATUS_BUFFER_TOO_SMALL = 8,
  PSM_STATUS_PANIC = 9,
} PsmStatus;

/**
 * Opaque handle to an `n × m` frame.
 */
typedef struct PsmFrame PsmFrame;

/**
 * Opaque handle to the outcome of a recovery.
 */
typedef struct PsmResult PsmResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *psm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *psm_version(void);

/**
 * Builds a frame from `rows * cols` values in row-major order.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles and `out` must be a
 * valid place to store the handle.
 */
enum PsmStatus psm_frame_new(uintptr_t rows,
                             uintptr_t cols,
                             const double *data,
                             struct PsmFrame **out);

/**
 * Releases a frame. NULL is ignored.
 *
 * # Safety
 * `frame` must come from [`psm_frame_new`] and not have been freed.
 */
void psm_frame_free(struct PsmFrame *frame);

/**
 * # Safety
 * `frame` must be a live handle or NULL (which yields 0).
 */
uintptr_t psm_frame_rows(const struct PsmFrame *frame);

/**
 * # Safety
 * `frame` must be a live handle or NULL (which yields 0).
 */
uintptr_t psm_frame_cols(const struct PsmFrame *frame);

/**
 * Mutual coherence of the frame's normalized columns.
 *
 * # Safety
 * `frame` must be a live handle and `out` writable.
 */
enum PsmStatus psm_frame_coherence(const struct PsmFrame *frame, double *out);

/**
 * Spark by exhaustive search; fails with `TooLarge` past the subset cap.
 *
 * # Safety
 * `frame` must be a live handle and `out` writable.
 */
enum PsmStatus psm_frame_spark(const struct PsmFrame *frame, uintptr_t *out);

/**
 * Recovers a sparse code for `signal` (length = frame rows) with the named
 * solver. `params_json` is a JSON object of solver parameters or NULL.
 *
 * # Safety
 * `frame` must be a live handle, `solver` a NUL-terminated string,
 * `params_json` NULL or NUL-terminated, `signal` must hold `len` doubles and
 * `out` must be writable.
 */
enum PsmStatus psm_recover(const struct PsmFrame *frame,
                           const char *solver,
                           const char *params_json,
                           const double *signal,
                           uintptr_t len,
                           struct PsmResult **out);

/**
 * Releases a result. NULL is ignored.
 *
 * # Safety
 * `result` must come from [`psm_recover`] and not have been freed.
 */
void psm_result_free(struct PsmResult *result);

/**
 * Length of the coefficient vector (frame columns).
 *
 * # Safety
 * `result` must be a live handle or NULL (which yields 0).
 */
uintptr_t psm_result_len(const struct PsmResult *result);

/**
 * Number of non-zero coefficients.
 *
 * # Safety
 * `result` must be a live handle or NULL (which yields 0).
 */
uintptr_t psm_result_support_size(const struct PsmResult *result);

/**
 * Copies the dense coefficients into `buf`, which must hold at least
 * [`psm_result_len`] doubles.
 *
 * # Safety
 * `result` must be a live handle and `buf` must hold `cap` writable doubles.
 */
enum PsmStatus psm_result_coefficients(const struct PsmResult *result, double *buf, uintptr_t cap);

/**
 * `‖Φα − s‖₂` of the returned code; NaN for NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
double psm_result_residual_norm(const struct PsmResult *result);

/**
 * # Safety
 * `result` must be a live handle or NULL (which yields 0).
 */
uintptr_t psm_result_iterations(const struct PsmResult *result);

/**
 * # Safety
 * `result` must be a live handle or NULL (which yields false).
 */
bool psm_result_converged(const struct PsmResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARSIMONY_H */
