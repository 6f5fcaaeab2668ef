#ifndef ECCRM_H
#define ECCRM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum EccrmStatus {
  ECCRM_STATUS_OK = 0,
  ECCRM_STATUS_NULL_POINTER = 1,
  ECCRM_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON, invalid spec, kernel, step or config.
   */
  ECCRM_STATUS_INVALID_ARGUMENT = 3,
  ECCRM_STATUS_DIMENSION_MISMATCH = 4,
  /**
   * A projection, eigendecomposition or circumcenter failed.
   */
  ECCRM_STATUS_NUMERICAL_FAILURE = 5,
  ECCRM_STATUS_IO = 6,
  ECCRM_STATUS_PANIC = 7,
} EccrmStatus;

/**
 * Selects one of the two sets of a problem.
 */
typedef enum EccrmSet {
  ECCRM_SET_X = 0,
  ECCRM_SET_Y = 1,
} EccrmSet;

/**
 * Termination reason of a solve.
 */
typedef enum EccrmRunStatus {
  ECCRM_RUN_STATUS_CONVERGED = 0,
  ECCRM_RUN_STATUS_MAX_ITER = 1,
  ECCRM_RUN_STATUS_NUMERICAL_FAILURE = 2,
} EccrmRunStatus;

/**
 * Opaque problem handle.
 */
typedef struct EccrmProblem EccrmProblem;

/**
 * Opaque solve result.
 */
typedef struct EccrmTrace EccrmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *eccrm_last_error(void);

/**
 * Library version as a static string.
 */
const char *eccrm_version(void);

/**
 * Generates an instance from a generator spec such as
 * `{"family": "halfspace_wedge", "n": 3, "angle": 0.5, "seed": 7}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EccrmStatus eccrm_problem_generate(const char *spec_json, struct EccrmProblem **out);

/**
 * Loads an instance document as written by `eccrm gen`.
 *
 * # Safety
 * `doc_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EccrmStatus eccrm_problem_from_json(const char *doc_json, struct EccrmProblem **out);

/**
 * Serializes the problem as an instance document. Free the string with
 * [`eccrm_string_free`].
 *
 * # Safety
 * `problem` must come from this library; `out` must be a valid pointer.
 */
enum EccrmStatus eccrm_problem_to_json(const struct EccrmProblem *problem, char **out);

/**
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void eccrm_problem_free(struct EccrmProblem *problem);

/**
 * Ambient dimension, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t eccrm_problem_dim(const struct EccrmProblem *problem);

/**
 * Copies the starting point into `out` (length `len` must equal the dimension).
 *
 * # Safety
 * `problem` must be a live handle and `out` must hold `len` doubles.
 */
enum EccrmStatus eccrm_problem_start(const struct EccrmProblem *problem, double *out, size_t len);

/**
 * Projects `z` onto the selected set, writing `len` doubles to `out`.
 *
 * # Safety
 * `z` and `out` must each hold `len` doubles.
 */
enum EccrmStatus eccrm_project(const struct EccrmProblem *problem,
                               enum EccrmSet set,
                               const double *z,
                               size_t len,
                               double *out);

/**
 * Feasibility gap `max(dist_X(z), dist_Y(z))`.
 *
 * # Safety
 * `z` must hold `len` doubles and `out` must be a valid pointer.
 */
enum EccrmStatus eccrm_gap(const struct EccrmProblem *problem,
                           const double *z,
                           size_t len,
                           double *out);

/**
 * Solves from the problem's starting point. `method` uses the command-line
 * syntax: `map`, `ccrm`, `<kernel>:<alpha>` or `<kernel>:vanishing`, with
 * kernels such as `Y`, `XY`, `YXY`.
 *
 * # Safety
 * `method` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EccrmStatus eccrm_solve(const struct EccrmProblem *problem,
                             const char *method,
                             double eps,
                             size_t max_iter,
                             struct EccrmTrace **out);

/**
 * # Safety
 * `trace` must be null or a handle from this library not yet freed.
 */
void eccrm_trace_free(struct EccrmTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle.
 */
enum EccrmRunStatus eccrm_trace_status(const struct EccrmTrace *trace);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t eccrm_trace_iterations(const struct EccrmTrace *trace);

/**
 * Gap at the final iterate; NaN for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double eccrm_trace_final_delta(const struct EccrmTrace *trace);

/**
 * Total projections spent by the method, excluding diagnostics.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint64_t eccrm_trace_projections(const struct EccrmTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle and `out` must hold `len` doubles.
 */
enum EccrmStatus eccrm_trace_final_point(const struct EccrmTrace *trace, double *out, size_t len);

/**
 * Per-iteration CSV (`k,delta,dist_sref,alpha,...`). Free the string with
 * [`eccrm_string_free`].
 *
 * # Safety
 * `trace` must be a live handle and `out` a valid pointer.
 */
enum EccrmStatus eccrm_trace_csv(const struct EccrmTrace *trace, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void eccrm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECCRM_H */
