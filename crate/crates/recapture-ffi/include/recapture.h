#ifndef RECAPTURE_H
#define RECAPTURE_H

/* Generated by cbindgen from recapture-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an FFI call.
 */
typedef enum {
  RECAP_STATUS_OK = 0,
  /**
   * A pointer argument was null or an index was out of range.
   */
  RECAP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The configuration JSON could not be parsed or failed validation.
   */
  RECAP_STATUS_PARSE_ERROR = 2,
  /**
   * The sampler or its input loading failed.
   */
  RECAP_STATUS_RUN_ERROR = 3,
} RecapStatus;

/**
 * Opaque handle to a finished run.
 */
typedef struct RecapResult RecapResult;

/**
 * Posterior summary of one monitored quantity.
 */
typedef struct {
  double mean;
  double median;
  double sd;
  double ci_low;
  double ci_high;
  double ess;
  double ess_per_second;
  /**
   * Potential scale reduction factor; meaningful only when `has_psrf`
   * is nonzero (two or more chains).
   */
  double psrf;
  int32_t has_psrf;
  /**
   * Nonzero when a trace was constant and the ESS is reported as zero.
   */
  int32_t degenerate;
} RecapSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying engine as a static C string.
 */
const char *recap_version(void);

/**
 * Run a sampler described by a JSON configuration document (the same
 * schema the command-line driver reads). Relative data paths resolve
 * against the current working directory. When `write_outputs` is false
 * the configured output directory is ignored and nothing is written.
 *
 * On success `*out_result` owns the run; on failure `*error_out` (when
 * non-null) receives a message to release with [`recap_string_free`].
 *
 * # Safety
 * `config_json` must point to a valid NUL-terminated string; `out_result`
 * must be a valid pointer; `error_out` may be null.
 */
RecapStatus recap_run_json(const char *config_json,
                           bool write_outputs,
                           RecapResult **out_result,
                           char **error_out);

/**
 * Number of monitored quantities.
 *
 * # Safety
 * `result` must be a live handle from [`recap_run_json`].
 */
size_t recap_result_param_count(const RecapResult *result);

/**
 * Name of the monitored quantity at `index`, as a new string to release
 * with [`recap_string_free`].
 *
 * # Safety
 * `result` must be a live handle; `name_out` must be a valid pointer.
 */
RecapStatus recap_result_param_name(const RecapResult *result, size_t index, char **name_out);

/**
 * Posterior summary for a monitored quantity by name.
 *
 * # Safety
 * `result` must be a live handle; `param` a NUL-terminated string;
 * `out` a valid pointer.
 */
RecapStatus recap_result_summary(const RecapResult *result, const char *param, RecapSummary *out);

/**
 * Number of chains in the run.
 *
 * # Safety
 * `result` must be a live handle.
 */
size_t recap_result_chain_count(const RecapResult *result);

/**
 * Stored samples per chain.
 *
 * # Safety
 * `result` must be a live handle.
 */
size_t recap_result_sample_count(const RecapResult *result, size_t chain);

/**
 * Copy one chain's samples of a monitored quantity into `buffer`
 * (capacity in doubles); `*written` receives the number copied.
 *
 * # Safety
 * `result` must be a live handle; `param` a NUL-terminated string;
 * `buffer` must point to at least `capacity` doubles; `written` must be a
 * valid pointer.
 */
RecapStatus recap_result_samples(const RecapResult *result,
                                 size_t chain,
                                 const char *param,
                                 double *buffer,
                                 size_t capacity,
                                 size_t *written);

/**
 * Wall time of the sampling run in seconds.
 *
 * # Safety
 * `result` must be a live handle.
 */
double recap_wall_seconds(const RecapResult *result);

/**
 * Release a run handle.
 *
 * # Safety
 * `result` must come from [`recap_run_json`] and must not be used again.
 */
void recap_result_free(RecapResult *result);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from a recapture function and must not be used again.
 */
void recap_string_free(char *s);

/**
 * Probability that an individual with logit-normal detection
 * heterogeneity is never observed over `occasions` occasions, by
 * Gauss-Hermite quadrature of the given order. Writes 1 - p* to `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
RecapStatus recap_mh_prob_unobserved(double alpha,
                                     double sigma,
                                     uint32_t occasions,
                                     size_t order,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECAPTURE_H */
