/* C interface to the mlse level-set estimation library. Generated by cbindgen; do not edit. */

#ifndef MLSE_H
#define MLSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum MlseStatus {
  MlseOk = 0,
  MlseNullPointer = 1,
  MlseInvalidUtf8 = 2,
  MlseInvalidArgument = 3,
  MlseNumericFailure = 4,
  MlseIoFailure = 5,
} MlseStatus;

/**
 * Opaque incremental GP posterior.
 */
typedef struct MlsePosterior MlsePosterior;

/**
 * Opaque finished run: classification, trace and evaluation metrics.
 */
typedef struct MlseRun MlseRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *mlse_version(void);

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mlse_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by an `mlse_*` function and not freed yet.
 */
void mlse_string_free(char *s);

/**
 * Creates a posterior for a kernel described in JSON, e.g.
 * `{"family":"squared_exponential","scale":1.0,"length":1.0}`.
 *
 * # Safety
 * `kernel_json` must be a nul-terminated string; `out` must be valid.
 */
enum MlseStatus mlse_posterior_new(const char *kernel_json,
                                   uintptr_t dim,
                                   double noise_var,
                                   struct MlsePosterior **out);

/**
 * Appends one observation `y` at point `x` (length `dim`).
 *
 * # Safety
 * `p` must be a live posterior handle; `x` must point to `dim` doubles.
 */
enum MlseStatus mlse_posterior_update(struct MlsePosterior *p,
                                      const double *x,
                                      uintptr_t dim,
                                      double y);

/**
 * Posterior mean and standard deviation at `x`.
 *
 * # Safety
 * `p` must be a live handle; `x` points to `dim` doubles; `mean` and
 * `stddev` must be valid.
 */
enum MlseStatus mlse_posterior_predict(const struct MlsePosterior *p,
                                       const double *x,
                                       uintptr_t dim,
                                       double *mean,
                                       double *stddev);

/**
 * Releases a posterior handle.
 *
 * # Safety
 * `p` must be a handle from [`mlse_posterior_new`], not freed before.
 */
void mlse_posterior_free(struct MlsePosterior *p);

/**
 * Runs one `(budget, seed)` cell of an experiment config (JSON, same
 * schema as the CLI) and returns a run handle.
 *
 * # Safety
 * `config_json` must be nul-terminated; `out` must be valid.
 */
enum MlseStatus mlse_run_levelset(const char *config_json,
                                  uintptr_t budget,
                                  uint64_t seed,
                                  struct MlseRun **out);

/**
 * Discrepancy of the run's classification against the true level set
 * (NaN when the config disabled the evaluation grid).
 *
 * # Safety
 * `r` must be a live run handle.
 */
double mlse_run_l_value(const struct MlseRun *r);

/**
 * Grid fraction of the symmetric difference.
 *
 * # Safety
 * `r` must be a live run handle.
 */
double mlse_run_sym_diff_fraction(const struct MlseRun *r);

/**
 * Sum of posterior variances at the run's evaluation times.
 *
 * # Safety
 * `r` must be a live run handle.
 */
double mlse_run_info_gain(const struct MlseRun *r);

/**
 * Mutual information between the noisy observations and the function.
 *
 * # Safety
 * `r` must be a live run handle.
 */
double mlse_run_mutual_info(const struct MlseRun *r);

/**
 * Number of function evaluations performed.
 *
 * # Safety
 * `r` must be a live run handle.
 */
uint64_t mlse_run_num_evals(const struct MlseRun *r);

/**
 * Number of cell refinements performed.
 *
 * # Safety
 * `r` must be a live run handle.
 */
uint64_t mlse_run_num_refinements(const struct MlseRun *r);

/**
 * Deepest partition level reached.
 *
 * # Safety
 * `r` must be a live run handle.
 */
uint32_t mlse_run_max_depth(const struct MlseRun *r);

/**
 * Cells classified super-level.
 *
 * # Safety
 * `r` must be a live run handle.
 */
uint64_t mlse_run_num_super_cells(const struct MlseRun *r);

/**
 * Cells classified sub-level.
 *
 * # Safety
 * `r` must be a live run handle.
 */
uint64_t mlse_run_num_sub_cells(const struct MlseRun *r);

/**
 * The run trace as tab-separated lines (step, action, depth, index, mu,
 * sigma, l_bar, u_bar, n_e). Free with [`mlse_string_free`].
 *
 * # Safety
 * `r` must be a live run handle.
 */
char *mlse_run_trace_tsv(const struct MlseRun *r);

/**
 * Releases a run handle.
 *
 * # Safety
 * `r` must be a handle from [`mlse_run_levelset`], not freed before.
 */
void mlse_run_free(struct MlseRun *r);

/**
 * Runs a whole configured sweep, writing results.csv, depth_counts.csv
 * and config_used.json under the config's output directory.
 *
 * # Safety
 * `config_json` must be a nul-terminated string.
 */
enum MlseStatus mlse_run_experiment_json(const char *config_json,
                                         uintptr_t threads,
                                         uint64_t seed_offset);

/**
 * Convenience single-cell row as a JSON string (same fields as one CSV
 * row). Free with [`mlse_string_free`].
 *
 * # Safety
 * `config_json` must be a nul-terminated string.
 */
char *mlse_run_one_json(const char *config_json, uintptr_t budget, uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLSE_H */
