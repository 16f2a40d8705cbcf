#ifndef MLSYNC_H
#define MLSYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum MlsyncStatus {
  MLSYNC_STATUS_OK = 0,
  MLSYNC_STATUS_NULL_POINTER = 1,
  MLSYNC_STATUS_INVALID_ARGUMENT = 2,
  MLSYNC_STATUS_DIMENSION_MISMATCH = 3,
  MLSYNC_STATUS_OUT_OF_RANGE = 4,
  MLSYNC_STATUS_NUMERICAL = 5,
  MLSYNC_STATUS_INTERNAL = 6,
} MlsyncStatus;

typedef enum MlsyncMethod {
  /**
   * Grid search with subspace-pursuit channel fits.
   */
  MLSYNC_METHOD_MLSP = 0,
  /**
   * Grid search with least-squares channel fits.
   */
  MLSYNC_METHOD_MLLS = 1,
} MlsyncMethod;

/**
 * Opaque estimator: dimensions, grid, pilots and method.
 */
typedef struct MlsyncEstimator MlsyncEstimator;

/**
 * Opaque estimation result.
 */
typedef struct MlsyncResult MlsyncResult;

/**
 * Link dimensions; mirrors the Rust `SystemConfig`.
 */
typedef struct MlsyncSystem {
  size_t subcarriers;
  size_t tx;
  size_t rx;
  size_t taps;
  size_t sparsity;
  size_t theta_max;
  size_t cp_len;
} MlsyncSystem;

/**
 * Search grid; the timing range must lie in `0..=theta_max`.
 */
typedef struct MlsyncGrid {
  double eps_min;
  double eps_max;
  double eps_step;
  double eta_min;
  double eta_max;
  double eta_step;
  int64_t theta_min;
  int64_t theta_max;
  int64_t theta_step;
} MlsyncGrid;

/**
 * Scalar estimates and minimum costs.
 */
typedef struct MlsyncEstimates {
  double epsilon;
  double eta;
  int64_t theta;
  double cost_j1;
  double cost_j2;
  size_t j1_evals;
  size_t j2_evals;
} MlsyncEstimates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mlsync_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mlsync_version(void);

/**
 * Reference link: 2x2, 128 subcarriers, 26 taps, 5-sparse, CP 32, θ_max 5.
 */
struct MlsyncSystem mlsync_system_default(void);

/**
 * Reference-resolution grid centred on `(epsilon, eta)` with the given half
 * widths and timing range `0..=theta_max`.
 */
struct MlsyncGrid mlsync_grid_around(double epsilon,
                                     double eta,
                                     double eps_half,
                                     double eta_half,
                                     size_t theta_max);

/**
 * Creates an estimator with QPSK pilots drawn from `pilot_seed`.
 *
 * # Safety
 * `system` and `grid` must point to valid structs; `out` must be writable.
 */
enum MlsyncStatus mlsync_estimator_new(const struct MlsyncSystem *system,
                                       const struct MlsyncGrid *grid,
                                       enum MlsyncMethod method,
                                       uint64_t pilot_seed,
                                       struct MlsyncEstimator **out);

/**
 * Releases an estimator. Null is ignored.
 *
 * # Safety
 * `est` must come from [`mlsync_estimator_new`] and not be freed twice.
 */
void mlsync_estimator_free(struct MlsyncEstimator *est);

/**
 * Length of the channel vector `L_m · tx · rx` for this estimator, or 0 for null.
 *
 * # Safety
 * `est` must be null or a live handle.
 */
size_t mlsync_channel_len(const struct MlsyncEstimator *est);

/**
 * Simulates one observation with the estimator's pilots.
 *
 * Draws a sparse channel (`seed`), `m` samples per receive antenna and
 * noise at `snr_db` (ignored when `noiseless` is nonzero). Writes
 * `m · rx` complex samples and sample indices, and the true channel.
 *
 * # Safety
 * `samples` needs `2·m·rx` doubles, `indices` `m·rx` entries and `channel`
 * `2·channel_len` doubles (may be null to skip).
 */
enum MlsyncStatus mlsync_simulate(const struct MlsyncEstimator *est,
                                  double epsilon,
                                  double eta,
                                  int64_t theta,
                                  double snr_db,
                                  int32_t noiseless,
                                  size_t m,
                                  uint64_t seed,
                                  double *samples,
                                  size_t *indices,
                                  double *channel);

/**
 * Runs the two-stage grid search on `count` samples taken at `indices`
 * (ascending, `per_rx` per receive antenna).
 *
 * # Safety
 * `samples` holds `2·count` doubles, `indices` `count` entries; `out` is writable.
 */
enum MlsyncStatus mlsync_estimate(const struct MlsyncEstimator *est,
                                  const double *samples,
                                  const size_t *indices,
                                  size_t count,
                                  size_t per_rx,
                                  struct MlsyncResult **out);

/**
 * # Safety
 * `res` must come from [`mlsync_estimate`] and not be freed twice.
 */
void mlsync_result_free(struct MlsyncResult *res);

/**
 * # Safety
 * `res` must be a live result and `out` writable.
 */
enum MlsyncStatus mlsync_result_estimates(const struct MlsyncResult *res,
                                          struct MlsyncEstimates *out);

/**
 * Copies the channel estimate into `out` (`2·capacity` doubles).
 *
 * # Safety
 * `res` must be a live result; `out` must hold `2·capacity` doubles.
 */
enum MlsyncStatus mlsync_result_channel(const struct MlsyncResult *res,
                                        double *out,
                                        size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLSYNC_H */
