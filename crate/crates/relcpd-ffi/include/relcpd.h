/* relcpd — C interface. Generated by the relcpd-ffi build script; do not edit. */

#ifndef RELCPD_H
#define RELCPD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Norm selector for [`relcpd_test`]: every coordinate, normalized by p.
 */
#define RELCPD_NORM_DENSE 0

/**
 * Norm selector for [`relcpd_test`]: estimated support, normalized by |Ŝ|.
 */
#define RELCPD_NORM_SPARSE 1

/**
 * Status code returned by every fallible entry point.
 */
typedef enum RelcpdStatus {
  /**
   * Success.
   */
  RELCPD_STATUS_OK = 0,
  /**
   * A parameter or configuration value is invalid.
   */
  RELCPD_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The input data could not be read or is malformed.
   */
  RELCPD_STATUS_DATA = 2,
  /**
   * The statistic is degenerate on this input (for example, the data are
   * too short to leave any admissible pair of observations).
   */
  RELCPD_STATUS_DEGENERATE = 3,
  /**
   * A required pointer argument was NULL.
   */
  RELCPD_STATUS_NULL_POINTER = 4,
  /**
   * A panic was caught at the boundary; this indicates a bug in the
   * library, not in the caller.
   */
  RELCPD_STATUS_PANIC = 5,
} RelcpdStatus;

/**
 * Opaque handle for a test configuration.
 */
typedef struct RelcpdConfig RelcpdConfig;

/**
 * Opaque handle for an n × p observation matrix (rows are time points).
 */
typedef struct RelcpdMatrix RelcpdMatrix;

/**
 * Opaque handle for a completed test run.
 */
typedef struct RelcpdResult RelcpdResult;

/**
 * Flat snapshot of a test run. All quantities live on the squared-norm
 * scale (the scale of the threshold Δ); take square roots externally for
 * the norm scale.
 */
typedef struct RelcpdSummary {
  /**
   * Test statistic T.
   */
  double statistic;
  /**
   * Self-normalizer V.
   */
  double normalizer;
  /**
   * (1 − α)-quantile of the pivotal limit distribution.
   */
  double quantile;
  /**
   * (1 − α/2)-quantile, used by the two-sided interval.
   */
  double quantile_half;
  /**
   * Configured threshold Δ.
   */
  double delta;
  /**
   * Nominal level α.
   */
  double alpha;
  /**
   * Smallest threshold at which the test would still reject.
   */
  double delta_alpha;
  /**
   * Upper end of the one-sided confidence interval [0, ci_upper].
   */
  double ci_upper;
  /**
   * Two-sided confidence interval [ci_two_low, ci_two_high].
   */
  double ci_two_low;
  double ci_two_high;
  /**
   * Estimated change location as a fraction of n.
   */
  double theta_hat;
  /**
   * Estimated split index (1-based).
   */
  size_t k_hat;
  /**
   * Trimming lag that was used.
   */
  size_t m_hat;
  /**
   * Number of coordinates entering the norm: p (dense) or |Ŝ| (sparse).
   */
  size_t norm_size;
  /**
   * True when H₀: ‖δ‖² ≤ Δ was rejected at level α.
   */
  bool reject;
  /**
   * True when the estimated split fell in the guard region and the
   * statistic is zero by definition (the null is then retained).
   */
  bool degenerate;
} RelcpdSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a matrix from a row-major buffer of `n · p` values
 * (row j, column l at `values[j*p + l]`). The buffer is copied.
 *
 * # Safety
 * `values` must point to at least `n · p` readable doubles and `out` must
 * be a valid location for one pointer.
 */
enum RelcpdStatus relcpd_matrix_new(size_t n,
                                    size_t p,
                                    const double *values,
                                    struct RelcpdMatrix **out);

/**
 * Loads a matrix from a CSV file with one row per time point. Empty cells
 * are linearly interpolated per column when `interpolate` is set and are
 * an error otherwise.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid location for
 * one pointer.
 */
enum RelcpdStatus relcpd_matrix_from_csv(const char *path,
                                         bool has_header,
                                         bool interpolate,
                                         struct RelcpdMatrix **out);

/**
 * Number of rows (time points); 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t relcpd_matrix_rows(const struct RelcpdMatrix *m);

/**
 * Number of columns (coordinates); 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t relcpd_matrix_cols(const struct RelcpdMatrix *m);

/**
 * Releases a matrix handle; NULL is a no-op.
 *
 * # Safety
 * `m` must be NULL or a live matrix handle, and must not be used again.
 */
void relcpd_matrix_free(struct RelcpdMatrix *m);

/**
 * Creates a configuration for testing H₀: ‖δ‖² ≤ `delta` (squared-norm
 * scale, `delta` ≥ 0). Defaults: α = 0.05, K = 20 atoms, data-driven
 * trimming lag, κ = 1.5, 10⁵ quantile replications, seed 0.
 *
 * # Safety
 * `out` must be a valid location for one pointer.
 */
enum RelcpdStatus relcpd_config_new(double delta, struct RelcpdConfig **out);

/**
 * Releases a configuration handle; NULL is a no-op.
 *
 * # Safety
 * `c` must be NULL or a live configuration handle, and must not be used
 * again.
 */
void relcpd_config_free(struct RelcpdConfig *c);

/**
 * Sets the nominal level α ∈ (0, 1).
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_alpha(struct RelcpdConfig *c, double alpha);

/**
 * Sets the atom count K ≥ 2 of the self-normalizing measure ν.
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_k(struct RelcpdConfig *c, size_t k);

/**
 * Fixes the trimming lag instead of selecting it from the data.
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_m(struct RelcpdConfig *c, size_t m);

/**
 * Restores the default data-driven choice of the trimming lag.
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_auto_m(struct RelcpdConfig *c);

/**
 * Sets the support-threshold exponent κ > 1 (sparse test only).
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_kappa(struct RelcpdConfig *c, double kappa);

/**
 * Sets the |ΔF| cutoff (> 0) used by the trimming-lag selector.
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_trim_cutoff(struct RelcpdConfig *c, double cutoff);

/**
 * Sets the Monte Carlo replication count (> 0) for the limit quantiles.
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_quantile_reps(struct RelcpdConfig *c, size_t reps);

/**
 * Sets the seed of the quantile simulation (any value is valid).
 *
 * # Safety
 * `c` must be a live configuration handle.
 */
enum RelcpdStatus relcpd_config_set_seed(struct RelcpdConfig *c, uint64_t seed);

/**
 * Runs the relevant-change test on `x` and hands back a result handle.
 * `norm` is [`RELCPD_NORM_DENSE`] or [`RELCPD_NORM_SPARSE`].
 *
 * A degenerate split is not an error: the call succeeds and the summary
 * carries `degenerate = true` with the null retained.
 *
 * # Safety
 * `x` and `config` must be live handles and `out` a valid location for
 * one pointer.
 */
enum RelcpdStatus relcpd_test(const struct RelcpdMatrix *x,
                              const struct RelcpdConfig *config,
                              int32_t norm,
                              struct RelcpdResult **out);

/**
 * Copies the flat summary of a result.
 *
 * # Safety
 * `r` must be a live result handle and `out` a valid location for one
 * [`RelcpdSummary`].
 */
enum RelcpdStatus relcpd_result_summary(const struct RelcpdResult *r, struct RelcpdSummary *out);

/**
 * Number of coordinates in the estimated support Ŝ; 0 for a dense-test
 * result or a NULL handle.
 *
 * # Safety
 * `r` must be NULL or a live result handle.
 */
size_t relcpd_result_support_len(const struct RelcpdResult *r);

/**
 * Copies the estimated support (0-based coordinate indices, ascending)
 * into `buf`. `capacity` must be at least [`relcpd_result_support_len`].
 *
 * # Safety
 * `r` must be a live result handle and `buf` must point to `capacity`
 * writable `size_t` slots.
 */
enum RelcpdStatus relcpd_result_support(const struct RelcpdResult *r, size_t *buf, size_t capacity);

/**
 * Releases a result handle; NULL is a no-op.
 *
 * # Safety
 * `r` must be NULL or a live result handle, and must not be used again.
 */
void relcpd_result_free(struct RelcpdResult *r);

/**
 * Estimates the change location: the 1-based split index k̂ and its
 * fraction θ̂ = k̂/n.
 *
 * # Safety
 * `x` must be a live matrix handle; `k_hat` and `theta_hat` must be valid
 * locations.
 */
enum RelcpdStatus relcpd_estimate_cp(const struct RelcpdMatrix *x,
                                     size_t *k_hat,
                                     double *theta_hat);

/**
 * Selects the trimming lag m̂ from the data, splitting at the estimated
 * change location. Pass `cutoff` ≤ 0 for the default (0.01).
 *
 * # Safety
 * `x` must be a live matrix handle and `m_hat` a valid location.
 */
enum RelcpdStatus relcpd_select_m(const struct RelcpdMatrix *x, double cutoff, size_t *m_hat);

/**
 * Message for the calling thread's most recent failure, or an empty string
 * after a success. The pointer stays valid until this thread's next call
 * into the library.
 */
const char *relcpd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *relcpd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELCPD_H */
