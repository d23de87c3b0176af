#ifndef PORTFOLIO_ANALYTICS_H
#define PORTFOLIO_ANALYTICS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PaStatus {
  PA_STATUS_OK = 0,
  PA_STATUS_NULL_POINTER = 1,
  PA_STATUS_INVALID_INPUT = 2,
  PA_STATUS_DIMENSION = 3,
  PA_STATUS_ILL_CONDITIONED = 4,
  PA_STATUS_DEGENERATE = 5,
  PA_STATUS_NO_CONVERGENCE = 6,
  PA_STATUS_IO = 7,
  PA_STATUS_PANIC = 8,
  PA_STATUS_BUFFER_TOO_SMALL = 9,
} PaStatus;

/**
 * Moment estimator selector for [`pa_moments_estimate`].
 */
typedef enum PaModel {
  PA_MODEL_MM = 0,
  PA_MODEL_CCM = 1,
  PA_MODEL_SIM = 2,
} PaModel;

/**
 * Risk method selector for [`pa_var_es`] and [`pa_bootstrap_ci`].
 */
typedef enum PaRiskMethod {
  PA_RISK_METHOD_PARAMETRIC_T = 0,
  PA_RISK_METHOD_HISTORICAL = 1,
  PA_RISK_METHOD_GAUSSIAN = 2,
  PA_RISK_METHOD_CORNISH_FISHER = 3,
} PaRiskMethod;

/**
 * Expected returns and covariance.
 */
typedef struct PaMoments PaMoments;

/**
 * Simple returns, periods × assets.
 */
typedef struct PaReturns PaReturns;

typedef struct PaRiskEstimate {
  double var;
  double es;
} PaRiskEstimate;

typedef struct PaBootstrap {
  double var;
  double es;
  double var_lower;
  double var_upper;
  double es_lower;
  double es_upper;
} PaBootstrap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `pa_` call on the same thread.
 */
const char *pa_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pa_version(void);

/**
 * Builds a return frame from a row-major `periods × assets` array of
 * simple returns.
 *
 * # Safety
 * `data` must point to `periods * assets` doubles and `out` must be valid
 * for writes.
 */
enum PaStatus pa_returns_new(const double *data,
                             size_t periods,
                             size_t assets,
                             struct PaReturns **out);

/**
 * Reads a wide price CSV and converts it to simple returns.
 *
 * # Safety
 * `path` and `date_column` must be NUL-terminated strings; `out` must be
 * valid for writes.
 */
enum PaStatus pa_returns_from_prices_csv(const char *path,
                                         const char *date_column,
                                         struct PaReturns **out);

/**
 * # Safety
 * `r` must come from a `pa_returns_` constructor and not be freed twice.
 */
void pa_returns_free(struct PaReturns *r);

/**
 * # Safety
 * `r` must be a live handle or null.
 */
size_t pa_returns_periods(const struct PaReturns *r);

/**
 * # Safety
 * `r` must be a live handle or null.
 */
size_t pa_returns_assets(const struct PaReturns *r);

/**
 * Estimates moments with the chosen model. `market` (length = periods) is
 * required for `Sim` and ignored otherwise.
 *
 * # Safety
 * `r` must be a live handle, `market` null or valid for `periods` reads,
 * `out` valid for writes.
 */
enum PaStatus pa_moments_estimate(const struct PaReturns *r,
                                  int32_t model,
                                  const double *market,
                                  struct PaMoments **out);

/**
 * Wraps caller-supplied moments; `sigma` is row-major n × n.
 *
 * # Safety
 * `mu` must hold `n` doubles, `sigma` `n * n`, and `out` be valid for writes.
 */
enum PaStatus pa_moments_new(const double *mu,
                             const double *sigma,
                             size_t n,
                             struct PaMoments **out);

/**
 * # Safety
 * `m` must come from a `pa_moments_` constructor and not be freed twice.
 */
void pa_moments_free(struct PaMoments *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t pa_moments_n(const struct PaMoments *m);

/**
 * Copies mu (n values) and sigma (n × n, row-major) out of the handle.
 * Either output may be null to skip it.
 *
 * # Safety
 * Non-null outputs must hold `n` and `n * n` doubles respectively.
 */
enum PaStatus pa_moments_get(const struct PaMoments *m, double *mu, double *sigma);

/**
 * Sharpe-maximizing weights (summing to 1) at risk-free rate `rf`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PaStatus pa_tangent_weights(const struct PaMoments *m, double rf, double *out, size_t len);

/**
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PaStatus pa_min_variance_weights(const struct PaMoments *m, double *out, size_t len);

/**
 * Hindsight-best long-only constant rebalanced portfolio.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PaStatus pa_best_crp(const struct PaReturns *r, double *out, size_t len);

/**
 * Cover's universal portfolio schedule, periods × assets row-major.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PaStatus pa_cover_schedule(const struct PaReturns *r,
                                size_t samples,
                                uint64_t seed,
                                double *out,
                                size_t len);

/**
 * Diversity-weighted portfolio of one row of market weights.
 *
 * # Safety
 * `mu` must hold `n` doubles and `out` `n` doubles.
 */
enum PaStatus pa_dwp_weights(const double *mu, size_t n, double p, double *out);

/**
 * Value at risk and expected shortfall of a return series for position
 * `position` at tail probability `alpha`.
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid for writes.
 */
enum PaStatus pa_var_es(const double *returns,
                        size_t len,
                        double position,
                        double alpha,
                        int32_t method,
                        struct PaRiskEstimate *out);

/**
 * Basic bootstrap 95% intervals for VaR and ES. The parametric t method
 * is not supported here.
 *
 * # Safety
 * `returns` must hold `len` doubles; `out` must be valid for writes.
 */
enum PaStatus pa_bootstrap_ci(const double *returns,
                              size_t len,
                              double position,
                              double alpha,
                              int32_t method,
                              size_t replicates,
                              uint64_t seed,
                              struct PaBootstrap *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PORTFOLIO_ANALYTICS_H */
