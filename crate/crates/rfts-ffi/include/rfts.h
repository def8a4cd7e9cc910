#ifndef RFTS_H
#define RFTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define RFTS_OK 0

#define RFTS_ERR_CONFIG 1

#define RFTS_ERR_DATA 2

#define RFTS_ERR_NUMERICAL 3

#define RFTS_ERR_NULL 4

/**
 * Forecasting method selectors; these mirror the four methods the
 * command-line tool compares.
 */
typedef enum rfts_method {
  /**
   * static covariance components, least-squares score model
   */
  RFTS_METHOD_FPCA = 0,
  /**
   * robust dynamic components, least-squares score model
   */
  RFTS_METHOD_RFPCA = 1,
  /**
   * robust dynamic components, trimmed-squares score model
   */
  RFTS_METHOD_MLTS = 2,
  /**
   * robust dynamic components, reweighted trimmed-squares score model
   */
  RFTS_METHOD_RMLTS = 3,
} rfts_method;

/**
 * A fitted model: principal decomposition plus a score VAR, ready to
 * roll forecasts forward from the end of the series it was fit on.
 */
typedef struct rfts_fit rfts_fit;

/**
 * A functional time series: n curves sampled on a shared grid.
 */
typedef struct rfts_series rfts_series;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rfts_last_error_message(void);

/**
 * Build a series from a row-major buffer of `n * p` values on a
 * uniform grid over [0, 1].
 */
int rfts_series_create(const double *values, uintptr_t n, uintptr_t p, struct rfts_series **out);

/**
 * Simulate a stationary functional autoregression with the built-in
 * reference operator: `n` curves on `grid_points` uniform points.
 */
int rfts_series_simulate(uintptr_t n,
                         uintptr_t grid_points,
                         uint64_t seed,
                         struct rfts_series **out);

void rfts_series_free(struct rfts_series *series);

/**
 * Number of curves, or 0 for a null handle.
 */
uintptr_t rfts_series_len(const struct rfts_series *series);

/**
 * Points per curve, or 0 for a null handle.
 */
uintptr_t rfts_series_grid_len(const struct rfts_series *series);

/**
 * Copy curve `i` into `out` (length `p`).
 */
int rfts_series_curve(const struct rfts_series *series, uintptr_t i, double *out);

/**
 * Fit one method on a series. `k` is the number of components,
 * `lambda` the outlier-weighting threshold, `alpha` the trimming
 * fraction, `delta` the reweighting tail probability; pass the
 * defaults (3, 3.0, 0.25, 0.01) when in doubt. `max_order` caps the
 * score autoregression order searched by the information criterion.
 */
int rfts_fit_create(const struct rfts_series *series,
                    enum rfts_method method,
                    uintptr_t k,
                    double lambda,
                    double alpha,
                    double delta,
                    uintptr_t max_order,
                    uint64_t seed,
                    struct rfts_fit **out);

void rfts_fit_free(struct rfts_fit *fit);

/**
 * Selected autoregression order, or 0 for a null handle.
 */
uintptr_t rfts_fit_order(const struct rfts_fit *fit);

/**
 * Forecast `horizon` curves past the end of the fitted series into
 * `out`, a caller buffer of `horizon * p` values laid out row-major
 * (first forecast curve first).
 */
int rfts_forecast(const struct rfts_fit *fit, uintptr_t horizon, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RFTS_H */
