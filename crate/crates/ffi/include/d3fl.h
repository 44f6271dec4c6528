#ifndef D3FL_H
#define D3FL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Noise family selector for [`d3fl_generate_series`].
 */
typedef enum {
  D3FL_DIST_GEV = 0,
  D3FL_DIST_LOGNORM = 1,
} D3flDist;

/**
 * Result code of every fallible call.
 */
typedef enum {
  D3FL_OK = 0,
  D3FL_NULL_POINTER = 1,
  D3FL_INVALID_ARGUMENT = 2,
  D3FL_DOMAIN = 3,
  D3FL_LENGTH = 4,
  D3FL_STATE = 5,
  D3FL_CAPABILITY = 6,
  D3FL_NUMERIC = 7,
  D3FL_SHAPE = 8,
  D3FL_PROTOCOL = 9,
  D3FL_IO = 10,
  D3FL_FORMAT = 11,
  D3FL_BUFFER_TOO_SMALL = 12,
  D3FL_PANIC = 99,
} D3flStatus;

/**
 * Detrending technique selector for [`d3fl_detrend`].
 */
typedef enum {
  D3FL_TECH_NONE = 0,
  D3FL_TECH_DIFFERENCING = 1,
  D3FL_TECH_MOVING_AVERAGE = 2,
  D3FL_TECH_SUBTRACT_MEAN = 3,
  D3FL_TECH_LINEAR_MODEL = 4,
  D3FL_TECH_QUADRATIC_MODEL = 5,
} D3flTechnique;

/**
 * Opaque record of a detrending, enough to invert it exactly.
 */
typedef struct D3flDetrendState D3flDetrendState;

/**
 * Opaque LSTM parameter set.
 */
typedef struct D3flModel D3flModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t d3fl_last_error(char *buf, size_t len);

/**
 * GEV density at `x`.
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_gev_pdf(double x, double mu, double sigma, double xi, double *out);

/**
 * GEV distribution function at `x`.
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_gev_cdf(double x, double mu, double sigma, double xi, double *out);

/**
 * GEV quantile for `u` in (0, 1).
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_gev_quantile(double u, double mu, double sigma, double xi, double *out);

/**
 * Log-normal density at `x`.
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_lognorm_pdf(double x, double mu, double sigma, double *out);

/**
 * Log-normal distribution function at `x`.
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_lognorm_cdf(double x, double mu, double sigma, double *out);

/**
 * Log-normal quantile for `u` in (0, 1).
 *
 * # Safety
 * `out` must be null or point to one writable `double`.
 */
D3flStatus d3fl_lognorm_quantile(double u, double mu, double sigma, double *out);

/**
 * Generates one synthetic client series of `n_points` hourly values with the
 * default generator settings, drawing from stream `client-<id>-data` of `seed`.
 *
 * # Safety
 * `out` must hold `capacity` doubles; `out_len` may be null.
 */
D3flStatus d3fl_generate_series(uint32_t client_id,
                                D3flDist dist,
                                size_t n_points,
                                uint64_t seed,
                                double *out,
                                size_t capacity,
                                size_t *out_len);

/**
 * Detrends `values[0..len]`. `window` is read only for the moving average.
 * On success `*state_out` owns a new state handle.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `state_out` must be writable.
 */
D3flStatus d3fl_detrend(const double *values,
                        size_t len,
                        D3flTechnique tech,
                        size_t window,
                        double *out,
                        size_t capacity,
                        size_t *out_len,
                        D3flDetrendState **state_out);

/**
 * Inverts a detrending, restoring the original series.
 *
 * # Safety
 * `state` must come from [`d3fl_detrend`]; buffers must be valid for their lengths.
 */
D3flStatus d3fl_retrend(const D3flDetrendState *state,
                        const double *values,
                        size_t len,
                        double *out,
                        size_t capacity,
                        size_t *out_len);

/**
 * Releases a detrend state. Null is ignored.
 *
 * # Safety
 * `state` must come from [`d3fl_detrend`] and not be used afterwards.
 */
void d3fl_detrend_state_free(D3flDetrendState *state);

/**
 * Creates a freshly initialized model (uniform ±1/√hidden, forget bias 1)
 * from stream `model-init` of `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
D3flStatus d3fl_model_new(size_t hidden,
                          size_t input,
                          size_t output,
                          uint64_t seed,
                          D3flModel **out);

/**
 * Loads a checkpoint written by [`d3fl_model_save`] or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
D3flStatus d3fl_model_load(const char *path, D3flModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
D3flStatus d3fl_model_save(const D3flModel *model, const char *path);

/**
 * Number of parameters, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t d3fl_model_param_count(const D3flModel *model);

/**
 * Writes hidden, input and output sizes.
 *
 * # Safety
 * `model` must be a live handle; the out-pointers must be writable.
 */
D3flStatus d3fl_model_shape(const D3flModel *model, size_t *hidden, size_t *input, size_t *output);

/**
 * Copies the flat parameter vector (W_ih, W_hh, b_ih, b_hh, W_fc, b_fc).
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `capacity` doubles.
 */
D3flStatus d3fl_model_get_params(const D3flModel *model,
                                 double *out,
                                 size_t capacity,
                                 size_t *out_len);

/**
 * Replaces the parameters; `len` must equal the parameter count.
 *
 * # Safety
 * `model` must be a live handle; `values` must hold `len` doubles.
 */
D3flStatus d3fl_model_set_params(D3flModel *model, const double *values, size_t len);

/**
 * Forecasts `output` values from one window of `len` values (`steps × input`, time-major).
 *
 * # Safety
 * `model` must be a live handle; buffers must be valid for their lengths.
 */
D3flStatus d3fl_model_predict(const D3flModel *model,
                              const double *window,
                              size_t len,
                              double *out,
                              size_t capacity,
                              size_t *out_len);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void d3fl_model_free(D3flModel *model);

/**
 * Sample-count-weighted average of `n_clients` parameter vectors of length
 * `param_len`, stored back to back in `params`. The result is independent of
 * client order; duplicate ids or zero counts are protocol errors.
 *
 * # Safety
 * `params` must hold `n_clients * param_len` doubles, `client_ids` and
 * `sample_counts` `n_clients` entries each, and `out` `param_len` doubles.
 */
D3flStatus d3fl_fedavg(const double *params,
                       const uint32_t *client_ids,
                       const size_t *sample_counts,
                       size_t n_clients,
                       size_t param_len,
                       double *out);

/**
 * Kolmogorov–Smirnov statistic of ascending `samples` against a GEV.
 *
 * # Safety
 * `samples` must hold `len` doubles; `out` must be writable.
 */
D3flStatus d3fl_ks_gev(const double *samples,
                       size_t len,
                       double mu,
                       double sigma,
                       double xi,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D3FL_H */
