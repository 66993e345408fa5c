#ifndef SPHMOD_H
#define SPHMOD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SPHMOD_OK 0

#define SPHMOD_ERR_NULL 1

#define SPHMOD_ERR_INVALID 2

#define SPHMOD_ERR_DOMAIN 3

#define SPHMOD_ERR_UNSUPPORTED 4

#define SPHMOD_ERR_NUMERICAL 5

#define SPHMOD_ERR_PANIC 6

/**
 * An example specification under construction.
 */
typedef struct SphmodExample SphmodExample;

/**
 * A computed rate curve with its fit.
 */
typedef struct SphmodRun SphmodRun;

/**
 * Fit summary of a [`SphmodRun`].
 */
typedef struct SphmodFit {
  double slope;
  double intercept;
  double max_rel_residual;
  double expected_exponent;
  /**
   * Nonzero when the expected law carries a logarithmic factor.
   */
  int32_t log_factor;
} SphmodFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; valid until the next call
 * on the same thread. Never null.
 */
const char *sphmod_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sphmod_version(void);

/**
 * The smooth cutoff `η(x)`.
 */
double sphmod_eta(double x);

/**
 * `C_n^λ(t)`.
 *
 * # Safety
 * `value` must be null or valid for writes.
 */
int32_t sphmod_gegenbauer(size_t n, double lambda, double t, double *value);

/**
 * The smoothed zonal kernel `K_n(t)` on `S^{d-1}`.
 *
 * # Safety
 * `value` must be null or valid for writes.
 */
int32_t sphmod_smoothed_kernel(size_t n, size_t d, double t, double *value);

/**
 * Creates an example with default parameters from its id (`"S2"`, `"E5"`, ...).
 *
 * # Safety
 * `id` must be null or a NUL-terminated string; `handle` must be null or
 * valid for writes.
 */
int32_t sphmod_example_new(const char *id, struct SphmodExample **handle);

/**
 * # Safety
 * `handle` must be null or come from [`sphmod_example_new`] and not be freed yet.
 */
void sphmod_example_free(struct SphmodExample *handle);

/**
 * Sets dimension, exponent `p`, smoothness order `r`, exponent `α` and weight `μ`.
 *
 * # Safety
 * `handle` must be null or a live example handle.
 */
int32_t sphmod_example_set_params(struct SphmodExample *handle,
                                  size_t d,
                                  double p,
                                  size_t r,
                                  double alpha,
                                  double mu);

/**
 * Sets the geometric grid of `steps` scales from `tmax` down to `tmin`.
 *
 * # Safety
 * `handle` must be null or a live example handle.
 */
int32_t sphmod_example_set_t_grid(struct SphmodExample *handle,
                                  double tmin,
                                  double tmax,
                                  size_t steps);

/**
 * Sets the degrees sampled by the best-approximation examples.
 *
 * # Safety
 * `handle` must be null or a live example handle; `degrees` must point to
 * `len` readable values.
 */
int32_t sphmod_example_set_degrees(struct SphmodExample *handle, const size_t *degrees, size_t len);

/**
 * Validates the example without computing anything.
 *
 * # Safety
 * `handle` must be null or a live example handle.
 */
int32_t sphmod_example_validate(struct SphmodExample *handle);

/**
 * Samples and fits the example's curve.
 *
 * # Safety
 * `handle` must be null or a live example handle; `run` must be null or
 * valid for writes.
 */
int32_t sphmod_example_run(struct SphmodExample *handle, struct SphmodRun **run);

/**
 * # Safety
 * `run` must be null or come from [`sphmod_example_run`] and not be freed yet.
 */
void sphmod_run_free(struct SphmodRun *run);

/**
 * Number of samples in the curve.
 *
 * # Safety
 * `run` must be null or a live run handle; `len` must be null or valid for writes.
 */
int32_t sphmod_run_len(const struct SphmodRun *run, size_t *len);

/**
 * Copies up to `cap` samples: scales (`t` or `n`) to `xs`, values to `values`.
 *
 * # Safety
 * `run` must be null or a live run handle; `xs` and `values` must be valid
 * for `cap` writes.
 */
int32_t sphmod_run_samples(const struct SphmodRun *run, double *xs, double *values, size_t cap);

/**
 * # Safety
 * `run` must be null or a live run handle; `fit` must be null or valid for writes.
 */
int32_t sphmod_run_fit(const struct SphmodRun *run, struct SphmodFit *fit);

/**
 * Runs the invariant suite; `passed` receives 1 if every check holds.
 *
 * # Safety
 * `passed` must be null or valid for writes.
 */
int32_t sphmod_verify(uint64_t seed, double tol_scale, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPHMOD_H */
