#ifndef DIFFCOEF_H
#define DIFFCOEF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. 1 to 3 match the exit codes of the command-line tool.
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_INVALID_ARGUMENT = 1,
  DC_STATUS_CONFIG = 2,
  DC_STATUS_NUMERICAL = 3,
  DC_STATUS_NULL_POINTER = 4,
  DC_STATUS_PANIC = 5,
} DcStatus;

typedef enum DcBasisFamily {
  DC_BASIS_FAMILY_SPLINE = 0,
  DC_BASIS_FAMILY_FOURIER = 1,
} DcBasisFamily;

// A fitted projection estimate of sigma^2.
typedef struct DcEstimate DcEstimate;

// A diffusion model.
typedef struct DcModel DcModel;

// N discretely observed paths.
typedef struct DcSample DcSample;

// Basis on [a, b]. `family` holds a `DcBasisFamily` value. `size` is the
// knot count K for splines and the number of frequencies D for the
// trigonometric basis; `degree` is ignored there.
typedef struct DcBasis {
  uint32_t family;
  size_t size;
  size_t degree;
  double a;
  double b;
} DcBasis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dc_version(void);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into the library on the same thread.
const char *dc_last_error(void);

// Brownian motion with constant diffusion coefficient `sigma > 0`.
//
// # Safety
// `out` must be valid for writes.
enum DcStatus dc_model_constant(double sigma, struct DcModel **out);

// The bounded example model with periodic drift.
//
// # Safety
// `out` must be valid for writes.
enum DcStatus dc_model_example(struct DcModel **out);

// sigma(x)^2 of the model.
//
// # Safety
// `model` must come from a `dc_model_*` constructor and `out` must be valid
// for writes.
enum DcStatus dc_model_sigma_sq(const struct DcModel *model, double x, double *out);

// # Safety
// `model` must be null or come from a `dc_model_*` constructor, and must not
// be used afterwards.
void dc_model_free(struct DcModel *model);

// Simulates `n_paths` paths of `n` steps on [0, 1] with `substeps` Euler
// steps per observation interval.
//
// # Safety
// `model` must come from a `dc_model_*` constructor and `out` must be valid
// for writes.
enum DcStatus dc_simulate(const struct DcModel *model,
                          size_t n_paths,
                          size_t n,
                          size_t substeps,
                          uint64_t seed,
                          struct DcSample **out);

// Wraps observed paths given row-major as `n_paths` rows of `n + 1` values
// X_0, ..., X_n on the grid k / n.
//
// # Safety
// `values` must point to `n_paths * (n + 1)` readable doubles and `out` must
// be valid for writes.
enum DcStatus dc_sample_from_values(const double *values,
                                    size_t n_paths,
                                    size_t n,
                                    struct DcSample **out);

// Number of paths N and steps n of the sample.
//
// # Safety
// `sample` must come from `dc_simulate` or `dc_sample_from_values`; the
// out-pointers must be valid for writes.
enum DcStatus dc_sample_shape(const struct DcSample *sample, size_t *n_paths, size_t *n);

// Copies the N (n + 1) observations, row-major, into `buf`.
//
// # Safety
// `sample` must be a live sample handle and `buf` must hold `len` writable
// doubles.
enum DcStatus dc_sample_values(const struct DcSample *sample, double *buf, size_t len);

// # Safety
// `sample` must be null or a live sample handle, and must not be used
// afterwards.
void dc_sample_free(struct DcSample *sample);

// Least-squares projection estimate of sigma^2 on `basis`, restricted to the
// coefficient ball m (B - A)^2 log(Nn) when `constrained` is true.
//
// # Safety
// `sample` must be a live sample handle, `basis` must point to a valid
// `DcBasis` and `out` must be valid for writes.
enum DcStatus dc_estimate(const struct DcSample *sample,
                          const struct DcBasis *basis,
                          bool constrained,
                          struct DcEstimate **out);

// Copy of `est` whose evaluations are capped from above at log `n_paths`.
//
// # Safety
// `est` must be a live estimate handle and `out` must be valid for writes.
enum DcStatus dc_estimate_truncate(const struct DcEstimate *est,
                                   size_t n_paths,
                                   struct DcEstimate **out);

// Basis dimension m of the estimate.
//
// # Safety
// `est` must be a live estimate handle and `out` must be valid for writes.
enum DcStatus dc_estimate_dim(const struct DcEstimate *est, size_t *out);

// Copies the m coefficients into `buf`.
//
// # Safety
// `est` must be a live estimate handle and `buf` must hold `len` writable
// doubles.
enum DcStatus dc_estimate_coeffs(const struct DcEstimate *est, double *buf, size_t len);

// Evaluates the estimate at `count` points. Points outside [A, B] give 0.
//
// # Safety
// `est` must be a live estimate handle, `xs` must hold `count` readable
// doubles and `out` must hold `count` writable doubles.
enum DcStatus dc_estimate_eval(const struct DcEstimate *est,
                               const double *xs,
                               size_t count,
                               double *out);

// # Safety
// `est` must be null or a live estimate handle, and must not be used
// afterwards.
void dc_estimate_free(struct DcEstimate *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFCOEF_H */
