#ifndef L3_SPLITTING_H
#define L3_SPLITTING_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum L3Status {
  L3_STATUS_OK = 0,
  // An argument was out of range or malformed.
  L3_STATUS_INVALID_ARGUMENT = 1,
  // A required pointer was null.
  L3_STATUS_NULL_POINTER = 2,
  // The computation failed (integrator, quadrature, root finder, ...).
  L3_STATUS_NUMERICAL_FAILURE = 3,
  // The result would be smaller than the attainable accuracy.
  L3_STATUS_NUMERICAL_FLOOR = 4,
  // An internal consistency check did not pass.
  L3_STATUS_CHECK_FAILED = 5,
  // A panic was caught at the boundary.
  L3_STATUS_PANIC = 6,
} L3Status;

typedef enum L3ConstantAMethod {
  L3_CONSTANT_A_METHOD_X_INTEGRAL = 0,
  L3_CONSTANT_A_METHOD_LAMBDA_INTEGRAL = 1,
} L3ConstantAMethod;

typedef enum L3Precision {
  // Refused for μ below the native threshold.
  L3_PRECISION_NATIVE = 0,
  L3_PRECISION_COMPENSATED = 1,
  // Chosen from μ by the library policy.
  L3_PRECISION_AUTO = 2,
} L3Precision;

// The five Lagrange points of one mass ratio.
typedef struct L3Lagrange L3Lagrange;

// Result of a splitting computation.
typedef struct L3Splitting L3Splitting;

// Options of a splitting computation.
typedef struct L3SplittingConfig L3SplittingConfig;

// Stokes constant estimate of the inner equation.
typedef struct L3Stokes L3Stokes;

typedef struct L3LagrangePoint {
  double q1;
  double q2;
  double p1;
  double p2;
  double gradient_norm;
  double eigenvalues_re[4];
  double eigenvalues_im[4];
} L3LagrangePoint;

typedef struct L3SplittingSummary {
  double mu;
  double theta_star;
  double d;
  double delta_r;
  double delta_big_r;
  double delta_g;
  // d·μ^{-1/3}·e^{A/√μ}.
  double normalized;
  double tof_u;
  double tof_s;
  double energy_gap;
  enum L3Precision precision;
} L3SplittingSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Error message of the last call on this thread; empty after a success.
//
// The pointer stays valid until the next call into the library on the same thread.
const char *l3_last_error(void);

// Library version as a static NUL-terminated string.
const char *l3_version(void);

// Releases a string returned by a `*_to_json` function.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void l3_string_free(char *s);

// Singularity constant A by tanh-sinh quadrature.
//
// `error_estimate` may be null.
//
// # Safety
// `value` must be valid for writes; `error_estimate` must be null or valid for writes.
enum L3Status l3_constant_a(double tol,
                            enum L3ConstantAMethod method,
                            double *value,
                            double *error_estimate);

// # Safety
// `out` must be valid for writes. On success `*out` owns a handle for [`l3_lagrange_free`].
enum L3Status l3_lagrange_new(double mu, struct L3Lagrange **out);

// Point `index` in the order L1..L5 (0-based).
//
// # Safety
// `h` must be a live handle and `out` valid for writes.
enum L3Status l3_lagrange_point(const struct L3Lagrange *h,
                                size_t index,
                                struct L3LagrangePoint *out);

// # Safety
// `h` must be null or a handle from [`l3_lagrange_new`] that is not used afterwards.
void l3_lagrange_free(struct L3Lagrange *h);

// New configuration with the library defaults.
struct L3SplittingConfig *l3_splitting_config_new(void);

// # Safety
// `cfg` must be a live configuration handle.
enum L3Status l3_splitting_config_set_tolerance(struct L3SplittingConfig *cfg, double rel_tol);

// # Safety
// `cfg` must be a live configuration handle.
enum L3Status l3_splitting_config_set_precision(struct L3SplittingConfig *cfg, enum L3Precision p);

// # Safety
// `cfg` must be a live configuration handle.
enum L3Status l3_splitting_config_set_seed_offset(struct L3SplittingConfig *cfg, double eps);

// # Safety
// `cfg` must be null or a configuration handle that is not used afterwards.
void l3_splitting_config_free(struct L3SplittingConfig *cfg);

// Distance between W^{u,+} and W^{s,+} on the section θ = `theta_star`.
//
// `cfg` may be null for the defaults.
//
// # Safety
// `cfg` must be null or live, and `out` valid for writes. On success `*out`
// owns a handle for [`l3_splitting_free`].
enum L3Status l3_splitting_compute(double mu,
                                   double theta_star,
                                   const struct L3SplittingConfig *cfg,
                                   struct L3Splitting **out);

// # Safety
// `h` must be a live handle and `out` valid for writes.
enum L3Status l3_splitting_summary(const struct L3Splitting *h, struct L3SplittingSummary *out);

// Full report as JSON, or null on failure. Release with [`l3_string_free`].
//
// # Safety
// `h` must be null or a live handle.
char *l3_splitting_to_json(const struct L3Splitting *h);

// # Safety
// `h` must be null or a handle that is not used afterwards.
void l3_splitting_free(struct L3Splitting *h);

// Extracts Θ from the levels `rhos[0..n_rhos]`.
//
// Pass `n_rhos = 0` for the default levels and `order = 0` or
// non-positive `re_start`/`tol` for the defaults.
//
// # Safety
// `rhos` must point to `n_rhos` values (or be null when `n_rhos = 0`) and
// `out` must be valid for writes.
enum L3Status l3_stokes_compute(const double *rhos,
                                size_t n_rhos,
                                double re_start,
                                size_t order,
                                double tol,
                                struct L3Stokes **out);

// # Safety
// `h` must be a live handle; `re`, `im` and `spread` must be valid for writes
// (`spread` may be null).
enum L3Status l3_stokes_theta(const struct L3Stokes *h, double *re, double *im, double *spread);

// Full estimate as JSON, or null on failure. Release with [`l3_string_free`].
//
// # Safety
// `h` must be null or a live handle.
char *l3_stokes_to_json(const struct L3Stokes *h);

// # Safety
// `h` must be null or a handle that is not used afterwards.
void l3_stokes_free(struct L3Stokes *h);

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `len`) and returns the full message length.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
size_t l3_last_error_copy(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* L3_SPLITTING_H */
