#ifndef KANLAB_H
#define KANLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KanlabLabel {
  KANLAB_LABEL_BASIN0 = 0,
  KANLAB_LABEL_BASIN1 = 1,
  KANLAB_LABEL_UNDECIDED = 2,
} KanlabLabel;

typedef enum KanlabStatus {
  KANLAB_STATUS_OK = 0,
  KANLAB_STATUS_NULL_POINTER = 1,
  KANLAB_STATUS_INVALID_ARGUMENT = 2,
  KANLAB_STATUS_INVALID_UTF8 = 3,
  KANLAB_STATUS_CONFIG = 4,
  KANLAB_STATUS_NUMERICAL = 5,
  KANLAB_STATUS_UNDECIDED = 6,
  KANLAB_STATUS_PANIC = 7,
} KanlabStatus;

/**
 * Opaque equilibrium state of the base map.
 */
typedef struct KanlabEquilibrium KanlabEquilibrium;

/**
 * Opaque skew-product system.
 */
typedef struct KanlabSystem KanlabSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid until the next failure.
 */
const char *kanlab_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kanlab_version(void);

/**
 * Create a builtin system, e.g. `"kan1994"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KanlabStatus kanlab_system_new_builtin(const char *name, struct KanlabSystem **out);

/**
 * Create a system from a JSON system block.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KanlabStatus kanlab_system_from_json(const char *json, struct KanlabSystem **out);

/**
 * # Safety
 * `sys` must come from a `kanlab_system_*` constructor and not be used afterwards. Null is ignored.
 */
void kanlab_system_free(struct KanlabSystem *sys);

/**
 * One application of `K`, with invariance checked.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KanlabStatus kanlab_system_step(const struct KanlabSystem *sys,
                                     double theta,
                                     double t,
                                     double *out_theta,
                                     double *out_t);

/**
 * Finite-time basin label of `(theta, t)`; `out_time` is -1 when undecided.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KanlabStatus kanlab_classify(const struct KanlabSystem *sys,
                                  double theta,
                                  double t,
                                  size_t n_max,
                                  double delta,
                                  size_t window,
                                  enum KanlabLabel *out_label,
                                  int64_t *out_time);

/**
 * `∫ log|∂_t φ(θ, j)| dθ` by the midpoint rule on `grid` cells, `j ∈ {0, 1}`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KanlabStatus kanlab_boundary_exponent(const struct KanlabSystem *sys,
                                           uint8_t j,
                                           size_t grid,
                                           double *out);

/**
 * Bisected basin boundary on the fiber over `theta`; NaN if a probe stays undecided.
 *
 * # Safety
 * Pointers must be valid.
 */
enum KanlabStatus kanlab_sigma(const struct KanlabSystem *sys,
                               double theta,
                               size_t n_max,
                               double tol,
                               double *out);

/**
 * Equilibrium state of the base for `φ = Σ cos[m]·cos(2πmθ) + Σ sin[m−1]·sin(2πmθ)`.
 *
 * # Safety
 * `cos`/`sin` must point to `n_cos`/`n_sin` doubles (may be null when the length is 0).
 */
enum KanlabStatus kanlab_equilibrium_solve(const struct KanlabSystem *sys,
                                           const double *cos,
                                           size_t n_cos,
                                           const double *sin,
                                           size_t n_sin,
                                           size_t grid,
                                           struct KanlabEquilibrium **out);

/**
 * # Safety
 * `eq` must be valid.
 */
enum KanlabStatus kanlab_equilibrium_pressure(const struct KanlabEquilibrium *eq, double *out);

/**
 * Grid size of the state, or 0 for a null handle.
 *
 * # Safety
 * `eq` must be valid or null.
 */
size_t kanlab_equilibrium_grid(const struct KanlabEquilibrium *eq);

/**
 * Copy the invariant weights into `buf` (`len` must equal the grid size).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum KanlabStatus kanlab_equilibrium_weights(const struct KanlabEquilibrium *eq,
                                             double *buf,
                                             size_t len);

/**
 * # Safety
 * `eq` must come from `kanlab_equilibrium_solve` and not be used afterwards. Null is ignored.
 */
void kanlab_equilibrium_free(struct KanlabEquilibrium *eq);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KANLAB_H */
