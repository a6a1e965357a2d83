#ifndef STATCARE_H
#define STATCARE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum StcStatus {
  STC_STATUS_OK = 0,
  STC_STATUS_NULL_POINTER = 1,
  STC_STATUS_INVALID_INPUT = 2,
  STC_STATUS_INVALID_MODEL = 3,
  STC_STATUS_DOMAIN = 4,
  STC_STATUS_NO_SOLUTION = 5,
  STC_STATUS_DEGENERATE = 6,
  STC_STATUS_NO_REAL_SOLUTION = 7,
  STC_STATUS_CONFIG = 8,
  STC_STATUS_IO = 9,
  STC_STATUS_JSON = 10,
  STC_STATUS_PANIC = 11,
} StcStatus;

/**
 * Opaque estimation result.
 */
typedef struct StcEstimate StcEstimate;

/**
 * Opaque generating model.
 */
typedef struct StcModel StcModel;

/**
 * Opaque observed or simulated path.
 */
typedef struct StcPath StcPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *stc_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void stc_string_free(char *s);

/**
 * VAR(1) model `X_k = Φ X_{k-1} + ε_k` with Gaussian innovations of covariance `Σ`.
 *
 * # Safety
 * `phi` and `sigma` point to `n*n` doubles; `out` is writable.
 */
enum StcStatus stc_model_var1(size_t n,
                              const double *phi,
                              const double *sigma,
                              struct StcModel **out);

/**
 * Ornstein-Uhlenbeck model `dX = −H X dt + dW` with `W` a Brownian motion of covariance `Σ`.
 *
 * # Safety
 * `h` and `sigma` point to `n*n` doubles; `out` is writable.
 */
enum StcStatus stc_model_ou(size_t n, const double *h, const double *sigma, struct StcModel **out);

/**
 * Parses a model from the JSON form used by experiment configs.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum StcStatus stc_model_from_json(const char *json, struct StcModel **out);

/**
 * Serializes a model to JSON. Free the result with [`stc_string_free`].
 *
 * # Safety
 * `model` is a live handle; `out` is writable.
 */
enum StcStatus stc_model_to_json(const struct StcModel *model, char **out);

/**
 * Dimension of the model, 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t stc_model_dim(const struct StcModel *model);

/**
 * # Safety
 * `model` is null or a handle not yet freed.
 */
void stc_model_free(struct StcModel *model);

/**
 * Simulates a path from `model`. Discrete models produce `len` observations
 * (`burn_in` 0 picks the model default); the Ornstein-Uhlenbeck model is
 * sampled on `[0, t_end]` with step `dt`, and `len`/`burn_in` are ignored.
 *
 * # Safety
 * `model` is a live handle; `out` is writable.
 */
enum StcStatus stc_path_simulate(const struct StcModel *model,
                                 size_t len,
                                 size_t burn_in,
                                 double t_end,
                                 double dt,
                                 uint64_t seed,
                                 struct StcPath **out);

/**
 * Wraps `n × len` observations, stored observation after observation
 * (`values[k*n + i]` is coordinate `i` at step `k`). A positive `dt` makes a
 * path sampled from continuous time starting at 0; `dt <= 0` makes a
 * discrete path.
 *
 * # Safety
 * `values` points to `n*len` doubles; `out` is writable.
 */
enum StcStatus stc_path_from_values(size_t n,
                                    size_t len,
                                    const double *values,
                                    double dt,
                                    struct StcPath **out);

/**
 * # Safety
 * `path` is null or a live handle.
 */
size_t stc_path_dim(const struct StcPath *path);

/**
 * # Safety
 * `path` is null or a live handle.
 */
size_t stc_path_len(const struct StcPath *path);

/**
 * Copies the observations in the layout of [`stc_path_from_values`].
 *
 * # Safety
 * `path` is a live handle; `out` holds at least `out_len` doubles.
 */
enum StcStatus stc_path_values(const struct StcPath *path, double *out, size_t out_len);

/**
 * # Safety
 * `path` is null or a handle not yet freed.
 */
void stc_path_free(struct StcPath *path);

/**
 * Estimates `Θ = I − Φ` from a discrete path with integer horizon `t` and
 * noise variance `v` (`n*n`, row-major) of the `t`-step noise sum.
 *
 * # Safety
 * `path` is a live handle, `v` points to `n*n` doubles, `out` is writable.
 */
enum StcStatus stc_estimate_discrete(const struct StcPath *path,
                                     const double *v,
                                     size_t t,
                                     struct StcEstimate **out);

/**
 * Estimates the drift `H` from a sampled continuous path with horizon `t`
 * and noise variance `v = Var(G_t)`.
 *
 * # Safety
 * `path` is a live handle, `v` points to `n*n` doubles, `out` is writable.
 */
enum StcStatus stc_estimate_continuous(const struct StcPath *path,
                                       const double *v,
                                       double t,
                                       struct StcEstimate **out);

/**
 * # Safety
 * `est` is null or a live handle.
 */
size_t stc_estimate_dim(const struct StcEstimate *est);

/**
 * Whether the positive-definiteness gates passed. A failed gate leaves the
 * estimate at zero.
 *
 * # Safety
 * `est` is null or a live handle.
 */
bool stc_estimate_gate_passed(const struct StcEstimate *est);

/**
 * Copies the estimated matrix (row-major).
 *
 * # Safety
 * `est` is a live handle; `out` holds at least `out_len` doubles.
 */
enum StcStatus stc_estimate_matrix(const struct StcEstimate *est, double *out, size_t out_len);

/**
 * Serializes the full result, diagnostics included. Free with [`stc_string_free`].
 *
 * # Safety
 * `est` is a live handle; `out` is writable.
 */
enum StcStatus stc_estimate_to_json(const struct StcEstimate *est, char **out);

/**
 * # Safety
 * `est` is null or a handle not yet freed.
 */
void stc_estimate_free(struct StcEstimate *est);

/**
 * Solves `BᵀX + XB − XCX + D = 0` for the stabilizing symmetric positive
 * semidefinite `X`. All matrices are `n*n`, row-major. `residual` may be null.
 *
 * # Safety
 * `b`, `c`, `d` point to `n*n` doubles, `x` is writable for `n*n` doubles.
 */
enum StcStatus stc_solve_care(size_t n,
                              const double *b,
                              const double *c,
                              const double *d,
                              double *x,
                              double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STATCARE_H */
