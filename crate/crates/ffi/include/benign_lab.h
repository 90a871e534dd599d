#ifndef BENIGN_LAB_H
#define BENIGN_LAB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 1 to 4 match the command-line exit codes.
 */
typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_CHECK_FAILED = 1,
  BL_STATUS_INVALID_ARGUMENT = 2,
  BL_STATUS_IO = 3,
  BL_STATUS_NUMERIC = 4,
  BL_STATUS_NULL_POINTER = 5,
  BL_STATUS_PANIC = 6,
} BlStatus;

/**
 * Opaque fitted kernel ridge regression model.
 */
typedef struct BlKrrModel BlKrrModel;

/**
 * Opaque two-layer ReLU network.
 */
typedef struct BlNet BlNet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *bl_last_error_message(void);

/**
 * Scalar profile `kappa(t)` for `t` in [-1, 1]; NaN outside.
 */
double bl_kappa(double t);

/**
 * Kernel value between two unit vectors of length `d`.
 *
 * # Safety
 * `x` and `xp` must point to `d` doubles and `out` to one double.
 */
enum BlStatus bl_ntk_eval(const double *x, const double *xp, size_t d, double *out);

/**
 * Eigenvalue of order `h` on the sphere in dimension `d`.
 *
 * # Safety
 * `out` must point to one double.
 */
enum BlStatus bl_eigenvalue(size_t d, size_t h, double tol, double *out);

/**
 * Dimension of the degree-`h` spherical harmonics in dimension `d`.
 *
 * # Safety
 * `out` must point to one `uint64_t`.
 */
enum BlStatus bl_multiplicity(size_t d, size_t h, uint64_t *out);

/**
 * Eigenvalues and multiplicities for orders `0..=max_h`.
 *
 * # Safety
 * `eigenvalues` and `multiplicities` must each hold `max_h + 1` entries.
 */
enum BlStatus bl_spectrum(size_t d,
                          size_t max_h,
                          double tol,
                          double *eigenvalues,
                          uint64_t *multiplicities);

/**
 * Fits kernel ridge regression on `n` unit-norm rows of length `d`.
 *
 * # Safety
 * `x` must hold `n * d` doubles, `y` must hold `n`, and `out` must be a
 * valid location for the handle. Release the handle with [`bl_krr_free`].
 */
enum BlStatus bl_krr_fit(const double *x,
                         size_t n,
                         size_t d,
                         const double *y,
                         double gamma,
                         struct BlKrrModel **out);

/**
 * Predictions at `n` unit-norm rows of length `d`.
 *
 * # Safety
 * `model` must come from [`bl_krr_fit`], `x` must hold `n * d` doubles and
 * `out` must hold `n`.
 */
enum BlStatus bl_krr_predict(const struct BlKrrModel *model,
                             const double *x,
                             size_t n,
                             size_t d,
                             double *out);

/**
 * Number of training points held by the model, or 0 for null.
 *
 * # Safety
 * `model` must be null or come from [`bl_krr_fit`].
 */
size_t bl_krr_num_train(const struct BlKrrModel *model);

/**
 * # Safety
 * `model` must be null or come from [`bl_krr_fit`] and not be used again.
 */
void bl_krr_free(struct BlKrrModel *model);

/**
 * Antisymmetrically initialized network of even width `m` on inputs of
 * length `d`. Its output is identically zero.
 *
 * # Safety
 * `out` must be a valid location for the handle. Release it with
 * [`bl_net_free`].
 */
enum BlStatus bl_net_init(size_t m, size_t d, uint64_t seed, struct BlNet **out);

/**
 * Network outputs at `n` rows of length `d`.
 *
 * # Safety
 * `net` must come from [`bl_net_init`], `x` must hold `n * d` doubles and
 * `out` must hold `n`.
 */
enum BlStatus bl_net_forward(const struct BlNet *net,
                             const double *x,
                             size_t n,
                             size_t d,
                             double *out);

/**
 * One full-batch gradient step on the squared loss. The network is left
 * unchanged on failure.
 *
 * # Safety
 * `net` must come from [`bl_net_init`], `x` must hold `n * d` doubles and
 * `y` must hold `n`.
 */
enum BlStatus bl_net_step(struct BlNet *net,
                          const double *x,
                          const double *y,
                          size_t n,
                          size_t d,
                          double lr);

/**
 * Hidden width, or 0 for null.
 *
 * # Safety
 * `net` must be null or come from [`bl_net_init`].
 */
size_t bl_net_width(const struct BlNet *net);

/**
 * Input dimension, or 0 for null.
 *
 * # Safety
 * `net` must be null or come from [`bl_net_init`].
 */
size_t bl_net_dim(const struct BlNet *net);

/**
 * # Safety
 * `net` must be null or come from [`bl_net_init`] and not be used again.
 */
void bl_net_free(struct BlNet *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BENIGN_LAB_H */
