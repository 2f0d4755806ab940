/* C interface to the speckflow denoising toolkit. */

#ifndef SPECKFLOW_H
#define SPECKFLOW_H

/* Generated by cbindgen; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; nonzero values match the CLI exit codes where applicable.
 */
#define SF_OK 0

/**
 * Bad parameter value or degenerate input.
 */
#define SF_ERR_INVALID 2

/**
 * File I/O or image format failure.
 */
#define SF_ERR_IO 3

/**
 * NaN/Inf or positivity breakdown during iteration.
 */
#define SF_ERR_NUMERICAL 4

/**
 * A required pointer argument was null.
 */
#define SF_ERR_NULL 5

/**
 * Unexpected internal failure.
 */
#define SF_ERR_INTERNAL 6

/**
 * Solver mode selectors for `SfDenoiseOptions::mode`.
 */
#define SF_MODE_COUPLED 0

#define SF_MODE_TV_ONLY 1

#define SF_MODE_NLTV_ONLY 2

#define SF_MODE_SYMMETRIC 3

#define SF_MODE_AA_BASELINE 4

/**
 * Opaque grayscale image handle (row-major f64).
 */
typedef struct SfGrid SfGrid;

/**
 * Denoising parameters; zero-initialize then override, or start from
 * `sf_denoise_options_default`.
 */
typedef struct SfDenoiseOptions {
  /**
   * Local/nonlocal trade-off in [0,1].
   */
  double lambda;
  /**
   * Explicit Euler step.
   */
  double tau;
  /**
   * Regularizer inside the inverse square roots.
   */
  double eps;
  size_t iterations;
  /**
   * One of the SF_MODE_* constants.
   */
  int mode;
  /**
   * Indicator pre-smoothing sigma.
   */
  double sigma;
  /**
   * Indicator contrast exponent.
   */
  double beta;
  size_t search_radius;
  size_t patch_edge;
  size_t k_neighbors;
  /**
   * Similarity scale; <= 0 uses the Immerkaer estimate.
   */
  double filter_h;
} SfDenoiseOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null if the
 * last call succeeded. The pointer stays valid until the next failing call
 * on the same thread.
 */
const char *sf_last_error(void);

/**
 * Library version as a static C string.
 */
const char *sf_version(void);

/**
 * Create a grid from a row-major buffer of width*height doubles.
 *
 * # Safety
 * `values` must point to at least `width * height` readable doubles and
 * `out` must be a valid destination pointer.
 */
int sf_grid_create(size_t width, size_t height, const double *values, struct SfGrid **out);

/**
 * Release a grid previously returned by this library. Null is a no-op.
 *
 * # Safety
 * `grid` must be a pointer obtained from this library and not yet freed.
 */
void sf_grid_free(struct SfGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle.
 */
size_t sf_grid_width(const struct SfGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle.
 */
size_t sf_grid_height(const struct SfGrid *grid);

/**
 * Copy all pixels into `out` (row-major, width*height doubles).
 *
 * # Safety
 * `grid` must be live and `out` must have room for width*height doubles.
 */
int sf_grid_copy_values(const struct SfGrid *grid, double *out);

/**
 * Read a PGM (.pgm) or PFM (.pfm) image.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
int sf_grid_read(const char *path, struct SfGrid **out);

/**
 * Write a grid; the extension selects the format (.pgm clamps to 8 bit).
 *
 * # Safety
 * `grid` must be live; `path` must be a NUL-terminated string.
 */
int sf_grid_write(const struct SfGrid *grid, const char *path);

/**
 * Multiply a nonnegative scene by unit-mean Gamma speckle with `looks` looks.
 *
 * # Safety
 * `scene` must be live; `out` must be valid.
 */
int sf_add_speckle(const struct SfGrid *scene, uint32_t looks, uint64_t seed, struct SfGrid **out);

/**
 * Immerkaer noise estimate of a grid.
 *
 * # Safety
 * `grid` must be live; `out` must be valid.
 */
int sf_estimate_noise(const struct SfGrid *grid, double *out);

/**
 * Default options matching the CLI defaults.
 */
struct SfDenoiseOptions sf_denoise_options_default(void);

/**
 * Denoise `noisy` into a freshly allocated grid.
 *
 * # Safety
 * `noisy` must be live; `options` may be null (defaults); `out` must be valid.
 */
int sf_denoise(const struct SfGrid *noisy,
               const struct SfDenoiseOptions *options,
               struct SfGrid **out);

/**
 * PSNR of `test` against `reference` in dB; identical images give +inf.
 *
 * # Safety
 * Both grids must be live; `out` must be valid.
 */
int sf_psnr(const struct SfGrid *reference, const struct SfGrid *test, double peak, double *out);

/**
 * Mean SSIM with the standard 11x11 Gaussian window.
 *
 * # Safety
 * Both grids must be live; `out` must be valid.
 */
int sf_ssim(const struct SfGrid *reference, const struct SfGrid *test, double peak, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECKFLOW_H */
