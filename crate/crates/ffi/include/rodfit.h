#ifndef RODFIT_H
#define RODFIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `Ok` is 0; every other value is an error.
 */
typedef enum RodfitStatus {
  RODFIT_STATUS_OK = 0,
  /**
   * A null pointer, bad index or non-UTF-8 string was passed.
   */
  RODFIT_STATUS_INVALID_ARGUMENT = 1,
  RODFIT_STATUS_INVALID_PARAMETER = 2,
  RODFIT_STATUS_INVALID_BOX = 3,
  /**
   * The fitted contour or region degenerated.
   */
  RODFIT_STATUS_DEGENERATE = 4,
  RODFIT_STATUS_INFEASIBLE = 5,
  RODFIT_STATUS_IO = 6,
  RODFIT_STATUS_PARSE = 7,
  RODFIT_STATUS_CAPACITY = 8,
  RODFIT_STATUS_INVALID_INPUT = 9,
  RODFIT_STATUS_INTERNAL = 10,
} RodfitStatus;

/**
 * Contour model orientation transform.
 */
typedef enum RodfitRotationMode {
  RODFIT_ROTATION_MODE_PROPER = 0,
  RODFIT_ROTATION_MODE_PRINTED = 1,
} RodfitRotationMode;

/**
 * Run configuration (objective, optimizer and tile settings).
 */
typedef struct RodfitConfig RodfitConfig;

/**
 * Grayscale image with values in `[0, 1]`.
 */
typedef struct RodfitImage RodfitImage;

/**
 * Per-box outcomes of one segmentation call, in box order.
 */
typedef struct RodfitResults RodfitResults;

/**
 * Inclusive bounding box in image pixel coordinates.
 */
typedef struct RodfitBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
} RodfitBox;

/**
 * Fitted rod parameters in image pixels (angle in radians).
 */
typedef struct RodfitParams {
  double cx;
  double cy;
  double l1;
  double l2;
  double w;
  double d;
  double e;
  double alpha;
} RodfitParams;

typedef struct RodfitEnergy {
  double f_ce;
  double f_re;
  double f_ge;
  double total;
} RodfitEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread; never free it.
 */
const char *rodfit_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rodfit_version(void);

/**
 * Copies a row-major `width * height` buffer into a new image.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles; `out` must be
 * writable.
 */
enum RodfitStatus rodfit_image_new(size_t width,
                                   size_t height,
                                   const double *data,
                                   struct RodfitImage **out);

/**
 * Reads an 8- or 16-bit grayscale PNG or PGM.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RodfitStatus rodfit_image_read(const char *path, struct RodfitImage **out);

/**
 * # Safety
 * `image` must be null or a handle from this library, not yet freed.
 */
void rodfit_image_free(struct RodfitImage *image);

/**
 * # Safety
 * `image` must be a live handle; `width` and `height` must be writable.
 */
enum RodfitStatus rodfit_image_size(const struct RodfitImage *image, size_t *width, size_t *height);

/**
 * Configuration with the library defaults.
 *
 * # Safety
 * `out` must be writable.
 */
enum RodfitStatus rodfit_config_new(struct RodfitConfig **out);

/**
 * Reads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RodfitStatus rodfit_config_load(const char *path, struct RodfitConfig **out);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void rodfit_config_free(struct RodfitConfig *config);

/**
 * Sets the region and geodesic weights. Invalid values leave the
 * configuration unchanged.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RodfitStatus rodfit_config_set_weights(struct RodfitConfig *config,
                                            double w_region,
                                            double w_geodesic);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum RodfitStatus rodfit_config_set_rotation_mode(struct RodfitConfig *config,
                                                  enum RodfitRotationMode mode);

/**
 * Enables (non-zero) or disables the biological shape constraints.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RodfitStatus rodfit_config_set_constrained(struct RodfitConfig *config, int32_t constrained);

/**
 * Worker threads for [`rodfit_segment`]; 0 uses one per core.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RodfitStatus rodfit_config_set_workers(struct RodfitConfig *config, size_t workers);

/**
 * Micrometers per pixel.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RodfitStatus rodfit_config_set_pixel_size(struct RodfitConfig *config, double pixel_size);

/**
 * Segments one cell per box. Per-box failures do not fail the call; query
 * them with [`rodfit_results_status`].
 *
 * # Safety
 * `image` and `config` must be live handles, `boxes` must point to
 * `n_boxes` readable boxes (or be null when `n_boxes` is 0) and `out`
 * must be writable.
 */
enum RodfitStatus rodfit_segment(const struct RodfitImage *image,
                                 const struct RodfitConfig *config,
                                 const struct RodfitBox *boxes,
                                 size_t n_boxes,
                                 struct RodfitResults **out);

/**
 * # Safety
 * `results` must be null or a live handle.
 */
void rodfit_results_free(struct RodfitResults *results);

/**
 * Number of boxes in the result set (0 for a null handle).
 *
 * # Safety
 * `results` must be null or a live handle.
 */
size_t rodfit_results_len(const struct RodfitResults *results);

/**
 * Outcome of cell `index`: `Ok`, or the error that cell failed with (the
 * message is then available from [`rodfit_last_error`]).
 *
 * # Safety
 * `results` must be a live handle.
 */
enum RodfitStatus rodfit_results_status(const struct RodfitResults *results, size_t index);

/**
 * Fitted parameters of cell `index` in image coordinates.
 *
 * # Safety
 * `results` must be a live handle and `out` writable.
 */
enum RodfitStatus rodfit_results_params(const struct RodfitResults *results,
                                        size_t index,
                                        struct RodfitParams *out);

/**
 * # Safety
 * `results` must be a live handle and `out` writable.
 */
enum RodfitStatus rodfit_results_energy(const struct RodfitResults *results,
                                        size_t index,
                                        struct RodfitEnergy *out);

/**
 * Copies the contour of cell `index` in image coordinates as interleaved
 * `x, y` pairs into `xy` (room for `capacity` points) and stores the
 * vertex count in `n_points`. With `xy` null only the count is returned;
 * if `capacity` is too small nothing is copied and `InvalidArgument` is
 * returned with the required count in `n_points`.
 *
 * # Safety
 * `results` must be a live handle, `n_points` writable and `xy` null or
 * writable for `2 * capacity` doubles.
 */
enum RodfitStatus rodfit_results_contour(const struct RodfitResults *results,
                                         size_t index,
                                         double *xy,
                                         size_t capacity,
                                         size_t *n_points);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RODFIT_H */
