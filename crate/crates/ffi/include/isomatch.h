#ifndef ISOMATCH_H
#define ISOMATCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  IM_STATUS_OK = 0,
  IM_STATUS_NULL_POINTER = 1,
  IM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Kernel underflow or a degenerate fit.
   */
  IM_STATUS_NUMERICAL = 3,
  /**
   * Registration found no usable correspondences or hypotheses.
   */
  IM_STATUS_REGISTRATION_FAILED = 4,
  IM_STATUS_IO = 5,
  IM_STATUS_PANIC = 6,
} ImStatus;

/**
 * Opaque point cloud.
 */
typedef struct ImCloud ImCloud;

typedef struct {
  uint64_t seed;
  size_t super_points;
  double mass;
  double epsilon;
  /**
   * Nonzero weights sampling confidences by the estimated overlap.
   */
  uint8_t overlap_filter;
  size_t n_samples;
  double temperature;
  double inlier_thresh;
  size_t ransac_iters;
} ImRegisterOptions;

typedef struct {
  /**
   * Row-major rotation then translation.
   */
  double transform[12];
  size_t n_correspondences;
  size_t n_inliers;
} ImRegistration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *im_last_error_message(void);

/**
 * Static, NUL-terminated library version.
 */
const char *im_version(void);

/**
 * Creates a cloud from `n` points given as `3n` xyz values.
 *
 * # Safety
 * `xyz` must be valid for `3n` reads and `out` for one write.
 */
ImStatus im_cloud_new(const double *xyz, size_t n, ImCloud **out);

/**
 * # Safety
 * `cloud` must be null or a handle from this library not yet freed.
 */
void im_cloud_free(ImCloud *cloud);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t im_cloud_len(const ImCloud *cloud);

/**
 * Attaches row-major features, one row of `dim` values per point.
 *
 * # Safety
 * `cloud` must be a live handle and `features` valid for `im_cloud_len(cloud) * dim` reads.
 */
ImStatus im_cloud_set_features(ImCloud *cloud, const double *features, size_t dim);

/**
 * Computes rigid-invariant local descriptors of dimension `dim` in place.
 *
 * # Safety
 * `cloud` must be a live handle.
 */
ImStatus im_cloud_compute_descriptors(ImCloud *cloud, double radius, size_t dim, uint64_t seed);

/**
 * Default registration options.
 */
ImRegisterOptions im_register_options_default(void);

/**
 * Estimates the rigid transform mapping `p` onto `q`. Both clouds need features.
 *
 * # Safety
 * `p` and `q` must be live handles; `options` may be null for defaults;
 * `out` must be valid for one write.
 */
ImStatus im_register(const ImCloud *p,
                     const ImCloud *q,
                     const ImRegisterOptions *options,
                     ImRegistration *out);

/**
 * Balanced entropic OT with uniform marginals. `cost` and `plan` are
 * row-major `n x m`.
 *
 * # Safety
 * `cost` must be valid for `n * m` reads and `plan` for `n * m` writes.
 */
ImStatus im_sinkhorn(const double *cost,
                     size_t n,
                     size_t m,
                     double epsilon,
                     size_t max_iters,
                     double tol,
                     double *plan);

/**
 * Partial entropic OT moving `mass` in (0, 1] under uniform marginals.
 *
 * # Safety
 * As for [`im_sinkhorn`].
 */
ImStatus im_partial_ot(const double *cost,
                       size_t n,
                       size_t m,
                       double mass,
                       double epsilon,
                       size_t max_iters,
                       double tol,
                       double *plan);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISOMATCH_H */
