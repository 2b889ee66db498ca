#ifndef GEOFLOW_H
#define GEOFLOW_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeoflowMethod {
  GEOFLOW_METHOD_MANE = 0,
  GEOFLOW_METHOD_JACOBI_DET = 1,
  GEOFLOW_METHOD_SPANNING = 2,
} GeoflowMethod;

/**
 * Result codes.
 */
typedef enum GeoflowStatus {
  GEOFLOW_STATUS_OK = 0,
  GEOFLOW_STATUS_NULL_POINTER = 1,
  GEOFLOW_STATUS_INVALID_INPUT = 2,
  GEOFLOW_STATUS_INVALID_METRIC = 3,
  GEOFLOW_STATUS_UNKNOWN_CUSTOM_METRIC = 4,
  GEOFLOW_STATUS_NON_POSITIVE_DEFINITE = 5,
  GEOFLOW_STATUS_POINT_OUTSIDE_CHART = 6,
  GEOFLOW_STATUS_NOT_UNIT_SPEED = 7,
  GEOFLOW_STATUS_INTEGRATION_FAILED = 8,
  GEOFLOW_STATUS_RESOLUTION_TOO_COARSE = 9,
  GEOFLOW_STATUS_MESH_TOO_COARSE = 10,
  GEOFLOW_STATUS_POLE_ENCOUNTERED = 11,
  GEOFLOW_STATUS_OUTSIDE_VALIDITY_STRIP = 12,
  GEOFLOW_STATUS_DEGENERATE = 13,
  GEOFLOW_STATUS_BUFFER_TOO_SMALL = 14,
  GEOFLOW_STATUS_PANIC = 15,
} GeoflowStatus;

/**
 * Opaque surface metric.
 */
typedef struct GeoflowMetric GeoflowMetric;

/**
 * Opaque curvature profile along a complexified geodesic.
 */
typedef struct GeoflowProfile GeoflowProfile;

/**
 * Opaque growth series.
 */
typedef struct GeoflowSeries GeoflowSeries;

/**
 * A point in chart coordinates.
 */
typedef struct GeoflowPoint {
  uint32_t chart;
  double u;
  double v;
} GeoflowPoint;

/**
 * A tangent vector in chart components, attached to a point.
 */
typedef struct GeoflowPhasePoint {
  struct GeoflowPoint base;
  double du;
  double dv;
} GeoflowPhasePoint;

/**
 * Fitted growth rate. `exponential` is nonzero when the series was
 * classified as exponential; `degree` is then meaningless.
 */
typedef struct GeoflowEntropyEstimate {
  double h;
  double ci;
  double window_lo;
  double window_hi;
  uint8_t exponential;
  uint32_t degree;
  double raw_slope;
} GeoflowEntropyEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *geoflow_version(void);

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded.
 *
 * # Safety
 * The pointer is valid until the next `geoflow_*` call on the same thread.
 */
const char *geoflow_last_error_message(void);

/**
 * Builds a metric from its JSON description, e.g.
 * `{"kind":"ellipsoid","params":{"a":[0.8,1.0,1.25]}}`. Custom names
 * resolve against the built-in registry.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GeoflowStatus geoflow_metric_from_json(const char *json, struct GeoflowMetric **out);

/**
 * # Safety
 * `metric` must come from `geoflow_metric_from_json` or be null.
 */
void geoflow_metric_free(struct GeoflowMetric *metric);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_metric_area(const struct GeoflowMetric *metric, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_gauss_curvature(const struct GeoflowMetric *metric,
                                           struct GeoflowPoint p,
                                           double *out);

/**
 * Unit tangent vector at `p` making angle `angle` with the first
 * coordinate direction.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_unit_vector(const struct GeoflowMetric *metric,
                                       struct GeoflowPoint p,
                                       double angle,
                                       struct GeoflowPhasePoint *out);

/**
 * Follows the unit-speed geodesic from `start` for arc length `length`.
 * `energy_drift` may be null.
 *
 * # Safety
 * Pointers must be valid; `energy_drift` may be null.
 */
enum GeoflowStatus geoflow_geodesic_endpoint(const struct GeoflowMetric *metric,
                                             struct GeoflowPhasePoint start,
                                             double length,
                                             double tol,
                                             struct GeoflowPhasePoint *out,
                                             double *energy_drift);

/**
 * Volume of the image of the vertical plane under the flow differential.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_vertical_determinant(const struct GeoflowMetric *metric,
                                                struct GeoflowPhasePoint state,
                                                double time,
                                                double *out);

/**
 * Counts geodesic arcs of length at most `horizon` from `x` to `y`.
 * `directions == 0` selects the default fan. Up to `capacity` arc lengths
 * are copied into `lengths` (which may be null when `capacity` is 0);
 * `n_lengths` receives the total number found. `count` includes the
 * zero-length arc when `x == y`; `lengths` does not.
 *
 * A degenerate target (e.g. a conjugate point) yields
 * `GEOFLOW_STATUS_DEGENERATE` with `count` still filled in.
 *
 * # Safety
 * Pointers must be valid; `lengths` must hold `capacity` doubles.
 */
enum GeoflowStatus geoflow_count_geodesics(const struct GeoflowMetric *metric,
                                           struct GeoflowPoint x,
                                           struct GeoflowPoint y,
                                           double horizon,
                                           size_t directions,
                                           size_t *count,
                                           double *lengths,
                                           size_t capacity,
                                           size_t *n_lengths);

/**
 * Series from caller-supplied data.
 *
 * # Safety
 * `horizons` and `values` must each hold `n` doubles; `out` must be valid.
 */
enum GeoflowStatus geoflow_series_new(enum GeoflowMethod method,
                                      const double *horizons,
                                      const double *values,
                                      size_t n,
                                      struct GeoflowSeries **out);

/**
 * Phase-volume growth series by quasi-random sampling of the unit
 * tangent bundle.
 *
 * # Safety
 * `horizons` must hold `n` doubles; other pointers must be valid.
 */
enum GeoflowStatus geoflow_jacobi_det_series(const struct GeoflowMetric *metric,
                                             const double *horizons,
                                             size_t n,
                                             size_t samples,
                                             uint64_t seed,
                                             struct GeoflowSeries **out);

/**
 * # Safety
 * `series` must be valid or null.
 */
size_t geoflow_series_len(const struct GeoflowSeries *series);

/**
 * Copies up to `capacity` values; returns `BUFFER_TOO_SMALL` if the series
 * is longer.
 *
 * # Safety
 * `out` must hold `capacity` doubles.
 */
enum GeoflowStatus geoflow_series_values(const struct GeoflowSeries *series,
                                         double *out,
                                         size_t capacity);

/**
 * # Safety
 * `series` must come from this library or be null.
 */
void geoflow_series_free(struct GeoflowSeries *series);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_fit_entropy(const struct GeoflowSeries *series,
                                       struct GeoflowEntropyEstimate *out);

/**
 * Constant curvature `k`.
 *
 * # Safety
 * `out` must be valid.
 */
enum GeoflowStatus geoflow_profile_constant(double k, struct GeoflowProfile **out);

/**
 * Chebyshev fit of the curvature along the geodesic through `state`,
 * over arc lengths `[-half_length, half_length]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_profile_along_geodesic(const struct GeoflowMetric *metric,
                                                  struct GeoflowPhasePoint state,
                                                  double half_length,
                                                  size_t degree,
                                                  struct GeoflowProfile **out);

/**
 * # Safety
 * `profile` must come from this library or be null.
 */
void geoflow_profile_free(struct GeoflowProfile *profile);

/**
 * Normal entry of `f` at `re + i im` and the smallest eigenvalue of `Im f`.
 * `min_eig` may be null.
 *
 * # Safety
 * Pointers must be valid; `min_eig` may be null.
 */
enum GeoflowStatus geoflow_f_normal(const struct GeoflowProfile *profile,
                                    double re,
                                    double im,
                                    double *out_re,
                                    double *out_im,
                                    double *min_eig);

/**
 * Largest `τ` such that `Im f` stays positive definite on `0 < Im z < τ`.
 * If no failure is found below `tau_max`, `radius` is `tau_max` and
 * `lower_bound` is set to 1.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GeoflowStatus geoflow_tube_radius(const struct GeoflowProfile *profile,
                                       double tau_max,
                                       size_t tau_steps,
                                       double *radius,
                                       uint8_t *lower_bound);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOFLOW_H */
