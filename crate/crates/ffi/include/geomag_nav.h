#ifndef GEOMAG_NAV_H
#define GEOMAG_NAV_H

/* Generated by cbindgen from geomag-nav-ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GnStatus {
  GN_STATUS_OK = 0,
  GN_STATUS_NULL_POINTER = 1,
  GN_STATUS_INVALID_UTF8 = 2,
  GN_STATUS_CONFIG = 3,
  GN_STATUS_IO = 4,
  GN_STATUS_OUT_OF_DOMAIN = 5,
  GN_STATUS_MODEL = 6,
  GN_STATUS_POLICY = 7,
  GN_STATUS_INTERNAL = 99,
} GnStatus;

typedef enum GnOutcome {
  GN_OUTCOME_SUCCESS = 0,
  GN_OUTCOME_BUDGET_EXHAUSTED = 1,
  GN_OUTCOME_ABORTED = 2,
} GnOutcome;

typedef struct GnMissionResult GnMissionResult;

typedef struct GnModel GnModel;

/**
 * Scenario and the world built from it.
 */
typedef struct GnWorld GnWorld;

/**
 * Field elements in nT and degrees. Undefined angles are NaN.
 */
typedef struct GnFieldSample {
  double bx_nt;
  double by_nt;
  double bz_nt;
  double f_nt;
  double h_nt;
  double incl_deg;
  double decl_deg;
} GnFieldSample;

/**
 * Mission metrics. `mean_eta` is NaN without calibration.
 */
typedef struct GnMetrics {
  double travelled_km;
  size_t steps;
  double heading_variance;
  double heading_variance_unbiased;
  double deviation;
  double mean_eta;
} GnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a world from scenario JSON. `base_dir` anchors relative paths in
 * the scenario and may be null for the current directory.
 *
 * # Safety
 * `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
 * must be writable.
 */
enum GnStatus gn_world_from_config_json(const char *json,
                                        const char *base_dir,
                                        struct GnWorld **out);

/**
 * # Safety
 * `world` must come from [`gn_world_from_config_json`] and not be used
 * afterwards. Null is ignored.
 */
void gn_world_free(struct GnWorld *world);

/**
 * Field elements at a geographic position.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum GnStatus gn_field_at(const struct GnWorld *world,
                          double lat_deg,
                          double lon_deg,
                          struct GnFieldSample *out);

/**
 * Derived elements of a component triple.
 *
 * # Safety
 * `out` must be writable.
 */
enum GnStatus gn_derive_elements(double bx_nt,
                                 double by_nt,
                                 double bz_nt,
                                 struct GnFieldSample *out);

/**
 * The unscaled multimodal anomaly surface.
 */
double gn_peaks_anomaly(double u, double v);

/**
 * Load a model file. `window` of 0 accepts any window length.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum GnStatus gn_model_load(const char *path, size_t window, struct GnModel **out);

/**
 * # Safety
 * `model` must come from [`gn_model_load`] and not be used afterwards.
 */
void gn_model_free(struct GnModel *model);

/**
 * Fly the world's scenario mission with its configured policy. `model`
 * may be null for the analytic policy.
 *
 * Budget exhaustion is a result, not an error: check
 * [`gn_result_outcome`].
 *
 * # Safety
 * `world` and a non-null `model` must be live handles; `out` writable.
 */
enum GnStatus gn_run_mission(const struct GnWorld *world,
                             const struct GnModel *model,
                             struct GnMissionResult **out);

/**
 * Steps over all legs, 0 for null.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t gn_result_steps(const struct GnMissionResult *result);

/**
 * # Safety
 * `result` must be a live handle; `out` writable.
 */
enum GnStatus gn_result_outcome(const struct GnMissionResult *result, enum GnOutcome *out);

/**
 * # Safety
 * `result` must be a live handle; `out` writable.
 */
enum GnStatus gn_result_metrics(const struct GnMissionResult *result, struct GnMetrics *out);

/**
 * Write the per-step trajectory CSV.
 *
 * # Safety
 * `result` must be a live handle and `path` a NUL-terminated string.
 */
enum GnStatus gn_result_write_csv(const struct GnMissionResult *result, const char *path);

/**
 * # Safety
 * `result` must come from [`gn_run_mission`] and not be used afterwards.
 */
void gn_result_free(struct GnMissionResult *result);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gn_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *gn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOMAG_NAV_H */
