#ifndef LIDARMOTION_H
#define LIDARMOTION_H

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_IO = 3,
  LM_STATUS_FORMAT = 4,
  LM_STATUS_DEGENERATE = 5,
  LM_STATUS_FRAME_MISMATCH = 6,
  LM_STATUS_PRECONDITION = 7,
  LM_STATUS_INTERNAL = 99,
} LmStatus;

// Opaque point cloud.
typedef struct LmPointCloud LmPointCloud;

// Planar rigid motion. When `is_local` is nonzero the motion acts about
// `(origin_x, origin_y)`; otherwise about the world origin and the origin
// fields are ignored.
typedef struct LmPlanarMotion {
  double theta;
  double tx;
  double ty;
  double origin_x;
  double origin_y;
  uint8_t is_local;
} LmPlanarMotion;

// Spatial rigid motion `x -> R x + t`, rotation stored row-major.
typedef struct LmRigidMotion {
  double rotation[9];
  double translation[3];
} LmRigidMotion;

// Ground-plane oriented box: center, length/width/height, yaw.
typedef struct LmBox {
  double center[3];
  double size[3];
  double yaw;
} LmBox;

// One row of [`lm_stationarity_experiment`].
typedef struct LmSpreadRow {
  double theta;
  double world_spread;
  double local_spread;
  double closed_form;
} LmSpreadRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null after a
// success. Valid until the next call into this library on the same thread.
const char *lm_last_error(void);

// Reads a Velodyne `.bin` scan.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum LmStatus lm_cloud_read_bin(const char *path, struct LmPointCloud **out);

// Writes a cloud as a Velodyne `.bin` scan.
//
// # Safety
// `cloud` must come from this library; `path` must be nul-terminated.
enum LmStatus lm_cloud_write_bin(const struct LmPointCloud *cloud, const char *path);

// Builds a cloud from `n` interleaved `x, y, z` triples. `reflectance` may
// be null; otherwise it holds `n` values.
//
// # Safety
// `xyz` must point to `3 * n` doubles and `reflectance`, when non-null, to
// `n` floats.
enum LmStatus lm_cloud_from_xyz(const double *xyz,
                                size_t n,
                                const float *reflectance,
                                struct LmPointCloud **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `cloud` must be null or come from this library.
size_t lm_cloud_len(const struct LmPointCloud *cloud);

// Copies point `index` into `xyz[0..3]`.
//
// # Safety
// `cloud` must come from this library and `xyz` hold 3 doubles.
enum LmStatus lm_cloud_point(const struct LmPointCloud *cloud, size_t index, double *xyz);

// Releases a cloud. Null is a no-op.
//
// # Safety
// `cloud` must be null or an unreleased handle from this library.
void lm_cloud_free(struct LmPointCloud *cloud);

// Re-expresses a local motion about the world origin.
//
// # Safety
// `local` and `out` must be valid pointers.
enum LmStatus lm_local_to_world(const struct LmPlanarMotion *local, struct LmPlanarMotion *out);

// Re-expresses a world motion about `(origin_x, origin_y)`.
//
// # Safety
// `world` and `out` must be valid pointers.
enum LmStatus lm_world_to_local(const struct LmPlanarMotion *world,
                                double origin_x,
                                double origin_y,
                                struct LmPlanarMotion *out);

// Planar flow of point `(px, py)` under `motion` about origin `(ox, oy)`.
//
// # Safety
// `motion` must be valid and `flow` hold 2 doubles.
enum LmStatus lm_planar_flow(double px,
                             double py,
                             double ox,
                             double oy,
                             const struct LmPlanarMotion *motion,
                             double *flow);

// Point-to-point ICP aligning `src` onto `dst`. Pass `max_iter = 0` or a
// negative `tol` to use the defaults. `iterations` may be null.
//
// # Safety
// Handles must come from this library and `out` must be valid.
enum LmStatus lm_icp(const struct LmPointCloud *src,
                     const struct LmPointCloud *dst,
                     size_t max_iter,
                     double tol,
                     struct LmRigidMotion *out,
                     size_t *iterations);

// Bird's-eye-view IoU of two rotated boxes.
//
// # Safety
// All pointers must be valid.
enum LmStatus lm_ground_iou(const struct LmBox *a, const struct LmBox *b, double *out);

// Spread of inferred world-frame and local-frame motion targets over a
// `grid_n x grid_n` lattice, one row per angle. `rows` receives
// `n_thetas` entries.
//
// # Safety
// `thetas` must hold `n_thetas` doubles and `rows` room for as many rows.
enum LmStatus lm_stationarity_experiment(size_t grid_n,
                                         double spacing,
                                         const double *thetas,
                                         size_t n_thetas,
                                         struct LmSpreadRow *rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIDARMOTION_H */
