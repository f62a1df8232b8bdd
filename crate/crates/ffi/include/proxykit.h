#ifndef PROXYKIT_H
#define PROXYKIT_H

#include <stddef.h>
#include <stdint.h>

typedef enum PkStatus {
  PK_STATUS_OK = 0,
  PK_STATUS_NULL_ARGUMENT = 1,
  PK_STATUS_IO = 2,
  PK_STATUS_PARSE = 3,
  PK_STATUS_VALIDATION = 4,
  PK_STATUS_CONFIG = 5,
  PK_STATUS_PLANNING = 6,
  PK_STATUS_ALIGNMENT = 7,
  PK_STATUS_SHAPE = 8,
  PK_STATUS_EMPTY_INPUT = 9,
  PK_STATUS_OTHER = 10,
  PK_STATUS_PANIC = 11,
} PkStatus;

typedef struct PkLayout PkLayout;

typedef struct PkScene PkScene;

typedef struct PkTrajectory PkTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pk_version(void);

// Length in bytes of the calling thread's last error message, without NUL.
size_t pk_last_error_length(void);

// Copy the last error message into `buf` (NUL-terminated, truncated to
// `len - 1` bytes). Returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t pk_last_error_message(char *buf, size_t len);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PkStatus pk_layout_load(const char *path, struct PkLayout **out);

// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PkStatus pk_layout_parse(const char *json, struct PkLayout **out);

// Procedural single-room layout with default generator settings.
//
// # Safety
// `out` must be writable.
enum PkStatus pk_layout_generate(uint64_t seed, struct PkLayout **out);

// # Safety
// `layout` must be a live handle.
enum PkStatus pk_layout_validate(const struct PkLayout *layout);

// # Safety
// `layout` must be a live handle and `out` writable.
enum PkStatus pk_layout_room_count(const struct PkLayout *layout, size_t *out);

// # Safety
// `layout` must be null or a handle not yet freed.
void pk_layout_free(struct PkLayout *layout);

// Build the render acceleration structure of a layout.
//
// # Safety
// `layout` must be a live handle and `out` writable.
enum PkStatus pk_scene_new(const struct PkLayout *layout, struct PkScene **out);

// # Safety
// `scene` must be null or a handle not yet freed.
void pk_scene_free(struct PkScene *scene);

// Render depth (meters along the ray, +inf on miss) and semantic ids into
// caller buffers of `width * height` elements. Either buffer may be null.
//
// # Safety
// Handles and pose arrays must be valid; non-null buffers must hold
// `width * height` elements.
enum PkStatus pk_scene_render(const struct PkScene *scene,
                              const double *position,
                              const double *quaternion,
                              uint32_t width,
                              uint32_t height,
                              double fov_deg,
                              double *depth_out,
                              uint8_t *semantic_out);

// Plan the trajectory of one quadrant (0..4) of a room with default
// planner settings at `image_size` pixels.
//
// # Safety
// `layout` must be a live handle and `out` writable.
enum PkStatus pk_plan_quadrant(const struct PkLayout *layout,
                               size_t room,
                               size_t quadrant,
                               uint32_t image_size,
                               struct PkTrajectory **out);

// # Safety
// `trajectory` must be a live handle and `out` writable.
enum PkStatus pk_trajectory_len(const struct PkTrajectory *trajectory, size_t *out);

// # Safety
// `trajectory` must be a live handle; `position` and `quaternion` must hold
// 3 and 4 writable doubles.
enum PkStatus pk_trajectory_pose(const struct PkTrajectory *trajectory,
                                 size_t index,
                                 double *position,
                                 double *quaternion);

// # Safety
// `trajectory` must be null or a handle not yet freed.
void pk_trajectory_free(struct PkTrajectory *trajectory);

// Camera-scale search against a synthetic oracle whose true scale is
// `theta_true`, with the default schedule.
//
// # Safety
// Handles must be live; outputs must be writable (`loss_out` may be null).
enum PkStatus pk_align_synthetic(const struct PkScene *scene,
                                 const struct PkTrajectory *trajectory,
                                 double theta_true,
                                 double *theta_out,
                                 double *loss_out);

// Mean square-root nearest-neighbor distance of `means` (`mean_count`
// xyz triples) to `reference` (`ref_count` triples).
//
// # Safety
// Arrays must hold the stated number of triples; `out` must be writable.
enum PkStatus pk_nn_loss(const double *means,
                         size_t mean_count,
                         const double *reference,
                         size_t ref_count,
                         double *out);

// Photometric loss of two `width * height` images with 1 or 3 interleaved
// channels in [0, 1].
//
// # Safety
// Images must hold `width * height * channels` doubles; `out` writable.
enum PkStatus pk_loss_3dgs(const double *image,
                           const double *target,
                           size_t width,
                           size_t height,
                           size_t channels,
                           double lambda,
                           double *out);

// Masked mean absolute depth error; `mask` holds 0/1 bytes. `empty_out`
// (may be null) is set to 1 when the mask selects nothing.
//
// # Safety
// Buffers must hold `width * height` elements; `out` writable.
enum PkStatus pk_masked_depth_loss(const double *rendered,
                                   const double *proxy,
                                   const uint8_t *mask,
                                   size_t width,
                                   size_t height,
                                   double *out,
                                   int32_t *empty_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROXYKIT_H */
