#ifndef SEGLOC_H
#define SEGLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SeglocStatus {
  SEGLOC_STATUS_OK = 0,
  SEGLOC_STATUS_NULL_POINTER = 1,
  SEGLOC_STATUS_INVALID_ARGUMENT = 2,
  SEGLOC_STATUS_IO = 3,
  /**
   * Corrupt, truncated or wrong-version file.
   */
  SEGLOC_STATUS_FORMAT = 4,
  SEGLOC_STATUS_CONFIG = 5,
  /**
   * The input geometry admits no result (e.g. a degenerate segment).
   */
  SEGLOC_STATUS_DEGENERATE = 6,
  SEGLOC_STATUS_INTERNAL = 7,
} SeglocStatus;

typedef struct SeglocConfig SeglocConfig;

/**
 * A configured pipeline bound to an indexed map.
 */
typedef struct SeglocLocalizer SeglocLocalizer;

typedef struct SeglocMap SeglocMap;

typedef struct SeglocModel SeglocModel;

typedef struct SeglocPose {
  /**
   * 1 when a pose was found; the other fields are zero otherwise.
   */
  uint8_t localized;
  /**
   * Row-major rotation taking live points into the map frame.
   */
  double rotation[9];
  double translation[3];
  /**
   * `w, x, y, z`.
   */
  double quaternion[4];
  size_t inliers;
  size_t iterations;
} SeglocPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *segloc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *segloc_version(void);

/**
 * Creates a configuration holding the defaults.
 */
enum SeglocStatus segloc_config_new(struct SeglocConfig **out);

/**
 * Parses a flat `key = value` configuration file.
 */
enum SeglocStatus segloc_config_load(const char *path, struct SeglocConfig **out);

/**
 * Sets one configuration key, using the same keys as configuration files.
 */
enum SeglocStatus segloc_config_set(struct SeglocConfig *config,
                                    const char *key,
                                    const char *value);

void segloc_config_free(struct SeglocConfig *config);

/**
 * Randomly initialized weights with the default channel widths.
 */
enum SeglocStatus segloc_model_init(uint64_t seed, struct SeglocModel **out);

enum SeglocStatus segloc_model_load(const char *path, struct SeglocModel **out);

enum SeglocStatus segloc_model_save(const struct SeglocModel *model, const char *path);

void segloc_model_free(struct SeglocModel *model);

enum SeglocStatus segloc_map_load(const char *path, struct SeglocMap **out);

enum SeglocStatus segloc_map_save(const struct SeglocMap *map, const char *path);

/**
 * Builds a map from one cloud of `n_points` points. `model` may be null
 * when the configuration names a model file or uses the eigenvalue
 * descriptor.
 */
enum SeglocStatus segloc_map_build(const struct SeglocConfig *config,
                                   const struct SeglocModel *model,
                                   const double *xyz,
                                   size_t n_points,
                                   struct SeglocMap **out);

/**
 * Number of segments in the map; 0 for a null handle.
 */
size_t segloc_map_len(const struct SeglocMap *map);

void segloc_map_free(struct SeglocMap *map);

/**
 * Copies what it needs from `config`, `model` (nullable) and `map`; the
 * handles may be freed afterwards.
 */
enum SeglocStatus segloc_localizer_new(const struct SeglocConfig *config,
                                       const struct SeglocModel *model,
                                       const struct SeglocMap *map,
                                       struct SeglocLocalizer **out);

/**
 * Localizes one cloud. Finding no pose is a success with `localized = 0`.
 */
enum SeglocStatus segloc_localize(const struct SeglocLocalizer *localizer,
                                  const double *xyz,
                                  size_t n_points,
                                  struct SeglocPose *pose);

void segloc_localizer_free(struct SeglocLocalizer *localizer);

/**
 * Farthest point sampling of `m` indices out of `n_points`, starting at
 * `seed_index`, written to `out_indices` (length `m`).
 */
enum SeglocStatus segloc_fps(const double *xyz,
                             size_t n_points,
                             size_t m,
                             size_t seed_index,
                             uint32_t *out_indices);

/**
 * Batched farthest point sampling over a `segments × stride × 3` tensor.
 * `valid_counts` and `seed_indices` have one entry per segment;
 * `out_indices` receives `segments × m` indices, row by row.
 */
enum SeglocStatus segloc_fps_batched(const double *data,
                                     size_t segments,
                                     size_t stride,
                                     const size_t *valid_counts,
                                     const size_t *seed_indices,
                                     size_t m,
                                     uint32_t *out_indices);

/**
 * The 7 covariance-eigenvalue shape features of one segment.
 */
enum SeglocStatus segloc_eigen_descriptor(const double *xyz, size_t n_points, double *out);

/**
 * Area under the ROC curve; `labels[i]` is 1 for a matching pair, 0 otherwise.
 */
enum SeglocStatus segloc_roc_auc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGLOC_H */
