#ifndef BEAMKIT_H
#define BEAMKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BkStatus {
  BK_STATUS_OK = 0,
  BK_STATUS_NULL_POINTER = 1,
  BK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Invalid configuration or arguments rejected by the library.
   */
  BK_STATUS_CONFIG = 3,
  /**
   * Unreadable, malformed or inconsistent input data.
   */
  BK_STATUS_DATA = 4,
  /**
   * Singular system or non-finite values.
   */
  BK_STATUS_NUMERICAL = 5,
  BK_STATUS_PANIC = 6,
} BkStatus;

/**
 * Array geometry handle.
 */
typedef struct BkGeometry BkGeometry;

/**
 * Trained pipeline handle, loaded from a checkpoint.
 */
typedef struct BkPipeline BkPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static NUL-terminated string.
 */
const char *bk_version(void);

/**
 * Copies the last failure message of this thread into `buf` (truncated,
 * always NUL-terminated when `cap > 0`). Returns the full message length
 * without the terminator; 0 after a successful call.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t bk_last_error(char *buf, size_t cap);

/**
 * The default eight-element linear array. Never null.
 */
struct BkGeometry *bk_geometry_default(void);

/**
 * A linear array from element coordinates (metres) and `n_pairs` pairs
 * given as `2 * n_pairs` zero-based indices.
 *
 * # Safety
 * `positions` holds `channels` values, `pairs` holds `2 * n_pairs` values
 * (may be null when `n_pairs` is 0), `out` is writable.
 */
enum BkStatus bk_geometry_new(const double *positions,
                              size_t channels,
                              const size_t *pairs,
                              size_t n_pairs,
                              size_t reference,
                              double sound_speed,
                              struct BkGeometry **out);

/**
 * Number of elements, 0 for a null handle.
 *
 * # Safety
 * `geometry` is null or a live handle.
 */
size_t bk_geometry_channels(const struct BkGeometry *geometry);

/**
 * # Safety
 * `geometry` is null or a handle not yet freed.
 */
void bk_geometry_free(struct BkGeometry *geometry);

/**
 * Scale-invariant SDR in dB, clamped to ±80.
 *
 * # Safety
 * `estimate` and `reference` hold `len` values; `out_db` is writable.
 */
enum BkStatus bk_si_sdr(const double *estimate,
                        const double *reference,
                        size_t len,
                        double *out_db);

/**
 * Runs an oracle method (`"ibm"`, `"td-eq-mcwf"`, ...) on one scene given
 * its mixture and source images and writes the `len`-sample reference
 * channel estimate to `out`. With `oracle_statistics` false, beamformers
 * use ratio-masked mixtures instead of the true images.
 *
 * # Safety
 * `mixture`, `target`, `interferer` hold `channels × len` values with
 * `channels` the geometry's element count; `out` holds `len` values.
 */
enum BkStatus bk_oracle_separate(const struct BkGeometry *geometry,
                                 const char *method,
                                 bool oracle_statistics,
                                 const double *mixture,
                                 const double *target,
                                 const double *interferer,
                                 size_t len,
                                 uint32_t sample_rate,
                                 double target_doa,
                                 double interferer_doa,
                                 double *out);

/**
 * Loads a checkpoint written by `beamkit train`.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum BkStatus bk_pipeline_load(const char *path, struct BkPipeline **out);

/**
 * Channels the pipeline expects, 0 for a null handle.
 *
 * # Safety
 * `pipeline` is null or a live handle.
 */
size_t bk_pipeline_channels(const struct BkPipeline *pipeline);

/**
 * Separates the target arriving from `target_doa` degrees and writes the
 * `len`-sample reference-channel estimate to `out`.
 *
 * # Safety
 * `mixture` holds `channels × len` values with `channels` from
 * [`bk_pipeline_channels`]; `out` holds `len` values.
 */
enum BkStatus bk_pipeline_separate(const struct BkPipeline *pipeline,
                                   const double *mixture,
                                   size_t len,
                                   uint32_t sample_rate,
                                   double target_doa,
                                   double *out);

/**
 * # Safety
 * `pipeline` is null or a handle not yet freed.
 */
void bk_pipeline_free(struct BkPipeline *pipeline);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* BEAMKIT_H */
