#ifndef FRANSON_H
#define FRANSON_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FransonStatus {
  FRANSON_STATUS_OK = 0,
  FRANSON_STATUS_NULL_POINTER = 1,
  FRANSON_STATUS_INVALID_UTF8 = 2,
  FRANSON_STATUS_VALIDATION = 3,
  FRANSON_STATUS_PARSE = 4,
  FRANSON_STATUS_IO = 5,
  FRANSON_STATUS_DEGENERATE = 6,
  FRANSON_STATUS_CONTRACT = 7,
  FRANSON_STATUS_RESOURCE = 8,
  FRANSON_STATUS_UNKNOWN_CHANNEL = 9,
  FRANSON_STATUS_OUT_OF_RANGE = 10,
  FRANSON_STATUS_PANIC = 11,
} FransonStatus;

/**
 * Experiment configuration.
 */
typedef struct FransonConfig FransonConfig;

/**
 * Result of a phase scan.
 */
typedef struct FransonScan FransonScan;

/**
 * Time-ordered detector clicks of one simulation.
 */
typedef struct FransonStream FransonStream;

typedef struct FransonOverlap {
  double v13;
  double g;
  double gamma_squared;
  double gamma;
  bool out_of_range;
  bool exceeds_nonlocality_threshold;
} FransonOverlap;

typedef struct FransonTag {
  int64_t time_ps;
  uint8_t channel;
} FransonTag;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *franson_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *franson_version(void);

/**
 * New configuration holding the documented defaults.
 */
struct FransonConfig *franson_config_new(void);

/**
 * Loads a flat `key = value` configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum FransonStatus franson_config_load(const char *path, struct FransonConfig **out);

/**
 * Sets one configuration key, e.g. `source.g2_zero` to `0.02`, and
 * revalidates. On failure the configuration is unchanged.
 *
 * # Safety
 * `config` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum FransonStatus franson_config_set(struct FransonConfig *config,
                                      const char *key,
                                      const char *value);

/**
 * # Safety
 * `config` must come from this library or be null; it is invalid afterwards.
 */
void franson_config_free(struct FransonConfig *config);

/**
 * Normalized coincidence probabilities of pairs (1,3), (1,4), (2,3), (2,4)
 * written to `out[0..4]`.
 *
 * # Safety
 * `out` must point to four writable doubles.
 */
enum FransonStatus franson_coincidence_rates(double reflectance_a,
                                             double reflectance_b,
                                             double phase_diff,
                                             double overlap,
                                             double *out);

/**
 * Wavefunction overlap from the corrected (1,3) visibility and g2(0).
 *
 * # Safety
 * `out` must be writable.
 */
enum FransonStatus franson_extract_overlap(double v13, double g2_zero, struct FransonOverlap *out);

/**
 * Simulates `n_cycles` cycles with the configuration's optics as given.
 *
 * # Safety
 * `config` must come from this library and `out` be writable.
 */
enum FransonStatus franson_simulate(const struct FransonConfig *config,
                                    uint64_t n_cycles,
                                    uint64_t seed,
                                    struct FransonStream **out);

/**
 * Number of clicks in the stream; 0 for a null handle.
 *
 * # Safety
 * `stream` must come from this library or be null.
 */
size_t franson_stream_len(const struct FransonStream *stream);

/**
 * Copies click `index` into `out`.
 *
 * # Safety
 * `stream` must come from this library and `out` be writable.
 */
enum FransonStatus franson_stream_get(const struct FransonStream *stream,
                                      size_t index,
                                      struct FransonTag *out);

/**
 * Clicks on `channel` (1..=4).
 *
 * # Safety
 * `stream` must come from this library or be null.
 */
size_t franson_stream_count(const struct FransonStream *stream, uint8_t channel);

/**
 * # Safety
 * `stream` must come from this library or be null; it is invalid afterwards.
 */
void franson_stream_free(struct FransonStream *stream);

/**
 * Full phase scan in the configured mode. With a non-null `out_dir` the
 * result files are written there as well.
 *
 * # Safety
 * `config` must come from this library, `out_dir` be null or a
 * NUL-terminated string, and `out` be writable.
 */
enum FransonStatus franson_scan(const struct FransonConfig *config,
                                const char *out_dir,
                                struct FransonScan **out);

/**
 * Raw and background-corrected visibility of pair `(i, j)`. `v2` is NaN
 * when the corrected fit is unavailable.
 *
 * # Safety
 * `scan` must come from this library; `v1` and `v2` must be writable.
 */
enum FransonStatus franson_scan_visibility(const struct FransonScan *scan,
                                           uint8_t i,
                                           uint8_t j,
                                           double *v1,
                                           double *v2);

/**
 * Overlap extracted by the scan.
 *
 * # Safety
 * `scan` must come from this library and `out` be writable.
 */
enum FransonStatus franson_scan_overlap(const struct FransonScan *scan, struct FransonOverlap *out);

/**
 * # Safety
 * `scan` must come from this library or be null; it is invalid afterwards.
 */
void franson_scan_free(struct FransonScan *scan);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRANSON_H */
