#ifndef EVLM_H
#define EVLM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvlmStatus {
  EVLM_STATUS_OK = 0,
  EVLM_STATUS_NULL_ARGUMENT = 1,
  EVLM_STATUS_INVALID_ARGUMENT = 2,
  EVLM_STATUS_IO = 3,
  EVLM_STATUS_PARSE = 4,
  EVLM_STATUS_FORMAT = 5,
  EVLM_STATUS_CONFIG = 6,
  EVLM_STATUS_BOUNDS = 7,
  EVLM_STATUS_SIZE = 8,
  EVLM_STATUS_OUT_OF_RANGE = 9,
  EVLM_STATUS_INTERNAL = 99,
  EVLM_STATUS_PANIC = 100,
} EvlmStatus;

typedef enum EvlmFrameRole {
  EVLM_FRAME_ROLE_LEVEL1 = 1,
  EVLM_FRAME_ROLE_LEVEL2 = 2,
  EVLM_FRAME_ROLE_LEVEL3 = 3,
  EVLM_FRAME_ROLE_PATCH = 4,
} EvlmFrameRole;

/**
 * Opaque frame bundle.
 */
typedef struct EvlmBundle EvlmBundle;

/**
 * Opaque event stream.
 */
typedef struct EvlmStream EvlmStream;

/**
 * Settings for [`evlm_esr_assemble`]; fill with [`evlm_esr_config_default`].
 */
typedef struct EvlmEsrConfig {
  uintptr_t n_epsilon;
  uintptr_t total_events;
  uint32_t n_min;
  uint32_t n_max;
  uintptr_t tile_size;
  double tie_break_area_factor;
} EvlmEsrConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length
 * including the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t evlm_last_error_message(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evlm_version(void);

/**
 * Reads a CSV, EVT1 or ATIS40 file. `width` and `height` give the sensor
 * size; pass 0 for both to infer it from the events.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EvlmStatus evlm_stream_open(const char *path,
                                 uint16_t width,
                                 uint16_t height,
                                 struct EvlmStream **out);

/**
 * Builds a stream from parallel arrays. Polarity is `1` positive, `-1`
 * negative. Events are sorted by time.
 *
 * # Safety
 * Each array must hold `count` elements (or be null when `count` is 0).
 */
enum EvlmStatus evlm_stream_from_events(uint16_t width,
                                        uint16_t height,
                                        const uint64_t *t,
                                        const uint16_t *x,
                                        const uint16_t *y,
                                        const int8_t *p,
                                        uintptr_t count,
                                        struct EvlmStream **out);

/**
 * Number of events, or 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
uintptr_t evlm_stream_len(const struct EvlmStream *stream);

/**
 * # Safety
 * `stream` must be a live handle; `width` and `height` must be writable.
 */
enum EvlmStatus evlm_stream_geometry(const struct EvlmStream *stream,
                                     uint16_t *width,
                                     uint16_t *height);

/**
 * Writes the stream as an EVT1 file.
 *
 * # Safety
 * `stream` must be a live handle and `path` a NUL-terminated string.
 */
enum EvlmStatus evlm_stream_write_evt1(const struct EvlmStream *stream, const char *path);

/**
 * # Safety
 * `stream` must be null or a handle not yet freed.
 */
void evlm_stream_free(struct EvlmStream *stream);

/**
 * Fills `out` with the default settings.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvlmStatus evlm_esr_config_default(struct EvlmEsrConfig *out);

/**
 * # Safety
 * `stream` and `config` must be valid; `out` must be writable.
 */
enum EvlmStatus evlm_esr_assemble(const struct EvlmStream *stream,
                                  const struct EvlmEsrConfig *config,
                                  struct EvlmBundle **out);

/**
 * Writes `(N1, N2, 1, Np)` into `counts[0..4]`.
 *
 * # Safety
 * `bundle` must be a live handle; `counts` must hold 4 writable elements.
 */
enum EvlmStatus evlm_bundle_counts(const struct EvlmBundle *bundle, uintptr_t *counts);

/**
 * Total number of frames, or 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uintptr_t evlm_bundle_frame_count(const struct EvlmBundle *bundle);

/**
 * # Safety
 * `bundle` must be a live handle; `cols` and `rows` must be writable.
 */
enum EvlmStatus evlm_bundle_ratio(const struct EvlmBundle *bundle, uint32_t *cols, uint32_t *rows);

/**
 * Borrows frame `index` in bundle order. `rgb` receives a pointer to
 * `width * height * 3` bytes that stays valid until the bundle is freed.
 *
 * # Safety
 * `bundle` must be a live handle; every out pointer must be writable.
 */
enum EvlmStatus evlm_bundle_frame(const struct EvlmBundle *bundle,
                                  uintptr_t index,
                                  enum EvlmFrameRole *role,
                                  uintptr_t *width,
                                  uintptr_t *height,
                                  const uint8_t **rgb);

/**
 * Writes every frame as PPM plus a `bundle.txt` index into `dir`.
 *
 * # Safety
 * `bundle` must be a live handle and `dir` a NUL-terminated string.
 */
enum EvlmStatus evlm_bundle_write(const struct EvlmBundle *bundle, const char *dir);

/**
 * # Safety
 * `bundle` must be null or a handle not yet freed.
 */
void evlm_bundle_free(struct EvlmBundle *bundle);

/**
 * Sorted tile ratios for the given tile-count bounds. Writes at most
 * `capacity` pairs and stores the full set size in `total`; call with
 * `capacity = 0` to size the buffers.
 *
 * # Safety
 * `cols` and `rows` must hold `capacity` writable elements; `total` must be
 * writable.
 */
enum EvlmStatus evlm_generate_ratios(uint32_t n_min,
                                     uint32_t n_max,
                                     uint32_t *cols,
                                     uint32_t *rows,
                                     uintptr_t capacity,
                                     uintptr_t *total);

/**
 * Tile layout chosen for a `width x height` frame.
 *
 * # Safety
 * `config` must be valid; `cols` and `rows` must be writable.
 */
enum EvlmStatus evlm_match_ratio(uintptr_t width,
                                 uintptr_t height,
                                 const struct EvlmEsrConfig *config,
                                 uint32_t *cols,
                                 uint32_t *rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVLM_H */
