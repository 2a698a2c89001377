#ifndef PEDBENCH_H
#define PEDBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_ARGUMENT,
  PB_STATUS_INVALID_UTF8,
  PB_STATUS_GEOMETRY,
  PB_STATUS_PARSE,
  PB_STATUS_IO,
  PB_STATUS_CONFIG,
  PB_STATUS_EMPTY_DATASET,
  PB_STATUS_EMPTY_POSITIVE_SET,
  PB_STATUS_FRAME_MISMATCH,
  PB_STATUS_PATCH_TOO_SMALL,
  PB_STATUS_OTHER,
  PB_STATUS_PANIC,
} PbStatus;

/**
 * Opaque ground-truth dataset.
 */
typedef struct PbDataset PbDataset;

/**
 * Opaque detection set.
 */
typedef struct PbDetections PbDetections;

typedef struct PbBox {
  double x;
  double y;
  double w;
  double h;
} PbBox;

/**
 * Log-average miss rates (fractions, not percent) and counts at FPPI 1.
 */
typedef struct PbSummary {
  double mr2;
  double mr4;
  size_t tp;
  size_t fp;
  size_t missed;
  size_t frames;
  size_t positives;
} PbSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/**
 * Box of the given aspect ratio spanned by a head-to-feet line. Pass
 * `aspect <= 0` for the default 0.41.
 *
 * # Safety
 * `out_box` must be null or point to writable memory for one `PbBox`.
 */
enum PbStatus pb_line_to_bbox(double head_x,
                              double head_y,
                              double feet_x,
                              double feet_y,
                              double aspect,
                              struct PbBox *out_box);

/**
 * # Safety
 * `out_iou` must be null or point to a writable `double`.
 */
enum PbStatus pb_iou(struct PbBox a, struct PbBox b, double *out_iou);

/**
 * Parses canonical annotation text (`F`/`A`/`M` records).
 *
 * # Safety
 * `text_ptr` must be null or a NUL-terminated string; `out_dataset` must be null or
 * writable.
 */
enum PbStatus pb_dataset_parse(const char *text_ptr, struct PbDataset **out_dataset);

/**
 * # Safety
 * `ds` must be null or a handle from `pb_dataset_parse` not yet freed.
 */
void pb_dataset_free(struct PbDataset *ds);

/**
 * Number of frames, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pb_dataset_frame_count(const struct PbDataset *ds);

/**
 * Number of annotations, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pb_dataset_annotation_count(const struct PbDataset *ds);

/**
 * Parses canonical detection text (`D` records).
 *
 * # Safety
 * As for `pb_dataset_parse`.
 */
enum PbStatus pb_detections_parse(const char *text_ptr, struct PbDetections **out_detections);

/**
 * # Safety
 * `dets` must be null or a handle from `pb_detections_parse` not yet freed.
 */
void pb_detections_free(struct PbDetections *dets);

/**
 * Evaluates detections against a subset (`"reasonable"`, `"all"` or
 * `"everything"`). `iou <= 0` keeps the subset's default threshold.
 *
 * # Safety
 * Handles must be live, `subset_name` NUL-terminated, `out_summary` writable.
 */
enum PbStatus pb_evaluate(const struct PbDataset *ds,
                          const struct PbDetections *dets,
                          const char *subset_name,
                          double iou_threshold,
                          struct PbSummary *out_summary);

/**
 * Baseline and oracle summaries; `mode` is `"loc"`, `"bg"` or `"both"`.
 *
 * # Safety
 * As for `pb_evaluate`; both outputs must be writable.
 */
enum PbStatus pb_oracle(const struct PbDataset *ds,
                        const struct PbDetections *dets,
                        const char *subset_name,
                        const char *mode,
                        struct PbSummary *out_baseline,
                        struct PbSummary *out_oracle);

/**
 * Blur of an 8-bit grayscale patch, row major: 0 sharp, 1 flat.
 *
 * # Safety
 * `pixels` must point to `width * height` bytes; `out_score` must be writable.
 */
enum PbStatus pb_blur_score(const uint8_t *pixels, size_t width, size_t height, double *out_score);

/**
 * Spread between the 5th and 95th intensity percentiles, in [0, 1].
 *
 * # Safety
 * As for `pb_blur_score`.
 */
enum PbStatus pb_contrast_score(const uint8_t *pixels,
                                size_t width,
                                size_t height,
                                double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEDBENCH_H */
