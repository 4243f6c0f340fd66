#ifndef XVIEW_H
#define XVIEW_H

/* Generated by cbindgen from the xview-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Order of normalization and averaging at fusion.
typedef enum XvFusionVariant {
  XV_FUSION_VARIANT_NA = 0,
  XV_FUSION_VARIANT_AN = 1,
  XV_FUSION_VARIANT_NAN = 2,
} XvFusionVariant;

// Ranking metric.
typedef enum XvMetric {
  XV_METRIC_EUCLIDEAN = 0,
  XV_METRIC_DOT = 1,
} XvMetric;

// Dataset role, mirrors the library's split tag.
typedef enum XvSplit {
  XV_SPLIT_TRAIN = 0,
  XV_SPLIT_QUERY = 1,
  XV_SPLIT_GALLERY = 2,
} XvSplit;

// Result of every fallible call.
typedef enum XvStatus {
  XV_STATUS_OK = 0,
  XV_STATUS_NULL_POINTER = 1,
  XV_STATUS_INVALID_ARGUMENT = 2,
  XV_STATUS_INVALID_UTF8 = 3,
  XV_STATUS_IO = 4,
  XV_STATUS_BAD_FORMAT = 5,
  XV_STATUS_MISMATCH = 6,
  XV_STATUS_INTERNAL = 7,
} XvStatus;

// Gradient routing for the cross-view stage.
typedef enum XvWcvlMode {
  XV_WCVL_MODE_PLUGGABLE = 0,
  XV_WCVL_MODE_END_TO_END = 1,
} XvWcvlMode;

// Opaque dataset handle.
typedef struct XvDataset XvDataset;

// Opaque model handle: architecture, stage metadata and parameters.
typedef struct XvModel XvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. Borrowed;
// valid until the next failing call on the same thread.
const char *xv_last_error_message(void);

// Library version as a static string; do not free.
const char *xv_version(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned by an `xv_` function that
// transfers string ownership, and not yet freed. NULL is ignored.
void xv_string_free(char *s);

// Draws a synthetic dataset from a generator config given as JSON with the
// fields of the library's `GenConfig` (num_identities, views_per_id,
// obs_dim, id_scale, view_scale, noise_scale, seed).
//
// # Safety
// `config_json` must be a valid NUL-terminated string; `out` must be a
// valid pointer to receive the handle.
enum XvStatus xv_dataset_generate(const char *config_json,
                                  uint64_t draw_seed,
                                  struct XvDataset **out);

// Loads a dataset file, tagging it with the given split.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be valid.
enum XvStatus xv_dataset_load(const char *path, enum XvSplit split, struct XvDataset **out);

// Writes a dataset in the versioned binary format.
//
// # Safety
// `ds` must be a live dataset handle; `path` a valid string.
enum XvStatus xv_dataset_save(const struct XvDataset *ds, const char *path);

// Splits a dataset into query and gallery halves, at least one record per
// identity on each side.
//
// # Safety
// `ds` must be a live handle; `out_query`/`out_gallery` valid pointers.
enum XvStatus xv_dataset_split(const struct XvDataset *ds,
                               double query_fraction,
                               uint64_t seed,
                               struct XvDataset **out_query,
                               struct XvDataset **out_gallery);

// Number of records.
//
// # Safety
// `ds` must be a live handle; NULL yields 0.
uint64_t xv_dataset_len(const struct XvDataset *ds);

// Declared identity count.
//
// # Safety
// `ds` must be a live handle; NULL yields 0.
uint32_t xv_dataset_num_identities(const struct XvDataset *ds);

// Observation dimension.
//
// # Safety
// `ds` must be a live handle; NULL yields 0.
uint32_t xv_dataset_obs_dim(const struct XvDataset *ds);

// Releases a dataset handle.
//
// # Safety
// `ds` must have come from this library and not be freed twice. NULL is
// ignored.
void xv_dataset_free(struct XvDataset *ds);

// Trains the main (discriminative) stage. `run_config_json` holds a full
// run config document; its architecture and main-stage sections are used.
//
// # Safety
// `train` must be a live dataset handle; strings valid; `out` valid.
enum XvStatus xv_train_main(const struct XvDataset *train,
                            const char *run_config_json,
                            struct XvModel **out);

// Trains the cross-view stage on top of a main-stage model.
//
// # Safety
// `main_model` and `train` must be live handles; strings valid; `out`
// valid.
enum XvStatus xv_train_wcvl(const struct XvModel *main_model,
                            const struct XvDataset *train,
                            const char *run_config_json,
                            enum XvWcvlMode mode,
                            struct XvModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a valid string; `out` valid.
enum XvStatus xv_model_load(const char *path, struct XvModel **out);

// Writes a checkpoint file.
//
// # Safety
// `model` must be a live handle; `path` a valid string.
enum XvStatus xv_model_save(const struct XvModel *model, const char *path);

// Embedding dimension of the model's heads.
//
// # Safety
// `model` must be a live handle; NULL yields 0.
uint32_t xv_model_embedding_dim(const struct XvModel *model);

// Releases a model handle.
//
// # Safety
// `model` must have come from this library and not be freed twice. NULL is
// ignored.
void xv_model_free(struct XvModel *model);

// Evaluates retrieval quality and writes the report as a JSON string the
// caller owns (free with [`xv_string_free`]). Pass NULL for `wcvl_model`
// to score the baseline features alone.
//
// # Safety
// Handles must be live (wcvl_model may be NULL); `out_report_json` valid.
enum XvStatus xv_evaluate(const struct XvModel *main_model,
                          const struct XvModel *wcvl_model,
                          const struct XvDataset *query,
                          const struct XvDataset *gallery,
                          enum XvFusionVariant variant,
                          enum XvMetric metric,
                          char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XVIEW_H */
