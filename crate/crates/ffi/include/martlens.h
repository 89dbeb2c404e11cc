#ifndef MARTLENS_H
#define MARTLENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ML_OK 0

// A required pointer argument was null.
#define ML_ERR_NULL 1

// A string argument was not UTF-8, or a numeric argument was out of range.
#define ML_ERR_INVALID_ARG 2

#define ML_ERR_IO 3

// Malformed CSV or JSON input.
#define ML_ERR_PARSE 4

// Feature names do not match the model.
#define ML_ERR_SCHEMA 5

#define ML_ERR_SINGULAR 6

// A stored model's id does not match its content.
#define ML_ERR_INTEGRITY 7

// Any other domain error.
#define ML_ERR_DOMAIN 8

#define ML_ERR_PANIC 9

// Opaque dataset handle.
typedef struct MlDataset MlDataset;

// Opaque trained-model handle.
typedef struct MlModel MlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *martlens_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next martlens call on the same thread.
const char *martlens_last_error(void);

// Loads a sales CSV whose target column is `target`.
//
// # Safety
// `path` and `target` must be NUL-terminated strings; `out` must be writable.
int32_t martlens_dataset_load_csv(const char *path, const char *target, struct MlDataset **out);

// Generates the synthetic mart dataset.
//
// # Safety
// `out` must be writable.
int32_t martlens_dataset_synthetic(size_t n, uint64_t seed, struct MlDataset **out);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t martlens_dataset_rows(const struct MlDataset *dataset);

// Number of feature columns, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t martlens_dataset_features(const struct MlDataset *dataset);

// # Safety
// `dataset` must be null or a handle not yet freed.
void martlens_dataset_free(struct MlDataset *dataset);

// Trains a price model: 80/20 split with seed 42, ridge `lambda`, 4 bins.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
int32_t martlens_model_train(const struct MlDataset *dataset, double lambda, struct MlModel **out);

// Loads a model bundle, verifying its content id.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
int32_t martlens_model_load(const char *path, struct MlModel **out);

// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
int32_t martlens_model_save(const struct MlModel *model, const char *path);

// Content id (64 lowercase hex chars); free with `martlens_string_free`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
int32_t martlens_model_id(const struct MlModel *model, char **out);

// Number of model features, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t martlens_model_features(const struct MlModel *model);

// Predicts from `len` values in the model's feature order.
//
// # Safety
// `values` must point to `len` doubles; `out` must be writable.
int32_t martlens_model_predict(const struct MlModel *model,
                               const double *values,
                               size_t len,
                               double *out);

// Predicts from a JSON object of feature values.
//
// # Safety
// `instance_json` must be a NUL-terminated string; `out` must be writable.
int32_t martlens_model_predict_json(const struct MlModel *model,
                                    const char *instance_json,
                                    double *out);

// Explains one prediction; writes the explanation as JSON. `num_samples`
// and `num_features` of 0 select the defaults.
//
// # Safety
// `instance_json` must be a NUL-terminated string; `out_json` must be
// writable. Free the result with `martlens_string_free`.
int32_t martlens_model_explain_json(const struct MlModel *model,
                                    const char *instance_json,
                                    uint64_t seed,
                                    size_t num_samples,
                                    size_t num_features,
                                    char **out_json);

// # Safety
// `model` must be null or a handle not yet freed.
void martlens_model_free(struct MlModel *model);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void martlens_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARTLENS_H */
