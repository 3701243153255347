#ifndef ENSEMBLEKIT_H
#define ENSEMBLEKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EkStatus {
  EK_STATUS_OK = 0,
  EK_STATUS_NULL_POINTER = 1,
  EK_STATUS_INVALID_ARGUMENT = 2,
  EK_STATUS_IO = 3,
  EK_STATUS_FORMAT = 4,
  EK_STATUS_DIMENSION = 5,
  EK_STATUS_NUMERICAL = 6,
  EK_STATUS_PANIC = 7,
} EkStatus;

/**
 * Trained classifier.
 */
typedef struct EkFcnnModel EkFcnnModel;

/**
 * Loaded FSET feature matrix with labels.
 */
typedef struct EkFeatureSet EkFeatureSet;

/**
 * Fitted PCA projection.
 */
typedef struct EkPcaModel EkPcaModel;

typedef struct EkHogConfig {
  uint32_t orientations;
  uint32_t cell_size;
  uint32_t block_size;
  uint32_t block_stride;
  double clip;
} EkHogConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ek_version(void);

/**
 * Message for the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next `ek_*` call on the same thread.
 */
const char *ek_last_error_message(void);

/**
 * Reads an FSET file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum EkStatus ek_fset_read(const char *path, struct EkFeatureSet **out);

/**
 * Builds a feature set from `n` rows of `d` values and `n` labels in 0..9.
 *
 * # Safety
 * `name` must be NUL-terminated; `values` holds `n * d` floats and `labels` `n` bytes.
 */
enum EkStatus ek_fset_from_rows(const char *name,
                                const float *values,
                                const uint8_t *labels,
                                uint64_t n,
                                uint32_t d,
                                struct EkFeatureSet **out);

/**
 * Writes a feature set as an FSET file.
 *
 * # Safety
 * `set` must be a live handle and `path` NUL-terminated.
 */
enum EkStatus ek_fset_write(const struct EkFeatureSet *set, const char *path);

/**
 * Number of rows and columns.
 *
 * # Safety
 * `set` must be a live handle; `rows` and `dim` writable.
 */
enum EkStatus ek_fset_shape(const struct EkFeatureSet *set, uint64_t *rows, uint32_t *dim);

/**
 * Copies row `i` into `out`, which holds `len` floats (at least the dimension).
 *
 * # Safety
 * `set` must be a live handle and `out` hold `len` floats.
 */
enum EkStatus ek_fset_row(const struct EkFeatureSet *set, uint64_t i, float *out, size_t len);

/**
 * Class index (0..9) of row `i`.
 *
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum EkStatus ek_fset_label(const struct EkFeatureSet *set, uint64_t i, uint8_t *out);

/**
 * Releases a feature set. Null is ignored.
 *
 * # Safety
 * `set` must be null or a handle not yet freed.
 */
void ek_fset_free(struct EkFeatureSet *set);

/**
 * 9 orientations, 8-pixel cells, 2x2 blocks with stride 1, clip 0.2.
 */
struct EkHogConfig ek_hog_default_config(void);

/**
 * Descriptor length for `config`.
 *
 * # Safety
 * `config` must be readable and `out` writable.
 */
enum EkStatus ek_hog_dimension(const struct EkHogConfig *config, uint64_t *out);

/**
 * HOG descriptor of one 32x32 image given as 3072 planar RGB bytes.
 *
 * # Safety
 * `image` holds 3072 bytes; `out` holds `len` doubles.
 */
enum EkStatus ek_hog_compute(const struct EkHogConfig *config,
                             const uint8_t *image,
                             double *out,
                             size_t len);

/**
 * Loads a PCA model file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum EkStatus ek_pca_load(const char *path, struct EkPcaModel **out);

/**
 * Input dimension `d` and number of components `k`.
 *
 * # Safety
 * `model` must be a live handle; `d` and `k` writable.
 */
enum EkStatus ek_pca_dims(const struct EkPcaModel *model, uint32_t *d, uint32_t *k);

/**
 * Projects `n` rows of `d` doubles into `out`, which receives `n * k` doubles.
 *
 * # Safety
 * `x` holds `n * d` doubles and `out` `n * k`.
 */
enum EkStatus ek_pca_transform(const struct EkPcaModel *model,
                               const double *x,
                               uint64_t n,
                               double *out);

/**
 * Releases a PCA model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ek_pca_free(struct EkPcaModel *model);

/**
 * Loads a trained classifier file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum EkStatus ek_fcnn_load(const char *path, struct EkFcnnModel **out);

/**
 * Expected input width and number of classes.
 *
 * # Safety
 * `model` must be a live handle; `input_dim` and `classes` writable.
 */
enum EkStatus ek_fcnn_dims(const struct EkFcnnModel *model, uint32_t *input_dim, uint32_t *classes);

/**
 * Class probabilities for `n` rows. `probs` receives `n * classes` doubles;
 * `labels`, if not null, receives the argmax class of each row.
 *
 * # Safety
 * `x` holds `n * input_dim` doubles, `probs` `n * classes`, `labels` `n` entries or null.
 */
enum EkStatus ek_fcnn_predict(const struct EkFcnnModel *model,
                              const double *x,
                              uint64_t n,
                              double *probs,
                              uint32_t *labels);

/**
 * Releases a classifier. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ek_fcnn_free(struct EkFcnnModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENSEMBLEKIT_H */
