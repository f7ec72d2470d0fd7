#ifndef DIVSCORE_H
#define DIVSCORE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_INPUT = 2,
  DS_STATUS_CODEC = 3,
  DS_STATUS_IO = 4,
  DS_STATUS_NUMERIC = 5,
  DS_STATUS_PANIC = 6,
} DsStatus;

/**
 * Row-major `f64` matrix.
 */
typedef struct DsMatrix DsMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ds_last_error_message(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum DsStatus ds_matrix_new(size_t rows, size_t cols, const double *data, struct DsMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void ds_matrix_free(struct DsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t ds_matrix_rows(const struct DsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t ds_matrix_cols(const struct DsMatrix *m);

/**
 * Row-major values, valid while the handle lives.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
const double *ds_matrix_data(const struct DsMatrix *m);

/**
 * Reads a DIVT tensor file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DsStatus ds_divt_read(const char *path, struct DsMatrix **out);

/**
 * Decodes DIVT bytes held in memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum DsStatus ds_divt_decode(const uint8_t *bytes, size_t len, struct DsMatrix **out);

/**
 * Writes `m` as a DIVT file (values narrowed to `f32`).
 *
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated string.
 */
enum DsStatus ds_divt_write(const struct DsMatrix *m, const char *path);

/**
 * Vendi Score of the rows of `features` under the cosine kernel.
 *
 * # Safety
 * `features` must be a live handle; `out` writable.
 */
enum DsStatus ds_vendi_score(const struct DsMatrix *features, double *out);

/**
 * Fréchet distance between Gaussian fits of two feature sets.
 *
 * # Safety
 * Both handles must be live; `out` writable.
 */
enum DsStatus ds_fid(const struct DsMatrix *eval, const struct DsMatrix *reference, double *out);

/**
 * Inception Score of class-probability rows, averaged over `splits`.
 *
 * # Safety
 * `probs` must be a live handle; `out` writable.
 */
enum DsStatus ds_inception_score(const struct DsMatrix *probs, size_t splits, double *out);

/**
 * Mean pairwise cosine similarity of the rows (lower is more diverse).
 *
 * # Safety
 * `embeddings` must be a live handle; `out` writable.
 */
enum DsStatus ds_semantic_diversity(const struct DsMatrix *embeddings, double *out);

/**
 * Binary ROC AUC; nonzero `labels` are positives.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` writable.
 */
enum DsStatus ds_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Spearman rank correlation; NaN when either input is constant.
 *
 * # Safety
 * `x` and `y` must hold `n` elements; `out` writable.
 */
enum DsStatus ds_spearman(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIVSCORE_H */
