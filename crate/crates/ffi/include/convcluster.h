#ifndef CONVCLUSTER_H
#define CONVCLUSTER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CcStatus {
  CC_STATUS_OK = 0,
  CC_STATUS_NULL_POINTER = 1,
  CC_STATUS_INVALID_ARGUMENT = 2,
  CC_STATUS_IO = 3,
  CC_STATUS_FORMAT = 4,
  /**
   * The requested quantity is not defined for this input.
   */
  CC_STATUS_UNDEFINED = 5,
  CC_STATUS_PANIC = 6,
} CcStatus;

/**
 * Cluster labels, `-1` for noise.
 */
typedef struct CcAssignment CcAssignment;

/**
 * Embedding matrix with one doc id per row.
 */
typedef struct CcEmbedding CcEmbedding;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cc_last_error_message(void);

/**
 * Copies `rows * dims` row-major floats. `ids` may be null, in which case
 * rows are named by their index.
 *
 * # Safety
 * `data` must hold `rows * dims` floats; `ids`, when non-null, `rows` valid
 * NUL-terminated strings; `out` must be writable.
 */
enum CcStatus cc_embedding_new(size_t rows,
                               size_t dims,
                               const float *data,
                               const char *const *ids,
                               struct CcEmbedding **out);

/**
 * Reads a `.emb` file, or CSV when the path ends in `.csv`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CcStatus cc_embedding_read(const char *path, struct CcEmbedding **out);

/**
 * # Safety
 * `emb` must come from this library; `path` must be NUL-terminated.
 */
enum CcStatus cc_embedding_write(const struct CcEmbedding *emb, const char *path);

/**
 * Row count, 0 for null.
 *
 * # Safety
 * `emb` must be null or come from this library.
 */
size_t cc_embedding_rows(const struct CcEmbedding *emb);

/**
 * Column count, 0 for null.
 *
 * # Safety
 * `emb` must be null or come from this library.
 */
size_t cc_embedding_dims(const struct CcEmbedding *emb);

/**
 * # Safety
 * `emb` must be null or come from this library, and not be used afterwards.
 */
void cc_embedding_free(struct CcEmbedding *emb);

/**
 * Cosine similarity of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must hold `len` doubles; `out` must be writable.
 */
enum CcStatus cc_cosine(const double *a, const double *b, size_t len, double *out);

/**
 * DBSCAN over the embedding rows.
 *
 * # Safety
 * `emb` must come from this library; `out` must be writable.
 */
enum CcStatus cc_dbscan(const struct CcEmbedding *emb,
                        double eps,
                        size_t min_pts,
                        struct CcAssignment **out);

/**
 * K-Means with k-means++ seeding.
 *
 * # Safety
 * `emb` must come from this library; `out` must be writable.
 */
enum CcStatus cc_kmeans(const struct CcEmbedding *emb,
                        size_t k,
                        uint64_t seed,
                        struct CcAssignment **out);

/**
 * Number of labelled points, 0 for null.
 *
 * # Safety
 * `a` must be null or come from this library.
 */
size_t cc_assignment_len(const struct CcAssignment *a);

/**
 * Clusters excluding noise, 0 for null.
 *
 * # Safety
 * `a` must be null or come from this library.
 */
size_t cc_assignment_n_clusters(const struct CcAssignment *a);

/**
 * Copies the labels into `out`, which must hold `cc_assignment_len` ints.
 *
 * # Safety
 * `a` must come from this library; `out` must hold `len` ints.
 */
enum CcStatus cc_assignment_labels(const struct CcAssignment *a, int32_t *out, size_t len);

/**
 * Copies DBSCAN core flags (1 core, 0 not) into `out`. Undefined for
 * K-Means results.
 *
 * # Safety
 * `a` must come from this library; `out` must hold `len` bytes.
 */
enum CcStatus cc_assignment_core(const struct CcAssignment *a, uint8_t *out, size_t len);

/**
 * K-Means inertia. Undefined for DBSCAN results.
 *
 * # Safety
 * `a` must come from this library; `out` must be writable.
 */
enum CcStatus cc_assignment_inertia(const struct CcAssignment *a, double *out);

/**
 * # Safety
 * `a` must be null or come from this library, and not be used afterwards.
 */
void cc_assignment_free(struct CcAssignment *a);

/**
 * Mean silhouette of `labels` over the embedding rows, noise as its own
 * cluster. Returns `Undefined` with fewer than 2 groups.
 *
 * # Safety
 * `emb` must come from this library; `labels` must hold `len` ints.
 */
enum CcStatus cc_silhouette(const struct CcEmbedding *emb,
                            const int32_t *labels,
                            size_t len,
                            double *out_mean);

/**
 * Homogeneity, completeness and V-measure. Any output pointer may be null.
 *
 * # Safety
 * `truth` and `pred` must hold `len` ints; non-null outputs writable.
 */
enum CcStatus cc_v_measure(const int32_t *truth,
                           const int32_t *pred,
                           size_t len,
                           double beta,
                           double *out_homogeneity,
                           double *out_completeness,
                           double *out_v);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVCLUSTER_H */
