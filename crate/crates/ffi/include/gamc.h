/* C interface to the gamc library. Generated by cbindgen; do not edit. */

#ifndef GAMC_H
#define GAMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GAMC_ABLATION_FULL 0

#define GAMC_ABLATION_NO_AUG 1

#define GAMC_ABLATION_NO_REC 2

#define GAMC_ABLATION_NO_CON 3

typedef enum GamcStatus {
  GAMC_STATUS_OK = 0,
  GAMC_STATUS_INVALID_ARGUMENT = 1,
  GAMC_STATUS_DATA_ERROR = 2,
  GAMC_STATUS_NUMERIC_ERROR = 3,
  GAMC_STATUS_PANIC = 4,
} GamcStatus;

/**
 * A loaded or generated set of propagation graphs.
 */
typedef struct GamcDataset GamcDataset;

/**
 * Trained or loaded model parameters.
 */
typedef struct GamcModel GamcModel;

typedef struct GamcDatasetStats {
  size_t news;
  size_t fake;
  size_t real;
  size_t unlabeled;
  size_t nodes;
  size_t edges;
} GamcDatasetStats;

typedef struct GamcTrainConfig {
  uint32_t epochs;
  double lr;
  double alpha;
  double mask_rate;
  double edge_drop_rate;
  uint32_t hidden_dim;
  uint32_t decoder_layers;
  uint32_t batch_size;
  uint64_t seed;
  /**
   * One of the `GAMC_ABLATION_*` constants.
   */
  uint32_t ablation;
  /**
   * Nonzero to draw augmented views once instead of every epoch.
   */
  uint8_t static_views;
} GamcTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *gamc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gamc_version(void);

/**
 * Loads an NDJSON dataset.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GamcStatus gamc_dataset_load(const char *path, struct GamcDataset **out);

/**
 * Writes a dataset as NDJSON.
 *
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum GamcStatus gamc_dataset_save(const struct GamcDataset *ds, const char *path);

/**
 * Generates a balanced synthetic dataset whose class centers are
 * `separation` noise deviations apart.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum GamcStatus gamc_synth_generate(size_t num_graphs,
                                    size_t feature_dim,
                                    double separation,
                                    uint64_t seed,
                                    struct GamcDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void gamc_dataset_free(struct GamcDataset *ds);

/**
 * Number of graphs; 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t gamc_dataset_len(const struct GamcDataset *ds);

/**
 * Node feature width; 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t gamc_dataset_feature_dim(const struct GamcDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum GamcStatus gamc_dataset_stats(const struct GamcDataset *ds, struct GamcDatasetStats *out);

/**
 * Default training hyperparameters.
 */
struct GamcTrainConfig gamc_train_config_default(void);

/**
 * Trains a model on `ds` (labels are ignored).
 *
 * # Safety
 * `ds` and `cfg` must be valid pointers and `out` writable.
 */
enum GamcStatus gamc_train(const struct GamcDataset *ds,
                           const struct GamcTrainConfig *cfg,
                           struct GamcModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum GamcStatus gamc_model_load(const char *path, struct GamcModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum GamcStatus gamc_model_save(const struct GamcModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void gamc_model_free(struct GamcModel *model);

/**
 * Embedding width; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gamc_model_hidden_dim(const struct GamcModel *model);

/**
 * Writes one embedding per graph, row-major, into `out`, which must hold
 * `gamc_dataset_len(ds) * gamc_model_hidden_dim(model)` doubles.
 *
 * # Safety
 * `out` must point to at least `out_len` writable doubles.
 */
enum GamcStatus gamc_embed(const struct GamcModel *model,
                           const struct GamcDataset *ds,
                           double *out,
                           size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAMC_H */
