#ifndef MASKFUSE_H
#define MASKFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Severity grade.
typedef enum MfLabel {
  MF_LABEL_NON_PD = 0,
  MF_LABEL_EARLY_PD = 1,
  MF_LABEL_MID_LATE_PD = 2,
} MfLabel;

// Result of every call.
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  // A required pointer argument was null.
  MF_STATUS_NULL_POINTER = 1,
  // An argument was out of range or not valid UTF-8.
  MF_STATUS_INVALID_ARGUMENT = 2,
  // File system failure, missing file or refused overwrite.
  MF_STATUS_IO = 3,
  // Malformed or incompatible file contents.
  MF_STATUS_FORMAT = 4,
  // Data or configuration rejected by validation.
  MF_STATUS_VALIDATION = 5,
  // Non-finite values or a failed numeric check.
  MF_STATUS_NUMERIC = 6,
  // An internal panic was caught.
  MF_STATUS_PANIC = 7,
} MfStatus;

// Loaded or generated dataset.
typedef struct MfDataset MfDataset;

// Trained or initialized model parameters.
typedef struct MfModel MfModel;

typedef struct MfArchConfig {
  // Channels per expression map.
  size_t d;
  // Spatial positions per channel.
  size_t spatial;
  // Attention reduction ratio.
  size_t reduction;
  // Classifier hidden width.
  size_t hidden;
  bool aff_enabled;
} MfArchConfig;

typedef struct MfTrainConfig {
  size_t epochs;
  double lr;
  size_t batch_size;
  uint64_t seed;
  double gamma;
  bool acb_enabled;
  bool aff_enabled;
} MfTrainConfig;

typedef struct MfSynthSpec {
  size_t counts[3];
  size_t d;
  size_t spatial;
  double separation;
  double noise;
  // Bit `e` set means emotion `e` carries class signal.
  uint8_t informative_mask;
  uint64_t seed;
} MfSynthSpec;

typedef struct MfMetrics {
  double auc;
  double gmean;
  double f1;
  double acc;
  // Row-major `confusion[true * 3 + predicted]`.
  uint64_t confusion[9];
} MfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *mf_last_error(void);

// Library version as a static NUL-terminated string.
const char *mf_version(void);

struct MfArchConfig mf_arch_config_default(void);

struct MfTrainConfig mf_train_config_default(void);

struct MfSynthSpec mf_synth_spec_default(void);

// Loads a dataset from a manifest, a directory holding `manifest.json`, or
// a `.csv` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MfStatus mf_dataset_load(const char *path, struct MfDataset **out);

// Generates a seeded synthetic dataset.
//
// # Safety
// `spec` must point to a valid spec; `out` must be writable.
enum MfStatus mf_dataset_synth(const struct MfSynthSpec *spec, struct MfDataset **out);

// Writes the dataset as a manifest directory.
//
// # Safety
// `dataset` must be a live handle; `dir` a NUL-terminated string.
enum MfStatus mf_dataset_save(const struct MfDataset *dataset, const char *dir, bool force);

// Number of subjects.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum MfStatus mf_dataset_len(const struct MfDataset *dataset, size_t *out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must be null or a handle not yet freed.
void mf_dataset_free(struct MfDataset *dataset);

// Seeded initialization.
//
// # Safety
// `arch` must be valid; `out` must be writable.
enum MfStatus mf_model_init(const struct MfArchConfig *arch, uint64_t seed, struct MfModel **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MfStatus mf_model_load(const char *path, struct MfModel **out);

// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
enum MfStatus mf_model_save(const struct MfModel *model, const char *path, bool force);

// Writes the model's architecture into `out`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum MfStatus mf_model_arch(const struct MfModel *model, struct MfArchConfig *out);

// Class probabilities for one subject.
//
// # Safety
// `values` must hold `len` doubles; `probs_out` must hold 3.
enum MfStatus mf_model_forward(const struct MfModel *model,
                               const double *values,
                               size_t len,
                               double *probs_out);

// Most probable grade for one subject; ties go to the lower grade.
//
// # Safety
// `values` must hold `len` doubles; `label_out` must be writable.
enum MfStatus mf_model_predict(const struct MfModel *model,
                               const double *values,
                               size_t len,
                               enum MfLabel *label_out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void mf_model_free(struct MfModel *model);

// Trains a new model. `final_loss` may be null.
//
// # Safety
// Handles and configs must be valid; `out` must be writable.
enum MfStatus mf_train(const struct MfDataset *dataset,
                       const struct MfArchConfig *arch,
                       const struct MfTrainConfig *cfg,
                       struct MfModel **out,
                       double *final_loss);

// Scores a model on a dataset.
//
// # Safety
// Handles must be live; `out` must be writable.
enum MfStatus mf_evaluate(const struct MfModel *model,
                          const struct MfDataset *dataset,
                          struct MfMetrics *out);

// Stratified `k`-fold cross-validation. Writes the fold mean to `mean_out`
// and, when `folds_out` is non-null, one entry per fold (`k` entries).
//
// # Safety
// Pointers must be valid; `folds_out` must hold `k` entries if non-null.
enum MfStatus mf_cross_validate(const struct MfDataset *dataset,
                                const struct MfArchConfig *arch,
                                const struct MfTrainConfig *cfg,
                                size_t k,
                                uint64_t split_seed,
                                struct MfMetrics *mean_out,
                                struct MfMetrics *folds_out);

// `alpha_i = max(counts) / counts_i`.
//
// # Safety
// `counts` must hold 3 values; `alpha_out` must hold 3.
enum MfStatus mf_class_weights(const size_t *counts, double *alpha_out);

// Adaptive focal loss `alpha_t (1 - p_t)^gamma (-ln p_t)` of one
// probability vector.
//
// # Safety
// `probs` and `alpha` must hold 3 values; `out` must be writable.
enum MfStatus mf_focal_loss(const double *probs,
                            uint8_t target,
                            double gamma,
                            const double *alpha,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MASKFUSE_H */
