#ifndef ACSP_H
#define ACSP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum AcspStatus {
  ACSP_STATUS_OK = 0,
  ACSP_STATUS_NULL_ARGUMENT = 1,
  ACSP_STATUS_INVALID_UTF8 = 2,
  ACSP_STATUS_IO = 3,
  /**
   * Malformed or incompatible file, plan or dataset.
   */
  ACSP_STATUS_FORMAT = 4,
  /**
   * Architecture string could not be parsed.
   */
  ACSP_STATUS_PARSE = 5,
  ACSP_STATUS_BAD_PARAMS = 6,
  ACSP_STATUS_SHAPE_MISMATCH = 7,
  ACSP_STATUS_NON_FINITE = 8,
  ACSP_STATUS_DIVERGENCE = 9,
  /**
   * Clustering or knee detection rejected its input.
   */
  ACSP_STATUS_SELECTION = 10,
  ACSP_STATUS_BUFFER_TOO_SMALL = 11,
  ACSP_STATUS_PANIC = 12,
} AcspStatus;

enum AcspDataKind
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ACSP_DATA_KIND_BLOBS = 0,
  ACSP_DATA_KIND_RINGS = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AcspDataKind AcspDataKind;
#else
typedef uint32_t AcspDataKind;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum AcspSelection
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ACSP_SELECTION_REGULAR = 0,
  ACSP_SELECTION_WEIGHTED = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AcspSelection AcspSelection;
#else
typedef uint32_t AcspSelection;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum AcspCapture
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ACSP_CAPTURE_POST_ACTIVATION = 0,
  ACSP_CAPTURE_PRE_ACTIVATION = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum AcspCapture AcspCapture;
#else
typedef uint32_t AcspCapture;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque labeled dataset.
 */
typedef struct AcspDataset AcspDataset;

/**
 * Opaque toy network.
 */
typedef struct AcspModel AcspModel;

/**
 * Opaque pruning plan.
 */
typedef struct AcspPlan AcspPlan;

typedef struct AcspTrainOptions {
  size_t epochs;
  double lr;
  size_t batch_size;
  uint64_t seed;
} AcspTrainOptions;

/**
 * Enum-valued fields hold the numeric value of the matching `Acsp*` enum.
 */
typedef struct AcspPruneOptions {
  size_t degree;
  uint32_t selection;
  size_t stride;
  double ft_fraction;
  size_t ft_epochs;
  /**
   * Values <= 0 select a tenth of the model's training learning rate.
   */
  double ft_lr;
  size_t ft_batch_size;
  bool freeze_upstream;
  uint32_t capture;
  uint64_t seed;
} AcspPruneOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *acsp_version(void);

/**
 * Static name of a status code, e.g. `"BufferTooSmall"`.
 */
const char *acsp_status_name(int32_t status);

/**
 * Message of the last failed call on this thread, or NULL if the last call
 * succeeded. Valid until the next acsp call on the same thread.
 */
const char *acsp_last_error_message(void);

enum AcspStatus acsp_dataset_generate(uint32_t kind,
                                      size_t n,
                                      size_t classes,
                                      size_t dims,
                                      uint64_t seed,
                                      struct AcspDataset **out);

/**
 * Builds a dataset of flat feature vectors from `n_samples * width`
 * row-major floats and `n_samples` labels. Both buffers are copied.
 */
enum AcspStatus acsp_dataset_from_buffers(const float *samples,
                                          const uint32_t *labels,
                                          size_t n_samples,
                                          size_t width,
                                          struct AcspDataset **out);

enum AcspStatus acsp_dataset_read(const char *path, struct AcspDataset **out);

enum AcspStatus acsp_dataset_write(const struct AcspDataset *data, const char *path);

enum AcspStatus acsp_dataset_len(const struct AcspDataset *data, size_t *out_len);

enum AcspStatus acsp_dataset_num_classes(const struct AcspDataset *data, size_t *out_classes);

/**
 * Releases a dataset. NULL is ignored.
 */
void acsp_dataset_free(struct AcspDataset *data);

/**
 * Fresh model with seeded initial weights, from an architecture string such
 * as `"mlp:2-64-64-32-4"`.
 */
enum AcspStatus acsp_model_new(const char *arch_spec, uint64_t seed, struct AcspModel **out);

enum AcspStatus acsp_model_read(const char *path, struct AcspModel **out);

enum AcspStatus acsp_model_write(const struct AcspModel *model, const char *path);

/**
 * Releases a model. NULL is ignored.
 */
void acsp_model_free(struct AcspModel *model);

struct AcspTrainOptions acsp_train_options_default(void);

/**
 * Trains `model` in place. `out_accuracy` (may be NULL) receives the
 * accuracy on `data` after the last epoch. The model is left untouched on
 * failure.
 */
enum AcspStatus acsp_model_train(struct AcspModel *model,
                                 const struct AcspDataset *data,
                                 const struct AcspTrainOptions *options,
                                 double *out_accuracy);

enum AcspStatus acsp_model_accuracy(const struct AcspModel *model,
                                    const struct AcspDataset *data,
                                    double *out_accuracy);

/**
 * Forward-pass FLOPs, counting two per multiply-accumulate and ignoring biases.
 */
enum AcspStatus acsp_model_flops(const struct AcspModel *model, uint64_t *out_flops);

/**
 * Layer indices that can be pruned, in forward order.
 */
enum AcspStatus acsp_model_prunable_layers(const struct AcspModel *model,
                                           size_t *out_ids,
                                           size_t capacity,
                                           size_t *out_len);

enum AcspStatus acsp_model_num_components(const struct AcspModel *model,
                                          size_t layer_id,
                                          size_t *out_components);

/**
 * L2 norm of each component's incoming weights in `layer_id`.
 */
enum AcspStatus acsp_model_component_norms(const struct AcspModel *model,
                                           size_t layer_id,
                                           double *out_norms,
                                           size_t capacity,
                                           size_t *out_len);

/**
 * Activations of `layer_id` over `data`, laid out
 * `[n_samples][n_components][p][p]`. `out_n_components` and `out_p` (may be
 * NULL) are filled even when the buffer is too small.
 */
enum AcspStatus acsp_model_capture(const struct AcspModel *model,
                                   const struct AcspDataset *data,
                                   size_t layer_id,
                                   uint32_t capture,
                                   float *out_values,
                                   size_t capacity,
                                   size_t *out_len,
                                   size_t *out_n_components,
                                   size_t *out_p);

struct AcspPruneOptions acsp_prune_options_default(void);

/**
 * Chooses which components of one layer to keep, from activations supplied
 * by the caller in the layout of [`acsp_model_capture`]. `p` is 1 for dense
 * layers. `norms` holds `n_components` incoming-weight norms and may be NULL
 * in regular mode. Only the selection fields of `options` are read. The kept
 * indices are written in increasing order; when no knee is found every
 * component is kept.
 */
enum AcspStatus acsp_select_components(const float *values,
                                       const uint32_t *labels,
                                       size_t n_samples,
                                       size_t n_components,
                                       size_t p,
                                       const double *norms,
                                       const struct AcspPruneOptions *options,
                                       size_t *out_kept,
                                       size_t capacity,
                                       size_t *out_len);

/**
 * Prunes every prunable layer of `model` in turn, fine-tuning after each.
 * The input model is not modified.
 */
enum AcspStatus acsp_prune(const struct AcspModel *model,
                           const struct AcspDataset *data,
                           const struct AcspPruneOptions *options,
                           struct AcspModel **out_model,
                           struct AcspPlan **out_plan);

enum AcspStatus acsp_plan_read(const char *path, struct AcspPlan **out);

enum AcspStatus acsp_plan_write(const struct AcspPlan *plan, const char *path);

/**
 * Releases a plan. NULL is ignored.
 */
void acsp_plan_free(struct AcspPlan *plan);

/**
 * Structurally removes the components `plan` drops, without fine-tuning.
 */
enum AcspStatus acsp_plan_apply(const struct AcspModel *model,
                                const struct AcspPlan *plan,
                                struct AcspModel **out_model);

enum AcspStatus acsp_plan_num_layers(const struct AcspPlan *plan, size_t *out_layers);

/**
 * Entry `index` of the plan. `out_layer_id` and `out_n_components` (may be
 * NULL) are filled even when the kept buffer is too small.
 */
enum AcspStatus acsp_plan_layer(const struct AcspPlan *plan,
                                size_t index,
                                size_t *out_layer_id,
                                size_t *out_n_components,
                                size_t *out_kept,
                                size_t capacity,
                                size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACSP_H */
