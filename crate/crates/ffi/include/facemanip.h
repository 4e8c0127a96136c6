#ifndef FACEMANIP_H
#define FACEMANIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_IO = 3,
  FM_STATUS_PARSE = 4,
  FM_STATUS_SHAPE_MISMATCH = 5,
  FM_STATUS_SINGLE_CLASS = 6,
  FM_STATUS_CHECKPOINT = 7,
  FM_STATUS_WOULD_CLOBBER = 8,
  FM_STATUS_PANIC = 9,
} FmStatus;

typedef enum FmLossKind {
  FM_LOSS_KIND_SOFTMAX_RATIO = 0,
  FM_LOSS_KIND_MARGIN = 1,
} FmLossKind;

// Trained backbone handle.
typedef struct FmBackbone FmBackbone;

// Trained classifier handle.
typedef struct FmClassifier FmClassifier;

// Run configuration handle.
typedef struct FmConfig FmConfig;

// Dataset manifest handle.
typedef struct FmManifest FmManifest;

// Sample counts per split and label.
typedef struct FmSplitCounts {
  size_t train_real;
  size_t train_fake;
  size_t test_real;
  size_t test_fake;
} FmSplitCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fm_version(void);

// Message of the most recent failure on the calling thread, or NULL if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *fm_last_error(void);

// Mann-Whitney AUC of `n` scored samples; ties count one half.
//
// # Safety
// `labels` and `scores` must point to `n` readable elements; `out` must be writable.
enum FmStatus fm_auc(const uint8_t *labels, const double *scores, size_t n, double *out);

// Equal error rate and the threshold it was found at.
//
// # Safety
// `labels` and `scores` must point to `n` readable elements; `eer` and `threshold` must
// be writable.
enum FmStatus fm_eer(const uint8_t *labels,
                     const double *scores,
                     size_t n,
                     double *eer,
                     double *threshold);

// Distances from the anchor to the negative and to the positive embedding.
//
// # Safety
// The three point pointers must each reference `dim` readable doubles; `d_neg` and
// `d_pos` must be writable.
enum FmStatus fm_triplet_distances(const double *anchor,
                                   const double *positive,
                                   const double *negative,
                                   size_t dim,
                                   double *d_neg,
                                   double *d_pos);

// Triplet loss for a pair of distances. `margin` is ignored by the softmax-ratio loss.
//
// # Safety
// `out` must be writable.
enum FmStatus fm_triplet_loss(enum FmLossKind kind,
                              double d_neg,
                              double d_pos,
                              double margin,
                              double *out);

// Default run configuration.
//
// # Safety
// `out` must be writable. The handle must be released with [`fm_config_free`].
enum FmStatus fm_config_default(struct FmConfig **out);

// Reads a `key = value` configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FmStatus fm_config_load(const char *path, struct FmConfig **out);

// # Safety
// `config` must be a live handle.
enum FmStatus fm_config_seed(const struct FmConfig *config, uint64_t *out);

// # Safety
// `config` must be a live handle not used concurrently by another thread.
enum FmStatus fm_config_set_seed(struct FmConfig *config, uint64_t seed);

// Releases a configuration. NULL is ignored.
//
// # Safety
// `config` must come from this library and not be used afterwards.
void fm_config_free(struct FmConfig *config);

// Loads a manifest CSV; relative image paths resolve against its directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FmStatus fm_manifest_load(const char *path, struct FmManifest **out);

// # Safety
// `manifest` must be a live handle and `out` writable.
enum FmStatus fm_manifest_split_counts(const struct FmManifest *manifest,
                                       struct FmSplitCounts *out);

// Releases a manifest. NULL is ignored.
//
// # Safety
// `manifest` must come from this library and not be used afterwards.
void fm_manifest_free(struct FmManifest *manifest);

// Loads a backbone checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FmStatus fm_backbone_load(const char *path, struct FmBackbone **out);

// # Safety
// `backbone` must be a live handle and `out` writable.
enum FmStatus fm_backbone_embedding_dim(const struct FmBackbone *backbone, size_t *out);

// Embeds an image file. `out` receives `out_len` doubles, which must equal the
// embedding dimension.
//
// # Safety
// `backbone` must be a live handle, `image_path` a NUL-terminated string and `out`
// writable for `out_len` doubles.
enum FmStatus fm_backbone_embed_file(const struct FmBackbone *backbone,
                                     const char *image_path,
                                     double *out,
                                     size_t out_len);

// Releases a backbone. NULL is ignored.
//
// # Safety
// `backbone` must come from this library and not be used afterwards.
void fm_backbone_free(struct FmBackbone *backbone);

// Loads a classifier checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum FmStatus fm_classifier_load(const char *path, struct FmClassifier **out);

// Label and fake-probability of one embedding point.
//
// # Safety
// `classifier` must be a live handle, `point` readable for `dim` doubles, and `label`
// and `score` writable.
enum FmStatus fm_classifier_predict(const struct FmClassifier *classifier,
                                    const double *point,
                                    size_t dim,
                                    uint8_t *label,
                                    double *score);

// Releases a classifier. NULL is ignored.
//
// # Safety
// `classifier` must come from this library and not be used afterwards.
void fm_classifier_free(struct FmClassifier *classifier);

// Runs an experiment plan file end to end. `seed` replaces the plan's seed when
// `override_seed` is non-zero.
//
// # Safety
// `plan_path` must be a NUL-terminated string.
enum FmStatus fm_run_plan(const char *plan_path,
                          uint8_t override_seed,
                          uint64_t seed,
                          uint8_t overwrite);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEMANIP_H */
