#ifndef FEDCREDIT_H
#define FEDCREDIT_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_CONFIG = 3,
  FC_STATUS_IO = 4,
  FC_STATUS_NOT_FOUND = 5,
  FC_STATUS_RUNTIME = 6,
  FC_STATUS_PANIC = 7,
} FcStatus;

typedef enum FcScheme {
  FC_SCHEME_BALANCED = 0,
  FC_SCHEME_DOMINANT60 = 1,
  FC_SCHEME_DOMINANT80 = 2,
} FcScheme;

typedef enum FcModel {
  FC_MODEL_MLP = 0,
  FC_MODEL_GBDT = 1,
} FcModel;

typedef enum FcBaseline {
  FC_BASELINE_LOCAL_NON_DOMINANT = 0,
  FC_BASELINE_LOCAL_DOMINANT = 1,
  FC_BASELINE_CENTRALISED = 2,
} FcBaseline;

/**
 * A dataset held by the library.
 */
typedef struct FcDataset FcDataset;

/**
 * A loaded experiment configuration.
 */
typedef struct FcExperiment FcExperiment;

/**
 * A client partition plan.
 */
typedef struct FcPlan FcPlan;

/**
 * Per-cell results of a finished experiment.
 */
typedef struct FcSummary FcSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next status-returning call on this thread.
 */
const char *fc_last_error_message(void);

/**
 * Synthetic class-conditional Gaussian data. `priors` holds `n_classes`
 * class probabilities.
 */
enum FcStatus fc_dataset_synthesize(size_t n_samples,
                                    size_t n_features,
                                    const double *priors,
                                    size_t n_classes,
                                    double separation,
                                    uint64_t seed,
                                    struct FcDataset **out);

enum FcStatus fc_dataset_load_csv(const char *path,
                                  const char *label_column,
                                  struct FcDataset **out);

size_t fc_dataset_n_samples(const struct FcDataset *ds);

size_t fc_dataset_n_features(const struct FcDataset *ds);

/**
 * Number of samples of each class, written to `counts[0..n_classes]`.
 */
enum FcStatus fc_dataset_class_counts(const struct FcDataset *ds, size_t *counts, size_t n_classes);

void fc_dataset_free(struct FcDataset *ds);

/**
 * Plan for a named scheme. A non-zero `n_samples` also fixes shard counts.
 */
enum FcStatus fc_plan_named(size_t n_clients,
                            enum FcScheme scheme,
                            size_t n_samples,
                            struct FcPlan **out);

size_t fc_plan_n_clients(const struct FcPlan *plan);

/**
 * Percentage share of client `i`, or 0 when out of range.
 */
uint32_t fc_plan_proportion(const struct FcPlan *plan, size_t i);

/**
 * Shard size of client `i`, or 0 when the plan has no counts.
 */
size_t fc_plan_count(const struct FcPlan *plan, size_t i);

/**
 * Index of the dominant client, or -1 for balanced plans.
 */
int64_t fc_plan_dominant_index(const struct FcPlan *plan);

/**
 * Writes the dash-joined label (e.g. `80-10-10`) into `buf`, NUL terminated.
 * Returns the label length; the label is truncated when `len` is too small.
 */
size_t fc_plan_label(const struct FcPlan *plan, char *buf, size_t len);

void fc_plan_free(struct FcPlan *plan);

/**
 * ROC AUC of `scores` against 0/1 `labels`, ties counted as one half.
 */
enum FcStatus fc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Sample-weighted FedAvg of `n_updates` row-major vectors of length `len`,
 * clamped to the participants' coordinatewise range. Writes `len` values.
 */
enum FcStatus fc_fedavg(const double *updates,
                        size_t n_updates,
                        size_t len,
                        const uint64_t *sample_counts,
                        double *out);

/**
 * Loads and validates a TOML experiment config.
 */
enum FcStatus fc_experiment_load(const char *path, struct FcExperiment **out);

enum FcStatus fc_experiment_set_output_dir(struct FcExperiment *exp, const char *dir);

/**
 * Runs the grid, writing records and summaries to the output directory.
 */
enum FcStatus fc_experiment_run(const struct FcExperiment *exp, struct FcSummary **out);

void fc_experiment_free(struct FcExperiment *exp);

size_t fc_summary_n_cells(const struct FcSummary *summary);

/**
 * Mean federated test AUC of one cell. `FC_STATUS_NOT_FOUND` when the cell
 * is absent or has no complete run.
 */
enum FcStatus fc_summary_federated_auc(const struct FcSummary *summary,
                                       enum FcModel model,
                                       size_t n_clients,
                                       enum FcScheme scheme,
                                       double *out);

/**
 * Mean relative AUC improvement (percent) of the federated model over a baseline.
 */
enum FcStatus fc_summary_improvement(const struct FcSummary *summary,
                                     enum FcModel model,
                                     size_t n_clients,
                                     enum FcScheme scheme,
                                     enum FcBaseline baseline,
                                     double *out);

void fc_summary_free(struct FcSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDCREDIT_H */
