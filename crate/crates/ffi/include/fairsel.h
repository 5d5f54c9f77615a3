#ifndef FAIRSEL_H
#define FAIRSEL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  FAIRSEL_STATUS_OK = 0,
  FAIRSEL_STATUS_CONFIG_ERROR = 1,
  FAIRSEL_STATUS_DATA_ERROR = 2,
  FAIRSEL_STATUS_NUMERIC_ERROR = 3,
  FAIRSEL_STATUS_NULL_POINTER = 4,
  FAIRSEL_STATUS_PANIC = 5,
} FairselStatus;

/**
 * Opaque optimizer configuration handle.
 */
typedef struct FairselConfig FairselConfig;

/**
 * Opaque dataset handle.
 */
typedef struct FairselDataset FairselDataset;

/**
 * Opaque selection result handle.
 */
typedef struct FairselResult FairselResult;

/**
 * Clustering scores; `acc` and `nmi` are NaN when not computed.
 */
typedef struct {
  double acc;
  double nmi;
  double balance;
  double proportion;
} FairselMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fairsel_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fairsel_version(void);

/**
 * Builds a dataset from row-major buffers: `x` is `d x n` (one row per
 * feature), `p_mat` is `p x n`. `labels` may be NULL, otherwise it holds
 * `n` cluster ids.
 *
 * # Safety
 * Buffers must hold the stated number of elements; `out` must be writable.
 */
FairselStatus fairsel_dataset_from_arrays(const double *x,
                                          size_t d,
                                          size_t n,
                                          const double *p_mat,
                                          size_t p,
                                          const size_t *labels,
                                          FairselDataset **out);

/**
 * Reads an instance-per-row CSV. `protected` is a comma-separated list of
 * column names; `label` may be NULL.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
FairselStatus fairsel_dataset_from_csv(const char *path,
                                       const char *protected_,
                                       const char *label,
                                       bool standardize,
                                       FairselDataset **out);

/**
 * Generates a synthetic dataset with utility, sensitive and noise features.
 *
 * # Safety
 * `out` must be writable.
 */
FairselStatus fairsel_dataset_synthetic(size_t n,
                                        size_t n_utility,
                                        size_t n_sensitive,
                                        size_t n_noise,
                                        double cluster_separation,
                                        double sensitive_correlation,
                                        uint64_t seed,
                                        bool standardize,
                                        FairselDataset **out);

/**
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
FairselStatus fairsel_dataset_dims(const FairselDataset *ds, size_t *d, size_t *n, size_t *p);

/**
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void fairsel_dataset_free(FairselDataset *ds);

/**
 * Default configuration selecting `k` features. Never returns NULL.
 */
FairselConfig *fairsel_config_new(size_t k);

/**
 * # Safety
 * `cfg` must be NULL or a handle not yet freed.
 */
void fairsel_config_free(FairselConfig *cfg);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_alpha(FairselConfig *cfg, double value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_beta(FairselConfig *cfg, double value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_k(FairselConfig *cfg, size_t value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_l(FairselConfig *cfg, size_t value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_eta(FairselConfig *cfg, double value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_max_iter(FairselConfig *cfg, size_t value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_tol(FairselConfig *cfg, double value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_seed(FairselConfig *cfg, uint64_t value);

/**
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_ablate_g(FairselConfig *cfg, bool value);

/**
 * Switches between a fixed step (`true`) and backtracking line search.
 *
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_fixed_step(FairselConfig *cfg, bool fixed);

/**
 * Selects the kernel: linear when `linear` is true, otherwise rbf with
 * bandwidth `sigma`, or the median heuristic when `sigma <= 0`.
 *
 * # Safety
 * `cfg` must be NULL or a live config handle.
 */
FairselStatus fairsel_config_set_kernel(FairselConfig *cfg, bool linear, double sigma);

/**
 * Runs the optimizer.
 *
 * # Safety
 * `ds` and `cfg` must be live handles; `out` must be writable.
 */
FairselStatus fairsel_select(const FairselDataset *ds,
                             const FairselConfig *cfg,
                             FairselResult **out);

/**
 * # Safety
 * `res` must be NULL or a handle not yet freed.
 */
void fairsel_result_free(FairselResult *res);

/**
 * Number of features `d` of the result.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t fairsel_result_d(const FairselResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t fairsel_result_selected_len(const FairselResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t fairsel_result_flagged_len(const FairselResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t fairsel_result_iterations(const FairselResult *res);

/**
 * # Safety
 * `res` must be NULL or a live result handle.
 */
bool fairsel_result_converged(const FairselResult *res);

/**
 * Final objective value, NaN for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
double fairsel_result_objective(const FairselResult *res);

/**
 * Copies the selected feature indices (best first) into `buf`.
 *
 * # Safety
 * `buf` must hold `cap` elements.
 */
FairselStatus fairsel_result_selected(const FairselResult *res, size_t *buf, size_t cap);

/**
 * Copies the indices flagged as sensitive into `buf`.
 *
 * # Safety
 * `buf` must hold `cap` elements.
 */
FairselStatus fairsel_result_flagged(const FairselResult *res, size_t *buf, size_t cap);

/**
 * Copies the final `m` and `g` vectors; either buffer may be NULL to skip it.
 *
 * # Safety
 * Non-NULL buffers must hold `cap` elements.
 */
FairselStatus fairsel_result_indicators(const FairselResult *res, double *m, double *g, size_t cap);

/**
 * Serializes the result as JSON. Free the string with
 * [`fairsel_string_free`].
 *
 * # Safety
 * `res` must be a live handle; `out` must be writable.
 */
FairselStatus fairsel_result_to_json(const FairselResult *res, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void fairsel_string_free(char *s);

/**
 * Clusters the instances on the given features with k-means and scores
 * the partition. `clusters == 0` uses the number of distinct labels. ACC
 * and NMI are computed only when `utility` is true.
 *
 * # Safety
 * `selected` must hold `len` indices; `out` must be writable.
 */
FairselStatus fairsel_evaluate(const FairselDataset *ds,
                               const size_t *selected,
                               size_t len,
                               size_t clusters,
                               size_t restarts,
                               uint64_t seed,
                               bool utility,
                               FairselMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRSEL_H */
