#ifndef JVCQMA_H
#define JVCQMA_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  JVCQMA_STATUS_OK = 0,
  JVCQMA_STATUS_NULL_POINTER = 1,
  JVCQMA_STATUS_INVALID_ARGUMENT = 2,
  JVCQMA_STATUS_UTF8 = 3,
  JVCQMA_STATUS_SOLVE_FAILED = 4,
  JVCQMA_STATUS_SERIALIZATION = 5,
  JVCQMA_STATUS_PANIC = 6,
} JvcqmaStatus;

/**
 * Weight scheme selector for `jvcqma_fit`.
 */
typedef enum {
  JVCQMA_SCHEME_LOOCV = 0,
  JVCQMA_SCHEME_EQUAL = 1,
  JVCQMA_SCHEME_SMOOTHED_BIC = 2,
} JvcqmaScheme;

/**
 * Kernel selector.
 */
typedef enum {
  JVCQMA_KERNEL_GAUSSIAN = 0,
  JVCQMA_KERNEL_EPANECHNIKOV = 1,
} JvcqmaKernel;

/**
 * Opaque dataset handle.
 */
typedef struct JvcqmaDataset JvcqmaDataset;

/**
 * Opaque fitted-model handle; owns a copy of its training data so
 * prediction is self-contained.
 */
typedef struct JvcqmaModel JvcqmaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL.
 * Valid until the next failing call on the same thread.
 */
const char *jvcqma_last_error_message(void);

/**
 * Build a dataset from row-major covariates.
 *
 * `y`: n responses; `x`: n*num_cols row-major covariates;
 * `continuous`/`discrete`: 0-based column indices partitioning the
 * covariates.
 *
 * # Safety
 * All pointers must be valid for the stated lengths; `out` must be a valid
 * location to store the handle.
 */
JvcqmaStatus jvcqma_dataset_new(const double *y,
                                uintptr_t n,
                                const double *x,
                                uintptr_t num_cols,
                                const uintptr_t *continuous,
                                uintptr_t n_continuous,
                                const uintptr_t *discrete,
                                uintptr_t n_discrete,
                                JvcqmaDataset **out);

/**
 * Load a dataset from a CSV file with a JSON column schema.
 *
 * # Safety
 * `path` and `schema_json` must be NUL-terminated strings; `out` must be
 * valid.
 */
JvcqmaStatus jvcqma_dataset_from_csv(const char *path,
                                     const char *schema_json,
                                     JvcqmaDataset **out);

/**
 * # Safety
 * `handle` must come from a jvcqma constructor and not be freed twice.
 */
void jvcqma_dataset_free(JvcqmaDataset *handle);

/**
 * # Safety
 * `handle` must be null or a live handle from this library.
 */
uintptr_t jvcqma_dataset_rows(const JvcqmaDataset *handle);

/**
 * # Safety
 * `handle` must be null or a live handle from this library.
 */
uintptr_t jvcqma_dataset_cols(const JvcqmaDataset *handle);

/**
 * Fit averaging weights on a dataset at one quantile level. Bandwidths are
 * selected by leave-one-out least-squares cross-validation on the default
 * grid and adjusted for the quantile level.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be valid.
 */
JvcqmaStatus jvcqma_fit(const JvcqmaDataset *dataset,
                        double tau,
                        JvcqmaScheme scheme,
                        JvcqmaKernel kernel,
                        JvcqmaModel **out);

/**
 * # Safety
 * `handle` must come from `jvcqma_fit`/`jvcqma_model_from_json` and not be
 * freed twice.
 */
void jvcqma_model_free(JvcqmaModel *handle);

/**
 * # Safety
 * `handle` must be null or a live handle from this library.
 */
uintptr_t jvcqma_model_num_candidates(const JvcqmaModel *handle);

/**
 * Copy the averaging weights into `out` (capacity `len`, must be at least
 * the candidate count).
 *
 * # Safety
 * `out` must point to at least `len` writable doubles.
 */
JvcqmaStatus jvcqma_model_weights(const JvcqmaModel *handle, double *out, uintptr_t len);

/**
 * Predict conditional quantiles for `n_rows` query rows (row-major, same
 * covariate layout as the training data). Failed rows come back as NaN.
 *
 * # Safety
 * `queries` must hold n_rows * num_covariates doubles; `out` must hold
 * n_rows writable doubles.
 */
JvcqmaStatus jvcqma_predict(const JvcqmaModel *handle,
                            const double *queries,
                            uintptr_t n_rows,
                            double *out);

/**
 * Serialize a model (weights, bandwidths, quantile level, scheme, column
 * map) to JSON. Training data is not embedded.
 *
 * # Safety
 * `out` must be valid; free the returned string with `jvcqma_string_free`.
 */
JvcqmaStatus jvcqma_model_to_json(const JvcqmaModel *handle, char **out);

/**
 * Rebuild a model handle from `jvcqma_model_to_json` output plus the
 * training dataset it was fit on.
 *
 * # Safety
 * `json` must be NUL-terminated; `dataset` live; `out` valid.
 */
JvcqmaStatus jvcqma_model_from_json(const char *json,
                                    const JvcqmaDataset *dataset,
                                    JvcqmaKernel kernel,
                                    JvcqmaModel **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void jvcqma_string_free(char *s);

/**
 * Check loss rho_tau(u); returns InvalidArgument for tau outside (0,1) or
 * non-finite u.
 *
 * # Safety
 * `out` must be valid.
 */
JvcqmaStatus jvcqma_check_loss(double tau, double u, double *out);

/**
 * Quantile bandwidth adjustment factor {tau(1-tau)/phi^2(Phi^-1(tau))}^(1/5).
 *
 * # Safety
 * `out` must be valid.
 */
JvcqmaStatus jvcqma_quantile_adjust_factor(double tau, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JVCQMA_H */
