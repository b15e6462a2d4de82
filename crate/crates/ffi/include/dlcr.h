#ifndef DLCR_H
#define DLCR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum DlcrStatus {
  DLCR_STATUS_OK = 0,
  DLCR_STATUS_NULL_POINTER = -1,
  // Invalid configuration or argument.
  DLCR_STATUS_INVALID_ARGUMENT = -2,
  // Malformed, mis-shaped or out-of-support data.
  DLCR_STATUS_DATA_ERROR = -3,
  // A numerical failure inside the sampler.
  DLCR_STATUS_NUMERIC_ERROR = -4,
  // The requested quantity is undefined for the input.
  DLCR_STATUS_UNDEFINED = -5,
  // A panic was caught at the boundary.
  DLCR_STATUS_PANIC = -6,
  // File system failure.
  DLCR_STATUS_IO_ERROR = -7,
} DlcrStatus;

// Observed outcomes with their covariates and meta-features.
typedef struct DlcrDataset DlcrDataset;

// A relabeled posterior sample from one chain.
typedef struct DlcrFit DlcrFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *dlcr_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dlcr_version(void);

// Builds a dataset from row-major arrays: `y` is `n × p`, `x` is `n × px`,
// `t` is `p × pt`. `entries` is a comma-separated list of entry kinds
// (`binary`, `count`, `categorical:D`) or null for all binary.
//
// # Safety
// Array pointers must be valid for the stated lengths; `out` must be writable.
enum DlcrStatus dlcr_dataset_new(uintptr_t n,
                                 uintptr_t p,
                                 const uint32_t *y,
                                 uintptr_t px,
                                 const double *x,
                                 uintptr_t pt,
                                 const double *t,
                                 const char *entries,
                                 struct DlcrDataset **out);

// Loads a dataset from delimited tables with header rows. `x_path`, `t_path`
// and `entries` may be null.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum DlcrStatus dlcr_dataset_load(const char *y_path,
                                  const char *x_path,
                                  const char *t_path,
                                  const char *entries,
                                  struct DlcrDataset **out);

// Writes `N`, `p`, `p_x`, `p_t`; any output pointer may be null.
//
// # Safety
// `dataset` must come from this library; non-null outputs must be writable.
enum DlcrStatus dlcr_dataset_shape(const struct DlcrDataset *dataset,
                                   uintptr_t *n,
                                   uintptr_t *p,
                                   uintptr_t *px,
                                   uintptr_t *pt);

// # Safety
// `dataset` must be null or come from this library and not be freed twice.
void dlcr_dataset_free(struct DlcrDataset *dataset);

// Runs one chain with `q` attributes and `d` classes under the default prior,
// block updates and thinning `thin`, then relabels the retained draws.
//
// # Safety
// `dataset` must come from this library; `out` must be writable.
enum DlcrStatus dlcr_fit(const struct DlcrDataset *dataset,
                         uintptr_t q,
                         uintptr_t d,
                         uintptr_t n_iters,
                         uintptr_t burn_in,
                         uintptr_t thin,
                         uint64_t seed,
                         struct DlcrFit **out);

// # Safety
// `fit` must be null or come from this library and not be freed twice.
void dlcr_fit_free(struct DlcrFit *fit);

// Number of retained draws.
//
// # Safety
// `fit` must come from this library; `out` must be writable.
enum DlcrStatus dlcr_fit_n_samples(const struct DlcrFit *fit, uintptr_t *out);

// WAIC with its two components.
//
// # Safety
// `fit` must come from this library; outputs must be writable.
enum DlcrStatus dlcr_fit_waic(const struct DlcrFit *fit,
                              double *waic_out,
                              double *lppd_out,
                              double *p_waic_out);

// Posterior class membership probabilities, `N × d` row-major into `buf`
// of length `len`.
//
// # Safety
// `fit` must come from this library; `buf` must hold `len` doubles.
enum DlcrStatus dlcr_fit_class_probs(const struct DlcrFit *fit, double *buf, uintptr_t len);

// Posterior predictive means for `n` new rows with covariates `x` (`n × px`
// row-major), written `n × p` row-major into `buf` of length `len`.
//
// # Safety
// `fit` must come from this library; arrays must be valid for their lengths.
enum DlcrStatus dlcr_fit_predict(const struct DlcrFit *fit,
                                 uintptr_t n,
                                 const double *x,
                                 uintptr_t px,
                                 double *buf,
                                 uintptr_t len);

// Writes the posterior archive tables into directory `dir`.
//
// # Safety
// `fit` must come from this library; `dir` must be NUL-terminated.
enum DlcrStatus dlcr_fit_write_archive(const struct DlcrFit *fit, const char *dir);

// Area under the ROC curve of `scores` against 0/1 `labels`. Returns
// `Undefined` when only one class is present.
//
// # Safety
// Both arrays must hold `len` elements; `out` must be writable.
enum DlcrStatus dlcr_auc(const double *scores, const uint8_t *labels, uintptr_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DLCR_H */
