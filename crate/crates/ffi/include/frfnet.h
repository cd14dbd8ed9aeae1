#ifndef FRFNET_H
#define FRFNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function of the library.
 */
typedef enum FrfnetStatus {
  FRFNET_STATUS_OK = 0,
  FRFNET_STATUS_NULL_POINTER = 1,
  FRFNET_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The caller's buffer is too small; the required length is reported.
   */
  FRFNET_STATUS_BUFFER_TOO_SMALL = 3,
  FRFNET_STATUS_IO = 4,
  FRFNET_STATUS_CORRUPT = 5,
  FRFNET_STATUS_BASIS_MISMATCH = 6,
  FRFNET_STATUS_WRONG_TASK = 7,
  FRFNET_STATUS_NUMERICAL = 8,
  FRFNET_STATUS_PANIC = 9,
} FrfnetStatus;

/**
 * An accelerance and strain PCA basis pair.
 */
typedef struct FrfnetBases FrfnetBases;

/**
 * A measured or simulated FRF matrix.
 */
typedef struct FrfnetFrf FrfnetFrf;

/**
 * One trained task network.
 */
typedef struct FrfnetModel FrfnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *frfnet_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next library call on the same thread.
 */
const char *frfnet_last_error(void);

/**
 * Reads an FRF container.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FrfnetStatus frfnet_frf_load(const char *path, struct FrfnetFrf **out);

/**
 * # Safety
 * `frf` must come from [`frfnet_frf_load`] or be NULL.
 */
void frfnet_frf_free(struct FrfnetFrf *frf);

/**
 * # Safety
 * `frf` must be a live handle or NULL (gives 0).
 */
size_t frfnet_frf_n_channels(const struct FrfnetFrf *frf);

/**
 * Number of frequency bins including DC.
 *
 * # Safety
 * `frf` must be a live handle or NULL (gives 0).
 */
size_t frfnet_frf_n_bins(const struct FrfnetFrf *frf);

/**
 * Reads the accelerance and strain basis containers.
 *
 * # Safety
 * Both paths must be NUL-terminated strings; `out` must be writable.
 */
enum FrfnetStatus frfnet_bases_load(const char *accel_path,
                                    const char *strain_path,
                                    struct FrfnetBases **out);

/**
 * # Safety
 * `bases` must come from [`frfnet_bases_load`] or be NULL.
 */
void frfnet_bases_free(struct FrfnetBases *bases);

/**
 * # Safety
 * `bases` must be a live handle or NULL (gives 0).
 */
size_t frfnet_bases_fingerprint_len(const struct FrfnetBases *bases);

/**
 * Projects `frf` onto `bases`. `out_len` receives the fingerprint length
 * even when `capacity` is too small.
 *
 * # Safety
 * Handles must be live; `out` must hold `capacity` doubles.
 */
enum FrfnetStatus frfnet_fingerprint(const struct FrfnetBases *bases,
                                     const struct FrfnetFrf *frf,
                                     double *out,
                                     size_t capacity,
                                     size_t *out_len);

/**
 * Reads a task model container.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FrfnetStatus frfnet_model_load(const char *path, struct FrfnetModel **out);

/**
 * # Safety
 * `model` must come from [`frfnet_model_load`] or be NULL.
 */
void frfnet_model_free(struct FrfnetModel *model);

/**
 * 1 for a localization model, 0 for a severity model or NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
int32_t frfnet_model_is_localizer(const struct FrfnetModel *model);

/**
 * Output width of the model: 34 for localization, 1 for severity.
 *
 * # Safety
 * `model` must be a live handle or NULL (gives 0).
 */
size_t frfnet_model_output_dim(const struct FrfnetModel *model);

/**
 * Rivet scores and threshold decisions for one FRF. `scores` and `flags`
 * must each hold `capacity` entries; `out_len` receives the rivet count.
 *
 * # Safety
 * Handles must be live; buffers must hold `capacity` entries.
 */
enum FrfnetStatus frfnet_localize(const struct FrfnetModel *model,
                                  const struct FrfnetBases *bases,
                                  const struct FrfnetFrf *frf,
                                  double threshold,
                                  double *scores,
                                  uint8_t *flags,
                                  size_t capacity,
                                  size_t *out_len);

/**
 * Severity in physical units (mm, stiffness-loss fraction or kg), clamped
 * at zero, for the damage kind the model was trained on.
 *
 * # Safety
 * Handles must be live; `value` must be writable.
 */
enum FrfnetStatus frfnet_severity(const struct FrfnetModel *model,
                                  const struct FrfnetBases *bases,
                                  const struct FrfnetFrf *frf,
                                  double *value);

/**
 * Eigen-decomposition of a symmetric `n x n` row-major matrix. Eigenvalues
 * are written in descending order; `vectors` receives the eigenvectors as
 * columns, row-major.
 *
 * # Safety
 * `a` and `vectors` must hold `n * n` doubles, `values` must hold `n`.
 */
enum FrfnetStatus frfnet_eig_sym(size_t n, const double *a, double *values, double *vectors);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRFNET_H */
