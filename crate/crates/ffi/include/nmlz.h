#ifndef NMLZ_H
#define NMLZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. The nonzero values match the exit codes of the `nmlz`
// binary, plus two codes for misuse of the interface itself.
typedef enum NmlzStatus {
  NMLZ_STATUS_OK = 0,
  NMLZ_STATUS_CONFIG = 2,
  NMLZ_STATUS_NUMERIC = 3,
  NMLZ_STATUS_REFUSED_REGIME = 4,
  NMLZ_STATUS_NULL_POINTER = 5,
  NMLZ_STATUS_PANIC = 6,
} NmlzStatus;

// Opaque model handle.
typedef struct NmlzModelHandle NmlzModelHandle;

// Opaque transition-table handle.
typedef struct NmlzTableHandle NmlzTableHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *nmlz_last_error(void);

// Library version as a static NUL-terminated string.
const char *nmlz_version(void);

// Builds a model from row-major `dim x dim` coupling parts. The diagonal of
// the coupling must be zero.
//
// # Safety
// `slopes` and `statics` must point to `dim` doubles, `coupling_re` and
// `coupling_im` to `dim * dim` doubles, `out` to writable storage.
enum NmlzStatus nmlz_model_new(size_t dim,
                               const double *slopes,
                               const double *statics,
                               const double *coupling_re,
                               const double *coupling_im,
                               bool hermitian,
                               struct NmlzModelHandle **out);

// Builds a model from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string, `out` writable.
enum NmlzStatus nmlz_model_from_json(const char *json, struct NmlzModelHandle **out);

// # Safety
// `model` must come from a model constructor and not be used afterwards.
void nmlz_model_free(struct NmlzModelHandle *model);

// Number of levels, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t nmlz_model_dim(const struct NmlzModelHandle *model);

// Integrates every column of the scattering matrix. A non-positive
// `horizon` selects the default; non-positive tolerances keep the defaults.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum NmlzStatus nmlz_solve(const struct NmlzModelHandle *model,
                           double horizon,
                           double rel_tol,
                           double abs_tol,
                           struct NmlzTableHandle **out);

// # Safety
// `table` must come from [`nmlz_solve`] and not be used afterwards.
void nmlz_table_free(struct NmlzTableHandle *table);

// # Safety
// `table` must be NULL or a live handle.
size_t nmlz_table_dim(const struct NmlzTableHandle *table);

// Horizon the table was integrated to, or NaN for NULL.
//
// # Safety
// `table` must be NULL or a live handle.
double nmlz_table_horizon(const struct NmlzTableHandle *table);

// Natural log of the unnormalized probability from level `from` to level
// `to` (zero-based).
//
// # Safety
// `table` must be a live handle and `out` writable.
enum NmlzStatus nmlz_table_log_p_tilde(const struct NmlzTableHandle *table,
                                       size_t to,
                                       size_t from,
                                       double *out);

// Unnormalized probability; fails with `NMLZ_STATUS_NUMERIC` if it does not
// fit in a double.
//
// # Safety
// `table` must be a live handle and `out` writable.
enum NmlzStatus nmlz_table_p_tilde(const struct NmlzTableHandle *table,
                                   size_t to,
                                   size_t from,
                                   double *out);

// Probability normalized over its column.
//
// # Safety
// `table` must be a live handle and `out` writable.
enum NmlzStatus nmlz_table_normalized(const struct NmlzTableHandle *table,
                                      size_t to,
                                      size_t from,
                                      double *out);

// Closed-form two-level result for slopes `(-v/2, v/2)` and coupling `g`:
// logs of the survival and transition probabilities.
//
// # Safety
// Both output pointers must be writable.
enum NmlzStatus nmlz_two_level_log(double g_re,
                                   double g_im,
                                   double v,
                                   bool hermitian,
                                   double *log_survival,
                                   double *log_transition);

// Semiclassical probability between the two inner crossings of the
// four-level model with slope `b`, statics `e1`, `e2` and coupling `g`.
// Refuses the critical window with `NMLZ_STATUS_REFUSED_REGIME`.
//
// # Safety
// `out` must be writable.
enum NmlzStatus nmlz_dykhne_probability(double b,
                                        double e1,
                                        double e2,
                                        double g,
                                        double stokes_phase,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NMLZ_H */
