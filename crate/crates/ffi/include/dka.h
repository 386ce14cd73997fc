#ifndef DKA_H
#define DKA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum DkaStatus {
  DKA_STATUS_OK = 0,
  // Null pointer, bad length or other misuse of the API.
  DKA_STATUS_INVALID_ARGUMENT = 1,
  // Resonance parameters failed validation.
  DKA_STATUS_VALIDATION = 2,
  // A numerical tolerance check failed.
  DKA_STATUS_TOLERANCE = 3,
  // Eigensolver or orbit search did not converge.
  DKA_STATUS_CONVERGENCE = 4,
  // Index past the end of a collection.
  DKA_STATUS_OUT_OF_RANGE = 5,
  // Internal panic caught at the boundary.
  DKA_STATUS_PANIC = 6,
} DkaStatus;

// Which kicked map to use.
typedef enum DkaMap {
  DKA_MAP_CLASSICAL = 0,
  DKA_MAP_EPSILON = 1,
} DkaMap;

// Opaque validated parameter set.
typedef struct DkaParams DkaParams;

// Opaque diagonalized Floquet block.
typedef struct DkaSpectrum DkaSpectrum;

// Derived quantities of a parameter set, in units `ħ = m = G = 1`.
typedef struct DkaDerived {
  double period;
  double omega;
  double stochasticity;
  double epsilon;
  double gravity;
  double beta;
  double gravity_drop;
  double ladder_step;
  double squeeze;
  size_t block_dim;
} DkaDerived;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *dka_last_error(void);

// Validates and derives a parameter set.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum DkaStatus dka_params_new(uint64_t m,
                              uint64_t n,
                              uint64_t r,
                              uint64_t s,
                              int64_t l,
                              double k,
                              double theta0,
                              struct DkaParams **out);

// # Safety
// `params` must be null or a handle from [`dka_params_new`] not yet freed.
void dka_params_free(struct DkaParams *params);

// # Safety
// `params` must be a live handle and `out` writable.
enum DkaStatus dka_params_derived(const struct DkaParams *params, struct DkaDerived *out);

// Builds and diagonalizes the Floquet block at the parameter set's Bloch
// angle.
//
// # Safety
// `params` must be a live handle and `out` writable.
enum DkaStatus dka_spectrum_compute(const struct DkaParams *params, struct DkaSpectrum **out);

// # Safety
// `spectrum` must be null or a handle from [`dka_spectrum_compute`].
void dka_spectrum_free(struct DkaSpectrum *spectrum);

// Number of eigenpairs; 0 for a null handle.
//
// # Safety
// `spectrum` must be null or a live handle.
size_t dka_spectrum_len(const struct DkaSpectrum *spectrum);

// Eigenvalue, quasi-energy and residual of eigenpair `index`. Any output
// pointer may be null.
//
// # Safety
// `spectrum` must be a live handle; non-null outputs must be writable.
enum DkaStatus dka_spectrum_eigenpair(const struct DkaSpectrum *spectrum,
                                      size_t index,
                                      double *eigenvalue_re,
                                      double *eigenvalue_im,
                                      double *quasi_energy,
                                      double *residual);

// Copies eigenvector `index` as interleaved `re, im` pairs into `out`,
// which must hold `2 × block_dim` doubles.
//
// # Safety
// `spectrum` must be a live handle and `out` valid for `len` doubles.
enum DkaStatus dka_spectrum_vector(const struct DkaSpectrum *spectrum,
                                   size_t index,
                                   double *out,
                                   size_t len);

// Husimi function of eigenstate `index` on an `nz × np` grid over the
// whole quantum cell, row-major with one row per momentum.
//
// # Safety
// `spectrum` must be a live handle and `out` valid for `len` doubles.
enum DkaStatus dka_husimi(const struct DkaSpectrum *spectrum,
                          size_t index,
                          size_t nz,
                          size_t np,
                          double *out,
                          size_t len);

// One-kick momentum transfer amplitude `iⁿ J_n(k)`.
//
// # Safety
// `re` and `im` must be writable.
enum DkaStatus dka_kick_coefficient(int64_t n, double k, double *re, double *im);

// One step of the chosen map, in place on `(theta, action)`. `sign` is
// `sgn ε` and ignored for the classical map.
//
// # Safety
// `theta` and `action` must be valid read-write pointers.
enum DkaStatus dka_map_step(enum DkaMap kind,
                            double kick,
                            double omega,
                            double sign,
                            double *theta,
                            double *action);

// Most stable accelerator-mode orbit of order `order` and jump `jump`.
// `theta` and `action` receive `order` values each.
//
// # Safety
// `theta` and `action` must be valid for `order` doubles; `trace` and
// `stable` may be null.
enum DkaStatus dka_find_orbit(enum DkaMap kind,
                              double kick,
                              double omega,
                              double sign,
                              size_t order,
                              int64_t jump,
                              double *theta,
                              double *action,
                              double *trace,
                              bool *stable);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DKA_H */
