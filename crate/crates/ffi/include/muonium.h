/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MUONIUM_H
#define MUONIUM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Values accepted by the `geometry` parameters.
 */
typedef enum MuGeometry {
  MU_GEOMETRY_LONGITUDINAL = 0,
  MU_GEOMETRY_TRANSVERSE = 1,
} MuGeometry;

typedef enum MuStatus {
  MU_STATUS_OK = 0,
  MU_STATUS_NULL_POINTER = 1,
  MU_STATUS_INVALID_ARGUMENT = 2,
  MU_STATUS_NUMERICAL = 3,
  /**
   * The caller's buffer is shorter than the result; the required length was written.
   */
  MU_STATUS_BUFFER_TOO_SMALL = 4,
  MU_STATUS_INTERNAL = 5,
  MU_STATUS_PANIC = 6,
} MuStatus;

/**
 * Opaque electron-muon spin system.
 */
typedef struct MuSystem MuSystem;

/**
 * Population relaxation rates in μs⁻¹.
 */
typedef struct MuRelaxation {
  double electron;
  double muon12;
  double muon34;
} MuRelaxation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a successful one. The
 * pointer stays valid until the next call into this library from the same thread.
 */
const char *mu_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mu_version(void);

/**
 * Isotropic system with hyperfine constant `a_iso_mhz`.
 *
 * # Safety
 * `out_handle` must be valid for writes.
 */
enum MuStatus mu_system_isotropic(double g_e, double a_iso_mhz, struct MuSystem **out_handle);

/**
 * Axially symmetric system with the symmetry axis along B₀.
 *
 * # Safety
 * `out_handle` must be valid for writes.
 */
enum MuStatus mu_system_axial(double g_e,
                              double a_par_mhz,
                              double a_perp_mhz,
                              struct MuSystem **out_handle);

/**
 * Releases a handle. Null is accepted and ignored.
 *
 * # Safety
 * `sys` is null or a handle from `mu_system_*` that has not been freed.
 */
void mu_system_free(struct MuSystem *sys);

/**
 * Energies of levels 1..4 in MHz at `b0_mt`, in label order.
 *
 * # Safety
 * `sys` is a live handle; `energies_out` points to 4 writable doubles.
 */
enum MuStatus mu_level_energies(const struct MuSystem *sys, double b0_mt, double *energies_out);

/**
 * Signed splitting E_i − E_j in MHz.
 *
 * # Safety
 * `sys` is a live handle; `nu_out` is valid for writes.
 */
enum MuStatus mu_transition_frequency(const struct MuSystem *sys,
                                      double b0_mt,
                                      uint32_t i,
                                      uint32_t j,
                                      double *nu_out);

/**
 * Rabi frequency γ_ij·B₁/2 in MHz of transition (i,j) under a linearly polarized drive.
 *
 * # Safety
 * `sys` is a live handle; `nu1_out` is valid for writes.
 */
enum MuStatus mu_rabi_frequency(const struct MuSystem *sys,
                                double b0_mt,
                                uint32_t i,
                                uint32_t j,
                                double b1_mt,
                                double *nu1_out);

/**
 * Driven muon frequencies ν₁₂ and ν₃₄ in MHz under a continuous drive at `nu_uw_mhz`
 * with Rabi frequency `nu1_mhz`. `flagged_out` may be null; it is set to 1 near a
 * resonance where the closed form is unreliable.
 *
 * # Safety
 * `sys` is a live handle; `nu12_out` and `nu34_out` are valid for writes; `flagged_out` is
 * null or valid for writes.
 */
enum MuStatus mu_demur_frequencies(const struct MuSystem *sys,
                                   double b0_mt,
                                   double nu_uw_mhz,
                                   double nu1_mhz,
                                   double *nu12_out,
                                   double *nu34_out,
                                   uint8_t *flagged_out);

/**
 * Muon polarization under a continuous drive from t = 0 to `t_end_ns`, in the rotating
 * frame with step `dt_ns`. `geometry` is a [`MuGeometry`] value; `relaxation` may be null
 * for coherent evolution.
 *
 * Writes up to `capacity` samples into `times_out` (ns) and `values_out`, and the sample
 * count into `len_out`. When `capacity` is too small nothing but `len_out` is written and
 * the call returns [`MuStatus::BufferTooSmall`]; pass `capacity = 0` to query the length.
 *
 * # Safety
 * `sys` is a live handle; `len_out` is valid for writes; `times_out` and `values_out` are
 * each valid for `capacity` writes (either may be null when `capacity` is 0);
 * `relaxation` is null or readable.
 */
enum MuStatus mu_propagate_cw(const struct MuSystem *sys,
                              double b0_mt,
                              double b1_mt,
                              double nu_uw_mhz,
                              double t_end_ns,
                              double dt_ns,
                              uint32_t geometry,
                              const struct MuRelaxation *relaxation,
                              double *times_out,
                              double *values_out,
                              size_t capacity,
                              size_t *len_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUONIUM_H */
