#ifndef FIXMPC_H
#define FIXMPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver family for [`fixmpc_hw_latency`].
 */
typedef enum FixmpcFamily {
  FIXMPC_FAMILY_FGM = 0,
  FIXMPC_FAMILY_ADMM = 1,
} FixmpcFamily;

/**
 * Result codes.
 */
typedef enum FixmpcStatus {
  FIXMPC_STATUS_OK = 0,
  FIXMPC_STATUS_NULL_POINTER = 1,
  FIXMPC_STATUS_INVALID_ARGUMENT = 2,
  FIXMPC_STATUS_CONFIG = 3,
  FIXMPC_STATUS_VALIDATION = 4,
  FIXMPC_STATUS_DIMENSION = 5,
  FIXMPC_STATUS_OVERFLOW = 6,
  FIXMPC_STATUS_PRECISION = 7,
  FIXMPC_STATUS_ASSUMPTION = 8,
  FIXMPC_STATUS_UNSTABLE = 9,
  FIXMPC_STATUS_SOLVER = 10,
  FIXMPC_STATUS_PANIC = 11,
} FixmpcStatus;

/**
 * ADMM on the sparse problem, in double or fixed-point arithmetic.
 */
typedef struct FixmpcAdmm FixmpcAdmm;

/**
 * FGM on the condensed problem, in double or fixed-point arithmetic.
 */
typedef struct FixmpcFgm FixmpcFgm;

/**
 * A validated problem.
 */
typedef struct FixmpcProblem FixmpcProblem;

/**
 * Latency of one solve on the modeled datapath.
 */
typedef struct FixmpcLatency {
  uint64_t cycles_per_iter;
  uint64_t total_cycles;
  double sample_time_s;
} FixmpcLatency;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into the library from this thread.
 */
const char *fixmpc_last_error(void);

/**
 * Library version as a static string.
 */
const char *fixmpc_version(void);

/**
 * Parses and validates a problem document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum FixmpcStatus fixmpc_problem_from_json(const char *json, struct FixmpcProblem **out);

/**
 * # Safety
 * `p` must come from [`fixmpc_problem_from_json`] or be null.
 */
void fixmpc_problem_free(struct FixmpcProblem *p);

/**
 * State, input and horizon lengths; any output pointer may be null.
 *
 * # Safety
 * `p` must be a live problem handle.
 */
enum FixmpcStatus fixmpc_problem_dims(const struct FixmpcProblem *p,
                                      size_t *nx,
                                      size_t *nu,
                                      size_t *horizon);

/**
 * Builds an FGM solver. `frac_bits == 0` selects double precision;
 * otherwise integer bits follow from the overflow bounds over
 * parameters `(x, x_ref, u_ref)` with `|p_j| <= param_bound`.
 *
 * # Safety
 * `p` must be a live problem handle and `out` writable.
 */
enum FixmpcStatus fixmpc_fgm_new(const struct FixmpcProblem *p,
                                 uint32_t frac_bits,
                                 double param_bound,
                                 struct FixmpcFgm **out);

/**
 * # Safety
 * `s` must come from [`fixmpc_fgm_new`] or be null.
 */
void fixmpc_fgm_free(struct FixmpcFgm *s);

/**
 * Length `N n_u` of the FGM solution.
 *
 * # Safety
 * `s` must be a live solver handle.
 */
size_t fixmpc_fgm_len(const struct FixmpcFgm *s);

/**
 * Cold-start solve. `x` has `nx` entries; `x_ref` (`nx`) and `u_ref`
 * (`nu`) may be null for zero. Writes the input sequence to `z`.
 *
 * # Safety
 * All non-null pointers must reference buffers of the stated lengths.
 */
enum FixmpcStatus fixmpc_fgm_solve(const struct FixmpcFgm *s,
                                   const double *x,
                                   const double *x_ref,
                                   const double *u_ref,
                                   size_t iters,
                                   double *z,
                                   size_t z_len);

/**
 * Builds an ADMM solver with penalty `rho`. `frac_bits == 0` selects
 * double precision; otherwise every signal gets `int_bits` integer bits.
 * Soft constraints are rescaled by the problem's `sigma1`.
 *
 * # Safety
 * `p` must be a live problem handle and `out` writable.
 */
enum FixmpcStatus fixmpc_admm_new(const struct FixmpcProblem *p,
                                  double rho,
                                  uint32_t frac_bits,
                                  uint32_t int_bits,
                                  struct FixmpcAdmm **out);

/**
 * # Safety
 * `s` must come from [`fixmpc_admm_new`] or be null.
 */
void fixmpc_admm_free(struct FixmpcAdmm *s);

/**
 * Length `N n_u` of the input sequence returned by [`fixmpc_admm_solve`].
 *
 * # Safety
 * `s` must be a live solver handle.
 */
size_t fixmpc_admm_len(const struct FixmpcAdmm *s);

/**
 * Cold-start solve; writes the input sequence in original coordinates
 * to `u`. Pointer conventions as in [`fixmpc_fgm_solve`].
 *
 * # Safety
 * All non-null pointers must reference buffers of the stated lengths.
 */
enum FixmpcStatus fixmpc_admm_solve(const struct FixmpcAdmm *s,
                                    const double *x,
                                    const double *x_ref,
                                    const double *u_ref,
                                    size_t iters,
                                    double *u,
                                    size_t u_len);

/**
 * Cycle model of one solve with `n` decision variables (`N n_u` for FGM,
 * `n_A` for ADMM), unit adder and multiplier latencies.
 *
 * # Safety
 * `out` must be writable.
 */
enum FixmpcStatus fixmpc_hw_latency(enum FixmpcFamily family,
                                    size_t n,
                                    size_t p,
                                    double clock_hz,
                                    uint64_t iters,
                                    bool warm_start,
                                    struct FixmpcLatency *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIXMPC_H */
