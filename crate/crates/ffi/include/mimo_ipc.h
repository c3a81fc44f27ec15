#ifndef MIMO_IPC_H
#define MIMO_IPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes.
typedef enum MipcStatus {
  MIPC_STATUS_OK = 0,
  MIPC_STATUS_INVALID_ARGUMENT = 1,
  MIPC_STATUS_PARSE = 2,
  MIPC_STATUS_NUMERICAL = 3,
  // The iteration limit was hit; the best iterate is still returned.
  MIPC_STATUS_NOT_CONVERGED = 4,
  MIPC_STATUS_NULL_POINTER = 5,
  MIPC_STATUS_PANIC = 6,
} MipcStatus;

// Opaque problem instance.
typedef struct MipcInstance MipcInstance;

// Opaque solution.
typedef struct MipcSolution MipcSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses an instance document (UTF-8 JSON text).
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum MipcStatus mipc_instance_from_json(const char *json, struct MipcInstance **out);

// Builds an instance from arrays. `w2_re`/`w2_im` hold `k` consecutive
// `m × m` blocks and `p_i` holds `k` budgets; with `k = 0` they may be
// NULL. Imaginary arrays may be NULL for real data.
//
// # Safety
// Pointers must be valid for the sizes described above.
enum MipcStatus mipc_instance_new(size_t m,
                                  const double *w1_re,
                                  const double *w1_im,
                                  size_t k,
                                  const double *w2_re,
                                  const double *w2_im,
                                  const double *p_i,
                                  double p_t,
                                  struct MipcInstance **out);

// # Safety
// `inst` must be NULL or a handle from this library, not yet freed.
void mipc_instance_free(struct MipcInstance *inst);

// # Safety
// `inst` must be a live handle or NULL.
size_t mipc_instance_dim(const struct MipcInstance *inst);

// # Safety
// `inst` must be a live handle or NULL.
size_t mipc_instance_num_ipc(const struct MipcInstance *inst);

// Solves `inst`. `epsilon <= 0` selects the default tolerance and
// `k_max == 0` the default iteration limit. On `MIPC_NOT_CONVERGED`
// `*out` still receives the best iterate.
//
// # Safety
// `inst` must be a live handle; `out` a valid pointer.
enum MipcStatus mipc_solve(const struct MipcInstance *inst,
                           double epsilon,
                           size_t k_max,
                           struct MipcSolution **out);

// # Safety
// `sol` must be NULL or a handle from this library, not yet freed.
void mipc_solution_free(struct MipcSolution *sol);

// Capacity in nats; NaN for a NULL handle.
//
// # Safety
// `sol` must be a live handle or NULL.
double mipc_solution_capacity_nats(const struct MipcSolution *sol);

// # Safety
// `sol` must be a live handle or NULL.
double mipc_solution_capacity_bits(const struct MipcSolution *sol);

// # Safety
// `sol` must be a live handle or NULL.
size_t mipc_solution_dim(const struct MipcSolution *sol);

// # Safety
// `sol` must be a live handle or NULL.
size_t mipc_solution_num_ipc(const struct MipcSolution *sol);

// # Safety
// `sol` must be a live handle or NULL.
size_t mipc_solution_iterations(const struct MipcSolution *sol);

// Method label as a static NUL-terminated string, or NULL.
//
// # Safety
// `sol` must be a live handle or NULL.
const char *mipc_solution_method(const struct MipcSolution *sol);

// Writes `mu1` and `num_ipc` values of `mu2` (`mu2` may be NULL when
// there are no constraints).
//
// # Safety
// `mu2` must hold `mu2_len` doubles.
enum MipcStatus mipc_solution_duals(const struct MipcSolution *sol,
                                    double *mu1,
                                    double *mu2,
                                    size_t mu2_len);

// Writes the covariance row-major into `re` and, unless NULL, `im`;
// both must hold `len >= m*m` doubles.
//
// # Safety
// Buffers must be valid for `len` doubles.
enum MipcStatus mipc_solution_covariance(const struct MipcSolution *sol,
                                         double *re,
                                         double *im,
                                         size_t len);

// Solution document as a newly allocated string; release it with
// [`mipc_string_free`].
//
// # Safety
// `sol` must be a live handle; `out` a valid pointer.
enum MipcStatus mipc_solution_to_json(const struct MipcSolution *sol, char **out);

// # Safety
// `s` must be NULL or a string returned by this library.
void mipc_string_free(char *s);

// Message of the last failed call on this thread, or NULL. Valid until
// the next call into the library from the same thread.
const char *mipc_last_error_message(void);

// Library version, static.
const char *mipc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIMO_IPC_H */
