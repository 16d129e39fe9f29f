#ifndef FSS_H
#define FSS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FssStatus {
  FSS_STATUS_OK = 0,
  FSS_STATUS_NULL_POINTER = 1,
  FSS_STATUS_INVALID_ARGUMENT = 2,
  FSS_STATUS_CONFIG = 3,
  FSS_STATUS_PARSE = 4,
  FSS_STATUS_NON_CONVERGENCE = 5,
  FSS_STATUS_GRID_MISMATCH = 6,
  FSS_STATUS_CORRUPT_SOLUTION = 7,
  FSS_STATUS_IO = 8,
  FSS_STATUS_BUFFER_TOO_SMALL = 9,
  FSS_STATUS_UNDEFINED = 10,
  FSS_STATUS_PANIC = 11,
} FssStatus;

/**
 * Grid, kernel and weight built from a run configuration.
 */
typedef struct FssProblem FssProblem;

/**
 * Singular solution `u_alpha` with its best constant.
 */
typedef struct FssSolution FssSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *fss_last_error(void);

/**
 * Static name of a status code.
 */
const char *fss_status_name(enum FssStatus status);

/**
 * Builds a problem from JSON config text. Relative paths resolve against
 * the working directory.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum FssStatus fss_problem_from_json(const char *json, struct FssProblem **out);

/**
 * Builds a problem from a config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum FssStatus fss_problem_from_file(const char *path, struct FssProblem **out);

/**
 * # Safety
 * `problem` must come from `fss_problem_from_*` and not be used afterwards.
 */
void fss_problem_free(struct FssProblem *problem);

/**
 * Number of interior nodes, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t fss_problem_num_nodes(const struct FssProblem *problem);

/**
 * Discrete Gagliardo energy `[u]^p` of the nodal values `u`.
 *
 * # Safety
 * `u` must point to `len` doubles; `out` must be writable.
 */
enum FssStatus fss_seminorm(const struct FssProblem *problem,
                            const double *u,
                            size_t len,
                            double *out);

/**
 * Writes `(A u)_i` to `out[0..len]`.
 *
 * # Safety
 * `u` must point to `len` doubles and `out` to `len` writable doubles.
 */
enum FssStatus fss_apply_operator(const struct FssProblem *problem,
                                  const double *u,
                                  size_t len,
                                  double *out);

/**
 * Best constant `S` in `|v|_theta^p <= S [v]^p`.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum FssStatus fss_embedding_constant(const struct FssProblem *problem, double theta, double *out);

/**
 * Runs the approximation chain for `alpha` using the configured schedule
 * and tolerances.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum FssStatus fss_solve(const struct FssProblem *problem, double alpha, struct FssSolution **out);

/**
 * # Safety
 * `solution` must come from `fss_solve` and not be used afterwards.
 */
void fss_solution_free(struct FssSolution *solution);

/**
 * Number of stored values, or 0 for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t fss_solution_len(const struct FssSolution *solution);

/**
 * Copies the nodal values into `buf`, which must hold at least
 * `fss_solution_len` doubles.
 *
 * # Safety
 * `buf` must point to `cap` writable doubles.
 */
enum FssStatus fss_solution_values(const struct FssSolution *solution, double *buf, size_t cap);

/**
 * `lambda_alpha` for `alpha < 1`, `mu` for `alpha = 1`; `Undefined` for
 * `alpha > 1`.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
enum FssStatus fss_solution_constant(const struct FssSolution *solution, double *out);

/**
 * Whether the chain met its stopping tolerance (1) or hit the last level (0).
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
int32_t fss_solution_converged(const struct FssSolution *solution);

/**
 * Writes the solution file read by `fss verify`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum FssStatus fss_solution_save(const struct FssSolution *solution, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FSS_H */
