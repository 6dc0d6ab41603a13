#ifndef HSOLVE_H
#define HSOLVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsMethod {
  /**
   * CG for SPD matrices, GMRES otherwise.
   */
  HS_METHOD_AUTO = 0,
  HS_METHOD_CG = 1,
  HS_METHOD_GMRES = 2,
} HsMethod;

typedef enum HsPolicyKind {
  HS_POLICY_KIND_FIXED_RANK = 0,
  HS_POLICY_KIND_TOLERANCE = 1,
  HS_POLICY_KIND_RELATIVE_TOLERANCE = 2,
} HsPolicyKind;

typedef enum HsProblem {
  HS_PROBLEM_POISSON = 0,
  HS_PROBLEM_VC_POISSON = 1,
  HS_PROBLEM_HELMHOLTZ = 2,
  HS_PROBLEM_CONV_DIFF = 3,
} HsProblem;

typedef enum HsSchedule {
  HS_SCHEDULE_BSP = 0,
  HS_SCHEDULE_ASYNC = 1,
} HsSchedule;

/**
 * Status codes. The first five match the exit codes of the command-line
 * tool.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NOT_CONVERGED = 1,
  HS_STATUS_IO = 2,
  HS_STATUS_INVALID_CONFIG = 3,
  HS_STATUS_NUMERIC = 4,
  HS_STATUS_NULL_POINTER = 5,
  HS_STATUS_PANIC = 6,
} HsStatus;

/**
 * Opaque factorization.
 */
typedef struct HsFactor HsFactor;

/**
 * Opaque sparse matrix.
 */
typedef struct HsMatrix HsMatrix;

/**
 * Factorization parameters; start from `hs_factor_options_default`.
 */
typedef struct HsFactorOptions {
  size_t cluster_size;
  enum HsPolicyKind policy;
  size_t rank;
  double tol;
  /**
   * More than one worker runs the distributed schedule on the simulator.
   */
  size_t workers;
  enum HsSchedule schedule;
} HsFactorOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hs_last_error(char *buf, size_t len);

/**
 * Generates a model problem on an `n`³ grid.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum HsStatus hs_matrix_generate(enum HsProblem problem,
                                 size_t n,
                                 uint64_t seed,
                                 double freq,
                                 struct HsMatrix **out);

/**
 * Reads a Matrix Market file.
 *
 * # Safety
 * `file` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum HsStatus hs_matrix_read(const char *file, struct HsMatrix **out);

/**
 * Builds a matrix from CSR arrays (`row_ptr` has `rows + 1` entries).
 * `symmetry` is 0 for SPD, 1 for symmetric indefinite, 2 for general.
 *
 * # Safety
 * The arrays must hold the stated number of elements.
 */
enum HsStatus hs_matrix_from_csr(size_t rows,
                                 size_t cols,
                                 const size_t *row_ptr,
                                 const size_t *col_idx,
                                 const double *values,
                                 uint8_t symmetry,
                                 struct HsMatrix **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t hs_matrix_rows(const struct HsMatrix *m);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void hs_matrix_free(struct HsMatrix *m);

struct HsFactorOptions hs_factor_options_default(void);

/**
 * Factors `m`.
 *
 * # Safety
 * `m` must be a live handle, `opts` null (defaults) or valid, and `out` a
 * valid handle slot.
 */
enum HsStatus hs_factor_new(const struct HsMatrix *m,
                            const struct HsFactorOptions *opts,
                            struct HsFactor **out);

/**
 * Applies the approximate inverse: `x = F⁻¹ b`, both of length `n`.
 *
 * # Safety
 * `b` and `x` must hold `n` elements.
 */
enum HsStatus hs_factor_apply(const struct HsFactor *f, const double *b, double *x, size_t n);

/**
 * Number of elimination levels, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t hs_factor_levels(const struct HsFactor *f);

/**
 * Stored operator and top-factor bytes, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t hs_factor_memory_bytes(const struct HsFactor *f);

/**
 * # Safety
 * `f` must be a live handle and `file` a NUL-terminated string.
 */
enum HsStatus hs_factor_save(const struct HsFactor *f, const char *file);

/**
 * # Safety
 * `file` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum HsStatus hs_factor_load(const char *file, struct HsFactor **out);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void hs_factor_free(struct HsFactor *f);

/**
 * Solves `m x = b` with a Krylov method preconditioned by `f`, from a zero
 * initial guess. Returns `NotConverged` when the tolerance was not reached
 * within `maxit` iterations; `x` then holds the last iterate. The iteration
 * count and final relative residual are stored when the pointers are
 * non-null.
 *
 * # Safety
 * Handles must be live; `b` and `x` must hold `n` elements.
 */
enum HsStatus hs_solve(const struct HsMatrix *m,
                       const struct HsFactor *f,
                       enum HsMethod method,
                       double tol,
                       size_t maxit,
                       size_t restart,
                       const double *b,
                       double *x,
                       size_t n,
                       size_t *iterations,
                       double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSOLVE_H */
