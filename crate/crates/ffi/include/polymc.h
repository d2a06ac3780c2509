#ifndef POLYMC_H
#define POLYMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PolymcStatus {
  POLYMC_STATUS_OK = 0,
  POLYMC_STATUS_NULL_POINTER = 1,
  POLYMC_STATUS_INVALID_INPUT = 2,
  POLYMC_STATUS_DIMENSION_MISMATCH = 3,
  POLYMC_STATUS_NOTHING_TO_COMPLETE = 4,
  POLYMC_STATUS_SOLVER_FAILURE = 5,
  POLYMC_STATUS_CONFIG = 6,
  POLYMC_STATUS_OVERFLOW = 7,
  POLYMC_STATUS_PANIC = 8,
} PolymcStatus;

typedef enum PolymcRelaxation {
  // Schatten-p of the feature matrix.
  POLYMC_RELAXATION_SCHATTEN = 0,
  // Schatten-p of all but the `s` largest singular values.
  POLYMC_RELAXATION_TRUNCATED = 1,
  // Weighted Schatten-p with nondecreasing weights.
  POLYMC_RELAXATION_WEIGHTED = 2,
} PolymcRelaxation;

typedef enum PolymcWeights {
  POLYMC_WEIGHTS_LINEAR = 0,
  POLYMC_WEIGHTS_INVERSE_SIGMA = 1,
} PolymcWeights;

typedef enum PolymcKernel {
  POLYMC_KERNEL_RBF = 0,
  POLYMC_KERNEL_POLYNOMIAL = 1,
} PolymcKernel;

// Matrix with missing cells.
typedef struct PolymcMatrix PolymcMatrix;

// Completed matrix and solver diagnostics.
typedef struct PolymcResult PolymcResult;

// Solver options. Obtain defaults from [`polymc_config_default`].
typedef struct PolymcConfig {
  enum PolymcRelaxation relaxation;
  double p;
  // Truncation for `Truncated`; 0 means the number of rows.
  uintptr_t s;
  enum PolymcWeights weights;
  enum PolymcKernel kernel;
  uint32_t poly_order;
  double poly_offset;
  // Fixed RBF bandwidth; 0 or less selects the automatic rule.
  double sigma;
  double sigma_scale;
  // Nonzero fits observed cells with penalty `lambda` instead of fixing them.
  uint8_t soft;
  double lambda;
  double step;
  double tol;
  uintptr_t t_max;
  uint64_t seed;
} PolymcConfig;

typedef struct PolymcComplexityInput {
  uint64_t m;
  uint64_t n;
  uint64_t d;
  uint64_t alpha;
  uint32_t q;
  uint64_t k;
  // Known feature-space rank; 0 uses the generic bound.
  uint64_t d_tilde;
} PolymcComplexityInput;

typedef struct PolymcComplexityReport {
  uint64_t d_tilde;
  uint64_t r_tilde;
  uint64_t rank;
  uint64_t mnp_phi;
  uint64_t mnp_linear;
  double sampling_lower_bound;
} PolymcComplexityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *polymc_last_error(void);

// Build a matrix from `rows * cols` row-major values; `NaN` marks missing.
//
// # Safety
// `values` must point to `rows * cols` readable doubles and `out` must be
// writable.
enum PolymcStatus polymc_matrix_new(uintptr_t rows,
                                    uintptr_t cols,
                                    const double *values,
                                    struct PolymcMatrix **out);

// # Safety
// `m` must come from [`polymc_matrix_new`] and not be used afterwards.
void polymc_matrix_free(struct PolymcMatrix *m);

// # Safety
// `m` must be a live matrix handle or null.
uintptr_t polymc_matrix_missing_count(const struct PolymcMatrix *m);

struct PolymcConfig polymc_config_default(void);

// Complete `input`. A null `config` uses the defaults.
//
// # Safety
// `input` must be a live matrix handle, `config` null or valid, and `out`
// writable.
enum PolymcStatus polymc_complete(const struct PolymcMatrix *input,
                                  const struct PolymcConfig *config,
                                  struct PolymcResult **out);

// # Safety
// `r` must come from [`polymc_complete`] and not be used afterwards.
void polymc_result_free(struct PolymcResult *r);

// # Safety
// `r` must be a live result handle or null.
uintptr_t polymc_result_rows(const struct PolymcResult *r);

// # Safety
// `r` must be a live result handle or null.
uintptr_t polymc_result_cols(const struct PolymcResult *r);

// # Safety
// `r` must be a live result handle or null.
uintptr_t polymc_result_iterations(const struct PolymcResult *r);

// Objective at the returned matrix; NaN for a null handle.
//
// # Safety
// `r` must be a live result handle or null.
double polymc_result_objective(const struct PolymcResult *r);

// # Safety
// `r` must be a live result handle or null.
uintptr_t polymc_result_trace_len(const struct PolymcResult *r);

// Copy the completed matrix, row-major, into `buf` of length `len`.
//
// # Safety
// `r` must be a live result handle and `buf` writable for `len` doubles.
enum PolymcStatus polymc_result_matrix(const struct PolymcResult *r, double *buf, uintptr_t len);

// Copy the per-iteration objective values into `buf` of length `len`.
//
// # Safety
// `r` must be a live result handle and `buf` writable for `len` doubles.
enum PolymcStatus polymc_result_trace(const struct PolymcResult *r, double *buf, uintptr_t len);

// Smallest `o` with `C(o + q, q) >= d_tilde`.
//
// # Safety
// `out` must be writable.
enum PolymcStatus polymc_r_tilde(uint64_t d_tilde, uint32_t q, uint64_t *out);

// # Safety
// `input` must be readable and `out` writable.
enum PolymcStatus polymc_complexity(const struct PolymcComplexityInput *input,
                                    struct PolymcComplexityReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYMC_H */
