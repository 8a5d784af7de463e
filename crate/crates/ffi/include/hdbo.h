#ifndef HDBO_H
#define HDBO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HdboStatus {
  HDBO_STATUS_OK = 0,
  HDBO_STATUS_NULL_POINTER = 1,
  HDBO_STATUS_INVALID_ARGUMENT = 2,
  HDBO_STATUS_UNKNOWN_SOLVER = 3,
  HDBO_STATUS_NUMERICAL = 4,
  HDBO_STATUS_UNDEFINED_TEST = 5,
  HDBO_STATUS_BUFFER_TOO_SMALL = 6,
  HDBO_STATUS_PANIC = 7,
  HDBO_STATUS_OTHER = 8,
} HdboStatus;

/**
 * A benchmark problem instance.
 */
typedef struct HdboProblem HdboProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *hdbo_last_error_message(void);

/**
 * Creates instance `instance` of function `fid` (1 to 24) in `dim`
 * dimensions.
 *
 * # Safety
 *
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HdboStatus hdbo_problem_new(uint32_t fid,
                                 size_t dim,
                                 uint64_t instance,
                                 struct HdboProblem **out);

/**
 * Releases a problem. Null is ignored.
 *
 * # Safety
 *
 * `problem` must come from [`hdbo_problem_new`] and not be used afterwards.
 */
void hdbo_problem_free(struct HdboProblem *problem);

/**
 * Dimension of the problem, 0 for a null handle.
 *
 * # Safety
 *
 * `problem` must be null or a live handle.
 */
size_t hdbo_problem_dim(const struct HdboProblem *problem);

/**
 * Optimal value of the problem.
 *
 * # Safety
 *
 * `problem` must be a live handle and `out` writable.
 */
enum HdboStatus hdbo_problem_f_opt(const struct HdboProblem *problem, double *out);

/**
 * Evaluates the problem at `x[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 *
 * `x` must point to `len` readable doubles and `out` must be writable.
 */
enum HdboStatus hdbo_problem_evaluate(const struct HdboProblem *problem,
                                      const double *x,
                                      size_t len,
                                      double *out);

/**
 * Runs the named solver on `problem` for `budget` evaluations with an
 * initial design of `n0` points. The objective value of every evaluation
 * is written to `ys[0..budget]`.
 *
 * # Safety
 *
 * `name` must be a NUL-terminated string, `problem` a live handle and `ys`
 * must point to `ys_len` writable doubles.
 */
enum HdboStatus hdbo_run_solver(const char *name,
                                const struct HdboProblem *problem,
                                size_t budget,
                                size_t n0,
                                uint64_t seed,
                                double *ys,
                                size_t ys_len);

/**
 * Two-sided Wilcoxon signed-rank test on `a[0..n]` and `b[0..n]`.
 *
 * # Safety
 *
 * `a` and `b` must point to `n` readable doubles, the outputs must be
 * writable.
 */
enum HdboStatus hdbo_wilcoxon(const double *a,
                              const double *b,
                              size_t n,
                              double *statistic,
                              double *p_value);

/**
 * Closed-form expected improvement below `f_best` of a normal prediction.
 */
double hdbo_expected_improvement(double mean, double std, double f_best);

/**
 * Number of registered solvers.
 */
size_t hdbo_solver_count(void);

/**
 * Name of solver `index`, or null when out of range. The string is static.
 */
const char *hdbo_solver_name(size_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HDBO_H */
