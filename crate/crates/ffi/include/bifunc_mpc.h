#ifndef BIFUNC_MPC_H
#define BIFUNC_MPC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BmErrorCode {
  BM_ERROR_CODE_OK = 0,
  BM_ERROR_CODE_NULL_POINTER = 1,
  BM_ERROR_CODE_INVALID_UTF8 = 2,
  BM_ERROR_CODE_SCHEMA = 3,
  BM_ERROR_CODE_DIMENSION = 4,
  BM_ERROR_CODE_INVALID_PROBLEM = 5,
  BM_ERROR_CODE_MAX_ITER = 6,
  BM_ERROR_CODE_IO = 7,
  BM_ERROR_CODE_BUFFER_TOO_SMALL = 8,
  BM_ERROR_CODE_PANIC = 9,
} BmErrorCode;

typedef enum BmStatus {
  BM_STATUS_OPTIMAL = 0,
  BM_STATUS_PRIMAL_INFEASIBLE = 1,
  BM_STATUS_UNBOUNDED = 2,
  BM_STATUS_MAX_ITER = 3,
} BmStatus;

// Kind of an extended-real value.
typedef enum BmValueKind {
  BM_VALUE_KIND_FINITE = 0,
  BM_VALUE_KIND_PLUS_INFINITY = 1,
  BM_VALUE_KIND_MINUS_INFINITY = 2,
} BmValueKind;

// A quadratic bifunction.
typedef struct BmBifunction BmBifunction;

// A parsed problem document.
typedef struct BmProblem BmProblem;

// Result of solving a problem's compiled QP.
typedef struct BmSolution BmSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *bm_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library or be null.
void bm_string_free(char *s);

// Parses a JSON problem document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum BmErrorCode bm_problem_from_json(const char *json, struct BmProblem **out);

// Reads and parses a JSON problem file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum BmErrorCode bm_problem_from_file(const char *path, struct BmProblem **out);

// # Safety
// `p` must come from `bm_problem_from_*` or be null.
void bm_problem_free(struct BmProblem *p);

// # Safety
// `p` must be a live problem handle.
uintptr_t bm_problem_state_dim(const struct BmProblem *p);

// # Safety
// `p` must be a live problem handle.
uintptr_t bm_problem_control_dim(const struct BmProblem *p);

// # Safety
// `p` must be a live problem handle.
uintptr_t bm_problem_horizon(const struct BmProblem *p);

// Replaces the initial state.
//
// # Safety
// `p` must be a live problem handle and `x0` must hold `len` doubles.
enum BmErrorCode bm_problem_set_initial_state(struct BmProblem *p, const double *x0, uintptr_t len);

// Sets the solver iteration cap.
//
// # Safety
// `p` must be a live problem handle.
enum BmErrorCode bm_problem_set_max_iter(struct BmProblem *p, uintptr_t max_iter);

// Compiles the problem compositionally and solves it. A non-optimal status
// is not an error; inspect it with [`bm_solution_status`].
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum BmErrorCode bm_problem_solve(const struct BmProblem *p, struct BmSolution **out);

// Solves the directly transcribed QP of the same problem.
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum BmErrorCode bm_problem_solve_monolithic(const struct BmProblem *p, struct BmSolution **out);

// Compiled QP as JSON; release with [`bm_string_free`].
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum BmErrorCode bm_problem_export_qp(const struct BmProblem *p, char **out);

// Wiring diagram in DOT; release with [`bm_string_free`].
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum BmErrorCode bm_problem_export_dot(const struct BmProblem *p, char **out);

// Closed-loop simulation log as CSV; release with [`bm_string_free`].
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum BmErrorCode bm_problem_simulate_csv(const struct BmProblem *p, uintptr_t steps, char **out);

// # Safety
// `s` must come from a solve call or be null.
void bm_solution_free(struct BmSolution *s);

// # Safety
// `s` must be a live solution handle.
enum BmStatus bm_solution_status(const struct BmSolution *s);

// Objective value; NaN unless the status is optimal.
//
// # Safety
// `s` must be a live solution handle.
double bm_solution_objective(const struct BmSolution *s);

// # Safety
// `s` must be a live solution handle.
uintptr_t bm_solution_iterations(const struct BmSolution *s);

// Number of doubles [`bm_solution_controls`] writes.
//
// # Safety
// `s` must be a live solution handle.
uintptr_t bm_solution_controls_len(const struct BmSolution *s);

// Writes the control sequence, `u_0` first.
//
// # Safety
// `s` must be a live solution handle and `buf` must hold `len` doubles.
enum BmErrorCode bm_solution_controls(const struct BmSolution *s, double *buf, uintptr_t len);

// Identity bifunction on `R^n`.
//
// # Safety
// `out` must be a valid pointer.
enum BmErrorCode bm_bifunction_identity(uintptr_t n, struct BmBifunction **out);

// Indicator of `x = A u + c`; `a` is `rows × cols` row-major, `c` may be null.
//
// # Safety
// `a` must hold `rows * cols` doubles, `c` null or `rows` doubles.
enum BmErrorCode bm_bifunction_linear_map(const double *a,
                                          uintptr_t rows,
                                          uintptr_t cols,
                                          const double *c,
                                          struct BmBifunction **out);

// `½ sᵀP s + qᵀs + r` over `s = (u; x)` with `u ∈ R^n_in`, `x ∈ R^n_out`.
//
// # Safety
// `p` must hold `k * k` and `q` `k` doubles, `k = n_in + n_out`.
enum BmErrorCode bm_bifunction_quadratic_cost(const double *p,
                                              const double *q,
                                              double r,
                                              uintptr_t n_in,
                                              uintptr_t n_out,
                                              struct BmBifunction **out);

// `g ∘ f`: apply `f`, then `g`.
//
// # Safety
// `g` and `f` must be live bifunction handles and `out` a valid pointer.
enum BmErrorCode bm_bifunction_compose(const struct BmBifunction *g,
                                       const struct BmBifunction *f,
                                       struct BmBifunction **out);

// `f ⊕ g`.
//
// # Safety
// `f` and `g` must be live bifunction handles and `out` a valid pointer.
enum BmErrorCode bm_bifunction_oplus(const struct BmBifunction *f,
                                     const struct BmBifunction *g,
                                     struct BmBifunction **out);

// # Safety
// `f` must be a live bifunction handle.
uintptr_t bm_bifunction_n_in(const struct BmBifunction *f);

// # Safety
// `f` must be a live bifunction handle.
uintptr_t bm_bifunction_n_out(const struct BmBifunction *f);

// `F(u, x)`. `value` receives the finite value (or ±inf) and `kind` its
// classification.
//
// # Safety
// `u` and `x` must hold `nu` and `nx` doubles; `value` and `kind` must be
// valid pointers.
enum BmErrorCode bm_bifunction_evaluate(const struct BmBifunction *f,
                                        const double *u,
                                        uintptr_t nu,
                                        const double *x,
                                        uintptr_t nx,
                                        double *value,
                                        enum BmValueKind *kind);

// # Safety
// `f` must come from a `bm_bifunction_*` constructor or be null.
void bm_bifunction_free(struct BmBifunction *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIFUNC_MPC_H */
