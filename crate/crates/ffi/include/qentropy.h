#ifndef QENTROPY_H
#define QENTROPY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Outcome of a call.
 */
typedef enum QeStatus {
  QE_STATUS_OK = 0,
  QE_STATUS_NULL_POINTER = 1,
  QE_STATUS_INVALID_ARGUMENT = 2,
  QE_STATUS_DOMAIN = 3,
  QE_STATUS_Q_OUT_OF_RANGE = 4,
  QE_STATUS_CONVERGENCE = 5,
  QE_STATUS_SIZE = 6,
  QE_STATUS_PARSE = 7,
  QE_STATUS_SAMPLING = 8,
  QE_STATUS_IMPOSSIBLE_TRAJECTORY = 9,
  QE_STATUS_BUFFER_TOO_SMALL = 10,
  QE_STATUS_PANIC = 11,
} QeStatus;

typedef struct QeChain QeChain;

typedef struct QeJointTable QeJointTable;

typedef struct QeProbVec QeProbVec;

/**
 * Multipliers and iteration count of a MaxEnt solve.
 */
typedef struct QeMaxEntResult {
  double lambda;
  double mu;
  size_t iterations;
} QeMaxEntResult;

/**
 * Aggregate of one fuzz campaign.
 */
typedef struct QeSlackSummary {
  size_t trials;
  size_t violations;
  double min_slack;
  double mean_slack;
} QeSlackSummary;

/**
 * One transition of the second-law table.
 */
typedef struct QeSecondLawRow {
  size_t step;
  double h_q;
  double delta_h;
  double t_q;
  double lhs;
  double slack;
} QeSecondLawRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null when none
 * failed. The pointer stays valid until the next failing call on the
 * same thread.
 */
const char *qe_last_error_message(void);

/**
 * Forgets the last error message of this thread.
 */
void qe_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qe_version(void);

/**
 * # Safety
 * `out` must point to writable storage for one double.
 */
enum QeStatus qe_ln_q(double x, double q, double *out);

/**
 * # Safety
 * `out` must point to writable storage for one double.
 */
enum QeStatus qe_exp_q(double x, double q, double *out);

/**
 * Copies `n` probabilities into a new distribution handle.
 *
 * # Safety
 * `p` must point to `n` readable doubles and `out` to a writable handle slot.
 */
enum QeStatus qe_prob_vec_new(const double *p, size_t n, struct QeProbVec **out);

/**
 * Parses `{"p":[...]}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum QeStatus qe_prob_vec_from_json(const char *json, struct QeProbVec **out);

/**
 * Number of outcomes, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t qe_prob_vec_len(const struct QeProbVec *p);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void qe_prob_vec_free(struct QeProbVec *p);

/**
 * Row-major table with the given shape.
 *
 * # Safety
 * `shape` must point to `rank` sizes, `data` to their product of doubles.
 */
enum QeStatus qe_joint_table_new(const size_t *shape,
                                 size_t rank,
                                 const double *data,
                                 struct QeJointTable **out);

/**
 * Parses `{"table":[[...]]}` of any nesting depth.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum QeStatus qe_joint_table_from_json(const char *json, struct QeJointTable **out);

/**
 * Rank of the table, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t qe_joint_table_rank(const struct QeJointTable *t);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void qe_joint_table_free(struct QeJointTable *t);

/**
 * Chain from an `m × m` row-major transition matrix and an initial distribution.
 *
 * # Safety
 * `transition` must point to `m*m` doubles, `initial` to `m` doubles.
 */
enum QeStatus qe_chain_new(const double *transition,
                           size_t m,
                           const double *initial,
                           struct QeChain **out);

/**
 * Parses `{"transition":[[...]],"initial":[...]}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum QeStatus qe_chain_from_json(const char *json, struct QeChain **out);

/**
 * Number of states, or 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t qe_chain_states(const struct QeChain *c);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void qe_chain_free(struct QeChain *c);

/**
 * `−Σ p ln_q p`.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QeStatus qe_q_entropy(const struct QeProbVec *p, double q, double *out);

/**
 * `(1 − Σ p^q) / (q − 1)`.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QeStatus qe_tsallis_entropy(const struct QeProbVec *p, double q, double *out);

/**
 * `Σ p ln_q(p / r)`; `+inf` when `p` is not absolutely continuous w.r.t. `r` and `q <= 1`.
 *
 * # Safety
 * `p`, `r` must be live handles and `out` writable.
 */
enum QeStatus qe_relative_q_entropy(const struct QeProbVec *p,
                                    const struct QeProbVec *r,
                                    double q,
                                    double *out);

/**
 * `I_q(X;Y)` of a rank-2 table.
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum QeStatus qe_mutual_q_information(const struct QeJointTable *t, double q, double *out);

/**
 * `I_q(X;Y|Z)` of a rank-3 table with axes `(X, Y, Z)`.
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum QeStatus qe_conditional_mutual_q_information(const struct QeJointTable *t,
                                                  double q,
                                                  double *out);

/**
 * Maximum q-entropy distribution on `levels` with the given mean. Writes
 * `n` probabilities to `p_out`.
 *
 * # Safety
 * `levels` and `p_out` must each hold `n` doubles; `out` must be writable.
 */
enum QeStatus qe_maxent_solve(const double *levels,
                              size_t n,
                              double mean,
                              double q,
                              double tol,
                              size_t max_iters,
                              double *p_out,
                              struct QeMaxEntResult *out);

/**
 * Randomized slack campaign for the named law with `q` uniform on `[q_lo, q_hi]`.
 *
 * # Safety
 * `law` must be a NUL-terminated string and `out` writable.
 */
enum QeStatus qe_fuzz(const char *law,
                      size_t trials,
                      double q_lo,
                      double q_hi,
                      uint64_t seed,
                      size_t workers,
                      struct QeSlackSummary *out);

/**
 * Stationary distribution; writes `len` doubles, which must equal the state count.
 *
 * # Safety
 * `c` must be a live handle and `out` must hold `len` doubles.
 */
enum QeStatus qe_stationary(const struct QeChain *c, double *out, size_t len);

/**
 * Second-law table of `steps` transitions from the chain's initial
 * distribution. `applicable` is set when the chain is doubly stochastic.
 *
 * # Safety
 * `c` must be a live handle, `rows` must hold `capacity` rows, and
 * `applicable` must be writable.
 */
enum QeStatus qe_second_law(const struct QeChain *c,
                            double q,
                            size_t steps,
                            struct QeSecondLawRow *rows,
                            size_t capacity,
                            bool *applicable);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QENTROPY_H */
