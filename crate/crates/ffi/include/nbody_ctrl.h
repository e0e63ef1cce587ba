#ifndef NBODY_CTRL_H
#define NBODY_CTRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Ambient space of a family.
 */
typedef enum NbcSpace {
  NBC_SPACE_REAL_LINE = 0,
  NBC_SPACE_CIRCLE = 1,
} NbcSpace;

/**
 * Result code of every fallible call.
 */
typedef enum NbcStatus {
  NBC_STATUS_OK = 0,
  NBC_STATUS_NULL_POINTER = 1,
  NBC_STATUS_INVALID_ARGUMENT = 2,
  NBC_STATUS_INVALID_CONFIG = 3,
  NBC_STATUS_UNSUPPORTED_FAMILY = 4,
  NBC_STATUS_INDEX_OUT_OF_RANGE = 5,
  NBC_STATUS_DIMENSION_MISMATCH = 6,
  NBC_STATUS_WRONG_SPACE = 7,
  NBC_STATUS_NOT_SEPARATED = 8,
  NBC_STATUS_OUTSIDE_REGION = 9,
  NBC_STATUS_INVALID_SCHEDULE = 10,
  NBC_STATUS_NON_FINITE = 11,
  NBC_STATUS_SINGULAR = 12,
  NBC_STATUS_DAMPING_UNDERFLOW = 13,
  NBC_STATUS_NOT_CONVERGED = 14,
  NBC_STATUS_PANIC = 15,
} NbcStatus;

/**
 * Opaque field family.
 */
typedef struct NbcFamily NbcFamily;

/**
 * Opaque planner result.
 */
typedef struct NbcPlan NbcPlan;

/**
 * Opaque control schedule.
 */
typedef struct NbcSchedule NbcSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *nbc_last_error_message(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void nbc_string_free(char *s);

/**
 * Builds the family for `(space, n, m, epsilon)`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum NbcStatus nbc_family_new(enum NbcSpace space,
                              size_t n,
                              size_t m,
                              double epsilon,
                              struct NbcFamily **out);

/**
 * # Safety
 * `family` must come from [`nbc_family_new`] or be null.
 */
void nbc_family_free(struct NbcFamily *family);

/**
 * Number of bodies `n` and fields `m`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum NbcStatus nbc_family_dims(const struct NbcFamily *family, size_t *n, size_t *m);

/**
 * `f_l(x)` into `out` (length `n`).
 *
 * # Safety
 * `x` and `out` must hold `n` doubles.
 */
enum NbcStatus nbc_eval_field(const struct NbcFamily *family,
                              size_t l,
                              const double *x,
                              size_t n,
                              double *out);

/**
 * Jacobian of `f_l` at `x` into `out` (`n × n`, row-major).
 *
 * # Safety
 * `x` must hold `n` doubles and `out` `n * n`.
 */
enum NbcStatus nbc_eval_jacobian(const struct NbcFamily *family,
                                 size_t l,
                                 const double *x,
                                 size_t n,
                                 double *out);

/**
 * Lie bracket `[f_l, f_k](x)` into `out` (length `n`).
 *
 * # Safety
 * `x` and `out` must hold `n` doubles.
 */
enum NbcStatus nbc_bracket(const struct NbcFamily *family,
                           size_t l,
                           size_t k,
                           const double *x,
                           size_t n,
                           double *out);

/**
 * Numerical rank of the fields together with the brackets `[f_1, f_l]`.
 *
 * # Safety
 * `x` must hold `n` doubles; `rank` and `min_singular_value` must be valid.
 */
enum NbcStatus nbc_spanning_rank(const struct NbcFamily *family,
                                 const double *x,
                                 size_t n,
                                 size_t *rank,
                                 double *min_singular_value);

/**
 * Spanning rank at `samples` random points with every gap above `margin`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum NbcStatus nbc_rank_scan(const struct NbcFamily *family,
                             size_t samples,
                             uint64_t seed,
                             double margin,
                             size_t *min_rank,
                             bool *passed);

/**
 * Tangency check for gap `j` on `samples` boundary points.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum NbcStatus nbc_check_tangency(const struct NbcFamily *family,
                                  size_t j,
                                  size_t samples,
                                  uint64_t seed,
                                  double *max_residual,
                                  bool *passed);

/**
 * Parses a schedule from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum NbcStatus nbc_schedule_from_json(const char *json, struct NbcSchedule **out);

/**
 * JSON form of a schedule; free with [`nbc_string_free`].
 *
 * # Safety
 * `schedule` must be valid; `out` must be valid for a write.
 */
enum NbcStatus nbc_schedule_to_json(const struct NbcSchedule *schedule, char **out);

/**
 * # Safety
 * `schedule` must come from this library or be null.
 */
void nbc_schedule_free(struct NbcSchedule *schedule);

/**
 * Endpoint of the flow from `p` under `schedule`. A `step` of zero or less
 * selects the default step.
 *
 * # Safety
 * `p` and `out` must hold `n` doubles; `schedule` must be valid.
 */
enum NbcStatus nbc_endpoint(const struct NbcFamily *family,
                            const double *p,
                            size_t n,
                            const struct NbcSchedule *schedule,
                            double step,
                            double *out);

/**
 * Plans from `p` to `q` (angles on the circle). On non-convergence the
 * best plan found is still written to `out` together with the status.
 *
 * # Safety
 * `p` and `q` must hold `n` doubles; `out` must be valid.
 */
enum NbcStatus nbc_plan(const struct NbcFamily *family,
                        const double *p,
                        const double *q,
                        size_t n,
                        double tol,
                        size_t max_iter,
                        struct NbcPlan **out);

/**
 * # Safety
 * `plan` must come from [`nbc_plan`] or be null.
 */
void nbc_plan_free(struct NbcPlan *plan);

/**
 * Endpoint error, iteration count and minimum gap along the plan.
 *
 * # Safety
 * Pointers must be valid.
 */
enum NbcStatus nbc_plan_summary(const struct NbcPlan *plan,
                                double *endpoint_error,
                                size_t *iterations,
                                double *min_gap);

/**
 * Achieved endpoint of the plan in lifted coordinates (length `n`).
 *
 * # Safety
 * `out` must hold `n` doubles.
 */
enum NbcStatus nbc_plan_endpoint(const struct NbcPlan *plan, size_t n, double *out);

/**
 * Copy of the plan's control schedule.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum NbcStatus nbc_plan_schedule(const struct NbcPlan *plan, struct NbcSchedule **out);

/**
 * Integration step the plan was verified with.
 *
 * # Safety
 * Pointers must be valid.
 */
enum NbcStatus nbc_plan_step(const struct NbcPlan *plan, double *step);

/**
 * JSON form of the plan; free with [`nbc_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum NbcStatus nbc_plan_to_json(const struct NbcPlan *plan, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NBODY_CTRL_H */
