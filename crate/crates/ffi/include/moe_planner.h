#ifndef MOE_PLANNER_H
#define MOE_PLANNER_H

/* Auto-generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. 2/3/4 mirror the command-line exit codes; 1 flags misuse of
// the binding itself (null pointer, non-UTF-8 text); 5 is an internal fault.
typedef enum MoeStatus {
  MOE_STATUS_OK = 0,
  MOE_STATUS_BAD_POINTER = 1,
  MOE_STATUS_INVALID_INPUT = 2,
  MOE_STATUS_INFEASIBLE = 3,
  MOE_STATUS_NUMERICAL = 4,
  MOE_STATUS_INTERNAL = 5,
} MoeStatus;

// Opaque model configuration; create with [`moe_dims_new`], release with
// [`moe_dims_free`].
typedef struct MoeDims MoeDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on the calling thread, or NULL when
// the last call succeeded. The pointer stays valid until the next FFI call
// on the same thread; do not free it.
const char *moe_last_error_message(void);

// Library version as a static string; do not free.
const char *moe_version(void);

// Release a string returned by one of the `*_json` functions.
//
// # Safety
// `s` must have been returned by this library and not yet freed. NULL is a
// no-op.
void moe_string_free(char *s);

// Validate a configuration and return an owned handle through `out`.
//
// `g` is the granularity as text: an integer, decimal, or fraction
// ("4", "2.5", "27/10").
//
// # Safety
// `g` must be a NUL-terminated string and `out` must point to writable
// storage for one pointer, both valid for the duration of the call. On
// success `*out` owns the handle until [`moe_dims_free`].
enum MoeStatus moe_dims_new(uint64_t l,
                            uint64_t d,
                            const char *g,
                            uint64_t n_exp,
                            uint64_t n_topk,
                            struct MoeDims **out);

// Release a handle from [`moe_dims_new`].
//
// # Safety
// `dims` must be a pointer from [`moe_dims_new`] not yet freed. NULL is a
// no-op.
void moe_dims_free(struct MoeDims *dims);

// Total parameter count rounded to double precision. Exact digits are
// available via [`moe_count_json`].
//
// # Safety
// `dims` must be a live handle from [`moe_dims_new`]; `out` must point to
// writable storage for one double.
enum MoeStatus moe_total_params(const struct MoeDims *dims, double *out);

// Active parameter count rounded to double precision.
//
// # Safety
// As for [`moe_total_params`].
enum MoeStatus moe_active_params(const struct MoeDims *dims, double *out);

// N_active / N_total.
//
// # Safety
// As for [`moe_total_params`].
enum MoeStatus moe_active_ratio(const struct MoeDims *dims, double *out);

// Expert sparsity n_exp / n_topk.
//
// # Safety
// As for [`moe_total_params`].
enum MoeStatus moe_sparsity(const struct MoeDims *dims, double *out);

// Full counting report as JSON (exact counts as decimal strings), or NULL
// on error.
//
// # Safety
// `dims` must be a live handle from [`moe_dims_new`]. Free the result with
// [`moe_string_free`].
char *moe_count_json(const struct MoeDims *dims);

// Integer expert counts matching the given budgets at fixed (l, d, g).
// Budgets are text numbers ("2.35e11", "475", "7/2"). `half_away` selects
// schoolbook tie rounding instead of ties-to-even.
//
// # Safety
// `g`, `target_total`, and `target_active` must be NUL-terminated strings;
// `out_n_exp` and `out_n_topk` must point to writable u64 storage.
enum MoeStatus moe_solve_experts(uint64_t l,
                                 uint64_t d,
                                 const char *g,
                                 const char *target_total,
                                 const char *target_active,
                                 bool half_away,
                                 uint64_t *out_n_exp,
                                 uint64_t *out_n_topk);

// Loss predicted by a saturating power-law curve at (N, D).
//
// # Safety
// `out` must point to writable storage for one double.
enum MoeStatus moe_chinchilla_eval(double a,
                                   double b,
                                   double e,
                                   double alpha,
                                   double beta,
                                   double n_total,
                                   double tokens_d,
                                   double *out);

// Upper-tail probability of the Student-t distribution with `dof` degrees
// of freedom.
//
// # Safety
// `out` must point to writable storage for one double.
enum MoeStatus moe_student_t_sf(double t, uint64_t dof, double *out);

// Power-law regression over records CSV content (the same format the CLI
// reads from disk). Returns the fit report as JSON, or NULL on error.
//
// # Safety
// `records_csv` and `spec` must be NUL-terminated strings. Free the result
// with [`moe_string_free`].
char *moe_fit_power_json(const char *records_csv, const char *spec);

// Saturating loss-curve fit over curve CSV content. Returns the fit as
// JSON, or NULL on error.
//
// # Safety
// `curve_csv` must be a NUL-terminated string. Free the result with
// [`moe_string_free`].
char *moe_fit_chinchilla_json(const char *curve_csv, double delta);

// Constrained architecture search over plan TOML content. Returns the plan
// report as JSON — infeasible plans still produce a report with a null
// `best` — or NULL on error.
//
// # Safety
// `plan_toml` must be a NUL-terminated string. Free the result with
// [`moe_string_free`].
char *moe_plan_json(const char *plan_toml, bool include_table);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOE_PLANNER_H */
