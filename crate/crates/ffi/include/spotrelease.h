/* Generated by cbindgen. Do not edit. */

#ifndef SPOTRELEASE_H
#define SPOTRELEASE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_UTF8 = 2,
  SR_STATUS_INVALID_CONFIG = 3,
  SR_STATUS_INVALID_ARGUMENT = 4,
  SR_STATUS_INDEX_OUT_OF_RANGE = 5,
  SR_STATUS_INVALID_STATE = 6,
  SR_STATUS_NO_REAL_SOLUTION = 7,
  SR_STATUS_INFEASIBLE = 8,
  SR_STATUS_NUMERICAL = 9,
  SR_STATUS_ZERO_LIKELIHOOD = 10,
  SR_STATUS_PARSE = 11,
  SR_STATUS_IO = 12,
  SR_STATUS_BUFFER_TOO_SMALL = 13,
  SR_STATUS_PANIC = 14,
} SrStatus;

// Fairness selector for [`sr_solve`]. `Default` uses the airport config.
typedef enum SrFairness {
  SR_FAIRNESS_DEFAULT = 0,
  SR_FAIRNESS_ALTERNATION = 1,
  SR_FAIRNESS_STATISTICAL = 2,
  SR_FAIRNESS_NONE = 3,
} SrFairness;

typedef enum SrChannel {
  SR_CHANNEL_SURFACE = 0,
  SR_CHANNEL_IDENTITY = 1,
} SrChannel;

typedef struct SrConfig SrConfig;

typedef struct SrMls SrMls;

typedef struct SrModel SrModel;

typedef struct SrSolution SrSolution;

typedef struct SrMetrics {
  double avg_taxiing;
  double utilization;
  double expected_cost;
  double takeoff_rate;
} SrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string and returns the full message length in bytes
// (excluding the NUL). Truncates when `len` is too small.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sr_last_error(char *buf, size_t len);

// Parses an airport config from JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum SrStatus sr_config_from_json(const char *json, struct SrConfig **out);

// Built-in airport: `laguardia`, `sea_like` or `toy`.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum SrStatus sr_config_preset(const char *name, struct SrConfig **out);

// # Safety
// `cfg` must be null or a handle from this library, not yet freed.
void sr_config_free(struct SrConfig *cfg);

// Size of the full index range, `2^bits`.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum SrStatus sr_config_index_space(const struct SrConfig *cfg, uint64_t *out);

// Builds the controlled transition kernel.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum SrStatus sr_model_build(const struct SrConfig *cfg, struct SrModel **out);

// # Safety
// `model` must be null or a handle from this library, not yet freed.
void sr_model_free(struct SrModel *model);

// Number of valid states.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_model_num_states(const struct SrModel *model, size_t *out);

// Number of stored transition probabilities over all feasible decisions.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_model_nonzeros(const struct SrModel *model, size_t *out);

// Number of aircraft on the surface in state `index`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_model_n_ac(const struct SrModel *model, uint32_t index, uint32_t *out);

// Writes the successors of `index` under `decision` (0 hold, 1 and 2 clear a
// ramp) into `next`/`prob`. `*len` receives the row length; when it exceeds
// `cap` nothing is written and `BufferTooSmall` is returned. An infeasible
// decision yields `InvalidArgument`.
//
// # Safety
// `next` and `prob` must point to `cap` writable elements (or be null when
// `cap` is 0); `len` must be writable.
enum SrStatus sr_model_row(const struct SrModel *model,
                           uint32_t index,
                           uint8_t decision,
                           uint32_t *next,
                           double *prob,
                           size_t cap,
                           size_t *len);

// Observation code of state `index` under the surface channel.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_model_observation(const struct SrModel *model, uint32_t index, uint32_t *out);

// Solves the average-cost problem at `beta` and extracts a deterministic
// policy.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_solve(const struct SrModel *model,
                       double beta,
                       enum SrFairness fairness,
                       struct SrSolution **out);

// # Safety
// `sol` must be null or a handle from this library, not yet freed.
void sr_solution_free(struct SrSolution *sol);

// Metrics of the optimum and of the extracted deterministic policy. Either
// output may be null.
//
// # Safety
// `sol` must be a live handle; non-null outputs must be writable.
enum SrStatus sr_solution_metrics(const struct SrSolution *sol,
                                  struct SrMetrics *optimum,
                                  struct SrMetrics *policy);

// Duality gap and equal-service multiplier of the solve.
//
// # Safety
// `sol` must be a live handle; non-null outputs must be writable.
enum SrStatus sr_solution_certificate(const struct SrSolution *sol,
                                      double *gap,
                                      double *multiplier);

// Decision code of the extracted policy in state `index`.
//
// # Safety
// `sol` must be a live handle; `out` must be writable.
enum SrStatus sr_solution_decision(const struct SrSolution *sol, uint32_t index, uint8_t *out);

// Closed-loop metrics of the threshold policy `th` started from the empty
// surface.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SrStatus sr_threshold_evaluate(const struct SrModel *model,
                                    uint32_t th,
                                    double beta,
                                    struct SrMetrics *out);

// Belief-based controller that applies the policy of `sol` to the most
// likely state. The belief starts on the empty surface.
//
// # Safety
// `sol` must be a live handle; `out` must be writable.
enum SrStatus sr_mls_new(const struct SrSolution *sol, enum SrChannel channel, struct SrMls **out);

// # Safety
// `mls` must be null or a handle from this library, not yet freed.
void sr_mls_free(struct SrMls *mls);

// Returns the belief to the empty surface.
//
// # Safety
// `mls` must be a live handle.
enum SrStatus sr_mls_reset(struct SrMls *mls);

// Decision for the current step. Call once per step before
// [`sr_mls_observe`].
//
// # Safety
// `mls` must be a live handle; `out` must be writable.
enum SrStatus sr_mls_decide(struct SrMls *mls, uint8_t *out);

// Updates the belief with the observation code emitted after the step. For
// the identity channel the code is the state index. An impossible code
// restarts the belief uniformly over the states consistent with it.
//
// # Safety
// `mls` must be a live handle.
enum SrStatus sr_mls_observe(struct SrMls *mls, uint32_t code);

// Most likely state index and its belief probability.
//
// # Safety
// `mls` must be a live handle; non-null outputs must be writable.
enum SrStatus sr_mls_state(const struct SrMls *mls, uint32_t *index, double *prob);

// Number of filter restarts since creation or the last reset.
//
// # Safety
// `mls` must be a live handle; `out` must be writable.
enum SrStatus sr_mls_recoveries(const struct SrMls *mls, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPOTRELEASE_H */
