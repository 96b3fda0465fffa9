#ifndef NRPA_DIALOGUE_H
#define NRPA_DIALOGUE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum NrpaStatus {
  NRPA_STATUS_OK = 0,
  NRPA_STATUS_NULL_POINTER = 1,
  NRPA_STATUS_INVALID_UTF8 = 2,
  NRPA_STATUS_INVALID_ARGUMENT = 3,
  NRPA_STATUS_IO = 4,
  NRPA_STATUS_SEARCH = 5,
  NRPA_STATUS_ENVIRONMENT = 6,
  NRPA_STATUS_PANIC = 7,
} NrpaStatus;

/*
 A loaded scripted scenario.
 */
typedef struct NrpaEnv NrpaEnv;

/*
 Rollout policy: one weight per act.
 */
typedef struct NrpaPolicy NrpaPolicy;

/*
 A dialogue in progress.
 */
typedef struct NrpaState NrpaState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *nrpa_version(void);

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next call into the library from the same thread.
 */
const char *nrpa_last_error(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void nrpa_string_free(char *s);

/*
 Writes the softmax of `len` weights into `out`, which must hold `len`
 doubles.

 # Safety
 `weights` and `out` must be valid for `len` doubles.
 */
enum NrpaStatus nrpa_softmax(const double *weights, size_t len, double *out);

/*
 Sale-to-list ratio. Pass `has_deal = false` when no deal was reached.

 # Safety
 `out` must point to a writable double.
 */
enum NrpaStatus nrpa_compute_sl(double deal_price,
                                bool has_deal,
                                double seller_target,
                                double buyer_target,
                                double *out);

/*
 Creates a policy from `len` finite weights.

 # Safety
 `weights` must be valid for `len` doubles and `out` writable.
 */
enum NrpaStatus nrpa_policy_new(const double *weights, size_t len, struct NrpaPolicy **out);

/*
 # Safety
 `policy` must come from [`nrpa_policy_new`] or be NULL.
 */
void nrpa_policy_free(struct NrpaPolicy *policy);

/*
 Number of weights, or 0 for NULL.

 # Safety
 `policy` must be a live handle or NULL.
 */
size_t nrpa_policy_len(const struct NrpaPolicy *policy);

/*
 Copies the weights into `out`, which must hold `len` doubles where `len`
 equals [`nrpa_policy_len`].

 # Safety
 `policy` must be live and `out` valid for `len` doubles.
 */
enum NrpaStatus nrpa_policy_weights(const struct NrpaPolicy *policy, double *out, size_t len);

/*
 Adapts `policy` in place towards the act sequence `acts` (ids from the
 action space of `env`), using probabilities frozen before the update.

 # Safety
 Handles must be live; `acts` must hold `n_acts` NUL-terminated strings.
 */
enum NrpaStatus nrpa_adapt(struct NrpaPolicy *policy,
                           const struct NrpaEnv *env,
                           const char *const *acts,
                           size_t n_acts,
                           double alpha);

/*
 Loads a scripted scenario file.

 # Safety
 `path` must be NUL-terminated and `out` writable.
 */
enum NrpaStatus nrpa_env_load_scripted(const char *path, struct NrpaEnv **out);

/*
 Builds a scripted scenario from JSON text.

 # Safety
 `json` must be NUL-terminated and `out` writable.
 */
enum NrpaStatus nrpa_env_from_json(const char *json, struct NrpaEnv **out);

/*
 # Safety
 `env` must come from this library or be NULL.
 */
void nrpa_env_free(struct NrpaEnv *env);

/*
 Size of the action space, or 0 for NULL.

 # Safety
 `env` must be a live handle or NULL.
 */
size_t nrpa_env_action_count(const struct NrpaEnv *env);

/*
 Id of act `index` as a caller-owned string.

 # Safety
 `env` must be live and `out` writable.
 */
enum NrpaStatus nrpa_env_action_id(const struct NrpaEnv *env, size_t index, char **out);

/*
 Opening state of a simulated episode.

 # Safety
 `env` must be live and `out` writable.
 */
enum NrpaStatus nrpa_state_initial(const struct NrpaEnv *env, struct NrpaState **out);

/*
 # Safety
 `state` must come from this library or be NULL.
 */
void nrpa_state_free(struct NrpaState *state);

/*
 True while the dialogue has not reached a terminal class.

 # Safety
 `state` must be a live handle or NULL.
 */
bool nrpa_state_is_ongoing(const struct NrpaState *state);

/*
 Serializes the state as JSON into a caller-owned string.

 # Safety
 `state` must be live and `out` writable.
 */
enum NrpaStatus nrpa_state_to_json(const struct NrpaState *state, char **out);

/*
 Advances `state` by one system act and the simulated reply.

 # Safety
 Handles must be live and `act` NUL-terminated.
 */
enum NrpaStatus nrpa_state_step(const struct NrpaEnv *env,
                                struct NrpaState *state,
                                const char *act,
                                uint64_t seed);

/*
 Plans the next act from `state`. `params_json` may be NULL for defaults.
 The act id goes to `out_act`; search statistics go to `out_stats_json`
 unless it is NULL.

 # Safety
 Handles must be live, strings NUL-terminated, `out_act` writable.
 */
enum NrpaStatus nrpa_plan_next_act(const struct NrpaEnv *env,
                                   const struct NrpaState *state,
                                   const char *params_json,
                                   uint64_t seed,
                                   char **out_act,
                                   char **out_stats_json);

/*
 Plays a full episode and writes its record as JSON. An episode that the
 environment aborted still succeeds; its record carries the reason.

 # Safety
 `env` must be live, `params_json` NUL-terminated or NULL, `out_json`
 writable.
 */
enum NrpaStatus nrpa_run_episode(const struct NrpaEnv *env,
                                 const char *params_json,
                                 uint64_t seed,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRPA_DIALOGUE_H */
