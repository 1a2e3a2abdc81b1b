#ifndef BDQ_H
#define BDQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BdqStatus {
  BDQ_STATUS_OK = 0,
  BDQ_STATUS_NULL_POINTER = 1,
  BDQ_STATUS_INVALID_ARGUMENT = 2,
  BDQ_STATUS_INVALID_CONFIG = 3,
  BDQ_STATUS_RESOURCE_CAP = 4,
  BDQ_STATUS_ENV_ERROR = 5,
  BDQ_STATUS_LEARN_ERROR = 6,
  BDQ_STATUS_IO = 7,
  BDQ_STATUS_PANIC = 8,
} BdqStatus;

/**
 * Opaque agent handle: agent, replay buffer, exploration and replay RNGs,
 * and the environment-step counter.
 */
typedef struct BdqAgent BdqAgent;

/**
 * Opaque environment handle.
 */
typedef struct BdqEnv BdqEnv;

/**
 * Reward and episode flags of one environment step.
 */
typedef struct BdqStepResult {
  double reward;
  /**
   * The episode reached a terminal state.
   */
  bool terminated;
  /**
   * The episode hit its step limit.
   */
  bool truncated;
} BdqStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *bdq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bdq_version(void);

/**
 * Creates an environment from a registry id (`reacher3`, `pointmass-5`, ...)
 * whose episode starts are drawn from `seed`.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdqStatus bdq_env_new(const char *id, uint64_t seed, struct BdqEnv **out);

/**
 * # Safety
 * `env` must come from [`bdq_env_new`] and not be used afterwards. Null is ignored.
 */
void bdq_env_free(struct BdqEnv *env);

/**
 * Observation length (0 for a null handle).
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t bdq_env_observation_dim(const struct BdqEnv *env);

/**
 * Number of action dimensions (0 for a null handle).
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t bdq_env_action_dims(const struct BdqEnv *env);

/**
 * Starts an episode and writes the first observation into `obs`, which must
 * hold exactly `bdq_env_observation_dim` values.
 *
 * # Safety
 * `env` must be a live handle and `obs` valid for `obs_len` writes.
 */
enum BdqStatus bdq_env_reset(struct BdqEnv *env, double *obs, size_t obs_len);

/**
 * Applies a continuous action and writes the next observation and outcome.
 *
 * # Safety
 * `env` must be a live handle; `action` valid for `action_len` reads; `obs`
 * valid for `obs_len` writes; `result` a valid pointer.
 */
enum BdqStatus bdq_env_step(struct BdqEnv *env,
                            const double *action,
                            size_t action_len,
                            double *obs,
                            size_t obs_len,
                            struct BdqStepResult *result);

/**
 * Creates an agent for `env` from an agent configuration in TOML (the
 * `[agent]` table of an experiment file, without the header). `step_budget`
 * sizes the default ε anneal.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string, `env` a live handle and
 * `out` a valid pointer.
 */
enum BdqStatus bdq_agent_new(const char *config_toml,
                             const struct BdqEnv *env,
                             uint64_t seed,
                             uint64_t step_budget,
                             struct BdqAgent **out);

/**
 * # Safety
 * `agent` must come from [`bdq_agent_new`] and not be used afterwards. Null is ignored.
 */
void bdq_agent_free(struct BdqAgent *agent);

/**
 * Output units across all network heads, value outputs included.
 *
 * # Safety
 * `agent` must be a live handle and `out` a valid pointer.
 */
enum BdqStatus bdq_agent_output_count(const struct BdqAgent *agent, size_t *out);

/**
 * Picks sub-action indices for `obs`: exploratory if `explore`, greedy
 * otherwise. `action_out` must hold one index per action dimension.
 *
 * # Safety
 * `agent` must be a live handle; `obs` valid for `obs_len` reads and
 * `action_out` for `action_len` writes.
 */
enum BdqStatus bdq_agent_act(struct BdqAgent *agent,
                             const double *obs,
                             size_t obs_len,
                             bool explore,
                             size_t *action_out,
                             size_t action_len);

/**
 * Maps sub-action indices to actuator values.
 *
 * # Safety
 * `agent` must be a live handle; `indices` valid for `len` reads and
 * `values_out` for `len` writes.
 */
enum BdqStatus bdq_agent_decode(const struct BdqAgent *agent,
                                const size_t *indices,
                                size_t len,
                                double *values_out);

/**
 * Stores one transition, advances the step counter and runs a training
 * step once warm-up is over. `trained` reports whether an update ran.
 *
 * # Safety
 * `agent` must be a live handle; `obs` and `next_obs` valid for `obs_len`
 * reads; `action` for `action_len` reads; `trained` null or valid.
 */
enum BdqStatus bdq_agent_observe(struct BdqAgent *agent,
                                 const double *obs,
                                 const size_t *action,
                                 size_t action_len,
                                 double reward,
                                 const double *next_obs,
                                 size_t obs_len,
                                 bool terminated,
                                 bool *trained);

/**
 * Loss of the most recent training step (NaN before the first one).
 *
 * # Safety
 * `agent` must be null or a live handle.
 */
double bdq_agent_last_loss(const struct BdqAgent *agent);

/**
 * Writes parameters, optimizer state and counters to `path`.
 *
 * # Safety
 * `agent` must be a live handle and `path` a NUL-terminated string.
 */
enum BdqStatus bdq_agent_save(const struct BdqAgent *agent, const char *path);

/**
 * Restores a checkpoint written by [`bdq_agent_save`] into a compatible agent.
 *
 * # Safety
 * `agent` must be a live handle and `path` a NUL-terminated string.
 */
enum BdqStatus bdq_agent_load(struct BdqAgent *agent, const char *path);

/**
 * Runs a full experiment described by TOML text and writes its CSV files
 * and manifest into `out_dir`.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum BdqStatus bdq_run_experiment(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BDQ_H */
