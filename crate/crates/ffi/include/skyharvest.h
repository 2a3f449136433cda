/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SKYHARVEST_H
#define SKYHARVEST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Length of an observation vector.
#define SKH_OBS_DIM 6

typedef enum SkhStatus {
  SKH_STATUS_OK = 0,
  SKH_STATUS_NULL_POINTER = 1,
  SKH_STATUS_INVALID_ARGUMENT = 2,
  SKH_STATUS_CONFIG = 3,
  SKH_STATUS_IO = 4,
  SKH_STATUS_EPISODE_FINISHED = 5,
  SKH_STATUS_SHAPE = 6,
  SKH_STATUS_NON_FINITE = 7,
  SKH_STATUS_CHECKPOINT = 8,
  SKH_STATUS_PANIC = 9,
} SkhStatus;

// Opaque simulation environment.
typedef struct SkhEnv SkhEnv;

// Opaque trained actor network.
typedef struct SkhPolicy SkhPolicy;

typedef struct SkhStep {
  double observation[SKH_OBS_DIM];
  // Data collection, energy harvest, energy consumption, auxiliary.
  double reward[4];
  bool done;
  bool hovered;
  // Hover duration, s; 0 without a hover.
  double hover_secs;
  // Uplink rate of the hover, bit/s; 0 without a hover.
  double rate_bps;
} SkhStep;

typedef struct SkhMetrics {
  // Sum of hover uplink rates, bit/s.
  double rate_sum_bps;
  double harvested_j;
  double consumed_j;
  double clock_secs;
  uint64_t hovers;
} SkhMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *skh_last_error(void);

// Creates an environment from a configuration file, or with the default
// full-scale settings when `config_path` is null, and resets it with `seed`.
// `desk` selects the small desk-scale settings instead of the file.
//
// # Safety
// `config_path` must be null or a NUL-terminated string; `out` must be a
// valid pointer to a handle slot.
enum SkhStatus skh_env_new(const char *config_path, bool desk, uint64_t seed, struct SkhEnv **out);

// Starts a new episode. Writes the first observation to `obs_out`
// (`SKH_OBS_DIM` doubles) when it is not null.
//
// # Safety
// `env` must come from [`skh_env_new`]; `obs_out` must be null or hold
// `SKH_OBS_DIM` doubles.
enum SkhStatus skh_env_reset(struct SkhEnv *env, uint64_t seed, double *obs_out);

// Applies the velocity command `(vx, vy)` in m/s for one step.
//
// # Safety
// `env` must come from [`skh_env_new`]; `out` must be valid.
enum SkhStatus skh_env_step(struct SkhEnv *env, double vx, double vy, struct SkhStep *out);

// Current observation.
//
// # Safety
// `env` must come from [`skh_env_new`]; `obs_out` must hold `SKH_OBS_DIM` doubles.
enum SkhStatus skh_env_observe(const struct SkhEnv *env, double *obs_out);

// Running totals of the current episode.
//
// # Safety
// `env` must come from [`skh_env_new`]; `out` must be valid.
enum SkhStatus skh_env_metrics(const struct SkhEnv *env, struct SkhMetrics *out);

// Maximum speed of the environment's UAV, m/s; NaN for a null handle.
//
// # Safety
// `env` must be null or come from [`skh_env_new`].
double skh_env_max_speed(const struct SkhEnv *env);

// # Safety
// `env` must be null or come from [`skh_env_new`] and not be used afterwards.
void skh_env_free(struct SkhEnv *env);

// Loads an actor checkpoint written by the trainer.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SkhStatus skh_policy_load(const char *path, struct SkhPolicy **out);

// Deterministic action for `obs` (`SKH_OBS_DIM` doubles), written to
// `action_out` as `(vx, vy)` in m/s.
//
// # Safety
// `policy` must come from [`skh_policy_load`]; `obs` must hold
// `SKH_OBS_DIM` doubles and `action_out` two.
enum SkhStatus skh_policy_act(const struct SkhPolicy *policy,
                              const double *obs,
                              double v_max,
                              double *action_out);

// # Safety
// `policy` must be null or come from [`skh_policy_load`] and not be used afterwards.
void skh_policy_free(struct SkhPolicy *policy);

// Rotary-wing propulsion power (W) at speed `v` (m/s) with the default airframe.
//
// # Safety
// `out` must be valid.
enum SkhStatus skh_propulsion_power(double v, double *out);

// Harvested DC power (W) for received RF power `p_r` (W), default harvester.
double skh_harvested_power(double p_r);

// Line-of-sight probability at elevation `theta_deg`, default environment constants.
double skh_los_probability(double theta_deg);

// Expected channel power gain between a UAV at `(uav_x, uav_y)` and a
// ground device at `(dev_x, dev_y)`, default channel.
double skh_expected_channel_gain(double uav_x, double uav_y, double dev_x, double dev_y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKYHARVEST_H */
