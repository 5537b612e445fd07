#ifndef RANTWIN_H
#define RANTWIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdint.h>
#include <stddef.h>

#define RANTWIN_N_FEATURES 8

#define RANTWIN_N_CLASSES 4

/**
 * Result of every fallible call. Values 2 to 5 match the CLI exit codes.
 */
typedef enum RantwinStatus {
  RANTWIN_STATUS_OK = 0,
  RANTWIN_STATUS_NULL_POINTER = 1,
  RANTWIN_STATUS_INVALID_ARGUMENT = 2,
  RANTWIN_STATUS_IO = 3,
  RANTWIN_STATUS_NUMERIC = 4,
  RANTWIN_STATUS_PIPELINE = 5,
  RANTWIN_STATUS_PANIC = 6,
} RantwinStatus;

typedef struct RantwinModel RantwinModel;

/**
 * A running simulation with the twin allocating every tick.
 */
typedef struct RantwinSim RantwinSim;

typedef struct RantwinStats RantwinStats;

typedef struct RantwinTickSummary {
  uint64_t tick;
  uint32_t handovers;
  uint32_t faulted_ues;
  double mean_sinr_db;
  double total_demand_mbps;
  double total_achieved_mbps;
  double twin_elapsed_ms;
} RantwinTickSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *rantwin_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rantwin_version(void);

/**
 * Create a simulation from a TOML configuration string, or with defaults
 * when `config_toml` is null.
 *
 * # Safety
 * `config_toml` must be null or a valid NUL-terminated string; `out_sim`
 * must be a valid pointer.
 */
enum RantwinStatus rantwin_sim_new(const char *config_toml, struct RantwinSim **out_sim);

/**
 * # Safety
 * `sim` must be null or a handle from [`rantwin_sim_new`] not yet freed.
 */
void rantwin_sim_free(struct RantwinSim *sim);

/**
 * Advance one tick: simulate, let the twin allocate PRBs and apply the
 * allocation.
 *
 * # Safety
 * `sim` must be a live handle; `out_summary` may be null.
 */
enum RantwinStatus rantwin_sim_step(struct RantwinSim *sim, struct RantwinTickSummary *out_summary);

/**
 * # Safety
 * `sim` must be a live handle; `out_n` a valid pointer.
 */
enum RantwinStatus rantwin_sim_n_ues(const struct RantwinSim *sim, uint32_t *out_n);

/**
 * Corrupt a UE's reports. `class` is 1 (RSRP), 2 (RSRQ) or 3 (SINR).
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum RantwinStatus rantwin_sim_inject_fault(struct RantwinSim *sim,
                                            uint32_t ue_id,
                                            uint8_t class_,
                                            double offset_db,
                                            double jitter_db,
                                            uint32_t duration_ticks);

/**
 * The 8 classifier features of a UE at the most recent tick.
 *
 * # Safety
 * `sim` must be a live handle; `out_features` must point to 8 doubles.
 */
enum RantwinStatus rantwin_sim_ue_features(const struct RantwinSim *sim,
                                           uint32_t ue_id,
                                           double *out_features);

/**
 * Load a model from its text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` a valid pointer.
 */
enum RantwinStatus rantwin_model_load(const char *path, struct RantwinModel **out_model);

/**
 * # Safety
 * `model` must be null or a handle from [`rantwin_model_load`] not yet freed.
 */
void rantwin_model_free(struct RantwinModel *model);

/**
 * Classify one standardized feature vector. `out_probs` (4 doubles) may
 * be null; `out_class` receives the class code 0..3.
 *
 * # Safety
 * `model` must be a live handle, `features` must point to 8 doubles.
 */
enum RantwinStatus rantwin_model_predict(const struct RantwinModel *model,
                                         const double *features,
                                         double *out_probs,
                                         uint8_t *out_class);

/**
 * Load standardization statistics (`feature,mean,std` CSV).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_stats` a valid pointer.
 */
enum RantwinStatus rantwin_stats_load(const char *path, struct RantwinStats **out_stats);

/**
 * # Safety
 * `stats` must be null or a handle from [`rantwin_stats_load`] not yet freed.
 */
void rantwin_stats_free(struct RantwinStats *stats);

/**
 * `out[i] = (features[i] - mean[i]) / std[i]`. The buffers may alias.
 *
 * # Safety
 * `stats` must be a live handle; both pointers must address 8 doubles.
 */
enum RantwinStatus rantwin_stats_standardize(const struct RantwinStats *stats,
                                             const double *features,
                                             double *out_features);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANTWIN_H */
