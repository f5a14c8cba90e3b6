#ifndef EDGECACHE_H
#define EDGECACHE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcOlModel {
  EC_OL_MODEL_PPM = 0,
  EC_OL_MODEL_GPM = 1,
  EC_OL_MODEL_RPM = 2,
  EC_OL_MODEL_IPM = 3,
} EcOlModel;

typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_NULL_POINTER = 1,
  EC_STATUS_INVALID_ARGUMENT = 2,
  EC_STATUS_DATA_ERROR = 3,
  EC_STATUS_NUMERICAL_FAILURE = 4,
  EC_STATUS_PANIC = 5,
} EcStatus;

/**
 * KWIK learner state.
 */
typedef struct EcKwikLearner EcKwikLearner;

/**
 * Online learner state.
 */
typedef struct EcOlLearner EcOlLearner;

/**
 * Network constants bound to a cache size.
 */
typedef struct EcPlacement EcPlacement;

/**
 * Network parameters; `cache_size` is the number of files a station stores.
 */
typedef struct EcNetworkParams {
  double bs_density;
  double path_loss;
  double bandwidth;
  double rate_threshold;
  double tx_power;
  double noise;
  size_t cache_size;
} EcNetworkParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated description of a status code.
 */
const char *ec_status_message(enum EcStatus status);

/**
 * Default network: density 200, path loss 3.5, 24 kHz, rate threshold 1,
 * unit power, no noise, cache size 2.
 */
struct EcNetworkParams ec_network_params_default(void);

/**
 * # Safety
 * `params` must point to a valid struct; `out` must be writable.
 */
enum EcStatus ec_placement_new(const struct EcNetworkParams *params,
                               size_t n_files,
                               struct EcPlacement **out);

/**
 * # Safety
 * `handle` must be null or come from `ec_placement_new`, freed at most once.
 */
void ec_placement_free(struct EcPlacement *handle);

/**
 * Optimal caching probabilities for profile `p` of length `n`, written to
 * `q_out`; the resulting success probability goes to `asp_out` if non-null.
 *
 * # Safety
 * `p` and `q_out` must hold `n` values; `asp_out` may be null.
 */
enum EcStatus ec_placement_solve(struct EcPlacement *model,
                                 const double *p,
                                 size_t n,
                                 double *q_out,
                                 double *asp_out);

/**
 * Success probability of caching probabilities `q` under profile `p`.
 *
 * # Safety
 * `p` and `q` must hold `n` values; `out` must be writable.
 */
enum EcStatus ec_placement_asp(struct EcPlacement *model,
                               const double *p,
                               const double *q,
                               size_t n,
                               double *out);

/**
 * Sliding-window profile prediction. `window` holds `tau` profiles of
 * length `n`, oldest first, row-major.
 *
 * # Safety
 * `window` must hold `tau * n` values and `out` must hold `n` values.
 */
enum EcStatus ec_ppm_predict(const double *window, size_t tau, size_t n, size_t order, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum EcStatus ec_ol_new(enum EcOlModel model, size_t n_files, struct EcOlLearner **out);

/**
 * # Safety
 * `handle` must be null or come from `ec_ol_new`, freed at most once.
 */
void ec_ol_free(struct EcOlLearner *handle);

/**
 * Feeds one slot and writes the next-slot profile. `counts` (length `n`) is
 * required by the count learner and ignored otherwise; `n_max` scales it.
 *
 * # Safety
 * `p` and `prediction_out` must hold `n` values; `counts` may be null
 * unless the learner is the count model.
 */
enum EcStatus ec_ol_step(struct EcOlLearner *learner,
                         const double *p,
                         const uint64_t *counts,
                         size_t n,
                         uint64_t n_max,
                         double *prediction_out);

/**
 * # Safety
 * `out` must be writable.
 */
enum EcStatus ec_kwik_new(size_t n_files,
                          size_t order,
                          double alpha_q,
                          double alpha_v,
                          struct EcKwikLearner **out);

/**
 * # Safety
 * `handle` must be null or come from `ec_kwik_new`, freed at most once.
 */
void ec_kwik_free(struct EcKwikLearner *handle);

/**
 * Feeds one observation per file and writes next-slot values. Files that
 * abstain get `known_out[i] = 0` and an unspecified value.
 *
 * # Safety
 * `obs`, `values_out` and `known_out` must hold `n` entries.
 */
enum EcStatus ec_kwik_step(struct EcKwikLearner *learner,
                           const double *obs,
                           size_t n,
                           double *values_out,
                           uint8_t *known_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGECACHE_H */
