#ifndef VANET_SEC_H
#define VANET_SEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_UTF8 = 2,
  VS_STATUS_CONFIG = 3,
  VS_STATUS_SIMULATION = 4,
  VS_STATUS_NOT_AVAILABLE = 5,
  VS_STATUS_OUT_OF_RANGE = 6,
  VS_STATUS_PANIC = 99,
} VsStatus;

/**
 * Packet kind selector for [`vs_result_processing`].
 */
typedef enum VsKind {
  VS_KIND_LONG = 0,
  VS_KIND_SHORT = 1,
  VS_KIND_PLAIN = 2,
} VsKind;

/**
 * Opaque experiment configuration.
 */
typedef struct VsConfig VsConfig;

/**
 * Opaque outcome of one replication.
 */
typedef struct VsResult VsResult;

/**
 * Per-slot received/processed statistics of one packet kind.
 */
typedef struct VsKindStats {
  double mu_r;
  double sigma_r;
  double mu_p;
  double sigma_p;
} VsKindStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on this thread.
 */
const char *vs_last_error(void);

/**
 * Parse a `key = value` configuration document.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum VsStatus vs_config_parse(const char *text, struct VsConfig **out);

/**
 * Set one key, e.g. `"scheme"` to `"BP"`. The configuration is left
 * unchanged if the result does not validate.
 *
 * # Safety
 * `cfg` must come from [`vs_config_parse`]; `key` and `value` must be
 * NUL-terminated strings.
 */
enum VsStatus vs_config_set(struct VsConfig *cfg, const char *key, const char *value);

/**
 * Transmit power calibrated to the configured nominal range, dBm.
 *
 * # Safety
 * `cfg` must come from [`vs_config_parse`]; `out` must be writable.
 */
enum VsStatus vs_config_tx_power_dbm(const struct VsConfig *cfg, double *out);

/**
 * # Safety
 * `cfg` must be null or come from [`vs_config_parse`] and not be freed twice.
 */
void vs_config_free(struct VsConfig *cfg);

/**
 * Run one replication with the given seed.
 *
 * # Safety
 * `cfg` must come from [`vs_config_parse`]; `out` must be writable.
 */
enum VsStatus vs_run_replication(const struct VsConfig *cfg, uint64_t seed, struct VsResult **out);

/**
 * Percentage of crashed platoon members. `VS_STATUS_NOT_AVAILABLE` when
 * the emergency was disabled.
 *
 * # Safety
 * `res` must come from [`vs_run_replication`]; `out` must be writable.
 */
enum VsStatus vs_result_crash_pct(const struct VsResult *res, double *out);

/**
 * Number of distance bins with at least one attempt.
 *
 * # Safety
 * `res` must come from [`vs_run_replication`]; `out` must be writable.
 */
enum VsStatus vs_result_pdr_len(const struct VsResult *res, size_t *out);

/**
 * Bin `i` of the PDR curve: centre distance in metres and delivery ratio.
 *
 * # Safety
 * `res` must come from [`vs_run_replication`]; `distance_m` and `pdr`
 * must be writable.
 */
enum VsStatus vs_result_pdr_get(const struct VsResult *res,
                                size_t i,
                                double *distance_m,
                                double *pdr);

/**
 * Per-slot processing statistics of one packet kind.
 *
 * # Safety
 * `res` must come from [`vs_run_replication`]; `out` must be writable.
 */
enum VsStatus vs_result_processing(const struct VsResult *res,
                                   enum VsKind kind,
                                   struct VsKindStats *out);

/**
 * # Safety
 * `res` must be null or come from [`vs_run_replication`] and not be freed twice.
 */
void vs_result_free(struct VsResult *res);

/**
 * Mean frame size in bytes for the configured scheme, alpha and payload.
 *
 * # Safety
 * `cfg` must come from [`vs_config_parse`]; `out` must be writable.
 */
enum VsStatus vs_avg_packet_size(const struct VsConfig *cfg, uint32_t *out);

/**
 * Messages of cost `verify_ms` that fit in one slot at `gamma_hz`.
 */
double vs_slot_capacity(double verify_ms, double gamma_hz);

/**
 * Width of a PDR distance bin in metres.
 */
double vs_pdr_bin_m(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANET_SEC_H */
