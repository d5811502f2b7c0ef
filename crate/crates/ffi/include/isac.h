#ifndef ISAC_H
#define ISAC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_ARGUMENT = 2,
  ISAC_STATUS_CONFIG = 3,
  ISAC_STATUS_NUMERICAL = 4,
  ISAC_STATUS_UNRELIABLE = 5,
  ISAC_STATUS_IO = 6,
  ISAC_STATUS_BUFFER_TOO_SMALL = 7,
  ISAC_STATUS_PANIC = 8,
} IsacStatus;

typedef enum IsacAlgorithm {
  ISAC_ALGORITHM_OMP_SR = 0,
  ISAC_ALGORITHM_OMP = 1,
  ISAC_ALGORITHM_BLOCK_OMP = 2,
} IsacAlgorithm;

/**
 * Opaque experiment configuration.
 */
typedef struct IsacConfig IsacConfig;

/**
 * Opaque aggregated metric records.
 */
typedef struct IsacRecords IsacRecords;

/**
 * Borrowed view of one record; the strings live as long as the
 * [`IsacRecords`] they came from.
 */
typedef struct IsacRecord {
  const char *experiment;
  const char *sweep_name;
  const char *metric;
  double sweep_value;
  double mean;
  double std;
  uint64_t trials;
  uint64_t seed;
} IsacRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success. The
 * pointer stays valid until the next call on the same thread.
 */
const char *isac_last_error(void);

struct IsacConfig *isac_config_default(void);

/**
 * Parses a TOML configuration into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IsacStatus isac_config_from_toml(const char *text, struct IsacConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards.
 */
void isac_config_free(struct IsacConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum IsacStatus isac_config_set_trials(struct IsacConfig *cfg, size_t trials);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum IsacStatus isac_config_set_seed(struct IsacConfig *cfg, uint64_t seed);

/**
 * Runs a preset (`"fig6"`, ..., `"ase"`) and stores its records in `*out`.
 *
 * # Safety
 * `cfg` must be a live handle, `preset` NUL-terminated, `out` valid.
 */
enum IsacStatus isac_run_preset(const struct IsacConfig *cfg,
                                const char *preset,
                                struct IsacRecords **out);

/**
 * Number of records; 0 for a null handle.
 *
 * # Safety
 * `recs` must be null or a live handle.
 */
size_t isac_records_len(const struct IsacRecords *recs);

/**
 * # Safety
 * `recs` must be a live handle and `out` valid.
 */
enum IsacStatus isac_records_get(const struct IsacRecords *recs,
                                 size_t index,
                                 struct IsacRecord *out);

/**
 * Writes the records as CSV to `path`.
 *
 * # Safety
 * `recs` must be a live handle and `path` NUL-terminated.
 */
enum IsacStatus isac_records_write_csv(const struct IsacRecords *recs, const char *path);

/**
 * # Safety
 * `recs` must come from this library and not be used afterwards.
 */
void isac_records_free(struct IsacRecords *recs);

/**
 * Unit-norm ULA steering vector at virtual angle `mu`; writes `count`
 * interleaved (re, im) pairs to `out`, which must hold `2·count` doubles.
 *
 * # Safety
 * `out` must point to `2·count` writable doubles.
 */
enum IsacStatus isac_steering_vector(double mu, size_t count, double spacing, double *out);

/**
 * Aliases of `mu` inside (−1, 1) for element spacing `spacing`
 * (wavelengths). `*len` receives the set size; if it exceeds `capacity`
 * nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `out` must hold `capacity` doubles (may be null when `capacity` is 0);
 * `len` must be valid.
 */
enum IsacStatus isac_ambiguity_set(double mu,
                                   double spacing,
                                   double *out,
                                   size_t capacity,
                                   size_t *len);

/**
 * Doppler estimate (Hz) from `p_d` impulse-pilot samples given as
 * interleaved (re, im) pairs spaced `interval` seconds apart.
 *
 * # Safety
 * `samples` must hold `2·p_d` doubles and `f_hat` must be valid.
 */
enum IsacStatus isac_estimate_doppler(const double *samples,
                                      size_t p_d,
                                      double interval,
                                      double *f_hat);

/**
 * Frequency CRB `6/(snr·P(P²−1))` in normalised units.
 *
 * # Safety
 * `out` must be valid.
 */
enum IsacStatus isac_crb_reference(double snr, size_t p_d, double *out);

/**
 * Radar CIR NMSE of one algorithm (an [`IsacAlgorithm`] value) on the
 * realisation drawn from `seed`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid.
 */
enum IsacStatus isac_radar_nmse(const struct IsacConfig *cfg,
                                uint32_t algorithm,
                                uint64_t seed,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_H */
