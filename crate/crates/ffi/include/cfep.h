#ifndef CFEP_H
#define CFEP_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfepErrorCode {
  CFEP_ERROR_CODE_OK = 0,
  CFEP_ERROR_CODE_NULL_POINTER = 1,
  CFEP_ERROR_CODE_INVALID_UTF8 = 2,
  CFEP_ERROR_CODE_CONFIG = 3,
  CFEP_ERROR_CODE_INVALID_ARGUMENT = 4,
  CFEP_ERROR_CODE_NUMERICAL = 5,
  CFEP_ERROR_CODE_IO = 6,
  CFEP_ERROR_CODE_OUT_OF_RANGE = 7,
  CFEP_ERROR_CODE_PANIC = 99,
} CfepErrorCode;

// Estimator identifiers used in `CfepSummary`.
typedef enum CfepEstimator {
  CFEP_ESTIMATOR_MMSE_GENIE = 0,
  CFEP_ESTIMATOR_GENIE_EP = 1,
  CFEP_ESTIMATOR_PROPOSED = 2,
  CFEP_ESTIMATOR_PILOT_ONLY = 3,
} CfepEstimator;

// Run configuration.
typedef struct CfepConfig CfepConfig;

// Aggregated results of a full run.
typedef struct CfepResults CfepResults;

// The proposed estimator on a single realization, stepped by the caller.
typedef struct CfepSession CfepSession;

// One row of the aggregated results. `mean_ser` is NaN for estimators
// that make no symbol decisions.
typedef struct CfepSummary {
  enum CfepEstimator estimator;
  double tx_power_dbm;
  double snr_db;
  double mean_nmse;
  double std_nmse;
  double mean_ser;
  uintptr_t realizations;
  double mean_iters;
} CfepSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cfep_version(void);

// Message of the last failed call on this thread, or NULL. Free with
// `cfep_string_free`.
char *cfep_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void cfep_string_free(char *s);

// Default configuration.
//
// # Safety
// `out` must be a valid pointer.
enum CfepErrorCode cfep_config_default(struct CfepConfig **out);

// Parses a TOML configuration.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum CfepErrorCode cfep_config_from_toml(const char *text, struct CfepConfig **out);

// # Safety
// `cfg` must be NULL or a handle from this library, not used afterwards.
void cfep_config_free(struct CfepConfig *cfg);

// # Safety
// `cfg` must be a valid handle.
enum CfepErrorCode cfep_config_set_seed(struct CfepConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a valid handle.
enum CfepErrorCode cfep_config_set_realizations(struct CfepConfig *cfg, uintptr_t realizations);

// Replaces the transmit-power sweep.
//
// # Safety
// `cfg` must be a valid handle and `powers` point to `len` doubles.
enum CfepErrorCode cfep_config_set_powers(struct CfepConfig *cfg,
                                          const double *powers,
                                          uintptr_t len);

// Runs every estimator over the sweep. Failed realizations are skipped and
// counted; see `cfep_results_job_counts`.
//
// # Safety
// `cfg` must be a valid handle and `out` a valid pointer.
enum CfepErrorCode cfep_run(const struct CfepConfig *cfg, struct CfepResults **out);

// # Safety
// `res` must be NULL or a handle from this library, not used afterwards.
void cfep_results_free(struct CfepResults *res);

// Number of summary rows.
//
// # Safety
// `res` must be a valid handle.
uintptr_t cfep_results_len(const struct CfepResults *res);

// # Safety
// `res` must be a valid handle; `completed` and `failed` valid pointers.
enum CfepErrorCode cfep_results_job_counts(const struct CfepResults *res,
                                           uintptr_t *completed,
                                           uintptr_t *failed);

// # Safety
// `res` must be a valid handle and `out` a valid pointer.
enum CfepErrorCode cfep_results_get(const struct CfepResults *res,
                                    uintptr_t index,
                                    struct CfepSummary *out);

// CSV text of the results. Free with `cfep_string_free`.
//
// # Safety
// `res` must be a valid handle and `out` a valid pointer.
enum CfepErrorCode cfep_results_csv(const struct CfepResults *res, char **out);

// Builds realization `realization` at `tx_power_dbm` and an unstarted
// proposed-estimator session on it.
//
// # Safety
// `cfg` must be a valid handle and `out` a valid pointer.
enum CfepErrorCode cfep_session_new(const struct CfepConfig *cfg,
                                    double tx_power_dbm,
                                    uintptr_t realization,
                                    struct CfepSession **out);

// # Safety
// `s` must be NULL or a handle from this library, not used afterwards.
void cfep_session_free(struct CfepSession *s);

// One outer iteration; writes the iteration residual to `residual` if it
// is not NULL.
//
// # Safety
// `s` must be a valid handle.
enum CfepErrorCode cfep_session_step(struct CfepSession *s, double *residual);

// # Safety
// `s` must be a valid handle.
uintptr_t cfep_session_iterations(const struct CfepSession *s);

// NMSE of the current channel estimates against the true channels.
//
// # Safety
// `s` must be a valid handle and `out` a valid pointer.
enum CfepErrorCode cfep_session_nmse(const struct CfepSession *s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFEP_H */
