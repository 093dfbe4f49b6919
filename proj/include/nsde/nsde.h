#ifndef NSDE_NSDE_H
#define NSDE_NSDE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define NSDE_API __attribute__((visibility("default")))
#else
#define NSDE_API
#endif

/* Every call returns NSDE_OK or one of the error codes below; the message of
   the most recent failure on the calling thread is kept by nsde_last_error()
   until the next failure. */
typedef enum nsde_status {
  NSDE_OK = 0,
  NSDE_ERR_USAGE = 1,    /* invalid argument or null handle */
  NSDE_ERR_CONFIG = 2,   /* invalid configuration or architecture mismatch */
  NSDE_ERR_IO = 3,       /* unreadable or unwritable files, malformed artifacts */
  NSDE_ERR_NUMERIC = 4,  /* non-finite values, divergence */
  NSDE_ERR_INTERNAL = 5
} nsde_status;

typedef enum nsde_instrument_kind {
  NSDE_CALL = 0,
  NSDE_PUT = 1,
  NSDE_LOOKBACK = 2
} nsde_instrument_kind;

typedef struct nsde_config nsde_config;
typedef struct nsde_calibration nsde_calibration;
typedef struct nsde_report nsde_report;

/* Receives progress lines during long commands; may be NULL. */
typedef void (*nsde_log_fn)(const char* line, void* user);

NSDE_API const char* nsde_version(void);
NSDE_API const char* nsde_last_error(void);
NSDE_API const char* nsde_status_name(nsde_status s);

/* Caps the number of worker threads; 0 keeps the default. */
NSDE_API nsde_status nsde_set_threads(int threads);

/* Configuration: defaults, optionally overlaid with an INI file, then
   "section.key=value" overrides. */
NSDE_API nsde_status nsde_config_new(nsde_config** out);
NSDE_API nsde_status nsde_config_load(const char* path, nsde_config** out);
NSDE_API void nsde_config_free(nsde_config* c);
NSDE_API nsde_status nsde_config_set(nsde_config* c, const char* key, const char* value);
NSDE_API nsde_status nsde_config_override(nsde_config* c, const char* assignment);
/* Copies the value of `key` (NUL-terminated) into buf; *needed receives the
   full length including the terminator. */
NSDE_API nsde_status nsde_config_get(const nsde_config* c, const char* key, char* buf, size_t size, size_t* needed);
/* INI text with every key. */
NSDE_API nsde_status nsde_config_dump(const nsde_config* c, char* buf, size_t size, size_t* needed);
NSDE_API nsde_status nsde_config_validate(const nsde_config* c);

/* Heston market generation into run.out_dir. */
NSDE_API nsde_status nsde_gen_market(const nsde_config* c, nsde_log_fn log, void* user);

typedef struct nsde_estimate {
  double mean;
  double std_error;
} nsde_estimate;

typedef struct nsde_instrument_result {
  nsde_instrument_kind kind;
  double maturity;
  double strike;
  double target;            /* NaN outside calibration */
  nsde_estimate price;      /* with the control variate when one applies */
  nsde_estimate raw_price;  /* without */
  double variance;          /* per-path variance with the control variate */
  double raw_variance;
  double model_iv;          /* NaN when undefined */
  double target_iv;
} nsde_instrument_result;

/* Calibration or price bound (calibrate.direction) into run.out_dir. */
NSDE_API nsde_status nsde_calibrate(const nsde_config* c, nsde_log_fn log, void* user, nsde_calibration** out);
NSDE_API void nsde_calibration_free(nsde_calibration* r);
NSDE_API double nsde_calibration_final_mse(const nsde_calibration* r);
NSDE_API double nsde_calibration_seconds(const nsde_calibration* r);
NSDE_API size_t nsde_calibration_epochs(const nsde_calibration* r);
NSDE_API size_t nsde_calibration_instruments(const nsde_calibration* r);
NSDE_API nsde_status nsde_calibration_instrument(const nsde_calibration* r, size_t i, nsde_instrument_result* out);
/* Returns 1 and fills out when the run priced an exotic. */
NSDE_API int nsde_calibration_exotic(const nsde_calibration* r, nsde_instrument_result* out);
/* Returns 1 and fills out when data.lookback held a reference at the exotic maturity. */
NSDE_API int nsde_calibration_reference(const nsde_calibration* r, nsde_estimate* out);

typedef struct nsde_eval_options {
  uint64_t seed;
  uint64_t paths;
  int antithetic;
  uint64_t chunk_paths;
  int use_hedge;
} nsde_eval_options;

NSDE_API void nsde_eval_options_default(nsde_eval_options* o);

/* Prices one instrument from a checkpoint; *hedged is set to 1 when a trained
   hedge output served as control variate. */
NSDE_API nsde_status nsde_price(const char* checkpoint, nsde_instrument_kind kind, double maturity, double strike,
                                const nsde_eval_options* o, nsde_instrument_result* out, int* hedged);

typedef struct nsde_hedge_eval_result {
  double mean_square;
  double payoff_variance;
  uint64_t paths;
  int hedged;
} nsde_hedge_eval_result;

/* Writes residuals.csv, histogram.csv and manifest.json into out_dir. */
NSDE_API nsde_status nsde_hedge_eval(const char* checkpoint, nsde_instrument_kind kind, double maturity, double strike,
                                     const nsde_eval_options* o, const char* out_dir, nsde_hedge_eval_result* out);

/* Cross-seed quantile table; writes report.csv into out_dir. */
NSDE_API nsde_status nsde_report_runs(const char* const* run_dirs, size_t count, const char* out_dir,
                                      nsde_report** out);
NSDE_API void nsde_report_free(nsde_report* r);
NSDE_API size_t nsde_report_rows(const nsde_report* r);
/* direction and metric point into the report and live as long as it does;
   q receives min, q25, median, q75, max. */
NSDE_API nsde_status nsde_report_row(const nsde_report* r, size_t i, const char** direction, const char** metric,
                                     size_t* runs, double q[5]);

/* Re-verifies a run directory; *ok is 1 when everything matches. */
NSDE_API nsde_status nsde_selfcheck(const char* run_dir, nsde_log_fn log, void* user, int* ok);

#ifdef __cplusplus
}
#endif

#endif
