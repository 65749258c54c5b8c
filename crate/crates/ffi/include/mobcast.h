#ifndef MOBCAST_H
#define MOBCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MOBCAST_ESTIMATOR_ELASTICNET 0

#define MOBCAST_ESTIMATOR_OLS 1

#define MOBCAST_ESTIMATOR_RIDGE 2

#define MOBCAST_ESTIMATOR_LASSO 3

#define MOBCAST_MODEL_BASELINE 0

#define MOBCAST_MODEL_MOBILITY 1

/**
 * Result of every fallible call. Input, config and runtime codes match the CLI exit codes.
 */
typedef enum MobcastStatus {
  MOBCAST_STATUS_OK = 0,
  MOBCAST_STATUS_INPUT_ERROR = 2,
  MOBCAST_STATUS_CONFIG_ERROR = 3,
  MOBCAST_STATUS_RUNTIME_ERROR = 4,
  MOBCAST_STATUS_NULL_POINTER = 5,
  MOBCAST_STATUS_PANIC = 6,
} MobcastStatus;

/**
 * Opaque per-(date, lookahead) ci table.
 */
typedef struct MobcastCiSeries MobcastCiSeries;

/**
 * Opaque fitted elastic-net model.
 */
typedef struct MobcastModel MobcastModel;

/**
 * Opaque per-county daily panel.
 */
typedef struct MobcastPanel MobcastPanel;

/**
 * Opaque, canonically sorted backtest output.
 */
typedef struct MobcastRecords MobcastRecords;

/**
 * Synthetic generator settings; coupling `gamma` applies on days `[0, coupled_days)`.
 */
typedef struct MobcastSynthParams {
  size_t n_counties;
  size_t n_days;
  uint64_t seed;
  double ar_coeff;
  double gamma;
  size_t coupled_days;
  size_t mobility_lag;
  double noise_sd;
} MobcastSynthParams;

/**
 * Backtest settings. `lookaheads` points at `n_lookaheads` values; `jobs` 0 uses all cores.
 */
typedef struct MobcastBacktestParams {
  size_t train_len;
  const uint32_t *lookaheads;
  size_t n_lookaheads;
  size_t mobility_lag;
  size_t stride;
  uint32_t estimator;
  size_t jobs;
} MobcastBacktestParams;

typedef struct MobcastRecord {
  int32_t date;
  uint32_t fips;
  uint32_t lookahead;
  /**
   * `MOBCAST_MODEL_BASELINE` or `MOBCAST_MODEL_MOBILITY`.
   */
  uint32_t model_kind;
  double predicted;
  double actual;
  int32_t train_end;
  int32_t latest_feature;
} MobcastRecord;

typedef struct MobcastCiPoint {
  int32_t date;
  uint32_t lookahead;
  double rho_mobility;
  double rho_baseline;
  double ci;
  size_t n_counties;
} MobcastCiPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next failure.
 */
const char *mobcast_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mobcast_version(void);

/**
 * Free a string returned by this library.
 */
void mobcast_string_free(char *s);

/**
 * Load a long-format (`date,fips,value`) or NYT-style (`date,...,fips,cases`) CSV.
 */
enum MobcastStatus mobcast_panel_load(const char *path, struct MobcastPanel **out);

void mobcast_panel_free(struct MobcastPanel *panel);

/**
 * Number of counties, or 0 for NULL.
 */
size_t mobcast_panel_county_count(const struct MobcastPanel *panel);

/**
 * Length of the date index, or 0 for NULL.
 */
size_t mobcast_panel_day_count(const struct MobcastPanel *panel);

/**
 * First date of the index as `yyyymmdd`, or 0 for NULL.
 */
int32_t mobcast_panel_start_date(const struct MobcastPanel *panel);

/**
 * Panel name; free with `mobcast_string_free`.
 */
char *mobcast_panel_name(const struct MobcastPanel *panel);

/**
 * Rename a panel; the name becomes the dataset label of backtest records.
 */
enum MobcastStatus mobcast_panel_set_name(struct MobcastPanel *panel, const char *name);

struct MobcastSynthParams mobcast_synth_default_params(void);

/**
 * Generate a seeded synthetic (cases, mobility) pair.
 */
enum MobcastStatus mobcast_synth_generate(const struct MobcastSynthParams *params,
                                          struct MobcastPanel **out_cases,
                                          struct MobcastPanel **out_mobility);

struct MobcastBacktestParams mobcast_backtest_default_params(void);

/**
 * Backtest `cases` (and `mobility`, which may be NULL for baseline-only) on aligned panels.
 */
enum MobcastStatus mobcast_backtest_run(const struct MobcastPanel *cases,
                                        const struct MobcastPanel *mobility,
                                        const struct MobcastBacktestParams *params,
                                        struct MobcastRecords **out);

size_t mobcast_records_len(const struct MobcastRecords *records);

enum MobcastStatus mobcast_records_get(const struct MobcastRecords *records,
                                       size_t i,
                                       struct MobcastRecord *out);

void mobcast_records_free(struct MobcastRecords *records);

/**
 * Per-(date, lookahead) correlation improvement from a backtest with mobility.
 */
enum MobcastStatus mobcast_ci_compute(const struct MobcastRecords *records,
                                      struct MobcastCiSeries **out);

size_t mobcast_ci_len(const struct MobcastCiSeries *ci);

enum MobcastStatus mobcast_ci_get(const struct MobcastCiSeries *ci,
                                  size_t i,
                                  struct MobcastCiPoint *out);

void mobcast_ci_free(struct MobcastCiSeries *ci);

/**
 * Spearman rank correlation with average ranks for ties; 0 when either side is constant.
 */
enum MobcastStatus mobcast_spearman(const double *xs, const double *ys, size_t n, double *out_rho);

/**
 * Fit an elastic net on a row-major `rows × cols` design.
 */
enum MobcastStatus mobcast_enet_fit(const double *x,
                                    size_t rows,
                                    size_t cols,
                                    const double *y,
                                    double lambda,
                                    double alpha,
                                    struct MobcastModel **out);

size_t mobcast_model_n_features(const struct MobcastModel *model);

double mobcast_model_intercept(const struct MobcastModel *model);

/**
 * Copy the original-scale coefficients into `out[0..len]`; `len` must equal the feature count.
 */
enum MobcastStatus mobcast_model_coefficients(const struct MobcastModel *model,
                                              double *out,
                                              size_t len);

enum MobcastStatus mobcast_model_predict(const struct MobcastModel *model,
                                         const double *row,
                                         size_t cols,
                                         double *out);

void mobcast_model_free(struct MobcastModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBCAST_H */
