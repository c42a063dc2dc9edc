#ifndef GLMIXER_H
#define GLMIXER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. The numeric values of the error classes match the
 * command-line exit codes.
 */
typedef enum GlmStatus {
  GLM_STATUS_OK = 0,
  /**
   * Bad input: schema, ranges, dimensions, unknown names.
   */
  GLM_STATUS_INVALID = 2,
  /**
   * Numerical failure: factorization, quadrature, empty traces.
   */
  GLM_STATUS_NUMERICAL = 3,
  /**
   * File missing or unreadable.
   */
  GLM_STATUS_IO = 4,
  GLM_STATUS_NULL_ARGUMENT = 5,
  GLM_STATUS_PANIC = 6,
} GlmStatus;

typedef enum GlmSex {
  GLM_SEX_BOTH = 0,
  GLM_SEX_FEMALE = 1,
  GLM_SEX_MALE = 2,
} GlmSex;

typedef enum GlmErrorPrior {
  GLM_ERROR_PRIOR_GAMMA = 0,
  GLM_ERROR_PRIOR_HALF_CAUCHY = 1,
} GlmErrorPrior;

typedef enum GlmLocalPrior {
  GLM_LOCAL_PRIOR_GAMMA = 0,
  GLM_LOCAL_PRIOR_STUDENT_T = 1,
  GLM_LOCAL_PRIOR_HORSESHOE = 2,
  GLM_LOCAL_PRIOR_LAPLACE = 3,
} GlmLocalPrior;

typedef enum GlmPredictionMode {
  GLM_PREDICTION_MODE_FIXED_ONLY = 0,
  GLM_PREDICTION_MODE_INTEGRATE = 1,
  GLM_PREDICTION_MODE_IN_SAMPLE = 2,
} GlmPredictionMode;

/**
 * Posterior draws with their model specification.
 */
typedef struct GlmFit GlmFit;

/**
 * A loaded panel or covariate file.
 */
typedef struct GlmPanel GlmPanel;

/**
 * Sampler settings. Start from [`glm_fit_options_default`].
 */
typedef struct GlmFitOptions {
  /**
   * 1 or 2.
   */
  uint32_t model;
  enum GlmSex sex;
  enum GlmErrorPrior error_prior;
  enum GlmLocalPrior local_prior;
  size_t iterations;
  size_t burn_in;
  size_t thin;
  size_t chains;
  uint64_t seed;
} GlmFitOptions;

/**
 * Posterior summary of one scalar parameter.
 */
typedef struct GlmParameterSummary {
  double mean;
  double sd;
  double q025;
  double q50;
  double q975;
  double ess;
  double rhat;
} GlmParameterSummary;

/**
 * Predictive completeness for one covariate row.
 */
typedef struct GlmPrediction {
  double mean;
  double sd;
  double q025;
  double q50;
  double q975;
  double mean_fixed;
} GlmPrediction;

/**
 * Headline metrics; `r_square` is NaN without fixed-effect predictions.
 */
typedef struct GlmMetrics {
  size_t n;
  double mae;
  double rmse;
  double r_square;
  size_t n_small_dev;
} GlmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *glm_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into the library on the same thread.
 */
const char *glm_last_error(void);

/**
 * `ln(c / (1 − c))` for `c` in (0, 1).
 */
enum GlmStatus glm_logit(double c, double *out);

double glm_inv_logit(double theta);

/**
 * Reads a panel CSV for fitting. `clamp_eps` 0 rejects boundary
 * completeness, otherwise values are clamped into `[eps, 1 − eps]`.
 */
enum GlmStatus glm_panel_load(const char *path, double clamp_eps, struct GlmPanel **out);

/**
 * Reads covariate rows for prediction; completeness may be empty.
 */
enum GlmStatus glm_covariates_load(const char *path, double clamp_eps, struct GlmPanel **out);

/**
 * Number of rows.
 */
size_t glm_panel_rows(const struct GlmPanel *panel);

/**
 * Number of units.
 */
size_t glm_panel_units(const struct GlmPanel *panel);

void glm_panel_free(struct GlmPanel *panel);

struct GlmFitOptions glm_fit_options_default(void);

/**
 * Runs the sampler on a panel with default hyperparameters. The year
 * offset is the mean year of the fitted rows.
 */
enum GlmStatus glm_fit(const struct GlmPanel *panel,
                       const struct GlmFitOptions *options,
                       struct GlmFit **out);

/**
 * Loads a fit directory written by the command-line tool.
 */
enum GlmStatus glm_fit_load(const char *dir, struct GlmFit **out);

void glm_fit_free(struct GlmFit *fit);

/**
 * Number of coefficients.
 */
size_t glm_fit_dim(const struct GlmFit *fit);

/**
 * Number of chains.
 */
size_t glm_fit_chains(const struct GlmFit *fit);

/**
 * Retained draws over all chains.
 */
size_t glm_fit_draws(const struct GlmFit *fit);

/**
 * Summary of `param[index]`, where `param` is a column stem such as
 * `beta`, `u`, `omega`, `tau` or `zeta_u` as in the trace files (scalars
 * use index 0).
 */
enum GlmStatus glm_fit_summary(const struct GlmFit *fit,
                               const char *param,
                               size_t index,
                               struct GlmParameterSummary *out);

/**
 * Predicts every row of `covariates` matching the fitted sex stream and
 * writes up to `capacity` results. `written` receives the row count, also
 * when the buffer is too small (then nothing is written and the status is
 * `Invalid`). Rows of the same unit share one random effect per draw.
 */
enum GlmStatus glm_fit_predict(const struct GlmFit *fit,
                               const struct GlmPanel *covariates,
                               enum GlmPredictionMode mode,
                               uint64_t seed,
                               struct GlmPrediction *out,
                               size_t capacity,
                               size_t *written);

/**
 * Seed the fit was run with, the default for [`glm_fit_predict`].
 */
uint64_t glm_fit_seed(const struct GlmFit *fit);

/**
 * Clamp epsilon the fit used, 0 when boundary values were rejected.
 */
double glm_fit_clamp_eps(const struct GlmFit *fit);

/**
 * MAE, RMSE, R-square and the small-deviation count for `n` predictions
 * on the completeness scale. `fixed_only` may be NULL.
 */
enum GlmStatus glm_metrics(const double *predicted,
                           const double *observed,
                           const double *fixed_only,
                           size_t n,
                           struct GlmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLMIXER_H */
