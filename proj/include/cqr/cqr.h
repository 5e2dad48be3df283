/* C interface to the clustered quantile regression library. */
#ifndef CQR_H
#define CQR_H

#include <stddef.h>
#include <stdint.h>

#if defined(CQR_BUILDING_LIBRARY)
#define CQR_API __attribute__((visibility("default")))
#else
#define CQR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cqr_status {
  CQR_OK = 0,
  CQR_INVALID_ARGUMENT = 1,
  CQR_CONFIG = 2,
  CQR_SCHEMA = 3,
  CQR_PARSE = 4,
  CQR_EMPTY_INPUT = 5,
  CQR_IO = 6,
  CQR_SINGULAR_DESIGN = 7,
  CQR_SOLVER = 8,
  CQR_NUMERICAL = 9,
  CQR_UNSUPPORTED = 10,
  CQR_UNRELIABLE = 11,
  CQR_PRECONDITION = 12,
  CQR_INTERNAL = 99
} cqr_status;

typedef struct cqr_dataset cqr_dataset;
typedef struct cqr_fit_result cqr_fit_result;
typedef struct cqr_scenario cqr_scenario;
typedef struct cqr_sim_report cqr_sim_report;

/* ------------------------------------------------------------------------- */
/* General                                                                   */
/* ------------------------------------------------------------------------- */

/* Message of the last failed call on this thread; empty if none. */
CQR_API const char* cqr_last_error(void);
CQR_API const char* cqr_status_name(cqr_status status);
CQR_API const char* cqr_version(void);

typedef void (*cqr_warning_fn)(const char* message, void* user_data);
/* NULL silences warnings. The default handler writes to stderr. */
CQR_API void cqr_set_warning_handler(cqr_warning_fn fn, void* user_data);

/* Frees strings returned through char** out-parameters. */
CQR_API void cqr_string_free(char* s);

/* ------------------------------------------------------------------------- */
/* Datasets                                                                  */
/* ------------------------------------------------------------------------- */

/* "(Intercept)" in random_covariates requests a random intercept. */
CQR_API cqr_status cqr_dataset_load_csv(const char* path, const char* response,
                                        const char* cluster, const char* const* fixed,
                                        size_t n_fixed, const char* const* random,
                                        size_t n_random, cqr_dataset** out);
CQR_API void cqr_dataset_free(cqr_dataset* data);
CQR_API cqr_status cqr_dataset_dims(const cqr_dataset* data, size_t* n_clusters, size_t* n_obs,
                                    size_t* p, size_t* q);
/* One-line summary: cluster sizes, design rank, singleton count. */
CQR_API cqr_status cqr_dataset_summary(const cqr_dataset* data, char** out);
/* Borrowed pointer valid for the dataset's lifetime. */
CQR_API cqr_status cqr_dataset_term_name(const cqr_dataset* data, size_t k, const char** out);

/* ------------------------------------------------------------------------- */
/* Fitting                                                                   */
/* ------------------------------------------------------------------------- */

typedef struct cqr_fit_options {
  const double* taus;
  size_t n_taus;
  /* oracle is rejected; marg, canay, l1pen, l2pen, lqmm, jk, twostep, adj. */
  const char* estimator;
  /* rw, rrr, rc, cw. */
  const char* scheme;
  int64_t B;
  double alpha;
  uint64_t seed;
  int threads;
  int nK;
  /* linear (default) or posterior_mean. */
  const char* blp;
  /* Contrast j is target[j] - reference[j], by term name. */
  const char* const* contrast_reference;
  const char* const* contrast_target;
  size_t n_contrasts;
} cqr_fit_options;

/* Defaults: tau 0.5, adj, rw, B 100, alpha 0.05, fixed seed, 1 thread, nK 15, linear BLP. */
CQR_API void cqr_fit_options_init(cqr_fit_options* options);

CQR_API cqr_status cqr_fit(const cqr_dataset* data, const cqr_fit_options* options,
                           cqr_fit_result** out);
CQR_API void cqr_fit_result_free(cqr_fit_result* result);

/* Unavailable numeric fields are NaN; scheme is NULL when no bootstrap ran. */
typedef struct cqr_coef_record {
  double tau;
  const char* term;
  double estimate;
  double estimate_adj;
  double se_obs;
  double se_adj;
  double basic_lo;
  double basic_hi;
  double seadj_lo;
  double seadj_hi;
  int64_t B;
  const char* scheme;
} cqr_coef_record;

/* kind 0: coefficients, kind 1: contrasts; records over all taus in order. */
CQR_API size_t cqr_fit_result_count(const cqr_fit_result* result, int kind);
CQR_API cqr_status cqr_fit_result_record(const cqr_fit_result* result, int kind, size_t i,
                                         cqr_coef_record* out);
CQR_API cqr_status cqr_fit_result_to_json(const cqr_fit_result* result, char** out);
CQR_API cqr_status cqr_fit_result_to_csv(const cqr_fit_result* result, char** out);

/* ------------------------------------------------------------------------- */
/* Simulation                                                                */
/* ------------------------------------------------------------------------- */

CQR_API cqr_status cqr_scenario_load(const char* path, cqr_scenario** out);
CQR_API cqr_status cqr_scenario_create_default(cqr_scenario** out);
/* Same keys as scenario files; errors name the key. */
CQR_API cqr_status cqr_scenario_set(cqr_scenario* scenario, const char* key, const char* value);
CQR_API cqr_status cqr_scenario_to_text(const cqr_scenario* scenario, char** out);
CQR_API void cqr_scenario_free(cqr_scenario* scenario);

typedef void (*cqr_progress_fn)(int64_t done, int64_t total, void* user_data);

CQR_API cqr_status cqr_simulate(const cqr_scenario* scenario, int threads,
                                cqr_progress_fn progress, void* user_data, cqr_sim_report** out);
CQR_API void cqr_sim_report_free(cqr_sim_report* report);

typedef enum cqr_render_format { CQR_RENDER_CSV = 0, CQR_RENDER_TEXT = 1 } cqr_render_format;

CQR_API cqr_status cqr_sim_report_render(const cqr_sim_report* report, cqr_render_format format,
                                         char** out);
CQR_API double cqr_sim_report_wall_seconds(const cqr_sim_report* report);

#ifdef __cplusplus
}
#endif

#endif /* CQR_H */
