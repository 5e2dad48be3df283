#include "cqr/cqr.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "cqr/diagnostics.hpp"
#include "cqr/error.hpp"
#include "cqr/pipeline.hpp"
#include "cqr/simulation.hpp"

struct cqr_dataset {
  cqr::ClusteredDataset data;
};

struct cqr_fit_result {
  cqr::FitReport report;
  std::vector<const cqr::CoefRecord*> coefficients;
  std::vector<const cqr::CoefRecord*> contrasts;
};

struct cqr_scenario {
  cqr::ScenarioSpec spec;
};

struct cqr_sim_report {
  cqr::SimReport report;
};

namespace {

thread_local std::string last_error;

cqr_status status_of(cqr::ErrorCode code) {
  switch (code) {
    case cqr::ErrorCode::invalid_argument: return CQR_INVALID_ARGUMENT;
    case cqr::ErrorCode::config: return CQR_CONFIG;
    case cqr::ErrorCode::schema: return CQR_SCHEMA;
    case cqr::ErrorCode::parse: return CQR_PARSE;
    case cqr::ErrorCode::empty_input: return CQR_EMPTY_INPUT;
    case cqr::ErrorCode::io: return CQR_IO;
    case cqr::ErrorCode::singular_design: return CQR_SINGULAR_DESIGN;
    case cqr::ErrorCode::solver: return CQR_SOLVER;
    case cqr::ErrorCode::numerical: return CQR_NUMERICAL;
    case cqr::ErrorCode::unsupported: return CQR_UNSUPPORTED;
    case cqr::ErrorCode::unreliable: return CQR_UNRELIABLE;
    case cqr::ErrorCode::precondition: return CQR_PRECONDITION;
  }
  return CQR_INTERNAL;
}

template <typename F>
cqr_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return CQR_OK;
  } catch (const cqr::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CQR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CQR_INTERNAL;
  }
}

cqr_status null_argument(const char* name) {
  last_error = std::string("null argument: ") + name;
  return CQR_INVALID_ARGUMENT;
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* cqr_last_error(void) { return last_error.c_str(); }

const char* cqr_status_name(cqr_status status) {
  switch (status) {
    case CQR_OK: return "ok";
    case CQR_INTERNAL: return "internal";
    default: break;
  }
  if (status >= CQR_INVALID_ARGUMENT && status <= CQR_PRECONDITION)
    return cqr::error_code_name(static_cast<cqr::ErrorCode>(status - 1));
  return "unknown";
}

const char* cqr_version(void) { return "0.1.0"; }

void cqr_set_warning_handler(cqr_warning_fn fn, void* user_data) {
  cqr::set_warning_sink(fn, user_data);
}

void cqr_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

cqr_status cqr_dataset_load_csv(const char* path, const char* response, const char* cluster,
                                const char* const* fixed, size_t n_fixed,
                                const char* const* random, size_t n_random, cqr_dataset** out) {
  if (!path) return null_argument("path");
  if (!response) return null_argument("response");
  if (!cluster) return null_argument("cluster");
  if (!out) return null_argument("out");
  if (n_fixed && !fixed) return null_argument("fixed");
  if (n_random && !random) return null_argument("random");
  return guarded([&] {
    cqr::CsvSchema schema;
    schema.response = response;
    schema.cluster_id = cluster;
    for (size_t k = 0; k < n_fixed; ++k) schema.fixed_covariates.emplace_back(fixed[k]);
    for (size_t k = 0; k < n_random; ++k) schema.random_covariates.emplace_back(random[k]);
    *out = new cqr_dataset{cqr::load_csv(path, schema)};
  });
}

void cqr_dataset_free(cqr_dataset* data) { delete data; }

cqr_status cqr_dataset_dims(const cqr_dataset* data, size_t* n_clusters, size_t* n_obs, size_t* p,
                            size_t* q) {
  if (!data) return null_argument("data");
  if (n_clusters) *n_clusters = static_cast<size_t>(data->data.n_clusters());
  if (n_obs) *n_obs = static_cast<size_t>(data->data.n_obs());
  if (p) *p = static_cast<size_t>(data->data.p());
  if (q) *q = static_cast<size_t>(data->data.q());
  return CQR_OK;
}

cqr_status cqr_dataset_summary(const cqr_dataset* data, char** out) {
  if (!data) return null_argument("data");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(cqr::to_text(cqr::validate(data->data))); });
}

cqr_status cqr_dataset_term_name(const cqr_dataset* data, size_t k, const char** out) {
  if (!data) return null_argument("data");
  if (!out) return null_argument("out");
  const auto& names = data->data.term_names();
  if (k >= names.size()) {
    last_error = "term index out of range";
    return CQR_INVALID_ARGUMENT;
  }
  *out = names[k].c_str();
  return CQR_OK;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

void cqr_fit_options_init(cqr_fit_options* options) {
  if (!options) return;
  static const double default_tau = 0.5;
  *options = cqr_fit_options{};
  options->taus = &default_tau;
  options->n_taus = 1;
  options->estimator = "adj";
  options->scheme = "rw";
  options->B = 100;
  options->alpha = 0.05;
  options->seed = cqr::kDefaultFitSeed;
  options->threads = 1;
  options->nK = 15;
  options->blp = "linear";
}

cqr_status cqr_fit(const cqr_dataset* data, const cqr_fit_options* options, cqr_fit_result** out) {
  if (!data) return null_argument("data");
  if (!options) return null_argument("options");
  if (!out) return null_argument("out");
  if (options->n_taus && !options->taus) return null_argument("options.taus");
  if (options->n_contrasts && (!options->contrast_reference || !options->contrast_target))
    return null_argument("options.contrast");
  return guarded([&] {
    cqr::FitRequest request;
    request.taus.assign(options->taus, options->taus + options->n_taus);
    if (options->estimator) request.estimator = cqr::parse_estimator(options->estimator);
    if (options->scheme) request.scheme = cqr::parse_scheme(options->scheme);
    request.B = options->B;
    request.alpha = options->alpha;
    request.seed = options->seed;
    request.threads = options->threads;
    request.nK = options->nK;
    if (options->blp) {
      const std::string blp = options->blp;
      if (blp == "linear") request.blp = cqr::BlpMethod::linear;
      else if (blp == "posterior_mean") request.blp = cqr::BlpMethod::posterior_mean;
      else throw cqr::Error(cqr::ErrorCode::config, "unknown blp method '" + blp + "'");
    }
    for (size_t j = 0; j < options->n_contrasts; ++j)
      request.contrasts.emplace_back(options->contrast_reference[j], options->contrast_target[j]);

    auto result = std::make_unique<cqr_fit_result>();
    result->report = cqr::run_fit(data->data, request);
    for (const auto& block : result->report.blocks) {
      for (const auto& r : block.coefficients) result->coefficients.push_back(&r);
      for (const auto& r : block.contrasts) result->contrasts.push_back(&r);
    }
    *out = result.release();
  });
}

void cqr_fit_result_free(cqr_fit_result* result) { delete result; }

size_t cqr_fit_result_count(const cqr_fit_result* result, int kind) {
  if (!result) return 0;
  return kind == 0 ? result->coefficients.size() : result->contrasts.size();
}

cqr_status cqr_fit_result_record(const cqr_fit_result* result, int kind, size_t i,
                                 cqr_coef_record* out) {
  if (!result) return null_argument("result");
  if (!out) return null_argument("out");
  const auto& records = kind == 0 ? result->coefficients : result->contrasts;
  if (i >= records.size()) {
    last_error = "record index out of range";
    return CQR_INVALID_ARGUMENT;
  }
  const cqr::CoefRecord& r = *records[i];
  *out = cqr_coef_record{r.tau,      r.term.c_str(), r.estimate,  r.estimate_adj,
                         r.se_obs,   r.se_adj,       r.basic.lo,  r.basic.hi,
                         r.seadj.lo, r.seadj.hi,     static_cast<int64_t>(r.B),
                         r.scheme.empty() ? nullptr : r.scheme.c_str()};
  return CQR_OK;
}

cqr_status cqr_fit_result_to_json(const cqr_fit_result* result, char** out) {
  if (!result) return null_argument("result");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(cqr::to_json(result->report)); });
}

cqr_status cqr_fit_result_to_csv(const cqr_fit_result* result, char** out) {
  if (!result) return null_argument("result");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(cqr::to_csv(result->report)); });
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

cqr_status cqr_scenario_load(const char* path, cqr_scenario** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new cqr_scenario{cqr::load_scenario(path)}; });
}

cqr_status cqr_scenario_create_default(cqr_scenario** out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = new cqr_scenario{}; });
}

cqr_status cqr_scenario_set(cqr_scenario* scenario, const char* key, const char* value) {
  if (!scenario) return null_argument("scenario");
  if (!key) return null_argument("key");
  if (!value) return null_argument("value");
  return guarded([&] { cqr::set_scenario_value(scenario->spec, key, value); });
}

cqr_status cqr_scenario_to_text(const cqr_scenario* scenario, char** out) {
  if (!scenario) return null_argument("scenario");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(cqr::scenario_to_text(scenario->spec)); });
}

void cqr_scenario_free(cqr_scenario* scenario) { delete scenario; }

cqr_status cqr_simulate(const cqr_scenario* scenario, int threads, cqr_progress_fn progress,
                        void* user_data, cqr_sim_report** out) {
  if (!scenario) return null_argument("scenario");
  if (!out) return null_argument("out");
  if (threads < 1) {
    last_error = "threads must be at least 1";
    return CQR_CONFIG;
  }
  return guarded([&] {
    cqr::SimOptions options;
    options.threads = threads;
    if (progress)
      options.progress = [progress, user_data](cqr::Index done, cqr::Index total) {
        progress(static_cast<int64_t>(done), static_cast<int64_t>(total), user_data);
      };
    *out = new cqr_sim_report{cqr::run_scenario(scenario->spec, options)};
  });
}

void cqr_sim_report_free(cqr_sim_report* report) { delete report; }

cqr_status cqr_sim_report_render(const cqr_sim_report* report, cqr_render_format format,
                                 char** out) {
  if (!report) return null_argument("report");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = duplicate(format == CQR_RENDER_CSV ? cqr::render_csv(report->report)
                                              : cqr::render_text(report->report));
  });
}

double cqr_sim_report_wall_seconds(const cqr_sim_report* report) {
  return report ? report->report.wall_seconds : std::nan("");
}

}  // extern "C"
