#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cqr/bootstrap.hpp"
#include "cqr/data.hpp"
#include "cqr/estimators.hpp"
#include "cqr/lqmm.hpp"
#include "cqr/random.hpp"

namespace cqr {

enum class ErrorDist { gaussian, t3_scaled, ald };

const char* error_dist_name(ErrorDist dist);
ErrorDist parse_error_dist(const std::string& name);

/// Data-generating process
///   Y_ij = beta0 + u_i + (beta1 + v_i) x_ij + (1 + gamma x_ij) sigma_e e_ij
/// with x ~ U(0,1) per observation, u ~ N(0, sigma_u2), optional
/// v ~ N(0, sigma_v2), and e a standardized error from `error_dist`.
struct ScenarioSpec {
  Index N = 500;
  Index n_i = 6;
  double tau = 0.1;
  double beta0 = 1.0;
  double beta1 = 1.0;
  double gamma = 0.4;
  double sigma_u2 = 1.0;
  double sigma_e2 = 1.0;
  ErrorDist error_dist = ErrorDist::gaussian;
  double ald_tau0 = 0.1;
  /// Zero selects the unit-variance scale for ald_tau0.
  double ald_sigma0 = 0.0;
  /// Zero means no random slope.
  double sigma_v2 = 0.0;
  Index reps = 200;
  Index B = 100;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  int nK = 15;
  BlpMethod blp = BlpMethod::linear;
  std::vector<EstimatorKind> estimators{EstimatorKind::lqmm, EstimatorKind::twostep,
                                        EstimatorKind::adjusted};
  std::vector<Scheme> schemes{Scheme::rw};

  bool random_slope() const { return sigma_v2 > 0.0; }
  double ald_scale() const;
  /// Throws a config error naming the offending field.
  void validate() const;
};

/// Scale giving an ALD(0, sigma, tau0) law unit variance.
double ald_unit_sigma(double tau0);

/// Quantile function of the standardized error e.
double error_quantile(const ScenarioSpec& spec, double p);

/// (beta0 + sigma_e F^-1(tau), beta1 + gamma sigma_e F^-1(tau)).
std::pair<double, double> true_params(const ScenarioSpec& spec);

/// Marginal (unconditional on u) tau-quantile of Y at x; Gaussian errors only.
double marginal_quantile(const ScenarioSpec& spec, double x, double tau);

struct SimulatedData {
  ClusteredDataset data;
  /// u_i, plus v_i in a second column for random-slope scenarios.
  RandomEffects u_true;
};

double draw_error(const ScenarioSpec& spec, Rng& rng);
SimulatedData gen_dataset(const ScenarioSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Monte Carlo harness
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string estimator;
  std::string component;
  Index reps_used = 0;
  double truth = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double mcse_bias = 0.0;
  /// NaN when the estimator has no interval of that kind.
  double coverage_basic = 0.0;
  double mcse_coverage_basic = 0.0;
  double length_basic = 0.0;
  double coverage_seadj = 0.0;
  double mcse_coverage_seadj = 0.0;
  double length_seadj = 0.0;
  /// Per-replication estimates, in replication order.
  std::vector<double> estimates;
};

struct SimReport {
  ScenarioSpec spec;
  std::vector<ReportRow> rows;
  /// Human-readable notes about excluded replications.
  std::vector<std::string> notes;
  double wall_seconds = 0.0;
};

struct SimOptions {
  int threads = 1;
  /// Called after each finished replication (from worker threads, serialized).
  std::function<void(Index done, Index total)> progress;
};

SimReport run_scenario(const ScenarioSpec& spec, const SimOptions& options = {});

/// Aggregates one row from per-replication estimates and interval records.
ReportRow summarize_row(const std::string& estimator, const std::string& component, double truth,
                        const std::vector<double>& estimates,
                        const std::vector<Interval>* basic = nullptr,
                        const std::vector<Interval>* seadj = nullptr);

/// Deterministic renderings; numbers at four significant digits. Timing is
/// deliberately left out so identical seeds give identical bytes.
std::string render_csv(const SimReport& report);
std::string render_text(const SimReport& report);

// ---------------------------------------------------------------------------
// Scenario files: `key = value` lines, `#` comments.
// ---------------------------------------------------------------------------

/// Sets one field from text; unknown keys and bad values are config errors.
void set_scenario_value(ScenarioSpec& spec, const std::string& key, const std::string& value);
ScenarioSpec parse_scenario(const std::string& text);
ScenarioSpec load_scenario(const std::string& path);
std::string scenario_to_text(const ScenarioSpec& spec);

}  // namespace cqr
