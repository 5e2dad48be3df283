#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cqr/bootstrap.hpp"
#include "cqr/data.hpp"
#include "cqr/estimators.hpp"

namespace cqr {

/// Seed used by `run_fit` when the caller does not supply one.
inline constexpr std::uint64_t kDefaultFitSeed = 20240607;

struct FitRequest {
  std::vector<double> taus{0.5};
  EstimatorKind estimator = EstimatorKind::adjusted;
  Scheme scheme = Scheme::rw;
  Index B = 100;
  double alpha = 0.05;
  std::uint64_t seed = kDefaultFitSeed;
  int threads = 1;
  int nK = 15;
  BlpMethod blp = BlpMethod::linear;
  /// (reference term, target term) pairs; each yields target - reference.
  std::vector<std::pair<std::string, std::string>> contrasts;

  /// Throws a config error on the first invalid field.
  void validate() const;
};

/// One coefficient or contrast at one quantile level. Fields an estimator
/// does not provide are NaN.
struct CoefRecord {
  double tau = 0.0;
  std::string term;
  double estimate = 0.0;
  double estimate_adj = 0.0;
  double se_obs = 0.0;
  double se_adj = 0.0;
  Interval basic;
  Interval seadj;
  Index B = 0;
  std::string scheme;
};

struct FitBlock {
  double tau = 0.0;
  std::string estimator;
  bool converged = true;
  Index n_failed = 0;
  std::vector<CoefRecord> coefficients;
  std::vector<CoefRecord> contrasts;
};

struct FitReport {
  std::vector<FitBlock> blocks;
};

/// Fits the requested estimator separately at every tau.
FitReport run_fit(const ClusteredDataset& data, const FitRequest& request);

std::string to_json(const FitReport& report);
/// One row per (tau, term); contrasts follow coefficients within a tau.
std::string to_csv(const FitReport& report);

}  // namespace cqr
