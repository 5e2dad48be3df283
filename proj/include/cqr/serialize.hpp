#pragma once

#include <string>

#include "cqr/bootstrap.hpp"
#include "cqr/lqmm.hpp"

namespace cqr {

/// JSON record of an LQMM fit: parameters, log-likelihood and predictions.
std::string to_json(const LqmmFit& fit, const std::vector<std::string>& term_names);

/// JSON run summary: B, scheme, failures, per-component mean, SDs, bias
/// estimate and intervals.
std::string to_json(const BootstrapRun& run, const FixedEffects& beta_hat, const VectorXd& se_obs,
                    const std::vector<std::string>& term_names, double alpha);

}  // namespace cqr
