#pragma once

#include <Eigen/Dense>

#include "cqr/error.hpp"

namespace cqr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Population-level coefficients, length p.
using FixedEffects = Eigen::VectorXd;

/// Cluster-specific deviations, one row per cluster (N x q).
using RandomEffects = Eigen::MatrixXd;

/// A quantile level strictly inside (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw Error(ErrorCode::invalid_argument,
                  "quantile level must lie in (0, 1), got " + std::to_string(tau));
    }
  }

  double value() const noexcept { return tau_; }
  operator double() const noexcept { return tau_; }

 private:
  double tau_;
};

}  // namespace cqr
